"""
Access-control and royalty contract.

State is a ``file_mapping`` from manifest root to :class:`FileData`. Every
mutating call checks all of its preconditions before touching state, so a
:class:`~tunechain.errors.Revert` always leaves the state untouched.
Money is integer cents.
"""
import copy
from dataclasses import dataclass, field

from .encoding import ZERO_ADDRESS, ZERO_HASH, address_from_hex, canonical_json, hash_from_hex, sha256
from .errors import NotFound, Revert
from .fingerprint import is_fingerprint

DEFAULT_PRICE_CENTS = 137

ADD_BLOCK = "add_block"
GRANT_ACCESS = "grant_access"
REMOVE_ACCESS = "remove_access"
PAY_AND_DOWNLOAD = "pay_and_download"
CONTRACT_KINDS = (ADD_BLOCK, GRANT_ACCESS, REMOVE_ACCESS, PAY_AND_DOWNLOAD)


@dataclass(frozen=True)
class TxContext:
    caller: bytes
    now: int


@dataclass(frozen=True)
class Meta:
    author: str
    title: str
    date: int


@dataclass
class FileData:
    owner: bytes
    fingerprint: str
    manifest_root: bytes
    author: str
    title: str
    uploaded_at: int
    price_cents: int = DEFAULT_PRICE_CENTS
    downloads: int = 0
    access: dict = field(default_factory=dict)
    allowed_addresses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "access": {a.hex(): v for a, v in sorted(self.access.items())},
            "allowed_addresses": [a.hex() for a in self.allowed_addresses],
            "author": self.author,
            "downloads": self.downloads,
            "fingerprint": self.fingerprint,
            "manifest_root": self.manifest_root.hex(),
            "owner": self.owner.hex(),
            "price_cents": self.price_cents,
            "title": self.title,
            "uploaded_at": self.uploaded_at,
        }


@dataclass(frozen=True)
class DownloadGrant:
    hash: bytes
    granted_to: bytes
    receipt_id: str


@dataclass(frozen=True)
class ReportRow:
    author: str
    title: str
    uploaded_at: int
    downloads: int
    revenue_cents: int
    root: bytes = b""


class ContractState:
    def __init__(self):
        self.file_mapping = {}

    def __len__(self):
        return len(self.file_mapping)

    def fingerprints(self) -> set:
        return {fd.fingerprint for fd in self.file_mapping.values()}

    def to_dict(self) -> dict:
        return {h.hex(): fd.to_dict() for h, fd in self.file_mapping.items()}

    def serialize(self) -> bytes:
        return canonical_json(self.to_dict())

    def digest(self) -> str:
        return sha256(self.serialize()).hex()

    def copy(self) -> "ContractState":
        return copy.deepcopy(self)


def _is_empty(value: bytes) -> bool:
    return not value or value == ZERO_HASH or value == ZERO_ADDRESS


def _lookup(state: ContractState, h: bytes) -> FileData:
    if _is_empty(h):
        raise Revert("empty hash")
    fd = state.file_mapping.get(h)
    if fd is None:
        raise Revert("unknown hash")
    return fd


def add_block(state: ContractState, ctx: TxContext, h: bytes, fp: str, meta: Meta,
              price_cents: int = DEFAULT_PRICE_CENTS) -> None:
    """Register a file under ``h`` with ``ctx.caller`` as owner."""
    if _is_empty(h):
        raise Revert("empty hash")
    if _is_empty(ctx.caller):
        raise Revert("empty caller")
    if not is_fingerprint(fp):
        raise Revert("bad fingerprint")
    if not isinstance(price_cents, int) or price_cents < 0:
        raise Revert("bad price")
    if h in state.file_mapping:
        raise Revert("exists")
    if fp in state.fingerprints():
        raise Revert("duplicate fingerprint")
    state.file_mapping[h] = FileData(
        owner=ctx.caller, fingerprint=fp, manifest_root=h,
        author=meta.author, title=meta.title, uploaded_at=int(meta.date),
        price_cents=price_cents,
    )


def _owned(state, ctx, addr, h) -> FileData:
    if _is_empty(addr):
        raise Revert("empty address")
    fd = _lookup(state, h)
    if ctx.caller != fd.owner:
        raise Revert("not owner")
    return fd


def grant_access(state: ContractState, ctx: TxContext, addr: bytes, h: bytes) -> None:
    fd = _owned(state, ctx, addr, h)
    fd.access[addr] = True
    if addr not in fd.allowed_addresses:
        fd.allowed_addresses.append(addr)


def remove_access(state: ContractState, ctx: TxContext, addr: bytes, h: bytes) -> None:
    # the address stays in allowed_addresses as history
    fd = _owned(state, ctx, addr, h)
    fd.access[addr] = False


def music_owner(state: ContractState, ctx: TxContext, h: bytes) -> bool:
    fd = state.file_mapping.get(h)
    if _is_empty(h) or fd is None:
        return False
    return ctx.caller == fd.owner


def chk_access(state: ContractState, addr: bytes, h: bytes) -> bool:
    if _is_empty(addr) or _is_empty(h):
        return False
    fd = state.file_mapping.get(h)
    if fd is None:
        return False
    if addr == fd.owner:
        return True
    return fd.access.get(addr, False)


def pay_and_download(state: ContractState, ctx: TxContext, h: bytes) -> DownloadGrant:
    """Record one payment of the file's price and grant the caller access.

    Every call is a separate purchase; re-downloads pay again and count again.
    """
    fd = state.file_mapping.get(h)
    if _is_empty(h) or fd is None:
        raise Revert("unknown hash")
    if _is_empty(ctx.caller):
        raise Revert("empty caller")
    fd.downloads += 1
    fd.access[ctx.caller] = True
    if ctx.caller not in fd.allowed_addresses:
        fd.allowed_addresses.append(ctx.caller)
    receipt = sha256(canonical_json({
        "caller": ctx.caller.hex(), "hash": h.hex(), "n": fd.downloads, "timestamp": ctx.now,
    })).hex()
    return DownloadGrant(h, ctx.caller, receipt)


def revenue(state: ContractState, h: bytes) -> int:
    fd = state.file_mapping.get(h)
    if fd is None:
        raise NotFound(f"file {h.hex()} is not registered")
    return fd.downloads * fd.price_cents


def revenue_report(state: ContractState) -> list:
    """One row per file, newest upload first."""
    files = sorted(state.file_mapping.values(), key=lambda fd: (-fd.uploaded_at, fd.manifest_root))
    return [ReportRow(fd.author, fd.title, fd.uploaded_at, fd.downloads,
                      fd.downloads * fd.price_cents, fd.manifest_root) for fd in files]


def format_cents(cents: int) -> str:
    return f"${cents // 100}.{cents % 100:02d}"


# -- transaction records -------------------------------------------------------

def make_tx(kind: str, caller: bytes, h: bytes, timestamp: int, *, addr: bytes = None,
            cents: int = None, fingerprint: str = None, meta: Meta = None) -> dict:
    """Canonical transaction record for inclusion in a block."""
    tx = {"kind": kind, "caller": caller.hex(), "hash": h.hex(), "timestamp": int(timestamp)}
    if addr is not None:
        tx["addr"] = addr.hex()
    if cents is not None:
        tx["cents"] = int(cents)
    if fingerprint is not None:
        tx["fingerprint"] = fingerprint
    if meta is not None:
        tx["author"] = meta.author
        tx["title"] = meta.title
        tx["date"] = int(meta.date)
    return tx


def apply_tx(state: ContractState, tx: dict):
    """Execute a recorded contract transaction against ``state``.

    Malformed records revert like any other invalid call.
    """
    try:
        kind = tx["kind"]
        ctx = TxContext(address_from_hex(tx["caller"]), int(tx["timestamp"]))
        h = hash_from_hex(tx["hash"])
        if kind == ADD_BLOCK:
            meta = Meta(str(tx["author"]), str(tx["title"]), int(tx["date"]))
            return add_block(state, ctx, h, tx["fingerprint"], meta, tx["cents"])
        if kind in (GRANT_ACCESS, REMOVE_ACCESS):
            addr = address_from_hex(tx["addr"])
            fn = grant_access if kind == GRANT_ACCESS else remove_access
            return fn(state, ctx, addr, h)
        if kind == PAY_AND_DOWNLOAD:
            fd = state.file_mapping.get(h)
            if fd is not None and tx.get("cents") != fd.price_cents:
                raise Revert("payment does not match price")
            return pay_and_download(state, ctx, h)
    except (KeyError, TypeError, ValueError) as exc:
        raise Revert(f"malformed transaction: {exc}") from exc
    raise Revert(f"unknown transaction kind {kind!r}")
