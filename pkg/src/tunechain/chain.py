"""
Parent chain, side chain, and stake-weighted validator election.

Parent blocks carry contract and registration transactions; side blocks
carry signed violation reports. Headers are 88 fixed bytes hashed with
double-SHA256. Proof of stake means there is no mining: ``target_difficulty``
is carried but never checked and ``nonce`` stays 0.

On disk each chain is one canonical-JSON record per line. A record also
stores the block's own hash and the validator's sign-off tag, so that a
tampered tip block is caught even though nothing links after it.
"""
import json
import struct
from dataclasses import dataclass

from .chunkstore import merkle_root
from .encoding import (ZERO_HASH, address_from_hex, canonical_json, double_sha256,
                       hash_from_hex, sha256)
from .errors import InvalidInput

HEADER_FORMAT = ">I32s32sQIQ"
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)  # 88

DUPLICATE_UPLOAD = 1
UNAUTHORIZED_DOWNLOAD = 2
VIOLATION_TYPES = (DUPLICATE_UPLOAD, UNAUTHORIZED_DOWNLOAD)


@dataclass(frozen=True)
class BlockHeader:
    version: int = 1
    prev_hash: bytes = ZERO_HASH
    merkle_root: bytes = ZERO_HASH
    timestamp: int = 0
    target_difficulty: int = 0
    nonce: int = 0

    def to_dict(self) -> dict:
        return {
            "merkle_root": self.merkle_root.hex(),
            "nonce": self.nonce,
            "prev_hash": self.prev_hash.hex(),
            "target_difficulty": self.target_difficulty,
            "timestamp": self.timestamp,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            version=_uint(d["version"], 32),
            prev_hash=hash_from_hex(d["prev_hash"]),
            merkle_root=hash_from_hex(d["merkle_root"]),
            timestamp=_uint(d["timestamp"], 64),
            target_difficulty=_uint(d["target_difficulty"], 32),
            nonce=_uint(d["nonce"], 64),
        )


def _uint(value, bits):
    if type(value) is not int or not 0 <= value < 2 ** bits:
        raise ValueError(f"expected a {bits}-bit unsigned integer, got {value!r}")
    return value


def canonical_header_bytes(header: BlockHeader) -> bytes:
    return struct.pack(HEADER_FORMAT, header.version, header.prev_hash, header.merkle_root,
                       header.timestamp, header.target_difficulty, header.nonce)


def block_hash(header: BlockHeader) -> bytes:
    return double_sha256(canonical_header_bytes(header))


def tx_bytes(tx: dict) -> bytes:
    return canonical_json(tx)


def tx_merkle_root(records) -> bytes:
    """Merkle root over single-SHA256 leaves; an empty list roots at zero."""
    if not records:
        return ZERO_HASH
    return merkle_root([sha256(tx_bytes(r)) for r in records])


def signoff_tag(validator: bytes, header_hash: bytes) -> bytes:
    return sha256(validator + header_hash)


# -- parent blocks ----------------------------------------------------------------

def compute_block_size(transactions, extra: int = 20) -> int:
    # header + validator/id + tx_count + block_size fields + transaction bytes
    return HEADER_SIZE + extra + 4 + 4 + sum(len(tx_bytes(t)) for t in transactions)


@dataclass
class ParentBlock:
    header: BlockHeader
    transactions: list
    validator: bytes
    tx_count: int = None
    block_size: int = None

    def __post_init__(self):
        if self.tx_count is None:
            self.tx_count = len(self.transactions)
        if self.block_size is None:
            self.block_size = compute_block_size(self.transactions)

    @property
    def hash(self) -> bytes:
        return block_hash(self.header)

    def to_record(self) -> dict:
        h = self.hash
        return {
            "block_size": self.block_size,
            "hash": h.hex(),
            "header": self.header.to_dict(),
            "signoff": signoff_tag(self.validator, h).hex(),
            "transactions": self.transactions,
            "tx_count": self.tx_count,
            "validator": self.validator.hex(),
        }

    def to_line(self) -> bytes:
        return canonical_json(self.to_record())

    @classmethod
    def from_record(cls, rec: dict):
        txs = rec["transactions"]
        if not isinstance(txs, list) or not all(isinstance(t, dict) for t in txs):
            raise ValueError("transactions must be a list of records")
        return cls(
            header=BlockHeader.from_dict(rec["header"]),
            transactions=txs,
            validator=address_from_hex(rec["validator"]),
            tx_count=_uint(rec["tx_count"], 32),
            block_size=_uint(rec["block_size"], 32),
        )


class Chain:
    """An append-only list of parent blocks."""

    def __init__(self, blocks=None):
        self.blocks = list(blocks or [])

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    @property
    def tip_hash(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else ZERO_HASH

    def transactions(self):
        for block in self.blocks:
            yield from block.transactions

    def digest(self) -> str:
        # the tip header commits to every earlier header and Merkle root
        last = self.blocks[-1].to_line() if self.blocks else b""
        return sha256(len(self.blocks).to_bytes(8, "big") + last).hex()

    def copy(self) -> "Chain":
        return Chain(self.blocks)


def make_block(prev_hash: bytes, transactions, validator: bytes, now: int) -> ParentBlock:
    txs = list(transactions)
    header = BlockHeader(version=1, prev_hash=prev_hash, merkle_root=tx_merkle_root(txs),
                         timestamp=int(now), target_difficulty=0, nonce=0)
    return ParentBlock(header, txs, bytes(validator))


def append_block(chain: Chain, transactions, validator: bytes, now: int) -> ParentBlock:
    block = make_block(chain.tip_hash, transactions, validator, now)
    chain.blocks.append(block)
    return block


@dataclass(frozen=True)
class Validation:
    ok: bool
    height: int = None
    reason: str = ""

    def __bool__(self):
        return self.ok


OK = Validation(True)


def check_block(block: ParentBlock, expected_prev: bytes):
    """Return the first failure reason for one block, or None."""
    if block.header.prev_hash != expected_prev:
        return "prev hash mismatch"
    if block.tx_count != len(block.transactions):
        return "tx count mismatch"
    if block.header.merkle_root != tx_merkle_root(block.transactions):
        return "merkle root mismatch"
    if block.block_size != compute_block_size(block.transactions):
        return "block size mismatch"
    return None


def validate_chain(chain) -> Validation:
    """Check linkage, Merkle roots, counts and sizes; report the first bad height."""
    prev = ZERO_HASH
    for height, block in enumerate(chain):
        reason = check_block(block, prev)
        if reason:
            return Validation(False, height, reason)
        prev = block.hash
    return OK


def parse_block_line(line: bytes) -> ParentBlock:
    """Decode one log line, insisting on canonical form and self-consistency."""
    if isinstance(line, str):
        line = line.encode("utf-8")
    rec = json.loads(line.decode("ascii"))
    if not isinstance(rec, dict) or canonical_json(rec) != line:
        raise ValueError("not a canonical block record")
    block = ParentBlock.from_record(rec)
    if rec["hash"] != block.hash.hex():
        raise ValueError("block hash mismatch")
    if rec["signoff"] != signoff_tag(block.validator, block.hash).hex():
        raise ValueError("signoff mismatch")
    return block


def validate_log(lines) -> Validation:
    """Validate serialized blocks, one canonical-JSON record per line."""
    blocks = []
    for height, line in enumerate(lines):
        try:
            block = parse_block_line(line)
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
            return Validation(False, height, str(exc) if "mismatch" in str(exc) else "malformed block")
        blocks.append(block)
    return validate_chain(blocks)


def load_chain(lines) -> Chain:
    lines = list(lines)
    result = validate_log(lines)
    if not result:
        raise InvalidInput(f"chain log invalid at height {result.height}: {result.reason}")
    return Chain([parse_block_line(line) for line in lines])


# -- side chain -------------------------------------------------------------------

@dataclass(frozen=True)
class ViolationTx:
    tov: int
    uid: bytes
    vt: int
    nid: bytes
    ns: bytes

    def __post_init__(self):
        if self.vt not in VIOLATION_TYPES:
            raise InvalidInput(f"violation type must be one of {VIOLATION_TYPES}")

    def body(self) -> dict:
        return {"nid": self.nid.hex(), "tov": self.tov, "uid": self.uid.hex(), "vt": self.vt}

    def to_dict(self) -> dict:
        return dict(self.body(), ns=self.ns.hex())

    @classmethod
    def from_dict(cls, d):
        return cls(_uint(d["tov"], 64), address_from_hex(d["uid"]), d["vt"],
                   address_from_hex(d["nid"]), hash_from_hex(d["ns"]))


def node_signature(nid: bytes, body: dict, node_secret: bytes) -> bytes:
    # keyed hash, not a public-key signature: only holders of the secret can verify
    return sha256(nid + canonical_json(body) + node_secret)


def make_violation(tov: int, uid: bytes, vt: int, nid: bytes, node_secret: bytes) -> ViolationTx:
    body = {"nid": nid.hex(), "tov": int(tov), "uid": uid.hex(), "vt": vt}
    return ViolationTx(int(tov), uid, vt, nid, node_signature(nid, body, node_secret))


def verify_violation(v: ViolationTx, node_secret: bytes) -> bool:
    return node_signature(v.nid, v.body(), node_secret) == v.ns


def violation_root(violations) -> bytes:
    return merkle_root([sha256(canonical_json(v.to_dict())) for v in violations])


@dataclass
class SideBlock:
    id: str
    header: BlockHeader
    violations: list
    chain_time: int
    tx_counter: int = None
    block_size: int = None

    def __post_init__(self):
        if self.tx_counter is None:
            self.tx_counter = len(self.violations)
        if self.block_size is None:
            self.block_size = compute_block_size([v.to_dict() for v in self.violations],
                                                 extra=len(self.id) + 8)

    @property
    def hash(self) -> bytes:
        return block_hash(self.header)

    def to_record(self) -> dict:
        return {
            "block_size": self.block_size,
            "chain_time": self.chain_time,
            "hash": self.hash.hex(),
            "header": self.header.to_dict(),
            "id": self.id,
            "tx_counter": self.tx_counter,
            "violations": [v.to_dict() for v in self.violations],
        }

    def to_line(self) -> bytes:
        return canonical_json(self.to_record())

    @classmethod
    def from_record(cls, rec):
        return cls(
            id=rec["id"],
            header=BlockHeader.from_dict(rec["header"]),
            violations=[ViolationTx.from_dict(v) for v in rec["violations"]],
            chain_time=_uint(rec["chain_time"], 64),
            tx_counter=_uint(rec["tx_counter"], 32),
            block_size=_uint(rec["block_size"], 32),
        )


class SideChain(Chain):
    def violations(self):
        for block in self.blocks:
            yield from block.violations

    def copy(self) -> "SideChain":
        return SideChain(self.blocks)


def side_block_id(parent_hash: bytes, index: int) -> str:
    return f"{parent_hash.hex()[:8]}-{index}"


def record_violation(side_chain: SideChain, v: ViolationTx, parent_hash: bytes, now: int) -> SideBlock:
    header = BlockHeader(version=1, prev_hash=side_chain.tip_hash, merkle_root=violation_root([v]),
                         timestamp=int(v.tov), target_difficulty=0, nonce=0)
    block = SideBlock(side_block_id(parent_hash, len(side_chain)), header, [v], int(now))
    side_chain.blocks.append(block)
    return block


def validate_side_chain(side_chain) -> Validation:
    prev = ZERO_HASH
    for height, block in enumerate(side_chain):
        if block.header.prev_hash != prev:
            return Validation(False, height, "prev hash mismatch")
        if block.tx_counter != len(block.violations):
            return Validation(False, height, "tx count mismatch")
        if not block.violations or block.header.merkle_root != violation_root(block.violations):
            return Validation(False, height, "merkle root mismatch")
        if not block.id.endswith(f"-{height}"):
            return Validation(False, height, "id mismatch")
        prev = block.hash
    return OK


def parse_side_line(line: bytes) -> SideBlock:
    if isinstance(line, str):
        line = line.encode("utf-8")
    rec = json.loads(line.decode("ascii"))
    if not isinstance(rec, dict) or canonical_json(rec) != line:
        raise ValueError("not a canonical side block record")
    block = SideBlock.from_record(rec)
    if rec["hash"] != block.hash.hex():
        raise ValueError("block hash mismatch")
    return block


def load_side_chain(lines) -> SideChain:
    side = SideChain([parse_side_line(line) for line in lines])
    result = validate_side_chain(side)
    if not result:
        raise InvalidInput(f"side chain invalid at height {result.height}: {result.reason}")
    return side


# -- proof of stake ---------------------------------------------------------------

@dataclass(frozen=True)
class Validator:
    node_id: bytes
    stake: int


def select_validator(validators, rng) -> bytes:
    """Pick a node id with probability proportional to its stake.

    ``rng`` is a seeded ``random.Random``; one integer draw per call.
    """
    validators = list(validators)
    if not validators:
        raise InvalidInput("no validators to choose from")
    for v in validators:
        if not isinstance(v.stake, int) or v.stake < 1:
            raise InvalidInput(f"validator {v.node_id.hex()} has stake {v.stake!r}; need >= 1")
    total = sum(v.stake for v in validators)
    ticket = rng.randrange(total)
    for v in validators:
        if ticket < v.stake:
            return v.node_id
        ticket -= v.stake
    raise AssertionError("unreachable")
