"""
Deterministic in-process network of storage/validator nodes.

Every node keeps its own chunk store, ledger replica, parent chain and side
chain. Transactions queue in ``pending`` until :meth:`SimNetwork.consensus_round`
elects a validator by stake, which replays them, drops the invalid ones,
mints a block and broadcasts it. Each node re-validates and replays the block
independently before anyone appends it.

Time only moves through the simulation clock and randomness only comes from
generators derived from the seed, so identical inputs give identical chains.
"""
import copy
import hashlib
import logging
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

from . import contract as ct
from .chain import (DUPLICATE_UPLOAD, UNAUTHORIZED_DOWNLOAD, Chain, SideChain, Validator,
                    check_block, load_side_chain, make_block, make_violation, parse_block_line,
                    record_violation, select_validator)
from .chunkstore import ChunkStore, build_manifest, chunk_file, reassemble
from .encoding import canonical_json, sha256
from .errors import (AccessDenied, AlreadyRegistered, ChunkUnavailable, ConsensusFailure,
                     CopyrightViolation, InvalidCredential, InvalidInput, NotFound, Revert,
                     UnregisteredUser)
from .fingerprint import music_fingerprint, read_wav
from .identity import REGISTER, Credential, IdentityRegistry, authenticate, registration_tx

log = logging.getLogger(__name__)

REPLICATION = 3
DEFAULT_NODES = 4
DEFAULT_SEED = 42
GENESIS_TIME = 1582156800  # 2020-02-20 00:00:00 UTC


class Ledger:
    """Contract state plus the identity index, rebuilt by replaying blocks."""

    def __init__(self):
        self.contract = ct.ContractState()
        self.identities = IdentityRegistry()

    def apply(self, tx: dict):
        """Apply one record; raises Revert/AlreadyRegistered/InvalidCredential."""
        kind = tx.get("kind") if isinstance(tx, dict) else None
        if kind == REGISTER:
            return self.identities.apply(tx)
        if kind in ct.CONTRACT_KINDS:
            caller = tx.get("caller", "")
            if caller not in {a.hex() for a in self.identities.addresses()}:
                raise Revert("unregistered caller")
            return ct.apply_tx(self.contract, tx)
        raise Revert(f"unknown transaction kind {kind!r}")

    def serialize(self) -> bytes:
        return canonical_json({"contract": self.contract.to_dict(),
                               "identities": self.identities.to_dict()})

    def digest(self) -> str:
        return sha256(self.serialize()).hex()

    def copy(self) -> "Ledger":
        return copy.deepcopy(self)


TX_ERRORS = (Revert, AlreadyRegistered, InvalidCredential)


@dataclass
class SimNode:
    node_id: bytes
    stake: int
    node_secret: bytes
    store: ChunkStore
    ledger: Ledger = field(default_factory=Ledger)
    chain: Chain = field(default_factory=Chain)
    side_chain: SideChain = field(default_factory=SideChain)

    def digest(self) -> str:
        return sha256((self.ledger.digest() + self.chain.digest()
                       + self.side_chain.digest()).encode()).hex()


def xor_distance(a: bytes, b: bytes) -> int:
    return int.from_bytes(a, "big") ^ int.from_bytes(b, "big")


def node_id_for(index: int) -> bytes:
    return sha256(b"tunechain-node" + index.to_bytes(4, "big"))[:20]


class SimNetwork:
    """A fixed set of nodes driven step by step by a single caller.

    With ``datadir`` the parent chain is appended to ``chain.log``, the side
    chain to ``sidechain.log``, and each node keeps its chunks under
    ``nodes/<node id>/``. Reopening the same datadir replays both logs.
    """

    def __init__(self, n_nodes: int = DEFAULT_NODES, seed: int = DEFAULT_SEED,
                 price_cents: int = ct.DEFAULT_PRICE_CENTS, stakes=None,
                 start_time: int = GENESIS_TIME, datadir=None):
        if n_nodes < 1:
            raise InvalidInput("a network needs at least one node")
        if price_cents < 0:
            raise InvalidInput("price_cents must be nonnegative")
        stakes = list(stakes) if stakes is not None else [1] * n_nodes
        if len(stakes) != n_nodes:
            raise InvalidInput("one stake per node is required")
        self.seed = int(seed)
        self.price_cents = int(price_cents)
        self.clock = int(start_time)
        self.datadir = Path(datadir) if datadir is not None else None
        self.nodes = []
        for i, stake in enumerate(stakes):
            nid = node_id_for(i)
            secret = sha256(b"node-secret" + nid + self.seed.to_bytes(8, "big", signed=True))
            store = ChunkStore(self.datadir / "nodes" / nid.hex() if self.datadir else None)
            self.nodes.append(SimNode(nid, int(stake), secret, store))
        self._by_id = {n.node_id: n for n in self.nodes}
        self.pending = []
        self.last_rejected = []
        self.last_grant = None
        self._scratch = None
        if self.datadir is not None:
            self.datadir.mkdir(parents=True, exist_ok=True)
            for name in ("chain.log", "sidechain.log"):
                (self.datadir / name).touch()
            self._load()
        if not len(self.chain):
            self.consensus_round([])  # genesis

    # -- views --------------------------------------------------------------------

    @property
    def chain(self) -> Chain:
        return self.nodes[0].chain

    @property
    def side_chain(self) -> SideChain:
        return self.nodes[0].side_chain

    @property
    def ledger(self) -> Ledger:
        return self.nodes[0].ledger

    def node(self, node_id: bytes) -> SimNode:
        return self._by_id[node_id]

    def replica_digests(self) -> list:
        return [n.digest() for n in self.nodes]

    def is_registered(self, address: bytes) -> bool:
        return address in self.ledger.identities

    def set_clock(self, ts: int):
        if ts < self.clock:
            raise InvalidInput("the simulation clock never moves backwards")
        self.clock = int(ts)

    def advance(self, seconds: int = 1):
        self.set_clock(self.clock + seconds)

    # -- DHT ----------------------------------------------------------------------

    def locate_chunk(self, chunk_hash: bytes) -> list:
        return locate_chunk(self, chunk_hash)

    def gateway(self, address: bytes) -> SimNode:
        """Node a user talks to: the one nearest their address."""
        return self._by_id[locate_chunk(self, address + bytes(12))[0]]

    # -- consensus ----------------------------------------------------------------

    def _rng_for(self, height: int) -> random.Random:
        material = hashlib.sha256(f"tunechain-pos:{self.seed}:{height}".encode()).digest()
        return random.Random(int.from_bytes(material, "big"))

    def elected_validator(self, height: int) -> bytes:
        return select_validator([Validator(n.node_id, n.stake) for n in self.nodes],
                                self._rng_for(height))

    def consensus_round(self, pending_txs=None):
        """Elect a validator, mint the valid pending transactions, broadcast.

        Invalid transactions are left out of the block and listed in
        ``last_rejected`` as ``(tx, reason)`` pairs.
        """
        if pending_txs is None:
            pending_txs, self.pending = self.pending, []
        self._scratch = None
        height = len(self.chain)
        validator = self.node(self.elected_validator(height))
        replay = validator.ledger.copy()
        accepted, rejected = [], []
        for tx in pending_txs:
            try:
                replay.apply(tx)
            except TX_ERRORS as exc:
                rejected.append((tx, str(exc)))
                continue
            accepted.append(tx)
        block = make_block(validator.chain.tip_hash, accepted, validator.node_id, self.clock)
        self.broadcast_block(block)
        self.last_rejected = rejected
        for tx, reason in rejected:
            log.info("rejected %s from %s: %s", tx.get("kind"), tx.get("caller"), reason)
        self.clock += 1
        return block

    def broadcast_block(self, block, persist: bool = True):
        """Have every node validate and replay ``block``, then append it everywhere."""
        height = len(self.chain)
        expected = self.elected_validator(height)
        staged = []
        for node in self.nodes:
            reason = check_block(block, node.chain.tip_hash)
            if reason is None and block.validator != expected:
                reason = "validator was not elected for this height"
            if reason is None:
                ledger = node.ledger.copy()
                try:
                    for tx in block.transactions:
                        ledger.apply(tx)
                except TX_ERRORS as exc:
                    reason = f"invalid transaction: {exc}"
            if reason is not None:
                raise ConsensusFailure(node.node_id.hex(), reason)
            staged.append(ledger)
        if persist and self.datadir is not None:
            _append_line(self.datadir / "chain.log", block.to_line())
        for node, ledger in zip(self.nodes, staged):
            node.chain.blocks.append(block)
            node.ledger = ledger
        digests = set(self.replica_digests())
        if len(digests) != 1:
            raise ConsensusFailure("*", "replica digests diverged")

    # -- pending transactions -----------------------------------------------------

    def _scratch_ledger(self) -> Ledger:
        # committed state with every pending tx applied; dropped at each round
        if self._scratch is None:
            scratch = self.ledger.copy()
            for tx in self.pending:
                try:
                    scratch.apply(tx)
                except TX_ERRORS:
                    pass
            self._scratch = scratch
        return self._scratch

    def submit(self, tx: dict):
        """Check ``tx`` against committed + pending state and queue it."""
        result = self._scratch_ledger().apply(tx)  # atomic: raises before mutating
        self.pending.append(tx)
        return result

    def _require_registered(self, address: bytes):
        if address not in self._scratch_ledger().identities:
            raise UnregisteredUser(f"address {address.hex()} is not registered")

    # -- identity -----------------------------------------------------------------

    def register(self, cred: Credential) -> bytes:
        tx = registration_tx(cred, self.clock)
        try:
            return self.submit(tx)
        except AlreadyRegistered:
            raise AlreadyRegistered(f"{cred.email} is already registered with this password")

    def authenticate(self, cred: Credential):
        return authenticate(self.chain, cred)

    # -- violations ---------------------------------------------------------------

    def record_violation(self, vt: int, uid: bytes, reporter: SimNode):
        v = make_violation(self.clock, uid, vt, reporter.node_id, reporter.node_secret)
        parent = self.chain.tip_hash
        block = None
        for node in self.nodes:
            block = record_violation(node.side_chain, v, parent, self.clock)
        if self.datadir is not None:
            _append_line(self.datadir / "sidechain.log", block.to_line())
        return block

    # -- workflows ----------------------------------------------------------------

    def store_music(self, uploader: bytes, wav_bytes: bytes, meta: ct.Meta) -> bytes:
        """Fingerprint, dedupe, chunk, replicate and queue registration of a song.

        Returns the manifest root. An exact fingerprint match against any
        registered or pending file raises CopyrightViolation, whoever the
        uploader is, and records a DUPLICATE_UPLOAD violation.
        """
        self._require_registered(uploader)
        audio = read_wav(wav_bytes)
        fp = music_fingerprint(audio)
        gateway = self.gateway(uploader)
        if fp in self._scratch_ledger().contract.fingerprints():
            side = self.record_violation(DUPLICATE_UPLOAD, uploader, gateway)
            raise CopyrightViolation(fp, side)
        manifest = build_manifest(wav_bytes, meta.author, meta.title, meta.date)
        tx = ct.make_tx(ct.ADD_BLOCK, uploader, manifest.root, self.clock, cents=self.price_cents,
                        fingerprint=fp, meta=meta)
        self._scratch_ledger().copy().apply(tx)  # surface reverts before storing chunks
        for chunk, h in zip(chunk_file(wav_bytes), manifest.chunk_hashes):
            for nid in locate_chunk(self, h)[:REPLICATION]:
                self.node(nid).store.put_chunk(chunk)
        for node in self.nodes:
            node.store.put_manifest(manifest)
        self.submit(tx)
        return manifest.root

    def fetch_chunk(self, chunk_hash: bytes) -> bytes:
        """Fetch from the nearest holder, falling through nodes that lack it."""
        for nid in locate_chunk(self, chunk_hash):
            store = self.node(nid).store
            if chunk_hash in store:
                return store.get_chunk(chunk_hash)
        raise ChunkUnavailable(f"no node holds chunk {chunk_hash.hex()}")

    def manifest(self, root: bytes):
        for node in self.nodes:
            if node.store.has_manifest(root):
                return node.store.get_manifest(root)
        raise NotFound(f"no manifest for {root.hex()}")

    def download_file(self, requester: bytes, root: bytes) -> bytes:
        """Pay for ``root`` and fetch, verify and return its bytes.

        The payment is queued for the next round only once the bytes check
        out; ``last_grant`` holds the resulting DownloadGrant.
        """
        self._require_registered(requester)
        fd = self._scratch_ledger().contract.file_mapping.get(root)
        if fd is None:
            raise NotFound(f"file {root.hex()} is not registered")
        tx = ct.make_tx(ct.PAY_AND_DOWNLOAD, requester, root, self.clock, cents=fd.price_cents)
        self._scratch_ledger().copy().apply(tx)
        data = reassemble(self.manifest(root), self.fetch_chunk)
        self.last_grant = self.submit(tx)
        return data

    def request_chunk(self, requester: bytes, root: bytes, index: int) -> bytes:
        """Direct chunk fetch; only callers with access (owner, grantee, payer) get bytes."""
        if not ct.chk_access(self._scratch_ledger().contract, requester, root):
            side = self.record_violation(UNAUTHORIZED_DOWNLOAD, requester, self.gateway(requester))
            raise AccessDenied(f"{requester.hex()} has no access to {root.hex()}", side)
        return self.fetch_chunk(self.manifest(root).chunk_hashes[index])

    def grant_access(self, owner: bytes, addr: bytes, root: bytes):
        self.submit(ct.make_tx(ct.GRANT_ACCESS, owner, root, self.clock, addr=addr))

    def remove_access(self, owner: bytes, addr: bytes, root: bytes):
        self.submit(ct.make_tx(ct.REMOVE_ACCESS, owner, root, self.clock, addr=addr))

    def chk_access(self, addr: bytes, root: bytes) -> bool:
        return ct.chk_access(self.ledger.contract, addr, root)

    def revenue_report(self):
        return ct.revenue_report(self.ledger.contract)

    # -- persistence --------------------------------------------------------------

    def _load(self):
        chain_log = self.datadir / "chain.log"
        side_log = self.datadir / "sidechain.log"
        last_time = None
        if chain_log.exists():
            for line in _read_lines(chain_log):
                block = parse_block_line(line)
                self.broadcast_block(block, persist=False)
                last_time = block.header.timestamp
        if side_log.exists():
            side = load_side_chain(_read_lines(side_log))
            for node in self.nodes:
                node.side_chain = side.copy()
            if len(side):
                last_time = max(last_time or 0, side[-1].chain_time)
        if last_time is not None:
            self.clock = max(self.clock, last_time + 1)


def locate_chunk(net: SimNetwork, chunk_hash: bytes) -> list:
    """All node ids, nearest to the hash's first 20 bytes first."""
    key = bytes(chunk_hash)[:20]
    return sorted((n.node_id for n in net.nodes), key=lambda nid: (xor_distance(nid, key), nid))


def consensus_round(net: SimNetwork, pending_txs=None):
    return net.consensus_round(pending_txs)


def broadcast_block(net: SimNetwork, block):
    return net.broadcast_block(block)


def store_music(net: SimNetwork, uploader: bytes, wav_bytes: bytes, meta: ct.Meta) -> bytes:
    return net.store_music(uploader, wav_bytes, meta)


def download_file(net: SimNetwork, requester: bytes, root: bytes) -> bytes:
    return net.download_file(requester, root)


def _append_line(path: Path, line: bytes):
    with open(path, "ab") as fh:
        fh.write(line + b"\n")
        fh.flush()
        os.fsync(fh.fileno())


def _read_lines(path: Path) -> list:
    return [line for line in path.read_bytes().split(b"\n") if line]
