"""
Content-addressed chunk storage.

Files are split into fixed 256 KiB chunks, each addressed by the SHA-256 of
its bytes. A :class:`FileManifest` lists the chunk hashes in order under a
Merkle root (double-SHA256 interior nodes), which is the file's identity.
"""
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from .encoding import canonical_json, double_sha256, hash_from_hex, sha256
from .errors import IntegrityError, InvalidInput, NotFound

CHUNK_SIZE = 262144


def chunk_file(data: bytes) -> list:
    if not data:
        raise InvalidInput("cannot chunk empty input")
    data = bytes(data)
    return [data[i:i + CHUNK_SIZE] for i in range(0, len(data), CHUNK_SIZE)]


def chunk_hash(chunk: bytes) -> bytes:
    if not chunk or len(chunk) > CHUNK_SIZE:
        raise InvalidInput(f"chunk must hold 1..{CHUNK_SIZE} bytes")
    return sha256(chunk)


def merkle_root(hashes) -> bytes:
    """Bitcoin-style root: pair up, duplicate the odd tail, double-SHA256."""
    level = [bytes(h) for h in hashes]
    if not level:
        raise InvalidInput("merkle_root of an empty list")
    for h in level:
        if len(h) != 32:
            raise InvalidInput("merkle leaves must be 32-byte hashes")
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [double_sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


@dataclass(frozen=True)
class FileManifest:
    root: bytes
    chunk_hashes: tuple
    file_size: int
    author: str = ""
    title: str = ""
    date: int = 0

    def __post_init__(self):
        object.__setattr__(self, "chunk_hashes", tuple(bytes(h) for h in self.chunk_hashes))
        if not self.chunk_hashes:
            raise InvalidInput("manifest needs at least one chunk")
        if self.file_size <= 0:
            raise InvalidInput("file_size must be positive")

    @classmethod
    def build(cls, data: bytes, author: str = "", title: str = "", date: int = 0):
        hashes = [chunk_hash(c) for c in chunk_file(data)]
        return cls(merkle_root(hashes), tuple(hashes), len(data), author, title, int(date))

    def to_dict(self) -> dict:
        return {
            "author": self.author,
            "chunk_hashes": [h.hex() for h in self.chunk_hashes],
            "date": self.date,
            "file_size": self.file_size,
            "root": self.root.hex(),
            "title": self.title,
        }

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict):
        return cls(
            root=hash_from_hex(d["root"]),
            chunk_hashes=tuple(hash_from_hex(h) for h in d["chunk_hashes"]),
            file_size=int(d["file_size"]),
            author=d["author"],
            title=d["title"],
            date=int(d["date"]),
        )

    @classmethod
    def from_json(cls, raw: bytes):
        return cls.from_dict(json.loads(raw))


def build_manifest(data: bytes, author: str = "", title: str = "", date: int = 0) -> FileManifest:
    return FileManifest.build(data, author, title, date)


class ChunkStore:
    """Chunks and manifests keyed by hash.

    With ``datadir`` set, chunks live as ``<datadir>/chunks/<hex>`` and
    manifests as ``<datadir>/manifests/<root>.json``; otherwise everything is
    kept in memory. Writes take a lock; reads do not.
    """

    def __init__(self, datadir=None):
        self.datadir = Path(datadir) if datadir is not None else None
        self._chunks = {}
        self._manifests = {}
        self._lock = threading.Lock()
        if self.datadir is not None:
            (self.datadir / "chunks").mkdir(parents=True, exist_ok=True)
            (self.datadir / "manifests").mkdir(parents=True, exist_ok=True)
            for p in (self.datadir / "chunks").iterdir():
                self._chunks[bytes.fromhex(p.name)] = None  # lazily loaded
            for p in (self.datadir / "manifests").glob("*.json"):
                self._manifests[bytes.fromhex(p.stem)] = None

    def __len__(self):
        return len(self._chunks)

    def __contains__(self, h):
        return bytes(h) in self._chunks

    def hashes(self):
        return sorted(self._chunks)

    def put_chunk(self, chunk: bytes) -> bytes:
        chunk = bytes(chunk)
        h = chunk_hash(chunk)
        with self._lock:
            if h in self._chunks:
                return h
            if self.datadir is not None:
                _atomic_write(self.datadir / "chunks" / h.hex(), chunk)
            self._chunks[h] = chunk
        return h

    def get_chunk(self, h: bytes) -> bytes:
        h = bytes(h)
        if h not in self._chunks:
            raise NotFound(f"chunk {h.hex()} not in store")
        chunk = self._chunks[h]
        if chunk is None:
            chunk = (self.datadir / "chunks" / h.hex()).read_bytes()
            self._chunks[h] = chunk
        return chunk

    def put_manifest(self, manifest: FileManifest) -> bytes:
        with self._lock:
            if self.datadir is not None and manifest.root not in self._manifests:
                _atomic_write(self.datadir / "manifests" / f"{manifest.root.hex()}.json",
                              manifest.to_json())
            self._manifests[manifest.root] = manifest
        return manifest.root

    def get_manifest(self, root: bytes) -> FileManifest:
        root = bytes(root)
        if root not in self._manifests:
            raise NotFound(f"manifest {root.hex()} not in store")
        manifest = self._manifests[root]
        if manifest is None:
            raw = (self.datadir / "manifests" / f"{root.hex()}.json").read_bytes()
            manifest = FileManifest.from_json(raw)
            self._manifests[root] = manifest
        return manifest

    def has_manifest(self, root: bytes) -> bool:
        return bytes(root) in self._manifests

    # raw access for fault-injection tests
    def _overwrite(self, h: bytes, data: bytes):
        self._chunks[bytes(h)] = bytes(data)
        if self.datadir is not None:
            (self.datadir / "chunks" / bytes(h).hex()).write_bytes(data)

    def _drop(self, h: bytes):
        self._chunks.pop(bytes(h), None)
        if self.datadir is not None:
            (self.datadir / "chunks" / bytes(h).hex()).unlink(missing_ok=True)


def put_chunk(store: ChunkStore, chunk: bytes) -> bytes:
    return store.put_chunk(chunk)


def get_chunk(store: ChunkStore, h: bytes) -> bytes:
    return store.get_chunk(h)


def store_file(store: ChunkStore, data: bytes, author="", title="", date=0) -> FileManifest:
    manifest = build_manifest(data, author, title, date)
    for chunk in chunk_file(data):
        store.put_chunk(chunk)
    store.put_manifest(manifest)
    return manifest


def reassemble(manifest: FileManifest, fetch) -> bytes:
    """Fetch chunks in order through ``fetch(hash) -> bytes`` and verify them.

    Raises NotFound for a missing chunk and IntegrityError for a chunk whose
    bytes do not hash to the manifest entry or a root that does not match.
    """
    if merkle_root(manifest.chunk_hashes) != manifest.root:
        raise IntegrityError("manifest root does not match its chunk hashes", index=None)
    parts = []
    for i, expected in enumerate(manifest.chunk_hashes):
        chunk = fetch(expected)
        if not chunk or sha256(chunk) != expected:
            raise IntegrityError(f"chunk {i} hash mismatch", index=i)
        parts.append(chunk)
    data = b"".join(parts)
    if len(data) != manifest.file_size:
        raise IntegrityError("reassembled size differs from manifest", index=None)
    return data


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
