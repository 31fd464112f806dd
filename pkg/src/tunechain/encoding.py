"""Hashing and canonical serialization helpers."""
import hashlib
import json

ZERO_HASH = bytes(32)
ZERO_ADDRESS = bytes(20)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def double_sha256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def canonical_json(obj) -> bytes:
    """Sorted keys, no insignificant whitespace, ASCII only."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def from_hex(value: str, size: int, what: str = "value") -> bytes:
    """Decode lowercase hex of an exact byte length."""
    if not isinstance(value, str) or len(value) != 2 * size or value != value.lower():
        raise ValueError(f"{what} must be {2 * size} lowercase hex chars")
    try:
        return bytes.fromhex(value)
    except ValueError as exc:
        raise ValueError(f"{what} is not hex") from exc


def address_from_hex(value: str) -> bytes:
    return from_hex(value, 20, "address")


def hash_from_hex(value: str) -> bytes:
    return from_hex(value, 32, "hash")
