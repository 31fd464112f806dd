"""
User registration and login backed by chain transactions.

Only a credential hash (unsalted SHA-256 of email and password) and the
derived address go on chain. Unsalted hashing is deliberate: duplicate
registrations are detected by hash equality. It also means equal
credentials hash equally everywhere, which a real deployment would not
accept.
"""
from dataclasses import dataclass

from .chain import Chain, append_block
from .encoding import ZERO_ADDRESS, address_from_hex, hash_from_hex, sha256
from .errors import AlreadyRegistered, InvalidCredential

REGISTER = "register"


@dataclass(frozen=True)
class Credential:
    email: str
    password: str

    def __post_init__(self):
        if not isinstance(self.email, str) or not isinstance(self.password, str):
            raise InvalidCredential("email and password must be strings")
        email = self.email.strip().lower()
        if not email or not self.password:
            raise InvalidCredential("email and password must be nonempty")
        if email.count("@") != 1 or email.startswith("@") or email.endswith("@"):
            raise InvalidCredential(f"malformed email {self.email!r}")
        object.__setattr__(self, "email", email)


def credential_hash(cred: Credential) -> bytes:
    return sha256(cred.email.encode("utf-8") + b"\x1f" + cred.password.encode("utf-8"))


def derive_address(cred_hash: bytes) -> bytes:
    return sha256(cred_hash + b"addr")[:20]


def registration_tx(cred: Credential, now: int) -> dict:
    h = credential_hash(cred)
    return {"caller": derive_address(h).hex(), "hash": h.hex(), "kind": REGISTER,
            "timestamp": int(now)}


class IdentityRegistry:
    """Replica index of registrations that have been committed to the chain."""

    def __init__(self):
        self.credentials = {}  # credential hash -> address

    def __contains__(self, address: bytes) -> bool:
        return address in self.addresses()

    def addresses(self) -> set:
        return set(self.credentials.values())

    def apply(self, tx: dict) -> bytes:
        try:
            h = hash_from_hex(tx["hash"])
            addr = address_from_hex(tx["caller"])
        except (KeyError, ValueError) as exc:
            raise InvalidCredential(f"malformed registration record: {exc}") from exc
        if derive_address(h) != addr:
            raise InvalidCredential("address does not derive from credential hash")
        if h in self.credentials:
            raise AlreadyRegistered("credential already registered")
        self.credentials[h] = addr
        return addr

    def to_dict(self) -> dict:
        return {h.hex(): a.hex() for h, a in sorted(self.credentials.items())}

    @classmethod
    def from_chain(cls, chain) -> "IdentityRegistry":
        reg = cls()
        for tx in chain.transactions():
            if tx.get("kind") == REGISTER:
                reg.apply(tx)
        return reg


def _registered_hashes(chain: Chain) -> set:
    return {tx["hash"] for tx in chain.transactions() if tx.get("kind") == REGISTER}


def register(chain: Chain, cred: Credential, now: int, validator: bytes = ZERO_ADDRESS) -> bytes:
    """Record a new credential on ``chain`` in its own block; return the address.

    The network simulator batches registrations into consensus rounds instead.
    """
    tx = registration_tx(cred, now)
    if tx["hash"] in _registered_hashes(chain):
        raise AlreadyRegistered(f"{cred.email} is already registered with this password")
    append_block(chain, [tx], validator, now)
    return bytes.fromhex(tx["caller"])


@dataclass(frozen=True)
class AuthResult:
    granted: bool
    address: bytes = None

    def __bool__(self):
        return self.granted


REVOKED = AuthResult(False)


def authenticate(chain: Chain, cred: Credential) -> AuthResult:
    h = credential_hash(cred)
    if h.hex() in _registered_hashes(chain):
        return AuthResult(True, derive_address(h))
    return REVOKED
