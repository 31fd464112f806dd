import hashlib
import random

import pytest

from tunechain.chain import (DUPLICATE_UPLOAD, HEADER_SIZE, BlockHeader, Chain, ParentBlock,
                             SideChain, Validator, append_block, block_hash,
                             canonical_header_bytes, make_violation, record_violation,
                             select_validator, tx_merkle_root, validate_chain, validate_log,
                             validate_side_chain, verify_violation, node_signature, load_chain)
from tunechain.encoding import ZERO_HASH, canonical_json
from tunechain.errors import InvalidInput

A, B, C = (bytes([i]) * 20 for i in (1, 2, 3))


def _tx(i):
    return {"kind": "grant_access", "caller": A.hex(), "hash": bytes([i]).hex() * 32,
            "addr": B.hex(), "timestamp": 1000 + i}


def build_chain(n=10, txs_per_block=3):
    chain = Chain()
    for height in range(n):
        append_block(chain, [_tx(height * 10 + j) for j in range(txs_per_block)], A, 1000 + height)
    return chain


def test_header_bytes():
    assert canonical_header_bytes(BlockHeader(version=0)) == bytes(88)
    out = canonical_header_bytes(BlockHeader(version=1))
    assert out[3] == 1 and out.count(0) == 87
    a = canonical_header_bytes(BlockHeader(nonce=1))
    b = canonical_header_bytes(BlockHeader(nonce=2))
    assert a[:80] == b[:80] and a[80:] != b[80:]
    assert HEADER_SIZE == 88


def test_block_hash_is_double_sha256():
    header = BlockHeader(version=1, prev_hash=bytes(range(32)), merkle_root=bytes(range(32, 64)),
                         timestamp=1582217516, target_difficulty=0x1d00ffff, nonce=7)
    raw = ((1).to_bytes(4, "big") + bytes(range(32)) + bytes(range(32, 64))
           + (1582217516).to_bytes(8, "big") + (0x1d00ffff).to_bytes(4, "big") + (7).to_bytes(8, "big"))
    expected = hashlib.sha256(hashlib.sha256(raw).digest()).digest()
    assert block_hash(header) == expected
    assert len(block_hash(header)) == 32
    flipped = BlockHeader(version=1, prev_hash=bytes(range(32)), merkle_root=bytes(range(32, 64)),
                          timestamp=1582217516 ^ 1, target_difficulty=0x1d00ffff, nonce=7)
    assert block_hash(flipped) != expected


def test_genesis_and_linkage():
    chain = Chain()
    g = append_block(chain, [_tx(0)], A, 10)
    assert len(chain) == 1 and g.header.prev_hash == ZERO_HASH
    b = append_block(chain, [], A, 11)
    assert b.header.prev_hash == block_hash(g.header)
    assert validate_chain(chain)


def test_block_fields():
    chain = build_chain(1)
    block = chain[0]
    assert block.tx_count == 3
    assert block.header.merkle_root == tx_merkle_root(block.transactions)
    assert block.header.nonce == 0


def test_untampered_chain_ok():
    assert validate_chain(build_chain(10)).ok
    assert validate_log([b.to_line() for b in build_chain(10)]).ok


def test_tampered_tx_reports_merkle_mismatch():
    chain = build_chain(10)
    chain[4].transactions[1]["timestamp"] += 1
    result = validate_chain(chain)
    assert (result.ok, result.height, result.reason) == (False, 4, "merkle root mismatch")


def test_fixed_up_merkle_root_cascades():
    chain = build_chain(10)
    block = chain[4]
    block.transactions[1]["timestamp"] += 1
    block.header = BlockHeader(version=1, prev_hash=block.header.prev_hash,
                               merkle_root=tx_merkle_root(block.transactions),
                               timestamp=block.header.timestamp)
    result = validate_chain(chain)
    assert (result.height, result.reason) == (5, "prev hash mismatch")


def test_tx_count_and_size_checked():
    chain = build_chain(3)
    chain[1].tx_count += 1
    assert validate_chain(chain).reason == "tx count mismatch"
    chain = build_chain(3)
    chain[2].block_size += 1
    assert (validate_chain(chain).height, validate_chain(chain).reason) == (2, "block size mismatch")


def test_log_catches_tip_header_tamper():
    lines = [b.to_line() for b in build_chain(3)]
    lines[-1] = lines[-1].replace(b'"nonce":0', b'"nonce":1')
    result = validate_log(lines)
    assert not result.ok and result.height == 2


def test_log_catches_validator_swap():
    lines = [b.to_line() for b in build_chain(3)]
    lines[1] = lines[1].replace(A.hex().encode(), C.hex().encode(), 1)
    lines[1] = lines[1].replace(b'"validator":"' + A.hex().encode(), b'"validator":"' + C.hex().encode())
    assert validate_log(lines).height == 1


def test_log_rejects_noncanonical_hex():
    chain = Chain()
    append_block(chain, [_tx(1)], bytes([0xab]) * 20, 1)
    line = chain[0].to_line()
    upper = line.replace(b'"validator":"abab', b'"validator":"ABab')
    assert upper != line
    assert validate_log([upper]).height == 0


def test_load_chain_roundtrip():
    chain = build_chain(4)
    loaded = load_chain([b.to_line() for b in chain])
    assert [b.hash for b in loaded] == [b.hash for b in chain]
    with pytest.raises(InvalidInput):
        load_chain([b.to_line() for b in chain][1:])


# -- side chain -----------------------------------------------------------------------

def test_record_violation():
    secret = b"s" * 32
    parent = block_hash(BlockHeader(timestamp=5))
    side = SideChain()
    v = make_violation(1234, B, DUPLICATE_UPLOAD, C, secret)
    block = record_violation(side, v, parent, 1240)
    assert block.violations[0].vt == 1
    assert block.id.startswith(parent.hex()[:8])
    assert block.chain_time == 1240 and block.tx_counter == 1
    assert v.ns == hashlib.sha256(C + canonical_json(v.body()) + secret).digest()
    assert verify_violation(v, secret) and not verify_violation(v, b"x" * 32)
    record_violation(side, make_violation(1300, A, 2, C, secret), parent, 1301)
    assert validate_side_chain(side).ok
    side[1].violations[0] = make_violation(1300, B, 2, C, secret)
    assert validate_side_chain(side).height == 1


def test_violation_type_checked():
    with pytest.raises(InvalidInput):
        make_violation(1, A, 3, B, b"k")


def test_node_signature_covers_body():
    body = {"nid": C.hex(), "tov": 1, "uid": A.hex(), "vt": 1}
    changed = dict(body, uid=B.hex())
    assert node_signature(C, body, b"k") != node_signature(C, changed, b"k")


# -- proof of stake -------------------------------------------------------------------

def test_single_validator_always_selected():
    rng = random.Random(1)
    assert all(select_validator([Validator(A, 5)], rng) == A for _ in range(100))


def test_zero_stake_rejected():
    with pytest.raises(InvalidInput):
        select_validator([Validator(A, 1), Validator(B, 0)], random.Random(0))
    with pytest.raises(InvalidInput):
        select_validator([], random.Random(0))


def test_selection_is_deterministic():
    vs = [Validator(A, 1), Validator(B, 3), Validator(C, 2)]
    first = [select_validator(vs, r) for r in [random.Random(9)] for _ in range(50)]
    second = [select_validator(vs, r) for r in [random.Random(9)] for _ in range(50)]
    assert first == second


def test_selection_linear_in_stake():
    vs = [Validator(A, 1), Validator(B, 1), Validator(C, 2)]
    rng = random.Random(42)
    n = 100_000
    counts = {A: 0, B: 0, C: 0}
    for _ in range(n):
        counts[select_validator(vs, rng)] += 1
    for node, share in ((A, 0.25), (B, 0.25), (C, 0.5)):
        assert abs(counts[node] / n - share) <= 0.01
