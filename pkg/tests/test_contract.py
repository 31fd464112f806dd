import pytest
from hypothesis import settings, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from tunechain import contract as ct
from tunechain.encoding import ZERO_ADDRESS, ZERO_HASH
from tunechain.errors import NotFound, Revert

from contract_fuzz import FPS, project, run_sequence
from model import ContractModel, ModelRevert

A, B, C = (bytes([i]) * 20 for i in (0xA, 0xB, 0xC))
H, H2 = bytes([1]) * 32, bytes([2]) * 32
FP1, FP2 = FPS[0], FPS[1]
META = ct.Meta("Michael", "Street Hustle", 1582221116)


def ctx(who, now=0):
    return ct.TxContext(who, now)


@pytest.fixture
def state():
    s = ct.ContractState()
    ct.add_block(s, ctx(A), H, FP1, META, 137)
    return s


def test_add_block_sets_owner(state):
    fd = state.file_mapping[H]
    assert fd.owner == A and fd.downloads == 0 and fd.access == {}


def test_add_block_existing_hash_reverts(state):
    with pytest.raises(Revert, match="exists"):
        ct.add_block(state, ctx(B), H, FP2, META, 137)


def test_add_block_empty_hash():
    with pytest.raises(Revert, match="empty hash"):
        ct.add_block(ct.ContractState(), ctx(A), ZERO_HASH, FP1, META)


def test_add_block_duplicate_fingerprint(state):
    with pytest.raises(Revert, match="duplicate fingerprint"):
        ct.add_block(state, ctx(B), H2, FP1, META)


def test_grant_then_check(state):
    ct.grant_access(state, ctx(A), B, H)
    assert ct.chk_access(state, B, H)
    assert state.file_mapping[H].allowed_addresses == [B]
    ct.grant_access(state, ctx(A), B, H)
    assert state.file_mapping[H].allowed_addresses == [B]  # append-once


def test_non_owner_grant_reverts(state):
    with pytest.raises(Revert, match="not owner"):
        ct.grant_access(state, ctx(C), B, H)


def test_grant_empty_address(state):
    with pytest.raises(Revert, match="empty address"):
        ct.grant_access(state, ctx(A), ZERO_ADDRESS, H)
    with pytest.raises(Revert, match="empty hash"):
        ct.grant_access(state, ctx(A), B, ZERO_HASH)
    with pytest.raises(Revert, match="unknown hash"):
        ct.grant_access(state, ctx(A), B, H2)


def test_remove_access(state):
    ct.grant_access(state, ctx(A), B, H)
    ct.remove_access(state, ctx(A), B, H)
    assert not ct.chk_access(state, B, H)
    assert state.file_mapping[H].allowed_addresses == [B]  # kept as history
    ct.remove_access(state, ctx(A), C, H)  # never granted: no-op
    assert state.file_mapping[H].access[C] is False
    with pytest.raises(Revert, match="not owner"):
        ct.remove_access(state, ctx(B), B, H)


def test_music_owner(state):
    assert ct.music_owner(state, ctx(A), H)
    assert not ct.music_owner(state, ctx(B), H)
    assert not ct.music_owner(state, ctx(A), ZERO_HASH)
    assert not ct.music_owner(state, ctx(A), H2)


def test_chk_access_owner_and_empty(state):
    assert ct.chk_access(state, A, H)
    assert not ct.chk_access(state, ZERO_ADDRESS, H)
    assert not ct.chk_access(state, B, H)
    assert not ct.chk_access(state, A, H2)


def test_pay_and_download(state):
    grant = ct.pay_and_download(state, ctx(B), H)
    assert grant.granted_to == B and grant.hash == H and len(grant.receipt_id) == 64
    assert state.file_mapping[H].downloads == 1
    assert ct.revenue(state, H) == 137
    assert ct.chk_access(state, B, H)
    ct.pay_and_download(state, ctx(A), H)  # the owner's own purchase counts too
    assert state.file_mapping[H].downloads == 2
    with pytest.raises(Revert, match="empty caller"):
        ct.pay_and_download(state, ctx(ZERO_ADDRESS), H)
    with pytest.raises(Revert, match="unknown hash"):
        ct.pay_and_download(state, ctx(B), H2)


@pytest.mark.parametrize("downloads,cents", [(22, 3014), (602, 82474), (0, 0), (2, 274), (3, 411)])
def test_revenue(state, downloads, cents):
    for _ in range(downloads):
        ct.pay_and_download(state, ctx(B), H)
    assert ct.revenue(state, H) == cents


def test_revenue_unknown():
    with pytest.raises(NotFound):
        ct.revenue(ct.ContractState(), H)


def test_revenue_report_order_and_values():
    s = ct.ContractState()
    rows = [("Johnson", 1582697000, 5), ("Sean Kingston", 1582305000, 1), ("Wydef", 1582284000, 3),
            ("Stonebwoy", 1582283000, 22), ("Michael", 1582221000, 602)]
    for i, (author, date, n) in reversed(list(enumerate(rows))):
        h = bytes([i + 1]) * 32
        ct.add_block(s, ctx(A), h, FPS[i], ct.Meta(author, author, date))
        for _ in range(n):
            ct.pay_and_download(s, ctx(B), h)
    report = ct.revenue_report(s)
    assert [r.author for r in report] == [r[0] for r in rows]
    assert [ct.format_cents(r.revenue_cents) for r in report] == ["$6.85", "$1.37", "$4.11", "$30.14", "$824.74"]
    assert ct.revenue_report(ct.ContractState()) == []


def test_format_cents():
    assert ct.format_cents(0) == "$0.00"
    assert ct.format_cents(5) == "$0.05"
    assert ct.format_cents(82474) == "$824.74"


def test_apply_tx_roundtrip(state):
    tx = ct.make_tx(ct.GRANT_ACCESS, A, H, 5, addr=B)
    ct.apply_tx(state, tx)
    assert ct.chk_access(state, B, H)
    with pytest.raises(Revert):
        ct.apply_tx(state, {"kind": "grant_access", "caller": "zz"})
    with pytest.raises(Revert, match="price"):
        ct.apply_tx(state, ct.make_tx(ct.PAY_AND_DOWNLOAD, B, H, 5, cents=1))


@pytest.mark.parametrize("seed", range(25))
def test_model_equivalence_sample(seed):
    run_sequence(seed)


class ContractMachine(RuleBasedStateMachine):
    addrs = st.sampled_from([ZERO_ADDRESS, A, B, C])
    hashes = st.sampled_from([ZERO_HASH, H, H2])

    def __init__(self):
        super().__init__()
        self.state = ct.ContractState()
        self.model = ContractModel()
        self.grants = {}  # last grant/remove event per (addr, hash)

    def _both(self, impl, ref):
        before = self.state.serialize()
        try:
            ref()
            expected = None
        except ModelRevert as exc:
            expected = str(exc)
        try:
            impl()
            got = None
        except Revert as exc:
            got = exc.reason
        assert got == expected
        if got is not None:
            assert self.state.serialize() == before
        return got is None

    @rule(caller=addrs, h=hashes, fp=st.sampled_from(FPS[:3]))
    def add(self, caller, h, fp):
        self._both(lambda: ct.add_block(self.state, ctx(caller), h, fp, META),
                   lambda: self.model.add_block(caller, h, fp, 137))

    @rule(caller=addrs, addr=addrs, h=hashes)
    def grant(self, caller, addr, h):
        if self._both(lambda: ct.grant_access(self.state, ctx(caller), addr, h),
                      lambda: self.model.grant(caller, addr, h)):
            self.grants[(addr, h)] = True

    @rule(caller=addrs, addr=addrs, h=hashes)
    def remove(self, caller, addr, h):
        if self._both(lambda: ct.remove_access(self.state, ctx(caller), addr, h),
                      lambda: self.model.remove(caller, addr, h)):
            self.grants[(addr, h)] = False

    @rule(caller=addrs, h=hashes)
    def pay(self, caller, h):
        if self._both(lambda: ct.pay_and_download(self.state, ctx(caller), h),
                      lambda: self.model.pay(caller, h)):
            self.grants[(caller, h)] = True

    @invariant()
    def matches_model(self):
        assert project(self.state) == self.model.snapshot()

    @invariant()
    def access_soundness(self):
        for h, fd in self.state.file_mapping.items():
            for a in (A, B, C):
                if ct.chk_access(self.state, a, h):
                    assert a == fd.owner or self.grants.get((a, h)) is True

    @invariant()
    def granted_addresses_are_listed(self):
        for fd in self.state.file_mapping.values():
            for a, v in fd.access.items():
                assert not v or a in fd.allowed_addresses


ContractMachine.TestCase.settings = settings(max_examples=60, stateful_step_count=40, deadline=None)
TestContractMachine = ContractMachine.TestCase
