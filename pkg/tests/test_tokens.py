import hashlib
import random
import struct
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from orbitledger.common import KinematicState, Orbit
from orbitledger.ledger import mine_block, mine_genesis, validate_chain
from orbitledger.tokens import (
    TOKEN_TYPES,
    AssetDescriptor,
    AssetKind,
    DecisionToken,
    DownlinkFeedbackToken,
    FundingToken,
    InvalidFields,
    MalformedBytes,
    ManeuverToken,
    MissionPhaseToken,
    OrbitalAssetToken,
    TransactionSessionToken,
    UplinkToken,
    UserRequestToken,
    ZoneMembershipToken,
    ZoneRegistrationToken,
    decode_token,
    encode_token,
    mint_token,
    token_transaction,
    tokenize_asset,
    transaction_token,
)

FUZZ_PER_KIND = 10_000


def _text(rng):
    alphabet = "abcXYZ019 -_:éλ🚀"
    return "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 12)))


def _u64(rng):
    return rng.choice([0, 1, 2**64 - 1, rng.getrandbits(64), rng.randrange(1000)])


def _f(rng, lo=-1e5, hi=1e5):
    return rng.choice([0.0, rng.uniform(lo, hi), rng.uniform(-1, 1) * 1e-300])


def _vec(rng):
    return (_f(rng), _f(rng), _f(rng))


def _interval(rng):
    a = rng.getrandbits(40)
    return (a, a + rng.getrandbits(20))


def random_token(kind: int, rng: random.Random):
    if kind == 1:
        return UserRequestToken(
            _u64(rng), _u64(rng),
            tuple((rng.uniform(-90, 90), rng.uniform(-180, 180)) for _ in range(rng.randint(1, 4))),
            tuple(_interval(rng) for _ in range(rng.randint(1, 3))),
        )
    if kind == 2:
        return TransactionSessionToken(_text(rng), _text(rng))
    if kind == 3:
        return UplinkToken(_u64(rng), _u64(rng), rng.randbytes(rng.randrange(0, 40)))
    if kind == 4:
        s = rng.getrandbits(40)
        c = s + rng.getrandbits(10)
        return DownlinkFeedbackToken(_u64(rng), rng.randbytes(32), c + rng.getrandbits(10), s, c, _text(rng))
    if kind == 5:
        ak = rng.choice(list(AssetKind))
        radius = rng.uniform(0.001, 10) if ak is AssetKind.DEBRIS else rng.choice([0.0, rng.uniform(0, 10)])
        return OrbitalAssetToken(ak, _text(rng) + "x", _u64(rng), _vec(rng), _vec(rng), radius)
    if kind == 6:
        sats = rng.sample(range(1000), rng.randint(0, 5))
        return ManeuverToken(_text(rng), _u64(rng), rng.uniform(0, 50), tuple((s, _vec(rng)) for s in sats))
    if kind == 7:
        return MissionPhaseToken(rng.randint(1, 6), rng.randbytes(32), _u64(rng))
    if kind == 8:
        return DecisionToken(_text(rng), _text(rng))
    if kind == 9:
        return FundingToken(Fraction(rng.randint(1, 10**9), rng.randint(1, 10**6)), _u64(rng), rng.randint(1, 6))
    if kind == 10:
        sats = rng.sample(range(10_000), rng.randint(0, 6))
        return ZoneRegistrationToken(_text(rng) + "z", rng.choice(list(Orbit)), _u64(rng),
                                     tuple((s, v) for v, s in enumerate(sats, 1)))
    if kind == 11:
        return ZoneMembershipToken(_text(rng), _u64(rng), _u64(rng), rng.random() < 0.5)
    raise AssertionError(kind)


def one_of_each():
    rng = random.Random(0)
    return [random_token(k, rng) for k in sorted(TOKEN_TYPES)]


@pytest.mark.parametrize("token", one_of_each(), ids=lambda t: t.kind_name)
def test_each_kind_roundtrips(token):
    raw = encode_token(token)
    assert raw[0] == token.KIND
    assert decode_token(raw) == token
    assert encode_token(decode_token(raw)) == raw


@pytest.mark.parametrize("token", one_of_each(), ids=lambda t: t.kind_name)
def test_every_truncation_is_malformed(token):
    raw = encode_token(token)
    for n in range(len(raw)):
        with pytest.raises(MalformedBytes):
            decode_token(raw[:n])
    with pytest.raises(MalformedBytes):
        decode_token(raw + b"\x00")


@pytest.mark.parametrize("kind", sorted(TOKEN_TYPES))
def test_seeded_fuzz_roundtrip(kind):
    rng = random.Random(1000 + kind)
    for _ in range(FUZZ_PER_KIND):
        token = random_token(kind, rng)
        raw = encode_token(token)
        back = decode_token(raw)
        assert back == token and encode_token(back) == raw


def test_token_ids_injective_over_corpus():
    rng = random.Random(7)
    seen: dict[bytes, bytes] = {}
    kinds = sorted(TOKEN_TYPES)
    for i in range(100_000):
        raw = encode_token(random_token(kinds[i % len(kinds)], rng))
        tid = hashlib.sha256(raw).digest()
        assert seen.setdefault(tid, raw) == raw
    assert len(seen) > 99_000


@given(st.text(max_size=40), st.text(max_size=40), st.text(max_size=40), st.text(max_size=40))
def test_encoding_canonical(a, b, c, d):
    x, y = DecisionToken(a, b), DecisionToken(c, d)
    assert (encode_token(x) == encode_token(y)) == ((a, b) == (c, d))


def test_string_layout():
    raw = encode_token(DecisionToken("hi", "c"))
    assert raw == b"\x08" + struct.pack(">I", 2) + b"hi" + struct.pack(">I", 1) + b"c"


def test_debris_token_id_oracle():
    token = mint_token(
        "OrbitalAssetToken", asset_kind="debris", asset_id="D1", owner=7,
        position=(10.0, 0.0, 0.0), velocity=(-1.0, 0.0, 0.0), radius=0.5,
    )
    expected = hashlib.sha256(
        b"\x05" + bytes([list(AssetKind).index(AssetKind.DEBRIS)])
        + struct.pack(">I", 2) + b"D1" + struct.pack(">Q", 7)
        + struct.pack(">3d", 10.0, 0.0, 0.0) + struct.pack(">3d", -1.0, 0.0, 0.0)
        + struct.pack(">d", 0.5)
    ).digest()
    assert token.token_id == expected


class TestInvalidFields:
    def test_phase_seven(self):
        with pytest.raises(InvalidFields):
            mint_token("MissionPhaseToken", phase=7, payload_digest=bytes(32), submitter=1)

    def test_funding_nonpositive(self):
        with pytest.raises(InvalidFields):
            FundingToken(0, 1, 1)
        with pytest.raises(InvalidFields):
            FundingToken(Fraction(-1, 2), 1, 1)

    def test_request_needs_location(self):
        with pytest.raises(InvalidFields):
            UserRequestToken(1, 1, (), ((0, 1),))

    def test_request_location_range(self):
        with pytest.raises(InvalidFields):
            UserRequestToken(1, 1, ((91.0, 0.0),), ((0, 1),))

    def test_feedback_causality(self):
        with pytest.raises(InvalidFields):
            DownlinkFeedbackToken(1, bytes(32), downlink_tick=5, start_tick=6, completion_tick=7, feedback="")

    def test_debris_needs_radius(self):
        with pytest.raises(InvalidFields):
            OrbitalAssetToken("debris", "d", 0, (0, 0, 0), (0, 0, 0), 0.0)

    def test_unknown_kind(self):
        with pytest.raises(InvalidFields):
            mint_token("NoSuchToken")
        with pytest.raises(InvalidFields):
            mint_token(8, text="x")

    def test_nonfinite_vector(self):
        with pytest.raises(InvalidFields):
            OrbitalAssetToken("satellite", "s", 0, (float("nan"), 0, 0), (0, 0, 0))


def test_unknown_tag_and_bad_bool():
    with pytest.raises(MalformedBytes) as err:
        decode_token(b"\xff")
    assert err.value.offset == 0
    raw = bytearray(encode_token(ZoneMembershipToken("z", 1, 2, True)))
    raw[-1] = 2
    with pytest.raises(MalformedBytes):
        decode_token(bytes(raw))


def test_every_kind_persists_in_a_mined_block():
    txs = [token_transaction(t, issuer=1, timestamp=0) for t in one_of_each()]
    g = mine_genesis(difficulty=1)
    block, _ = mine_block(txs, g, 1, capacity=len(txs))
    assert validate_chain([g, block], 1).valid
    assert {type(transaction_token(tx)) for tx in block.transactions} == set(TOKEN_TYPES.values())


class TestTokenizeAsset:
    state = KinematicState((7000.0, 0.0, 0.0), (0.0, 7.5, 0.0))

    def test_satellite(self):
        token = tokenize_asset(AssetDescriptor(AssetKind.SATELLITE, "SAT-1", 3, self.state))
        assert token.asset_kind is AssetKind.SATELLITE
        assert token.state == self.state and token.owner == 3

    def test_distinct_kinds_distinct_ids(self):
        a = tokenize_asset(AssetDescriptor(AssetKind.ASTEROID, "X", 3, self.state))
        d = tokenize_asset(AssetDescriptor(AssetKind.DEBRIS, "X", 3, self.state, radius=1.0))
        assert a.token_id != d.token_id

    def test_identical_descriptors_share_id(self):
        desc = AssetDescriptor(AssetKind.ASTRONAUT, "crew-1", 9, self.state)
        assert tokenize_asset(desc).token_id == tokenize_asset(desc).token_id

    def test_unregistered_owner(self):
        with pytest.raises(InvalidFields):
            tokenize_asset(AssetDescriptor(AssetKind.SATELLITE, "s", 42, self.state), registered_owners={1, 2})
