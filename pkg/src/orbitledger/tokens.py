"""Space digital tokens and their canonical byte encoding.

Encoding: a 1-byte kind tag followed by the kind's fields in declaration order.
Integers are big-endian u64 (u8 for small enums/bools), floats IEEE-754
binary64, strings UTF-8 and byte blobs u32-length-prefixed, lists
u32-count-prefixed, fractions a (numerator, denominator) u64 pair.

Zone registration payload (kind 10): zone_id str | orbit str | master u64 |
list of (satellite u64, virtual_id u64).
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Any, ClassVar

from .common import KinematicState, NodeId, Orbit, check_u64
from .ledger import Transaction


class InvalidFields(ValueError):
    pass


class MalformedBytes(ValueError):
    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")


class AssetKind(str, enum.Enum):
    ORBIT = "orbit"
    SATELLITE = "satellite"
    ASTEROID = "asteroid"
    DEBRIS = "debris"
    SPACECRAFT = "spacecraft"
    ASTRONAUT = "astronaut"


# -- field codecs ---------------------------------------------------------


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise MalformedBytes(self.pos, f"need {n} bytes, {len(self.buf) - self.pos} left")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out


class _Codec:
    def encode(self, value, out: list[bytes]) -> None:
        raise NotImplementedError

    def decode(self, r: _Reader):
        raise NotImplementedError


class _Struct(_Codec):
    def __init__(self, fmt: str):
        self.s = struct.Struct(fmt)

    def encode(self, value, out):
        out.append(self.s.pack(value))

    def decode(self, r):
        return self.s.unpack(r.take(self.s.size))[0]


U8 = _Struct(">B")
U32 = _Struct(">I")
U64 = _Struct(">Q")
F64 = _Struct(">d")


class _Blob(_Codec):
    def encode(self, value, out):
        U32.encode(len(value), out)
        out.append(bytes(value))

    def decode(self, r):
        return r.take(U32.decode(r))


class _Str(_Codec):
    def encode(self, value, out):
        _BLOB.encode(value.encode("utf-8"), out)

    def decode(self, r):
        at = r.pos
        raw = _BLOB.decode(r)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedBytes(at, f"invalid utf-8: {exc.reason}") from None


class _Digest(_Codec):
    def encode(self, value, out):
        out.append(value)

    def decode(self, r):
        return r.take(32)


class _Bool(_Codec):
    def encode(self, value, out):
        U8.encode(int(value), out)

    def decode(self, r):
        at = r.pos
        v = U8.decode(r)
        if v > 1:
            raise MalformedBytes(at, f"bool byte {v}")
        return bool(v)


class _Enum(_Codec):
    def __init__(self, enum_cls):
        self.members = list(enum_cls)

    def encode(self, value, out):
        U8.encode(self.members.index(value), out)

    def decode(self, r):
        at = r.pos
        i = U8.decode(r)
        if i >= len(self.members):
            raise MalformedBytes(at, f"enum ordinal {i} out of range")
        return self.members[i]


class _Frac(_Codec):
    def encode(self, value, out):
        U64.encode(value.numerator, out)
        U64.encode(value.denominator, out)

    def decode(self, r):
        at = r.pos
        num, den = U64.decode(r), U64.decode(r)
        if den == 0:
            raise MalformedBytes(at, "zero denominator")
        return Fraction(num, den)


class _Tuple(_Codec):
    def __init__(self, *items: _Codec):
        self.items = items

    def encode(self, value, out):
        for codec, v in zip(self.items, value):
            codec.encode(v, out)

    def decode(self, r):
        return tuple(c.decode(r) for c in self.items)


class _List(_Codec):
    def __init__(self, item: _Codec):
        self.item = item

    def encode(self, value, out):
        U32.encode(len(value), out)
        for v in value:
            self.item.encode(v, out)

    def decode(self, r):
        return tuple(self.item.decode(r) for _ in range(U32.decode(r)))


_BLOB = _Blob()
STR = _Str()
DIGEST = _Digest()
BOOL = _Bool()
FRAC = _Frac()
VEC3 = _Tuple(F64, F64, F64)
LATLON = _Tuple(F64, F64)
INTERVAL = _Tuple(U64, U64)


# -- token kinds ------------------------------------------------------------


def _fail(cls, msg: str):
    raise InvalidFields(f"{cls.__name__}: {msg}")


def _finite(cls, name, x) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        _fail(cls, f"{name} must be a number")
    x = float(x) + 0.0
    if not math.isfinite(x):
        _fail(cls, f"{name} must be finite")
    return x


def _uint(cls, name, v) -> int:
    try:
        return check_u64(name, v)
    except (TypeError, ValueError) as exc:
        _fail(cls, str(exc))


def _vec(cls, name, v) -> tuple[float, float, float]:
    v = tuple(v)
    if len(v) != 3:
        _fail(cls, f"{name} must have 3 components")
    return tuple(_finite(cls, name, x) for x in v)


def _text(cls, name, v) -> str:
    if not isinstance(v, str):
        _fail(cls, f"{name} must be a str")
    return v


def _digest(cls, name, v) -> bytes:
    if not isinstance(v, (bytes, bytearray)) or len(v) != 32:
        _fail(cls, f"{name} must be 32 bytes")
    return bytes(v)


class SpaceToken:
    """Base for all token kinds; subclasses are frozen dataclasses."""

    KIND: ClassVar[int]
    SCHEMA: ClassVar[tuple[_Codec, ...]]

    def _normalize(self) -> None:
        pass

    def __post_init__(self):
        self._normalize()

    def _set(self, name: str, value: Any) -> None:
        object.__setattr__(self, name, value)

    @property
    def token_id(self) -> bytes:
        return hashlib.sha256(encode_token(self)).digest()

    @property
    def kind_name(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class UserRequestToken(SpaceToken):
    query_id: int
    requester: NodeId
    locations: tuple[tuple[float, float], ...]
    timeframes: tuple[tuple[int, int], ...]

    KIND = 1
    SCHEMA = (U64, U64, _List(LATLON), _List(INTERVAL))

    def _normalize(self):
        cls = type(self)
        _uint(cls, "query_id", self.query_id)
        _uint(cls, "requester", self.requester)
        locs = []
        for loc in self.locations:
            lat, lon = (_finite(cls, "location", x) for x in loc)
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                _fail(cls, f"location ({lat}, {lon}) out of range")
            locs.append((lat, lon))
        frames = []
        for start, end in self.timeframes:
            _uint(cls, "timeframe", start)
            _uint(cls, "timeframe", end)
            if end < start:
                _fail(cls, f"timeframe ({start}, {end}) ends before it starts")
            frames.append((start, end))
        if not locs:
            _fail(cls, "at least one location required")
        if not frames:
            _fail(cls, "at least one timeframe required")
        self._set("locations", tuple(locs))
        self._set("timeframes", tuple(frames))


@dataclass(frozen=True)
class TransactionSessionToken(SpaceToken):
    session_id: str
    metadata: str

    KIND = 2
    SCHEMA = (STR, STR)

    def _normalize(self):
        _text(type(self), "session_id", self.session_id)
        _text(type(self), "metadata", self.metadata)


@dataclass(frozen=True)
class UplinkToken(SpaceToken):
    ground_station: NodeId
    tdrs: NodeId
    command: bytes

    KIND = 3
    SCHEMA = (U64, U64, _BLOB)

    def _normalize(self):
        _uint(type(self), "ground_station", self.ground_station)
        _uint(type(self), "tdrs", self.tdrs)
        if not isinstance(self.command, (bytes, bytearray)):
            _fail(type(self), "command must be bytes")
        self._set("command", bytes(self.command))


@dataclass(frozen=True)
class DownlinkFeedbackToken(SpaceToken):
    query_id: int
    image_digest: bytes
    downlink_tick: int
    start_tick: int
    completion_tick: int
    feedback: str

    KIND = 4
    SCHEMA = (U64, DIGEST, U64, U64, U64, STR)

    def _normalize(self):
        cls = type(self)
        for name in ("query_id", "downlink_tick", "start_tick", "completion_tick"):
            _uint(cls, name, getattr(self, name))
        self._set("image_digest", _digest(cls, "image_digest", self.image_digest))
        _text(cls, "feedback", self.feedback)
        if not self.start_tick <= self.completion_tick <= self.downlink_tick:
            _fail(cls, "require start_tick <= completion_tick <= downlink_tick")


@dataclass(frozen=True)
class OrbitalAssetToken(SpaceToken):
    asset_kind: AssetKind
    asset_id: str
    owner: NodeId
    position: tuple[float, float, float]
    velocity: tuple[float, float, float]
    radius: float = 0.0

    KIND = 5
    SCHEMA = (_Enum(AssetKind), STR, U64, VEC3, VEC3, F64)

    def _normalize(self):
        cls = type(self)
        try:
            self._set("asset_kind", AssetKind(self.asset_kind))
        except ValueError:
            _fail(cls, f"unknown asset kind {self.asset_kind!r}")
        if not _text(cls, "asset_id", self.asset_id):
            _fail(cls, "asset_id must be nonempty")
        _uint(cls, "owner", self.owner)
        self._set("position", _vec(cls, "position", self.position))
        self._set("velocity", _vec(cls, "velocity", self.velocity))
        radius = _finite(cls, "radius", self.radius)
        if radius < 0 or (self.asset_kind is AssetKind.DEBRIS and radius <= 0):
            _fail(cls, f"radius {radius} invalid for {self.asset_kind.value}")
        self._set("radius", radius)

    @property
    def state(self) -> KinematicState:
        return KinematicState(self.position, self.velocity)


@dataclass(frozen=True)
class ManeuverToken(SpaceToken):
    zone_id: str
    planning_tick: int
    threshold_km: float
    deltas: tuple[tuple[NodeId, tuple[float, float, float]], ...]

    KIND = 6
    SCHEMA = (STR, U64, F64, _List(_Tuple(U64, VEC3)))

    def _normalize(self):
        cls = type(self)
        _text(cls, "zone_id", self.zone_id)
        _uint(cls, "planning_tick", self.planning_tick)
        self._set("threshold_km", _finite(cls, "threshold_km", self.threshold_km))
        deltas = tuple(
            (_uint(cls, "satellite", sat), _vec(cls, "delta", dv))
            for sat, dv in self.deltas
        )
        if len({sat for sat, _ in deltas}) != len(deltas):
            _fail(cls, "duplicate satellite in deltas")
        self._set("deltas", deltas)


@dataclass(frozen=True)
class MissionPhaseToken(SpaceToken):
    phase: int
    payload_digest: bytes
    submitter: NodeId

    KIND = 7
    SCHEMA = (U8, DIGEST, U64)

    def _normalize(self):
        cls = type(self)
        if isinstance(self.phase, bool) or self.phase not in range(1, 7):
            _fail(cls, f"phase must be in 1..6, got {self.phase!r}")
        self._set("payload_digest", _digest(cls, "payload_digest", self.payload_digest))
        _uint(cls, "submitter", self.submitter)


@dataclass(frozen=True)
class DecisionToken(SpaceToken):
    text: str
    contract_id: str

    KIND = 8
    SCHEMA = (STR, STR)

    def _normalize(self):
        _text(type(self), "text", self.text)
        _text(type(self), "contract_id", self.contract_id)


@dataclass(frozen=True)
class FundingToken(SpaceToken):
    amount: Fraction
    beneficiary: NodeId
    phase: int

    KIND = 9
    SCHEMA = (FRAC, U64, U8)

    def _normalize(self):
        cls = type(self)
        try:
            amount = Fraction(self.amount)
        except (TypeError, ValueError):
            _fail(cls, f"amount {self.amount!r} is not rational")
        if amount <= 0:
            _fail(cls, "amount must be > 0")
        _uint(cls, "amount numerator", amount.numerator)
        _uint(cls, "amount denominator", amount.denominator)
        self._set("amount", amount)
        _uint(cls, "beneficiary", self.beneficiary)
        if isinstance(self.phase, bool) or self.phase not in range(1, 7):
            _fail(cls, f"phase must be in 1..6, got {self.phase!r}")


@dataclass(frozen=True)
class ZoneRegistrationToken(SpaceToken):
    zone_id: str
    orbit: Orbit
    master: NodeId
    virtual_ids: tuple[tuple[NodeId, int], ...]

    KIND = 10
    SCHEMA = (STR, _Enum(Orbit), U64, _List(_Tuple(U64, U64)))

    def _normalize(self):
        cls = type(self)
        if not _text(cls, "zone_id", self.zone_id):
            _fail(cls, "zone_id must be nonempty")
        try:
            self._set("orbit", Orbit(self.orbit))
        except ValueError:
            _fail(cls, f"unknown orbit {self.orbit!r}")
        _uint(cls, "master", self.master)
        pairs = tuple((_uint(cls, "satellite", s), _uint(cls, "virtual_id", v)) for s, v in self.virtual_ids)
        if len({v for _, v in pairs}) != len(pairs) or len({s for s, _ in pairs}) != len(pairs):
            _fail(cls, "satellites and virtual ids must be unique")
        self._set("virtual_ids", pairs)


@dataclass(frozen=True)
class ZoneMembershipToken(SpaceToken):
    """Outcome of one join request: admission with a virtual id, or intruder."""

    zone_id: str
    satellite: NodeId
    virtual_id: int
    admitted: bool

    KIND = 11
    SCHEMA = (STR, U64, U64, BOOL)

    def _normalize(self):
        cls = type(self)
        _text(cls, "zone_id", self.zone_id)
        _uint(cls, "satellite", self.satellite)
        _uint(cls, "virtual_id", self.virtual_id)
        if not isinstance(self.admitted, bool):
            _fail(cls, "admitted must be a bool")


TOKEN_TYPES: dict[int, type[SpaceToken]] = {
    cls.KIND: cls
    for cls in (
        UserRequestToken,
        TransactionSessionToken,
        UplinkToken,
        DownlinkFeedbackToken,
        OrbitalAssetToken,
        ManeuverToken,
        MissionPhaseToken,
        DecisionToken,
        FundingToken,
        ZoneRegistrationToken,
        ZoneMembershipToken,
    )
}
TOKEN_NAMES = {cls.__name__: cls for cls in TOKEN_TYPES.values()}


def encode_token(token: SpaceToken) -> bytes:
    out = [bytes([token.KIND])]
    for codec, f in zip(token.SCHEMA, fields(token)):
        codec.encode(getattr(token, f.name), out)
    return b"".join(out)


def decode_token(buf: bytes) -> SpaceToken:
    r = _Reader(bytes(buf))
    tag = U8.decode(r)
    cls = TOKEN_TYPES.get(tag)
    if cls is None:
        raise MalformedBytes(0, f"unknown kind tag {tag}")
    values = [codec.decode(r) for codec in cls.SCHEMA]
    if r.pos != len(r.buf):
        raise MalformedBytes(r.pos, f"{len(r.buf) - r.pos} trailing bytes")
    try:
        return cls(*values)
    except InvalidFields as exc:
        raise MalformedBytes(1, f"decoded fields invalid: {exc}") from None


def mint_token(kind: str | int | type[SpaceToken], **kwargs) -> SpaceToken:
    """Build a validated token of ``kind`` (tag, class name, or class)."""
    if isinstance(kind, int):
        cls = TOKEN_TYPES.get(kind)
    elif isinstance(kind, str):
        cls = TOKEN_NAMES.get(kind)
    else:
        cls = kind if kind in TOKEN_TYPES.values() else None
    if cls is None:
        raise InvalidFields(f"unknown token kind {kind!r}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidFields(f"{cls.__name__}: {exc}") from None


def token_transaction(token: SpaceToken, issuer: NodeId, timestamp: int, fee: int = 0) -> Transaction:
    return Transaction(timestamp=timestamp, issuer=issuer, fee=fee, payload=encode_token(token))


def transaction_token(tx: Transaction) -> SpaceToken:
    return decode_token(tx.payload)


@dataclass(frozen=True)
class AssetDescriptor:
    kind: AssetKind
    label: str
    owner: NodeId
    state: KinematicState
    radius: float = 0.0


def tokenize_asset(descriptor: AssetDescriptor, registered_owners=None) -> OrbitalAssetToken:
    """Content-addressed token for a space asset; identical descriptors share an id."""
    if registered_owners is not None and descriptor.owner not in registered_owners:
        raise InvalidFields(f"owner {descriptor.owner} is not a registered stakeholder")
    return OrbitalAssetToken(
        asset_kind=descriptor.kind,
        asset_id=descriptor.label,
        owner=descriptor.owner,
        position=descriptor.state.position,
        velocity=descriptor.state.velocity,
        radius=descriptor.radius,
    )
