"""Scenario files and the simulation run that binds every subsystem together.

Format: ``#`` comments, ``[section]`` headers, and one record per line made of
space-separated ``key=value`` tokens. Sections and their keys:

``[world]``     seed horizon [difficulty=2 capacity=10 mine_delay=1 drop=0]
``[nodes]``     id kind=satellite|ground|user|tdrs [orbit=LEO|MEO|GEO]
                [roles=full,miner] [pos=x,y,z vel=x,y,z]
``[links]``     a=<class> b=<class> latency=<ticks>   (classes LEO MEO GEO GROUND USER TDRS)
``[zones]``     id master orbit members=1,2 [roster=3,4 votes=2:no threshold=1.0 delta=0.01]
``[debris]``    tick id zone pos vel radius [sensor]
``[mission]``   members miners budget beneficiary [fractions=1/6,...]
``[phases]``    tick phase submitter <field>=a;b ... [release=yes|no]
``[tdrs]``      id ground
``[followers]`` id lat lon rate
``[queries]``   tick id requester locations=lat:lon;... timeframes=a-b;... fee
``[events]``    tick type=tx origin via fee text
                tick type=mfa zone a b [response=tip|prev|<int>]
                tick type=join zone candidate
                tick type=read reader via (block=<i> | token=<hex>)
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import debris as debris_mod
from .common import KinematicState, Orbit
from .debris import DebrisDesk, DebrisObject
from .ledger import export_chain, validate_chain
from .mission import (
    PHASE_FIELDS,
    ConsortiumConfig,
    MissionError,
    MissionLedger,
    MissionPhase,
    PhaseRecord,
    audit_lifecycle,
)
from .sim import ChainQuery, EventKind, LinkModel, NodeKind, SimEvent, SimNode, World
from .tdrs import Follower, ImageQuery, TdrsError, TdrsWorkflow, causality_violations
from .tokens import DecisionToken, decode_token, token_transaction
from .zones import (
    AuthRejected,
    VirtualZone,
    ZoneError,
    create_zone,
    mfa_authenticate,
    request_join,
    zone_status,
)

log = logging.getLogger(__name__)


class ScenarioError(Exception):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class Record:
    line: int
    fields: dict[str, str]

    def get(self, key: str, default=None, cast=str):
        if key not in self.fields:
            if default is _REQUIRED:
                raise ScenarioError(self.line, f"missing field '{key}'")
            return default
        try:
            return cast(self.fields[key])
        except (ValueError, KeyError) as exc:
            raise ScenarioError(self.line, f"bad value for '{key}': {self.fields[key]!r} ({exc})") from None

    def req(self, key: str, cast=str):
        return self.get(key, _REQUIRED, cast)


_REQUIRED = object()

SECTIONS = ("world", "nodes", "links", "zones", "debris", "mission", "phases",
            "tdrs", "followers", "queries", "events")


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _vec(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ValueError("expected x,y,z")
    return tuple(parts)


def _yes(text: str) -> bool:
    if text not in ("yes", "no"):
        raise ValueError("expected yes or no")
    return text == "yes"


def parse_records(text: str) -> dict[str, list[Record]]:
    sections: dict[str, list[Record]] = {name: [] for name in SECTIONS}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            name = line.strip("[]").strip()
            if not line.endswith("]") or name not in sections:
                raise ScenarioError(lineno, f"unknown section {line!r}")
            current = name
            continue
        if current is None:
            raise ScenarioError(lineno, "record outside any section")
        fields = {}
        for token in line.split():
            key, sep, value = token.partition("=")
            if not sep or not key:
                raise ScenarioError(lineno, f"expected key=value, got {token!r}")
            if key in fields:
                raise ScenarioError(lineno, f"duplicate key '{key}'")
            fields[key] = value
        sections[current].append(Record(lineno, fields))
    return sections


@dataclass
class Scenario:
    seed: int
    horizon: int
    difficulty: int
    capacity: int
    mine_delay: int
    links: LinkModel
    nodes: list[tuple[int, SimNode]]
    zones: list[Record]
    debris: list[Record]
    mission: Record | None
    phases: list[Record]
    tdrs: Record | None
    followers: list[Record]
    queries: list[Record]
    events: list[Record]


def parse_scenario(text: str) -> Scenario:
    s = parse_records(text)
    if len(s["world"]) != 1:
        raise ScenarioError(s["world"][1].line if s["world"][1:] else 1,
                            "exactly one [world] record required")
    w = s["world"][0]
    links = LinkModel(drop_probability=w.get("drop", 0.0, float))
    for r in s["links"]:
        a, b = r.req("a").upper(), r.req("b").upper()
        classes = {"LEO", "MEO", "GEO", "GROUND", "USER", "TDRS"}
        if a not in classes or b not in classes:
            raise ScenarioError(r.line, f"unknown link class in {a}/{b}")
        latency = r.req("latency", int)
        if latency < 1:
            raise ScenarioError(r.line, "latency must be >= 1")
        links.overrides[frozenset((a, b))] = latency
    try:
        links.__post_init__()
    except ValueError as exc:
        raise ScenarioError(w.line, str(exc)) from None

    nodes = []
    seen = set()
    for r in s["nodes"]:
        nid = r.req("id", int)
        if nid in seen:
            raise ScenarioError(r.line, f"duplicate node id {nid}")
        seen.add(nid)
        roles = set(r.get("roles", "", lambda t: [x for x in t.split(",") if x]))
        unknown = roles - {"full", "miner", "reader"}
        if unknown:
            raise ScenarioError(r.line, f"unknown roles {sorted(unknown)}")
        state = None
        if "pos" in r.fields or "vel" in r.fields:
            state = KinematicState(r.req("pos", _vec), r.req("vel", _vec))
        try:
            node = SimNode(
                id=nid,
                kind=r.req("kind", NodeKind),
                orbit=r.get("orbit", None, Orbit),
                state=state,
                full="full" in roles or "miner" in roles,
                miner="miner" in roles,
            )
        except ValueError as exc:
            raise ScenarioError(r.line, str(exc)) from None
        nodes.append((r.line, node))

    difficulty = w.get("difficulty", 2, int)
    if not 0 <= difficulty <= 16:
        raise ScenarioError(w.line, "difficulty must be in 0..16")
    scn = Scenario(
        seed=w.req("seed", int),
        horizon=w.req("horizon", int),
        difficulty=difficulty,
        capacity=w.get("capacity", 10, int),
        mine_delay=w.get("mine_delay", 1, int),
        links=links,
        nodes=nodes,
        zones=s["zones"],
        debris=s["debris"],
        mission=s["mission"][0] if s["mission"] else None,
        phases=s["phases"],
        tdrs=s["tdrs"][0] if s["tdrs"] else None,
        followers=s["followers"],
        queries=s["queries"],
        events=s["events"],
    )
    if len(s["mission"]) > 1 or len(s["tdrs"]) > 1:
        raise ScenarioError((s["mission"] + s["tdrs"])[-1].line, "at most one [mission] and one [tdrs] record")
    if scn.phases and scn.mission is None:
        raise ScenarioError(scn.phases[0].line, "[phases] needs a [mission] record")
    if (scn.queries or scn.followers) and scn.tdrs is None:
        raise ScenarioError((scn.queries or scn.followers)[0].line, "[queries]/[followers] need a [tdrs] record")
    return scn


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())


class Simulation:
    """A built world plus the zone, mission and relay subsystems it hosts."""

    def __init__(self, scn: Scenario, seed: int | None = None):
        self.scn = scn
        self.seed = scn.seed if seed is None else seed
        self.world = World(
            seed=self.seed,
            difficulty=scn.difficulty,
            capacity=scn.capacity,
            links=scn.links,
            mine_delay=scn.mine_delay,
        )
        self.zones: dict[str, VirtualZone] = {}
        self.desks: dict[str, DebrisDesk] = {}
        self.mission: MissionLedger | None = None
        self.workflow: TdrsWorkflow | None = None
        self.violations: list[str] = []
        self._build()

    # -- construction ------------------------------------------------------------

    def _node_ref(self, rec: Record, key: str, kind: NodeKind | None = None, full=False) -> int:
        nid = rec.req(key, int)
        node = self.world.nodes.get(nid)
        if node is None:
            raise ScenarioError(rec.line, f"'{key}' references undefined node {nid}")
        if kind is not None and node.kind is not kind:
            raise ScenarioError(rec.line, f"node {nid} is a {node.kind.value}, expected {kind.value}")
        if full and not node.full:
            raise ScenarioError(rec.line, f"node {nid} must be a full node")
        return nid

    def _build(self) -> None:
        world = self.world
        for _, node in self.scn.nodes:
            world.attach_node(copy.deepcopy(node))
        for rec in self.scn.zones:
            self._build_zone(rec)
        debris_mod.install(world, self.desks)
        if self.scn.mission is not None:
            self._build_mission(self.scn.mission)
        if self.scn.tdrs is not None:
            self._build_tdrs(self.scn.tdrs)
        for rec in self.scn.debris:
            self._schedule_debris(rec)
        for rec in self.scn.events:
            self._schedule_event(rec)

    def _build_zone(self, rec: Record) -> None:
        zid = rec.req("id")
        if zid in self.zones:
            raise ScenarioError(rec.line, f"duplicate zone {zid}")
        master = self._node_ref(rec, "master", NodeKind.GROUND)
        members = []
        for nid in rec.req("members", _ints):
            node = self.world.nodes.get(nid)
            if node is None or node.kind is not NodeKind.SATELLITE:
                raise ScenarioError(rec.line, f"zone member {nid} is not a defined satellite")
            if node.state is None:
                raise ScenarioError(rec.line, f"zone member {nid} needs pos/vel")
            members.append(node)
        roster = rec.get("roster", [], _ints)
        for nid in roster:
            if nid not in self.world.nodes:
                raise ScenarioError(rec.line, f"roster references undefined node {nid}")
        votes = {}
        for item in rec.get("votes", "", str).split(","):
            if item:
                sat, _, verdict = item.partition(":")
                try:
                    votes[int(sat)] = _yes(verdict)
                except ValueError:
                    raise ScenarioError(rec.line, f"bad vote {item!r}") from None
        try:
            zone = create_zone(master, members, rec.req("orbit", Orbit), zid, roster, votes,
                               tick=self.world.now)
        except ZoneError as exc:
            raise ScenarioError(rec.line, str(exc)) from None
        for node in members:
            node.zone = zid
        self.zones[zid] = zone
        self.desks[zid] = DebrisDesk(zone, rec.get("threshold", 1.0, float),
                                     rec.get("delta", debris_mod.BASE_DELTA_KMS, float))
        self.world.emit(master, "ZONE_CREATED", zone=zid, orbit=zone.orbit, members=len(members),
                        genesis=zone.chain.genesis.bhc)

    def _build_mission(self, rec: Record) -> None:
        for key in ("members", "miners"):
            for nid in rec.req(key, _ints):
                if nid not in self.world.nodes:
                    raise ScenarioError(rec.line, f"'{key}' references undefined node {nid}")
        self._node_ref(rec, "beneficiary")
        fractions = rec.get("fractions", None, lambda t: tuple(Fraction(x) for x in t.split(",")))
        try:
            config = ConsortiumConfig(
                members=frozenset(rec.req("members", _ints)),
                miners=tuple(rec.req("miners", _ints)),
                budget=rec.req("budget", int),
                beneficiary=rec.req("beneficiary", int),
                **({"fractions": fractions} if fractions else {}),
            )
        except (ValueError, ZeroDivisionError) as exc:
            raise ScenarioError(rec.line, str(exc)) from None
        self.mission = MissionLedger(config)
        for prec in self.scn.phases:
            phase = prec.req("phase", int)
            if phase not in range(1, 7):
                raise ScenarioError(prec.line, f"phase must be 1..6, got {phase}")
            submitter = self._node_ref(prec, "submitter")
            payload = {
                k: tuple(x for x in v.split(";") if x)
                for k, v in prec.fields.items()
                if k in PHASE_FIELDS[MissionPhase(phase)]
            }
            record = PhaseRecord(MissionPhase(phase), submitter, payload)
            release = prec.get("release", True, _yes)
            self.world.call_at(prec.req("tick", int), submitter, self._submit_phase, record, release)

    def _build_tdrs(self, rec: Record) -> None:
        tid = self._node_ref(rec, "id", NodeKind.TDRS)
        ground = self._node_ref(rec, "ground", NodeKind.GROUND, full=True)
        followers = []
        for frec in self.scn.followers:
            fid = self._node_ref(frec, "id", NodeKind.SATELLITE)
            try:
                followers.append(Follower(fid, frec.req("lat", float), frec.req("lon", float),
                                          frec.req("rate", float)))
            except ValueError as exc:
                raise ScenarioError(frec.line, str(exc)) from None
        world = self.world
        self.workflow = TdrsWorkflow(
            chain=world.node(ground).chain,
            ground_station=ground,
            tdrs=tid,
            followers=followers,
            capacity=self.scn.capacity,
            on_commit=lambda block: world.broadcast_block(ground, block),
        )
        world.handlers["QUERY"] = self._on_query
        world.handlers["UPLINK"] = self._on_uplink
        world.handlers["DOWNLINK"] = self._on_downlink
        world.event_handlers[EventKind.QUERY_ARRIVAL] = self._on_query_arrival
        seen = set()
        for qrec in self.scn.queries:
            qid = qrec.req("id", int)
            if qid in seen:
                raise ScenarioError(qrec.line, f"duplicate query id {qid}")
            seen.add(qid)
            requester = self._node_ref(qrec, "requester")
            locations = qrec.req("locations", lambda t: tuple(
                tuple(float(x) for x in p.split(":")) for p in t.split(";") if p))
            timeframes = qrec.req("timeframes", lambda t: tuple(
                tuple(int(x) for x in p.split("-")) for p in t.split(";") if p))
            if any(len(p) != 2 for p in locations + timeframes):
                raise ScenarioError(qrec.line, "locations are lat:lon, timeframes are a-b")
            tick = qrec.req("tick", int)
            query = ImageQuery(qid, requester, locations, timeframes, qrec.req("fee", int), tick)
            try:
                query.request_token()
            except TdrsError as exc:
                raise ScenarioError(qrec.line, str(exc)) from None
            world.schedule(SimEvent(tick, EventKind.QUERY_ARRIVAL, requester, query))

    def _schedule_debris(self, rec: Record) -> None:
        zid = rec.req("zone")
        zone = self.zones.get(zid)
        if zone is None:
            raise ScenarioError(rec.line, f"undefined zone {zid}")
        sensor = rec.get("sensor", min(zone.members), int)
        if sensor not in self.world.nodes:
            raise ScenarioError(rec.line, f"'sensor' references undefined node {sensor}")
        try:
            obj = DebrisObject(rec.req("id"), KinematicState(rec.req("pos", _vec), rec.req("vel", _vec)),
                               rec.req("radius", float))
        except ValueError as exc:
            raise ScenarioError(rec.line, str(exc)) from None
        self.world.event_handlers[EventKind.DEBRIS_SPAWN] = self._on_debris_spawn
        self.world.schedule(SimEvent(rec.req("tick", int), EventKind.DEBRIS_SPAWN, sensor, (zid, obj)))

    def _schedule_event(self, rec: Record) -> None:
        tick = rec.req("tick", int)
        kind = rec.req("type")
        world = self.world
        if kind == "tx":
            origin = self._node_ref(rec, "origin")
            via = self._node_ref(rec, "via", full=True)
            tx = token_transaction(DecisionToken(rec.get("text", "", str), "scenario"),
                                   origin, tick, rec.get("fee", 0, int))
            world.call_at(tick, origin, world.submit_transaction, origin, tx, via)
        elif kind in ("mfa", "join"):
            zid = rec.req("zone")
            if zid not in self.zones:
                raise ScenarioError(rec.line, f"undefined zone {zid}")
            if kind == "mfa":
                a, b = self._node_ref(rec, "a"), self._node_ref(rec, "b")
                response = rec.get("response", "tip")
                if response not in ("tip", "prev"):
                    rec.get("response", cast=int)
                world.call_at(tick, a, self._mfa, zid, a, b, response)
            else:
                cand = self._node_ref(rec, "candidate", NodeKind.SATELLITE)
                world.call_at(tick, cand, self._join, zid, cand)
        elif kind == "read":
            reader = self._node_ref(rec, "reader")
            via = self._node_ref(rec, "via", full=True)
            if ("block" in rec.fields) == ("token" in rec.fields):
                raise ScenarioError(rec.line, "read needs exactly one of block= or token=")
            if "block" in rec.fields:
                query = ChainQuery(index=rec.req("block", int))
            else:
                query = ChainQuery(token_id=rec.req("token", bytes.fromhex))
            world.call_at(tick, reader, world.read_chain, reader, via, query)
        else:
            raise ScenarioError(rec.line, f"unknown event type {kind!r}")

    # -- event handlers ------------------------------------------------------------

    def _submit_phase(self, record: PhaseRecord, release: bool) -> None:
        world, ledger = self.world, self.mission
        try:
            block = ledger.submit_phase(record, world.now)
        except MissionError as exc:
            world.emit(record.submitter, "PHASE_REJECTED", phase=record.phase.value,
                       reason=type(exc).__name__)
            return
        world.emit(record.submitter, "PHASE_COMMITTED", phase=record.phase.value,
                   index=block.index, bhc=block.bhc)
        if release:
            tokens = ledger.release_funds(record.phase.value, world.now)
            world.emit(ledger.config.beneficiary, "FUNDS_RELEASED", phase=record.phase.value,
                       amount=tokens[0].amount if tokens else 0, total=ledger.total_released())

    def _mfa(self, zid: str, a: int, b: int, response: str) -> None:
        zone = self.zones[zid]
        if response == "tip":
            nonce = zone.tip_nonce
        elif response == "prev":
            nonce = zone.chain.blocks[-2].nonce if len(zone.chain) > 1 else zone.tip_nonce
        else:
            nonce = int(response)
        try:
            session = mfa_authenticate(a, b, zone, nonce, self.world.now)
        except AuthRejected as exc:
            self.world.emit(b, "MFA_REJECTED", zone=zid, initiator=a, nonce=nonce,
                            reason=exc.reason.name)
            return
        except ZoneError as exc:
            self.world.emit(b, "MFA_REJECTED", zone=zid, initiator=a, nonce=nonce,
                            reason=type(exc).__name__)
            return
        self.world.emit(b, "MFA_ESTABLISHED", zone=zid, initiator=a, nonce=nonce,
                        index=session.block.index, next_nonce=zone.tip_nonce)

    def _join(self, zid: str, candidate: int) -> None:
        zone = self.zones[zid]
        node = self.world.node(candidate)
        try:
            outcome = request_join(zone, node, self.world.now)
        except ZoneError as exc:
            self.world.emit(zone.master, "JOIN_REFUSED", zone=zid, candidate=candidate,
                            reason=type(exc).__name__)
            return
        for member, vote in outcome.votes:
            self.world.emit(member, "JOIN_VOTE", zone=zid, candidate=candidate, approve=vote)
        if outcome.admitted:
            node.zone = zid
            self.world.emit(zone.master, "JOIN_ADMITTED", zone=zid, candidate=candidate,
                            vid=outcome.virtual_id, index=outcome.block.index)
        else:
            self.world.emit(zone.master, "INTRUDER", zone=zid, candidate=candidate,
                            index=outcome.block.index)

    def _on_debris_spawn(self, world: World, event: SimEvent) -> None:
        zid, obj = event.data
        world.emit(event.node, "DEBRIS_SPAWN", zone=zid, debris=obj.debris_id)
        try:
            debris_mod.report_debris(world, event.node, obj, self.zones[zid])
        except ZoneError as exc:
            world.emit(event.node, "DEBRIS_REPORT_REFUSED", zone=zid, reason=type(exc).__name__)

    def _on_query_arrival(self, world: World, event: SimEvent) -> None:
        query: ImageQuery = event.data
        world.emit(event.node, "QUERY_SENT", query=query.query_id, fee=query.fee)
        world.send(event.node, self.workflow.ground_station, "QUERY", query)

    def _on_query(self, world: World, node: SimNode, msg) -> None:
        wf = self.workflow
        query: ImageQuery = msg.body
        try:
            request, _ = wf.submit_image_query(query, world.now)
        except TdrsError as exc:
            world.emit(node.id, "QUERY_REJECTED", query=query.query_id, reason=str(exc))
            return
        world.emit(node.id, "QUERY_COMMITTED", query=query.query_id, tx=request.tx_id)
        uplink = wf.uplink_to_tdrs(world.now)
        if uplink is not None:
            world.emit(node.id, "UPLINK_COMMITTED", tx=uplink.tx_id)
            world.send(node.id, wf.tdrs, "UPLINK", [query.query_id])

    def _on_uplink(self, world: World, node: SimNode, msg) -> None:
        wf = self.workflow
        try:
            assignment = wf.reallocate(msg.body, world.now)
        except TdrsError as exc:
            world.emit(node.id, "REALLOCATE_FAILED", reason=str(exc))
            self.violations.append(str(exc))
            return
        for qid in sorted(assignment.followers):
            done = assignment.completion[qid]
            world.emit(node.id, "ASSIGN", query=qid, follower=assignment.followers[qid], done=done)
            world.call_at(done, node.id, world.send, node.id, wf.ground_station, "DOWNLINK", qid)

    def _on_downlink(self, world: World, node: SimNode, msg) -> None:
        wf = self.workflow
        qid = msg.body
        tx = wf.downlink_feedback(qid, world.now)
        token_id = decode_token(tx.payload).token_id
        world.emit(node.id, "FEEDBACK_COMMITTED", query=qid, token=token_id)
        requester = wf.queries[qid].requester
        world.read_chain(requester, node.id, ChainQuery(token_id=token_id))

    # -- run + audit -----------------------------------------------------------------

    def run(self) -> list[str]:
        world = self.world
        world.run_until(self.scn.horizon)
        pending = len(world.queue)
        world.emit(0, "HORIZON", tick=self.scn.horizon, pending=pending)
        self.violations.extend(self.audit(quiescent=pending == 0))
        for v in self.violations:
            world.emit(0, "VIOLATION", detail=v.replace(" ", "_"))
        return self.violations

    def audit(self, quiescent: bool) -> list[str]:
        world = self.world
        problems = []
        if quiescent and world.links.drop_probability == 0 and not world.replicas_identical():
            problems.append("full-node replicas diverged after quiescence")
        for node in world.full_nodes():
            report = validate_chain(node.chain, world.difficulty)
            if not report.valid:
                problems.append(f"node {node.id} replica {report}")
        for zid, zone in sorted(self.zones.items()):
            report = validate_chain(zone.chain, zone.chain.difficulty)
            if not report.valid:
                problems.append(f"zone {zid} chain {report}")
            if set(zone.members) & set(zone.intruders):
                problems.append(f"zone {zid} has members on its intruder list")
            problems.extend(f"zone {zid}: {f}" for f in self.desks[zid].failures)
        if self.mission is not None:
            report = validate_chain(self.mission.chain, self.mission.chain.difficulty)
            if not report.valid:
                problems.append(f"mission chain {report}")
            problems.extend(audit_lifecycle(self.mission.chain, self.mission.config))
        if self.workflow is not None:
            problems.extend(causality_violations(world.best_chain()))
        return problems

    def write_artifacts(self, out: str | Path) -> list[Path]:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "events.log": "\n".join(self.world.log) + "\n",
            "main.chain": export_chain(self.world.best_chain()),
        }
        for zid, zone in sorted(self.zones.items()):
            files[f"zone_{zid}.chain"] = export_chain(zone.chain)
            files[f"zone_{zid}.status"] = zone_status(zone).format() + "\n"
        if self.mission is not None:
            files["mission.chain"] = export_chain(self.mission.chain)
            files["lifecycle.status"] = self.mission.status().format() + "\n"
        summary = [f"seed={self.seed}", f"difficulty={self.world.difficulty}"]
        summary += [f"replica node={n.id} height={len(n.chain)} tip={n.chain.tip.bhc.hex()}"
                    for n in self.world.full_nodes()]
        summary += [f"violation={v}" for v in self.violations] or ["violations=0"]
        files["summary.txt"] = "\n".join(summary) + "\n"
        written = []
        for name, content in files.items():
            path = out / name
            path.write_text(content)
            written.append(path)
        return written
