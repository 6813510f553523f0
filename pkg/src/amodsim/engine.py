"""Discrete-event simulation loop and its replayable event log.

Events are processed in (time, sequence) order; the sequence number is fixed
when an event is scheduled, so ties at the same instant resolve by scheduling
history and every run of the same inputs pops the same events in the same
order. Leg durations are fixed when a job is planned; only the OSS strategy
re-plans waiting pickups when the traffic multiplier changes.
"""

import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum

from .demand import TripRequest
from .dispatch import (DispatchConfig, PendingJob, dispatch, oss_reschedule)
from .fleet import Fleet, Strategy, Transition, Vehicle, VehicleStatus, assign, validate_transitions
from .road import RoadNetwork, TrafficState
from .zones import AdjacencySchedule, ZoneMap

log = logging.getLogger(__name__)

DEFAULT_SNAP_RADIUS_M = 1000.0


class SimulationError(RuntimeError):
    pass


class EventKind(Enum):
    REQUEST_ARRIVAL = "REQUEST_ARRIVAL"
    ARRIVED_AT_PICKUP = "ARRIVED_AT_PICKUP"
    TRIP_COMPLETED = "TRIP_COMPLETED"
    PASSENGER_ABANDONED = "PASSENGER_ABANDONED"
    TRAFFIC_CHANGE = "TRAFFIC_CHANGE"
    RESCHEDULE = "RESCHEDULE"


OUTCOME_PICKED_UP = "PICKED_UP"
OUTCOME_REJECTED = "REJECTED"
OUTCOME_ABANDONED = "ABANDONED"


@dataclass(frozen=True)
class CallRecord:
    request_id: int
    request_time_s: float
    outcome: str
    pickup_time_s: float | None = None
    dropoff_time_s: float | None = None
    vehicle_id: int | None = None
    reject_reason: str | None = None
    abandon_time_s: float | None = None

    def line(self) -> str:
        if self.outcome == OUTCOME_PICKED_UP:
            return (f"{self.request_id} {self.request_time_s!r} {self.outcome} "
                    f"{self.pickup_time_s!r} {self.dropoff_time_s!r} {self.vehicle_id}")
        if self.outcome == OUTCOME_REJECTED:
            return f"{self.request_id} {self.request_time_s!r} {self.outcome} {self.reject_reason}"
        return f"{self.request_id} {self.request_time_s!r} {self.outcome} {self.abandon_time_s!r}"

    @property
    def wait_s(self) -> float | None:
        if self.pickup_time_s is None:
            return None
        return self.pickup_time_s - self.request_time_s


def parse_record_line(line: str) -> CallRecord:
    """Inverse of CallRecord.line(); round-trips every float exactly."""
    parts = line.split()
    try:
        rid, req_t, outcome = int(parts[0]), float(parts[1]), parts[2]
        if outcome == OUTCOME_PICKED_UP:
            return CallRecord(rid, req_t, outcome, float(parts[3]), float(parts[4]),
                              int(parts[5]))
        if outcome == OUTCOME_REJECTED:
            return CallRecord(rid, req_t, outcome, reject_reason=parts[3])
        if outcome == OUTCOME_ABANDONED:
            return CallRecord(rid, req_t, outcome, abandon_time_s=float(parts[3]))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad call record line {line!r}") from exc
    raise ValueError(f"unknown outcome in call record line {line!r}")


@dataclass
class EngineConfig:
    dispatch: DispatchConfig = field(default_factory=DispatchConfig)
    snap_radius_m: float = DEFAULT_SNAP_RADIUS_M
    log_header: str | None = None


@dataclass
class RunResult:
    records: list[CallRecord]
    event_log: list[str]
    sched: AdjacencySchedule
    transitions: list[Transition]
    metadata: dict

    def record_lines(self) -> list[str]:
        return [r.line() for r in self.records]


class _RequestState:
    __slots__ = ("request", "pickup_node", "dropoff_node", "status", "vehicle_id",
                 "token", "deadline_scheduled", "pickup_time_s", "dropoff_time_s",
                 "abandon_time_s", "reject_reason")

    def __init__(self, request: TripRequest, pickup_node: int | None, dropoff_node: int | None):
        self.request = request
        self.pickup_node = pickup_node
        self.dropoff_node = dropoff_node
        self.status = "pending"  # pending/assigned/picked-up/completed/rejected/abandoned
        self.vehicle_id: int | None = None
        self.token = 0
        self.deadline_scheduled = False
        self.pickup_time_s: float | None = None
        self.dropoff_time_s: float | None = None
        self.abandon_time_s: float | None = None
        self.reject_reason: str | None = None


class _Simulation:
    def __init__(self, requests: list[TripRequest], fleet: Fleet, net: RoadNetwork,
                 zone_map: ZoneMap, sched: AdjacencySchedule,
                 traffic: TrafficState, cfg: EngineConfig):
        self.fleet = fleet
        self.net = net
        self.zone_map = zone_map
        self.sched = sched
        self.traffic = traffic
        self.cfg = cfg
        self.heap: list[tuple[float, int, EventKind, tuple]] = []
        self.seq = 0
        self.now = 0.0
        self.current_seq = -1
        self.events_processed = 0
        self.log_lines: list[str] = []
        self.transitions: list[Transition] = []
        self.reassignment_count = 0
        self.requests = sorted(requests, key=lambda r: (r.request_time_s, r.id))
        ids = [r.id for r in self.requests]
        if len(set(ids)) != len(ids):
            raise SimulationError("duplicate request ids")
        self.snap_failures = 0
        self.states: dict[int, _RequestState] = {}
        for r in self.requests:
            pn = net.nearest_node(r.pickup, cfg.snap_radius_m)
            dn = net.nearest_node(r.dropoff, cfg.snap_radius_m)
            if pn is None or dn is None:
                self.snap_failures += 1
            self.states[r.id] = _RequestState(r, pn, dn)
        if self.snap_failures:
            log.warning("%d of %d requests fall outside the road network snap radius",
                        self.snap_failures, len(self.requests))
        if len(zone_map) == 0:
            raise SimulationError("at least one zone is required to dispatch")
        # Vehicles are looked up by the zone of their current node; resolve
        # every node once. Nodes outside all zones map to the nearest one.
        self.node_zone: dict[int, int] = {}
        for nid in sorted(net.nodes):
            z = zone_map.locate(net.nodes[nid])
            self.node_zone[nid] = z if z is not None else zone_map.nearest_by_centroid(net.nodes[nid])

    # -- scheduling ----------------------------------------------------

    def schedule(self, t_s: float, kind: EventKind, payload: tuple) -> None:
        if t_s < self.now:
            raise SimulationError(f"event {kind.value} scheduled in the past ({t_s} < {self.now})")
        heapq.heappush(self.heap, (t_s, self.seq, kind, payload))
        self.seq += 1

    def emit(self, kind: EventKind, text: str) -> None:
        self.log_lines.append(f"{self.now!r} {self.current_seq} {kind.value} {text}")

    def transition(self, v: Vehicle, src: VehicleStatus, dst: VehicleStatus) -> None:
        self.transitions.append(Transition(self.now, v.id, src, dst))

    # -- handlers ------------------------------------------------------

    def on_request_arrival(self, req_id: int) -> None:
        st = self.states[req_id]
        decision = dispatch(st.request, st.pickup_node, st.dropoff_node, self.fleet,
                            self.sched, self.zone_map, self.node_zone, self.net,
                            self.traffic, self.now, self.cfg.dispatch)
        if not decision.assigned:
            st.status = "rejected"
            st.reject_reason = decision.reject_reason
            self.emit(EventKind.REQUEST_ARRIVAL,
                      f"req={req_id} zone={decision.origin_zone} outcome=rejected "
                      f"reason={decision.reject_reason} rounds={len(decision.zones_searched)}")
            return
        v = self.fleet.vehicle(decision.vehicle_id)
        prev_status = v.status
        plan = assign(v, st.request, decision.route_to_pickup, decision.route_of_trip, self.now)
        self.transition(v, prev_status, v.status)
        st.status = "assigned"
        st.vehicle_id = v.id
        st.token += 1
        self.schedule(plan.pickup_time_s, EventKind.ARRIVED_AT_PICKUP,
                      (req_id, v.id, st.token))
        if not st.deadline_scheduled:
            self.schedule(st.request.request_time_s + st.request.patience_s,
                          EventKind.PASSENGER_ABANDONED, (req_id,))
            st.deadline_scheduled = True
        self.emit(EventKind.REQUEST_ARRIVAL,
                  f"req={req_id} zone={decision.origin_zone} outcome=assigned "
                  f"vehicle={v.id} eta={decision.eta_s!r} rounds={len(decision.zones_searched)} "
                  f"adj={int(decision.adjacency_updated)}")

    def on_arrived_at_pickup(self, req_id: int, vehicle_id: int, token: int) -> None:
        st = self.states[req_id]
        if st.status != "assigned" or st.token != token or st.vehicle_id != vehicle_id:
            return  # superseded by a reassignment or an abandonment
        v = self.fleet.vehicle(vehicle_id)
        if v.status is not VehicleStatus.EN_ROUTE_TO_PICKUP or v.plan.request_id != req_id:
            raise SimulationError(
                f"pickup event for request {req_id} found vehicle {vehicle_id} in "
                f"{v.status.value}")
        st.status = "picked-up"
        st.pickup_time_s = self.now
        if st.pickup_time_s - st.request.request_time_s > st.request.patience_s:
            raise SimulationError(f"request {req_id} picked up after its patience ran out")
        v.status = VehicleStatus.ON_TRIP
        self.transition(v, VehicleStatus.EN_ROUTE_TO_PICKUP, VehicleStatus.ON_TRIP)
        self.schedule(v.plan.dropoff_time_s, EventKind.TRIP_COMPLETED, (req_id, vehicle_id))
        self.emit(EventKind.ARRIVED_AT_PICKUP, f"req={req_id} vehicle={vehicle_id}")

    def on_trip_completed(self, req_id: int, vehicle_id: int) -> None:
        st = self.states[req_id]
        v = self.fleet.vehicle(vehicle_id)
        if v.status is not VehicleStatus.ON_TRIP or v.plan.request_id != req_id:
            raise SimulationError(f"trip completion for request {req_id} found vehicle "
                                  f"{vehicle_id} in {v.status.value}")
        st.status = "completed"
        st.dropoff_time_s = self.now
        v.node = v.plan.route_of_trip.nodes[-1]
        if v.queued is not None:
            assert v.queued.depart_s == self.now, "queued job departs at trip completion"
            v.plan = v.queued
            v.queued = None
            v.status = VehicleStatus.EN_ROUTE_TO_PICKUP
            self.transition(v, VehicleStatus.ON_TRIP, VehicleStatus.EN_ROUTE_TO_PICKUP)
        else:
            v.plan = None
            v.status = VehicleStatus.IDLE
            self.transition(v, VehicleStatus.ON_TRIP, VehicleStatus.IDLE)
        self.emit(EventKind.TRIP_COMPLETED, f"req={req_id} vehicle={vehicle_id}")

    def on_passenger_abandoned(self, req_id: int) -> None:
        st = self.states[req_id]
        if st.status != "assigned":
            return  # already picked up (or never assigned again after this was set)
        v = self.fleet.vehicle(st.vehicle_id)
        if v.queued is not None and v.queued.request_id == req_id:
            if v.queued.pickup_time_s <= self.now:
                return  # the pickup due this same instant wins the tie
            v.queued = None
            st.status = "abandoned"
            st.abandon_time_s = self.now
        elif v.status is VehicleStatus.EN_ROUTE_TO_PICKUP and v.plan.request_id == req_id:
            if v.plan.pickup_time_s <= self.now:
                return
            v.node = v.current_node(self.now)
            v.plan = None
            v.status = VehicleStatus.IDLE
            self.transition(v, VehicleStatus.EN_ROUTE_TO_PICKUP, VehicleStatus.IDLE)
            st.status = "abandoned"
            st.abandon_time_s = self.now
        else:
            raise SimulationError(f"abandonment for request {req_id} found no matching "
                                  f"job on vehicle {st.vehicle_id}")
        self.emit(EventKind.PASSENGER_ABANDONED, f"req={req_id} vehicle={st.vehicle_id}")

    def on_traffic_change(self, multiplier: float) -> None:
        self.emit(EventKind.TRAFFIC_CHANGE, f"multiplier={multiplier!r}")
        if self.cfg.dispatch.strategy is Strategy.OSS:
            self.schedule(self.now, EventKind.RESCHEDULE, ())

    def on_reschedule(self) -> None:
        pending = []
        for r in self.requests:  # already FCFS-sorted
            st = self.states[r.id]
            if st.status == "assigned":
                pending.append(PendingJob(r, st.pickup_node, st.dropoff_node, st.vehicle_id))
        before = {v.id: v.status for v in self.fleet}
        actions = oss_reschedule(pending, self.fleet, self.net, self.traffic,
                                 self.now, self.cfg.dispatch)
        for v in self.fleet:
            if v.status is not before[v.id]:
                self.transition(v, before[v.id], v.status)
        reassigned = 0
        for act in actions:
            st = self.states[act.request_id]
            st.token += 1
            st.vehicle_id = act.new_vehicle_id
            self.schedule(act.new_pickup_time_s, EventKind.ARRIVED_AT_PICKUP,
                          (act.request_id, act.new_vehicle_id, st.token))
            if act.reassigned:
                reassigned += 1
        self.reassignment_count += reassigned
        self.emit(EventKind.RESCHEDULE, f"actions={len(actions)} reassigned={reassigned}")

    # -- main loop -----------------------------------------------------

    def run(self) -> RunResult:
        if self.cfg.log_header:
            self.log_lines.append(self.cfg.log_header)
        for t in self.traffic.change_times():
            self.schedule(t, EventKind.TRAFFIC_CHANGE, (self.traffic.multiplier_at(t),))
        for r in self.requests:
            self.schedule(r.request_time_s, EventKind.REQUEST_ARRIVAL, (r.id,))
        handlers = {
            EventKind.REQUEST_ARRIVAL: self.on_request_arrival,
            EventKind.ARRIVED_AT_PICKUP: self.on_arrived_at_pickup,
            EventKind.TRIP_COMPLETED: self.on_trip_completed,
            EventKind.PASSENGER_ABANDONED: self.on_passenger_abandoned,
            EventKind.TRAFFIC_CHANGE: self.on_traffic_change,
            EventKind.RESCHEDULE: self.on_reschedule,
        }
        while self.heap:
            t, seq, kind, payload = heapq.heappop(self.heap)
            if t < self.now:
                raise SimulationError(f"time went backwards: {t} after {self.now}")
            self.now = t
            self.current_seq = seq
            handlers[kind](*payload)
            self.events_processed += 1
        problems = validate_transitions(self.transitions)
        if problems:
            raise SimulationError("state machine violations: " + "; ".join(problems[:5]))
        records = []
        for r in self.requests:
            st = self.states[r.id]
            if st.status == "completed":
                records.append(CallRecord(r.id, r.request_time_s, OUTCOME_PICKED_UP,
                                          st.pickup_time_s, st.dropoff_time_s, st.vehicle_id))
            elif st.status == "rejected":
                records.append(CallRecord(r.id, r.request_time_s, OUTCOME_REJECTED,
                                          reject_reason=st.reject_reason))
            elif st.status == "abandoned":
                records.append(CallRecord(r.id, r.request_time_s, OUTCOME_ABANDONED,
                                          abandon_time_s=st.abandon_time_s))
            else:
                raise SimulationError(f"request {r.id} ended in state {st.status!r}")
        rejects: dict[str, int] = {}
        for rec in records:
            if rec.outcome == OUTCOME_REJECTED:
                rejects[rec.reject_reason] = rejects.get(rec.reject_reason, 0) + 1
        metadata = {
            "requests": len(records),
            "picked_up": sum(1 for rec in records if rec.outcome == OUTCOME_PICKED_UP),
            "abandoned": sum(1 for rec in records if rec.outcome == OUTCOME_ABANDONED),
            "rejected": rejects,
            "reassignments": self.reassignment_count,
            "adjacency_revision": self.sched.revision,
            "zone_fallback_calls": self.zone_map.fallback_count,
            "snap_failures": self.snap_failures,
            "events_processed": self.events_processed,
        }
        return RunResult(records, self.log_lines, self.sched, self.transitions, metadata)


def run(requests: list[TripRequest], fleet: Fleet, net: RoadNetwork,
        zone_map: ZoneMap, sched: AdjacencySchedule, traffic: TrafficState | None,
        cfg: EngineConfig | None = None) -> RunResult:
    """Simulate one demand stream to completion and return its records.

    The caller's fleet and schedule are mutated (final vehicle positions,
    adjacency links discovered during the run).
    """
    return _Simulation(requests, fleet, net, zone_map, sched,
                       traffic or TrafficState([]), cfg or EngineConfig()).run()


@dataclass
class ReplayReport:
    ok: bool
    diffs: list[str]


def replay_check(expected_log: list[str], actual_log: list[str],
                 max_diffs: int = 10) -> ReplayReport:
    """Compare two event logs line by line.

    Logs that declare different configurations (their header lines differ)
    are not comparable and raise instead of reporting a diff.
    """
    exp_head = expected_log[0] if expected_log and expected_log[0].startswith("#") else None
    act_head = actual_log[0] if actual_log and actual_log[0].startswith("#") else None
    if exp_head is not None and act_head is not None and exp_head != act_head:
        raise ValueError(f"logs are not comparable: {exp_head!r} vs {act_head!r}")
    diffs = []
    for i in range(max(len(expected_log), len(actual_log))):
        a = expected_log[i] if i < len(expected_log) else "<missing>"
        b = actual_log[i] if i < len(actual_log) else "<missing>"
        if a != b:
            diffs.append(f"line {i + 1}: {a!r} != {b!r}")
            if len(diffs) >= max_diffs:
                break
    return ReplayReport(not diffs, diffs)
