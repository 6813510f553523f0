"""Dispatching: zone-expansion search, one-ring baseline, traffic rescheduling.

The expansion dispatcher unions the call's zone with its neighbors, targets
the lowest-ETA candidate inside that region, and keeps widening the region by
one adjacency ring until it hits a fixed point. Only then may it fall back to
a global search, recording a new adjacency link to the winning vehicle's zone.
The baseline searches the call's zone, then its immediate ring, and gives up.
"""

import math
from dataclasses import dataclass, field

from . import road
from .demand import TripRequest
from .fleet import (Fleet, Plan, Strategy, Vehicle, VehicleStatus, assign,
                    candidate_pool)
from .road import RoadNetwork, Route, TrafficState
from .zones import AdjacencySchedule, ZoneMap

REJECT_NO_VEHICLE = "no-vehicle"
REJECT_UNROUTABLE = "unroutable"


@dataclass
class DispatchConfig:
    strategy: Strategy = Strategy.NSS
    eat_enabled: bool = True
    global_fallback_after_component: bool = True
    oss_reassign_threshold_s: float = 60.0


@dataclass
class DispatchDecision:
    call_id: int
    vehicle_id: int | None = None
    eta_s: float | None = None
    route_to_pickup: Route | None = None
    route_of_trip: Route | None = None
    reject_reason: str | None = None
    zones_searched: list[frozenset[int]] = field(default_factory=list)
    adjacency_updated: bool = False
    origin_zone: int | None = None

    @property
    def assigned(self) -> bool:
        return self.vehicle_id is not None


class _EtaRanking:
    """Candidate ETAs against one pickup node, all from a single graph scan.

    Values are identical to per-vehicle estimates on exactly-representable
    edge times; the final decision recomputes the winner's route anyway.
    """

    def __init__(self, pool: list[Vehicle], pickup_node: int, net: RoadNetwork,
                 traffic: TrafficState | None, now_s: float):
        sources = set()
        for v in pool:
            sources.add(v.node if v.status is VehicleStatus.IDLE else v.trip_end_node())
        self._times = road.eta_table(net, pickup_node, now_s, traffic, sources=sources)
        self._now = now_s

    def eta(self, v: Vehicle) -> float | None:
        if v.status is VehicleStatus.IDLE:
            return self._times.get(v.node)
        leg = self._times.get(v.trip_end_node())
        if leg is None:
            return None
        return (v.busy_until_s(self._now) - self._now) + leg


def _best_candidate(pool: list[Vehicle], ranking: _EtaRanking,
                    vehicle_zone: dict[int, int],
                    allowed_zones: frozenset[int] | None) -> tuple[Vehicle, float] | None:
    best: Vehicle | None = None
    best_eta = math.inf
    for v in pool:  # pool is id-ordered, so ties keep the lowest id
        if allowed_zones is not None and vehicle_zone[v.id] not in allowed_zones:
            continue
        eta = ranking.eta(v)
        if eta is not None and eta < best_eta:
            best = v
            best_eta = eta
    return None if best is None else (best, best_eta)


def _finalize(decision: DispatchDecision, winner: Vehicle, pickup_node: int,
              trip_route: Route, net: RoadNetwork, traffic: TrafficState | None,
              now_s: float) -> DispatchDecision:
    start = winner.node if winner.status is VehicleStatus.IDLE else winner.trip_end_node()
    leg = road.route_astar(net, start, pickup_node, now_s, traffic)
    assert leg is not None, "ranked candidate lost its route"
    if winner.status is VehicleStatus.IDLE:
        eta = leg.total_time_s
    else:
        eta = (winner.busy_until_s(now_s) - now_s) + leg.total_time_s
    decision.vehicle_id = winner.id
    decision.eta_s = eta
    decision.route_to_pickup = leg
    decision.route_of_trip = trip_route
    return decision


def _vehicle_zones(pool: list[Vehicle], node_zone: dict[int, int], now_s: float) -> dict[int, int]:
    # A vehicle sits in the zone of its last-passed routing node.
    return {v.id: node_zone[v.current_node(now_s)] for v in pool}


def dispatch_eat(call: TripRequest, pickup_node: int | None, dropoff_node: int | None,
                 fleet: Fleet, sched: AdjacencySchedule, zone_map: ZoneMap,
                 node_zone: dict[int, int], net: RoadNetwork,
                 traffic: TrafficState | None, now_s: float,
                 cfg: DispatchConfig) -> DispatchDecision:
    """Expansion dispatch for one call. May add one adjacency link on a
    successful out-of-component assignment; never touches vehicle state."""
    if not cfg.eat_enabled:
        raise ValueError("expansion dispatch called with eat_enabled=False")
    a_c = zone_map.locate_or_nearest(call.pickup)
    decision = DispatchDecision(call_id=call.id, origin_zone=a_c)
    if pickup_node is None or dropoff_node is None:
        decision.zones_searched.append(frozenset({a_c}))
        decision.reject_reason = REJECT_UNROUTABLE
        return decision
    trip_route = road.route_astar(net, pickup_node, dropoff_node, now_s, traffic)
    if trip_route is None:
        decision.zones_searched.append(frozenset({a_c}))
        decision.reject_reason = REJECT_UNROUTABLE
        return decision

    pool = candidate_pool(fleet, cfg.strategy)
    ranking = _EtaRanking(pool, pickup_node, net, traffic, now_s)
    vzone = _vehicle_zones(pool, node_zone, now_s)
    all_zones = frozenset(sched.zone_ids())
    neighbors = sched.neighbors(a_c)

    if neighbors:
        region = frozenset({a_c, *neighbors})
        while True:
            decision.zones_searched.append(region)
            hit = _best_candidate(pool, ranking, vzone, region)
            if hit is not None:
                return _finalize(decision, hit[0], pickup_node, trip_route, net, traffic, now_s)
            wider = frozenset(sched.expand_frontier(set(region)))
            if wider == region:
                break  # connected component exhausted
            region = wider
        if not cfg.global_fallback_after_component:
            decision.reject_reason = REJECT_NO_VEHICLE
            return decision
        if all_zones > region:
            decision.zones_searched.append(all_zones)
        hit = _best_candidate(pool, ranking, vzone, None)
        if hit is None:
            decision.reject_reason = REJECT_NO_VEHICLE
            return decision
        winner_zone = vzone[hit[0].id]
        if winner_zone != a_c:
            sched.add_neighbor(a_c, winner_zone)
            decision.adjacency_updated = True
        return _finalize(decision, hit[0], pickup_node, trip_route, net, traffic, now_s)

    # Isolated zone: try it alone, then everywhere, linking on success.
    decision.zones_searched.append(frozenset({a_c}))
    hit = _best_candidate(pool, ranking, vzone, frozenset({a_c}))
    if hit is not None:
        return _finalize(decision, hit[0], pickup_node, trip_route, net, traffic, now_s)
    if all_zones > {a_c}:
        decision.zones_searched.append(all_zones)
    hit = _best_candidate(pool, ranking, vzone, None)
    if hit is None:
        decision.reject_reason = REJECT_NO_VEHICLE
        return decision
    winner_zone = vzone[hit[0].id]
    if winner_zone != a_c:
        sched.add_neighbor(a_c, winner_zone)
        decision.adjacency_updated = True
    return _finalize(decision, hit[0], pickup_node, trip_route, net, traffic, now_s)


def dispatch_baseline(call: TripRequest, pickup_node: int | None, dropoff_node: int | None,
                      fleet: Fleet, sched: AdjacencySchedule, zone_map: ZoneMap,
                      node_zone: dict[int, int], net: RoadNetwork,
                      traffic: TrafficState | None, now_s: float,
                      cfg: DispatchConfig) -> DispatchDecision:
    """One-ring dispatch: the call's zone, then its immediate neighbors only.

    Never iterates further and never updates adjacency.
    """
    if cfg.eat_enabled:
        raise ValueError("baseline dispatch called with eat_enabled=True")
    a_c = zone_map.locate_or_nearest(call.pickup)
    decision = DispatchDecision(call_id=call.id, origin_zone=a_c)
    if pickup_node is None or dropoff_node is None:
        decision.zones_searched.append(frozenset({a_c}))
        decision.reject_reason = REJECT_UNROUTABLE
        return decision
    trip_route = road.route_astar(net, pickup_node, dropoff_node, now_s, traffic)
    if trip_route is None:
        decision.zones_searched.append(frozenset({a_c}))
        decision.reject_reason = REJECT_UNROUTABLE
        return decision

    pool = candidate_pool(fleet, cfg.strategy)
    ranking = _EtaRanking(pool, pickup_node, net, traffic, now_s)
    vzone = _vehicle_zones(pool, node_zone, now_s)

    decision.zones_searched.append(frozenset({a_c}))
    hit = _best_candidate(pool, ranking, vzone, frozenset({a_c}))
    if hit is not None:
        return _finalize(decision, hit[0], pickup_node, trip_route, net, traffic, now_s)
    neighbors = sched.neighbors(a_c)
    if neighbors:
        ring = frozenset(neighbors)
        decision.zones_searched.append(ring)
        hit = _best_candidate(pool, ranking, vzone, ring)
        if hit is not None:
            return _finalize(decision, hit[0], pickup_node, trip_route, net, traffic, now_s)
    decision.reject_reason = REJECT_NO_VEHICLE
    return decision


def dispatch(call: TripRequest, pickup_node: int | None, dropoff_node: int | None,
             fleet: Fleet, sched: AdjacencySchedule, zone_map: ZoneMap,
             node_zone: dict[int, int], net: RoadNetwork,
             traffic: TrafficState | None, now_s: float,
             cfg: DispatchConfig) -> DispatchDecision:
    fn = dispatch_eat if cfg.eat_enabled else dispatch_baseline
    return fn(call, pickup_node, dropoff_node, fleet, sched, zone_map, node_zone,
              net, traffic, now_s, cfg)


@dataclass(frozen=True)
class PendingJob:
    """An accepted request whose passenger has not been picked up yet."""
    request: TripRequest
    pickup_node: int
    dropoff_node: int
    vehicle_id: int


@dataclass
class RescheduleAction:
    request_id: int
    old_vehicle_id: int
    new_vehicle_id: int
    new_pickup_time_s: float
    reassigned: bool
    pickup_changed: bool
    old_eta_s: float | None = None
    new_eta_s: float | None = None


def oss_reschedule(pending: list[PendingJob], fleet: Fleet, net: RoadNetwork,
                   traffic: TrafficState | None, now_s: float,
                   cfg: DispatchConfig) -> list[RescheduleAction]:
    """Re-plan every waiting pickup under the traffic in force now.

    Jobs are visited in the order given (first-come first-served). A waiting
    job moves to another vehicle only when that vehicle's fresh ETA beats the
    incumbent's fresh ETA by more than the configured threshold; otherwise the
    incumbent keeps the job with its legs re-timed. Trips already carrying a
    passenger are left alone. Candidates are drawn fleet-wide: re-planning is
    a refinement pass and has no zone scope.
    """
    if cfg.strategy is not Strategy.OSS:
        raise ValueError(f"rescheduling requires OSS, got {cfg.strategy.value}")
    actions: list[RescheduleAction] = []
    for job in pending:
        v = fleet.vehicle(job.vehicle_id)
        queued = v.queued is not None and v.queued.request_id == job.request.id
        if queued:
            origin = v.plan.route_of_trip.nodes[-1]
            depart = v.plan.dropoff_time_s
            old_plan = v.queued
            base_wait = depart - now_s
        elif v.status is VehicleStatus.EN_ROUTE_TO_PICKUP and v.plan is not None \
                and v.plan.request_id == job.request.id:
            origin = v.current_node(now_s)
            depart = now_s
            old_plan = v.plan
            base_wait = 0.0
        else:
            raise ValueError(f"vehicle {v.id} does not hold request {job.request.id}")

        leg = road.route_astar(net, origin, job.pickup_node, now_s, traffic)
        incumbent_eta = None if leg is None else base_wait + leg.total_time_s

        others = candidate_pool(fleet, Strategy.OSS)
        ranking = _EtaRanking(others, job.pickup_node, net, traffic, now_s)
        best: Vehicle | None = None
        best_eta = math.inf
        for cand in others:
            eta = ranking.eta(cand)
            if eta is not None and eta < best_eta:
                best = cand
                best_eta = eta

        improves = best is not None and (
            incumbent_eta is None or incumbent_eta - best_eta > cfg.oss_reassign_threshold_s)
        if improves:
            trip_route = road.route_astar(net, job.pickup_node, job.dropoff_node, now_s, traffic)
            if trip_route is None:
                improves = False  # pickup reachable but trip is not; keep incumbent
        if improves:
            if queued:
                v.queued = None
            else:
                v.node = origin
                v.status = VehicleStatus.IDLE
                v.plan = None
            start = best.node if best.status is VehicleStatus.IDLE else best.trip_end_node()
            new_leg = road.route_astar(net, start, job.pickup_node, now_s, traffic)
            assert new_leg is not None
            plan = assign(best, job.request, new_leg, trip_route, now_s)
            actions.append(RescheduleAction(job.request.id, v.id, best.id,
                                            plan.pickup_time_s, True, True,
                                            incumbent_eta, best_eta))
            continue

        if leg is None:
            continue  # cannot re-route the incumbent; legs keep their old times
        new_trip = road.route_astar(net, job.pickup_node, job.dropoff_node, now_s, traffic)
        if new_trip is None:
            continue
        pickup_t = depart + leg.total_time_s
        plan = Plan(job.request.id, leg, new_trip, depart, pickup_t,
                    pickup_t + new_trip.total_time_s)
        changed = pickup_t != old_plan.pickup_time_s
        if queued:
            v.queued = plan
        else:
            v.plan = plan
        if changed:
            actions.append(RescheduleAction(job.request.id, v.id, v.id,
                                            pickup_t, False, True,
                                            incumbent_eta, incumbent_eta))
    return actions
