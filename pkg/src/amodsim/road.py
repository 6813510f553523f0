"""Directed road graph: loading, traffic multipliers, shortest-time routing.

Routing is time-frozen: the traffic multiplier in force at the query instant
applies to every edge of the returned route. Route times are therefore exact
sums of length / (speed * multiplier) over the chosen edges.
"""

import heapq
import logging
import math
from dataclasses import dataclass

from .geo import GeoPoint, NodeIndex, haversine_m

log = logging.getLogger(__name__)

# An edge may undercut the great-circle distance between its endpoints by at
# most this factor (survey noise in real datasets). The routing heuristic has
# to honor the same slack or it loses admissibility.
MIN_LENGTH_FACTOR = 0.99


class NetworkLoadError(ValueError):
    pass


class TrafficState:
    """Piecewise-constant global speed multiplier.

    Entries are (start_s, multiplier) with strictly increasing start times and
    multipliers in (0, 2]. Before the first entry the multiplier is 1.0.
    Instances are immutable snapshots; building a perturbed schedule returns a
    new object.
    """

    def __init__(self, entries: list[tuple[float, float]] | None = None):
        entries = sorted(entries or [])
        last_t = None
        for t, m in entries:
            if last_t is not None and t <= last_t:
                raise ValueError(f"duplicate schedule start time {t}")
            if not (0.0 < m <= 2.0):
                raise ValueError(f"multiplier out of (0, 2]: {m}")
            last_t = t
        self.entries = tuple((float(t), float(m)) for t, m in entries)
        self._starts = [t for t, _ in self.entries]

    def multiplier_at(self, t_s: float) -> float:
        idx = None
        lo, hi = 0, len(self._starts)
        while lo < hi:
            mid = (lo + hi) // 2
            if self._starts[mid] <= t_s:
                idx = mid
                lo = mid + 1
            else:
                hi = mid
        if idx is None:
            return 1.0
        return self.entries[idx][1]

    def max_multiplier(self) -> float:
        return max([1.0] + [m for _, m in self.entries])

    def change_times(self) -> list[float]:
        return [t for t, _ in self.entries if t > 0.0]

    @classmethod
    def build(cls, schedule: list[tuple[float, float]] | None,
              walk_seed: int | None = None, walk_step_s: float = 600.0,
              walk_sigma: float = 0.1, horizon_s: float = 0.0) -> "TrafficState":
        """Materialize a schedule, optionally perturbed by a seeded random walk.

        The walk multiplies the configured schedule value; walk values are
        clamped to [0.5, 1.5] and the product is capped at 2.0.
        """
        base = cls(schedule or [])
        if walk_seed is None or horizon_s <= 0.0 or walk_step_s <= 0.0:
            return base
        import random
        rng = random.Random(walk_seed)
        walk = 1.0
        out: list[tuple[float, float]] = []
        t = 0.0
        while t <= horizon_s:
            if t > 0.0:
                walk = min(1.5, max(0.5, walk + rng.gauss(0.0, walk_sigma)))
            out.append((t, min(2.0, base.multiplier_at(t) * walk)))
            t += walk_step_s
        # keep configured breakpoints that fall between walk steps
        for ts, m in base.entries:
            if ts <= horizon_s and all(abs(ts - t0) > 1e-9 for t0, _ in out):
                k = int(ts // walk_step_s)
                w = 1.0
                rng2 = random.Random(walk_seed)
                for _ in range(k):
                    w = min(1.5, max(0.5, w + rng2.gauss(0.0, walk_sigma)))
                out.append((ts, min(2.0, m * w)))
        out.sort()
        return cls(out)


@dataclass(frozen=True)
class Route:
    nodes: tuple[int, ...]
    hop_times_s: tuple[float, ...]
    hop_lengths_m: tuple[float, ...]
    total_time_s: float
    total_length_m: float

    def node_at_elapsed(self, dt_s: float) -> int:
        """Last node passed after dt_s seconds on this route."""
        if dt_s < 0:
            return self.nodes[0]
        acc = 0.0
        last = self.nodes[0]
        for i, ht in enumerate(self.hop_times_s):
            acc += ht
            if acc > dt_s:
                break
            last = self.nodes[i + 1]
        return last


class RoadNetwork:
    def __init__(self, nodes: dict[int, GeoPoint],
                 edges: list[tuple[int, int, float, float]],
                 speed_limit_mps: float):
        if speed_limit_mps <= 0:
            raise NetworkLoadError(f"speed limit must be positive, got {speed_limit_mps}")
        self.nodes = dict(nodes)
        self.speed_limit_mps = float(speed_limit_mps)
        self.adj: dict[int, list[tuple[int, float, float]]] = {n: [] for n in self.nodes}
        self.radj: dict[int, list[tuple[int, float, float]]] = {n: [] for n in self.nodes}
        for k, (u, v, length, speed) in enumerate(edges):
            if u not in self.nodes or v not in self.nodes:
                raise NetworkLoadError(f"edge {k} references unknown node {u if u not in self.nodes else v}")
            if length <= 0 or speed <= 0:
                raise NetworkLoadError(f"edge {k} has non-positive length or speed")
            crow = haversine_m(self.nodes[u], self.nodes[v])
            if length < MIN_LENGTH_FACTOR * crow:
                raise NetworkLoadError(
                    f"edge {k} ({u}->{v}) length {length:.2f} m shorter than "
                    f"{MIN_LENGTH_FACTOR} * great-circle {crow:.2f} m")
            speed = min(speed, self.speed_limit_mps)
            self.adj[u].append((v, length, speed))
            self.radj[v].append((u, length, speed))
        for n in self.adj:
            self.adj[n].sort()
            self.radj[n].sort()
        self._index: NodeIndex | None = None
        self.scc_count = self._count_scc()
        if self.scc_count > 1:
            log.warning("road graph is not strongly connected: %d components", self.scc_count)

    @property
    def index(self) -> NodeIndex:
        if self._index is None:
            self._index = NodeIndex(self.nodes)
        return self._index

    def nearest_node(self, p: GeoPoint, max_radius_m: float) -> int | None:
        return self.index.nearest(p, max_radius_m)

    def _count_scc(self) -> int:
        # Iterative Tarjan; recursion depth would be a hazard on long chains.
        ids = sorted(self.nodes)
        index = {}
        low = {}
        on_stack = set()
        stack: list[int] = []
        counter = 0
        sccs = 0
        for root in ids:
            if root in index:
                continue
            work = [(root, iter(self.adj[root]))]
            index[root] = low[root] = counter
            counter += 1
            stack.append(root)
            on_stack.add(root)
            while work:
                node, it = work[-1]
                advanced = False
                for (nxt, _, _) in it:
                    if nxt not in index:
                        index[nxt] = low[nxt] = counter
                        counter += 1
                        stack.append(nxt)
                        on_stack.add(nxt)
                        work.append((nxt, iter(self.adj[nxt])))
                        advanced = True
                        break
                    elif nxt in on_stack:
                        low[node] = min(low[node], index[nxt])
                if advanced:
                    continue
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[node])
                if low[node] == index[node]:
                    sccs += 1
                    while True:
                        w = stack.pop()
                        on_stack.discard(w)
                        if w == node:
                            break
        return sccs


def _parse_lines(path: str):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_network(nodes_path: str, edges_path: str, speed_limit_mps: float) -> RoadNetwork:
    """Read `node_id lat lon` and `from to length_m speed_mps` text files.

    Speeds above the limit are clamped, not rejected.
    """
    nodes: dict[int, GeoPoint] = {}
    for lineno, line in _parse_lines(nodes_path):
        parts = line.split()
        if len(parts) != 3:
            raise NetworkLoadError(f"{nodes_path}:{lineno}: expected 'id lat lon', got {line!r}")
        try:
            nid = int(parts[0])
            lat = float(parts[1])
            lon = float(parts[2])
        except ValueError as exc:
            raise NetworkLoadError(f"{nodes_path}:{lineno}: {exc}") from exc
        if nid < 0:
            raise NetworkLoadError(f"{nodes_path}:{lineno}: negative node id {nid}")
        if nid in nodes:
            raise NetworkLoadError(f"{nodes_path}:{lineno}: duplicate node id {nid}")
        try:
            nodes[nid] = GeoPoint(lat, lon)
        except ValueError as exc:
            raise NetworkLoadError(f"{nodes_path}:{lineno}: {exc}") from exc

    edges: list[tuple[int, int, float, float]] = []
    for lineno, line in _parse_lines(edges_path):
        parts = line.split()
        if len(parts) != 4:
            raise NetworkLoadError(f"{edges_path}:{lineno}: expected 'from to length speed', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            length, speed = float(parts[2]), float(parts[3])
        except ValueError as exc:
            raise NetworkLoadError(f"{edges_path}:{lineno}: {exc}") from exc
        if u not in nodes or v not in nodes:
            raise NetworkLoadError(f"{edges_path}:{lineno}: dangling endpoint {u if u not in nodes else v}")
        if length <= 0 or speed <= 0:
            raise NetworkLoadError(f"{edges_path}:{lineno}: non-positive length or speed")
        crow = haversine_m(nodes[u], nodes[v])
        if length < MIN_LENGTH_FACTOR * crow:
            raise NetworkLoadError(
                f"{edges_path}:{lineno}: length {length} m under {MIN_LENGTH_FACTOR} * "
                f"great-circle distance {crow:.2f} m")
        edges.append((u, v, length, speed))
    return RoadNetwork(nodes, edges, speed_limit_mps)


def route_astar(net: RoadNetwork, src: int, dst: int, at_s: float,
                traffic: TrafficState | None = None) -> Route | None:
    """Fastest route src -> dst under the multiplier in force at at_s.

    Returns None when dst is unreachable. Ties in the frontier break to the
    lower node id, so equal-cost searches are reproducible.
    """
    if src not in net.nodes:
        raise KeyError(f"unknown source node {src}")
    if dst not in net.nodes:
        raise KeyError(f"unknown destination node {dst}")
    if src == dst:
        return Route((src,), (), (), 0.0, 0.0)
    traffic = traffic or _NO_TRAFFIC
    mult = traffic.multiplier_at(at_s)
    # Admissible bound on remaining time: no edge beats the speed limit times
    # the largest multiplier, and no path is shorter than MIN_LENGTH_FACTOR
    # times the great-circle distance.
    denom = net.speed_limit_mps * traffic.max_multiplier()
    dst_pt = net.nodes[dst]

    def h(n: int) -> float:
        return MIN_LENGTH_FACTOR * haversine_m(net.nodes[n], dst_pt) / denom

    best_g: dict[int, float] = {src: 0.0}
    parent: dict[int, tuple[int, float, float]] = {}
    heap: list[tuple[float, int, float]] = [(h(src), src, 0.0)]
    while heap:
        f, node, g = heapq.heappop(heap)
        if g > best_g.get(node, math.inf):
            continue
        if node == dst:
            break
        for (nxt, length, speed) in net.adj[node]:
            ng = g + length / (speed * mult)
            if ng < best_g.get(nxt, math.inf):
                best_g[nxt] = ng
                parent[nxt] = (node, length, length / (speed * mult))
                heapq.heappush(heap, (ng + h(nxt), nxt, ng))
    if dst not in parent:
        return None
    rev_nodes = [dst]
    hop_times: list[float] = []
    hop_lengths: list[float] = []
    cur = dst
    while cur != src:
        prev, length, ht = parent[cur]
        hop_times.append(ht)
        hop_lengths.append(length)
        rev_nodes.append(prev)
        cur = prev
    nodes = tuple(reversed(rev_nodes))
    hop_times.reverse()
    hop_lengths.reverse()
    total = 0.0
    for ht in hop_times:  # accumulate in travel order so the sum is reproducible
        total += ht
    return Route(nodes, tuple(hop_times), tuple(hop_lengths), total, math.fsum(hop_lengths))


def travel_time_s(net: RoadNetwork, src: int, dst: int, at_s: float,
                  traffic: TrafficState | None = None) -> float | None:
    route = route_astar(net, src, dst, at_s, traffic)
    return None if route is None else route.total_time_s


def eta_table(net: RoadNetwork, dst: int, at_s: float,
              traffic: TrafficState | None = None,
              sources: set[int] | None = None) -> dict[int, float]:
    """Travel time to dst from every reachable node (or just `sources`).

    Single reverse-graph scan; each returned value equals what
    travel_time_s(net, src, dst, ...) computes for that source. Unreachable
    sources are simply absent from the result.
    """
    if dst not in net.nodes:
        raise KeyError(f"unknown destination node {dst}")
    traffic = traffic or _NO_TRAFFIC
    mult = traffic.multiplier_at(at_s)
    dist: dict[int, float] = {dst: 0.0}
    done: set[int] = set()
    remaining = set(sources) if sources is not None else None
    heap: list[tuple[float, int]] = [(0.0, dst)]
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if remaining is not None:
            remaining.discard(node)
            if not remaining:
                break
        for (prev, length, speed) in net.radj[node]:
            nd = d + length / (speed * mult)
            if nd < dist.get(prev, math.inf):
                dist[prev] = nd
                heapq.heappush(heap, (nd, prev))
    # Either the heap drained (every dist entry settled) or every requested
    # source settled before the break; dist is final for the keys we return.
    if sources is not None:
        return {s: dist[s] for s in sources if s in dist}
    return dist


_NO_TRAFFIC = TrafficState([])
