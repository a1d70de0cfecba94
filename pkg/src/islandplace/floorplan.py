"""Path-length-aware clustering, min-cut partitioning and annealing-based
assignment of partitions to device region bins.

Clustering pulls the instances on the longest register-to-register paths
together with their direct fanout before partitioning, so min-cut
partitioning does not scatter long paths across the device. Partitions
are then mapped onto coarse capacity bins of the free placement regions
by simulated annealing on a bin-center wirelength objective.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (CELL_KINDS, DesignError, InfeasibleError, Rect,
                    slot_accepts)
from .timing import build_timing_graph


@dataclass
class PathLengthInfo:
    dist_to_start: np.ndarray  # instances on the longest path up to v, incl.
    dist_to_end: np.ndarray    # instances strictly after v on the longest path
    max_path_len: np.ndarray   # dist_to_start + dist_to_end
    graph: object = None


@dataclass
class ClusterSet:
    cluster_of: np.ndarray  # -1 when unclustered
    clusters: list


def compute_path_lengths(netlist, graph=None):
    """Longest-path hop counts on the endpoint-cut DAG (in instances)."""
    g = graph or build_timing_graph(netlist)
    n = netlist.n_instances
    ds = np.ones(n, dtype=np.int64)
    for v in g.fwd_order:
        best = 0
        for p in range(g.in_ptr[v], g.in_ptr[v + 1]):
            u = g.in_src[p]
            c = 1 if netlist.tstart[u] else ds[u]
            if c > best:
                best = c
        if not netlist.tstart[v]:
            ds[v] = best + 1 if best else 1
    de = np.zeros(n, dtype=np.int64)
    for v in g.bwd_order:
        if netlist.tend[v]:
            continue
        best = 0
        for p in range(g.out_ptr[v], g.out_ptr[v + 1]):
            w = g.out_dst[p]
            c = 1 + (0 if netlist.tend[w] else de[w])
            if c > best:
                best = c
        de[v] = best
    return PathLengthInfo(dist_to_start=ds, dist_to_end=de,
                          max_path_len=ds + de, graph=g)


def cluster_by_fanout(netlist, info, top_fraction=0.05):
    """Cluster each top-ranked unclustered instance with its unclustered
    direct fanout."""
    n = netlist.n_instances
    cluster_of = np.full(n, -1, dtype=np.int64)
    clusters = []
    if top_fraction <= 0 or n == 0:
        return ClusterSet(cluster_of, clusters)
    order = np.lexsort((np.arange(n), -info.dist_to_start,
                        -info.max_path_len))
    n_top = min(n, int(math.ceil(top_fraction * n)))
    g = info.graph
    for v in order[:n_top]:
        v = int(v)
        if cluster_of[v] >= 0:
            continue
        cid = len(clusters)
        members = [v]
        cluster_of[v] = cid
        for p in range(g.out_ptr[v], g.out_ptr[v + 1]):
            w = int(g.out_dst[p])
            if cluster_of[w] < 0:
                cluster_of[w] = cid
                members.append(w)
        clusters.append(members)
    return ClusterSet(cluster_of, clusters)


# ---------------------------------------------------------------------------
# recursive min-cut bisection
# ---------------------------------------------------------------------------

def _contract(netlist, clusters):
    """Map instances onto contracted nodes (one per cluster / loner)."""
    n = netlist.n_instances
    node_of = np.full(n, -1, dtype=np.int64)
    node_w = []
    if clusters is not None:
        for cid, members in enumerate(clusters.clusters):
            for v in members:
                node_of[v] = cid
            node_w.append(len(members))
    for v in range(n):
        if node_of[v] < 0:
            node_of[v] = len(node_w)
            node_w.append(1)
    # hyperedges over contracted nodes, singletons dropped
    edges = []
    eweights = []
    for e in range(netlist.n_nets):
        pins = sorted(set(int(node_of[i])
                          for i in netlist.net_pin_indexes(e)))
        if len(pins) > 1:
            edges.append(pins)
            eweights.append(float(netlist.net_weight[e]))
    return node_of, np.array(node_w, dtype=np.int64), edges, \
        np.array(eweights)


def _fm_bipartition(n_nodes, node_w, edges, eweights, target_left,
                    allowance, rng, n_starts=16, max_passes=8):
    """Fiduccia-Mattheyses style bipartitioning with multiple restarts.

    Gains are maintained incrementally from per-edge side counts, so a
    pass costs O(moves * degree^2) instead of rescanning the hypergraph.
    """
    node_edges = [[] for _ in range(n_nodes)]
    for ei, pins in enumerate(edges):
        for v in pins:
            node_edges[v].append(ei)

    def cut_of(side):
        c = 0.0
        for ei, pins in enumerate(edges):
            s0 = side[pins[0]]
            for v in pins[1:]:
                if side[v] != s0:
                    c += eweights[ei]
                    break
        return c

    lo = target_left - allowance
    hi = target_left + allowance

    def feasible(wl):
        return lo <= wl <= hi

    def node_gain(v, side, cnt):
        g = 0.0
        s = side[v]
        for ei in node_edges[v]:
            if cnt[ei][1 - s] == 0:
                g -= eweights[ei]
            elif cnt[ei][s] == 1:
                g += eweights[ei]
        return g

    # restarts matter on tiny graphs; at scale one or two passes suffice
    starts = max(1, min(n_starts, (4 * 800) // max(1, n_nodes)))
    if n_nodes <= 64:
        starts = n_starts
    best_side = None
    best_cut = np.inf
    node_w = np.asarray(node_w, dtype=np.int64)
    for _start in range(starts):
        order = rng.permutation(n_nodes)
        side = np.ones(n_nodes, dtype=np.int8)
        wl = 0
        for v in order:
            if wl + node_w[v] <= target_left:
                side[v] = 0
                wl += node_w[v]
        for v in order:
            if wl >= lo:
                break
            if side[v] == 1:
                side[v] = 0
                wl += node_w[v]
        cut = cut_of(side)
        for _ in range(max_passes):
            cnt = [[0, 0] for _ in edges]
            for ei, pins in enumerate(edges):
                for v in pins:
                    cnt[ei][side[v]] += 1
            gain = np.array([node_gain(v, side, cnt)
                             for v in range(n_nodes)])
            locked = np.zeros(n_nodes, dtype=bool)
            trace = []
            cur = cut
            cur_wl = wl
            cur_side = side.copy()
            best_prefix = -1
            best_prefix_cut = cut
            for _step in range(n_nodes):
                delta = np.where(cur_side == 1, node_w, -node_w)
                nwl = cur_wl + delta
                mask = ~locked & (nwl >= lo) & (nwl <= hi)
                if not mask.any():
                    break
                masked = np.where(mask, gain, -np.inf)
                v = int(np.argmax(masked))
                best_gain = float(gain[v])
                cur_wl += int(delta[v])
                s = int(cur_side[v])
                cur_side[v] = 1 - s
                locked[v] = True
                cur -= best_gain
                touched = set()
                for ei in node_edges[v]:
                    cnt[ei][s] -= 1
                    cnt[ei][1 - s] += 1
                    touched.update(edges[ei])
                for u in touched:
                    if not locked[u]:
                        gain[u] = node_gain(u, cur_side, cnt)
                trace.append((v, cur, cur_wl))
                if cur < best_prefix_cut - 1e-12:
                    best_prefix_cut = cur
                    best_prefix = len(trace) - 1
            if best_prefix < 0:
                break
            for t in range(best_prefix + 1):
                v = trace[t][0]
                wl += (node_w[v] if side[v] == 1 else -node_w[v])
                side[v] = 1 - side[v]
            cut = best_prefix_cut
        if cut < best_cut and feasible(wl):
            best_cut = cut
            best_side = side.copy()
    if best_side is None:
        raise DesignError("bisection: no balanced assignment found")
    return best_side, best_cut


def partition(netlist, clusters, k, seed=0, balance_tol=0.1, n_starts=16):
    """Recursive min-cut bisection into k parts; clusters stay atomic."""
    n = netlist.n_instances
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise DesignError(f"k={k} exceeds instance count {n}")
    node_of, node_w, edges, eweights = _contract(netlist, clusters)
    n_nodes = node_w.shape[0]
    rng = np.random.default_rng(seed)
    labels = np.zeros(n_nodes, dtype=np.int64)

    def recurse(nodes, kk, base):
        if kk == 1 or len(nodes) <= 1:
            labels[nodes] = base
            return
        kl = kk // 2
        kr = kk - kl
        sub_index = {v: i for i, v in enumerate(nodes)}
        sub_w = node_w[nodes]
        sub_edges = []
        sub_ew = []
        nodeset = set(int(v) for v in nodes)
        for ei, pins in enumerate(edges):
            sub = [sub_index[v] for v in pins if v in nodeset]
            if len(sub) > 1:
                sub_edges.append(sub)
                sub_ew.append(eweights[ei])
        total = int(sub_w.sum())
        target_left = total * kl / kk
        allowance = max(balance_tol * target_left,
                        float(sub_w.max()) if len(sub_w) else 1.0)
        side, _ = _fm_bipartition(
            len(nodes), sub_w, sub_edges, np.array(sub_ew), target_left,
            allowance, rng, n_starts=n_starts)
        left = [nodes[i] for i in range(len(nodes)) if side[i] == 0]
        right = [nodes[i] for i in range(len(nodes)) if side[i] == 1]
        recurse(np.array(left, dtype=np.int64), kl, base)
        recurse(np.array(right, dtype=np.int64), kr, base + kl)

    recurse(np.arange(n_nodes), k, 0)
    return labels[node_of]


# ---------------------------------------------------------------------------
# simulated annealing over region bins
# ---------------------------------------------------------------------------

@dataclass
class SaConfig:
    t_init: float = 0.0        # 0 -> calibrate from sampled move deltas
    cooling: float = 0.97
    moves_per_temp: int = 64
    min_temp_ratio: float = 0.01
    bin_rows: int = 4          # vertical bins carved out of each region
    overflow_penalty: float = 100.0
    seed: int = 0


@dataclass
class RegionBin:
    id: int
    region_id: int
    rect: Rect
    capacity: dict

    @property
    def center(self):
        return ((self.rect.x0 + self.rect.x1) / 2.0,
                (self.rect.y0 + self.rect.y1) / 2.0)


def build_region_bins(device, bin_rows=4):
    """Split every free region into vertical capacity bins."""
    bins = []
    for rid, reg in enumerate(device.regions):
        h = reg.y1 - reg.y0
        rows = max(1, min(bin_rows, h))
        bounds = np.linspace(reg.y0, reg.y1, rows + 1).astype(int)
        for r in range(rows):
            y0, y1 = int(bounds[r]), int(bounds[r + 1])
            if y1 <= y0:
                continue
            cap = {k: 0 for k in CELL_KINDS}
            for col in device.columns:
                if reg.x0 <= col.x < reg.x1:
                    for slot_kind, cnt in col.slots.items():
                        for ck in CELL_KINDS:
                            if slot_accepts(ck, slot_kind, col.kind):
                                cap[ck] += cnt * (y1 - y0)
            bins.append(RegionBin(len(bins), rid, Rect(reg.x0, y0,
                                                       reg.x1, y1), cap))
    return bins


def sa_floorplan(netlist, labels, k, device, schedule=None, placement=None):
    """Anneal a partition -> bin assignment.

    Objective: bin-center HPWL of nets spanning several partitions (fixed
    instances keep their true coordinates when a placement is given) plus
    a penalty on per-kind capacity overflow. Returns (assignment array,
    bins).
    """
    cfg = schedule or SaConfig()
    rng = np.random.default_rng(cfg.seed)
    bins = build_region_bins(device, cfg.bin_rows)
    if not bins:
        raise DesignError("device has no free placement region")
    nb = len(bins)
    demand = np.zeros((k, len(CELL_KINDS)), dtype=np.int64)
    movable = ~netlist.fixed_mask
    for v in np.nonzero(movable)[0]:
        demand[labels[v], netlist.kind_code[v]] += 1
    cap = np.zeros((nb, len(CELL_KINDS)), dtype=np.int64)
    for b in bins:
        for ki, kind in enumerate(CELL_KINDS):
            cap[b.id, ki] = b.capacity[kind]
    total_demand = demand.sum(axis=0)
    total_cap = cap.sum(axis=0)
    for ki, kind in enumerate(CELL_KINDS):
        if total_demand[ki] > total_cap[ki]:
            raise InfeasibleError(
                f"demand for {kind} ({total_demand[ki]}) exceeds device "
                f"capacity ({total_cap[ki]})")

    # nets reduced to (partition set, fixed-pin bbox, weight); nets whose
    # pins share one partition and have no fixed pins cost nothing
    net_parts = []
    nets_of_part = [[] for _ in range(k)]
    for e in range(netlist.n_nets):
        pins = netlist.net_pin_indexes(e)
        parts = set()
        fx = []
        fy = []
        for i in pins:
            i = int(i)
            if netlist.fixed_mask[i] and placement is not None:
                fx.append(float(placement.x[i]))
                fy.append(float(placement.y[i]))
            else:
                parts.add(int(labels[i]))
        if parts and (len(parts) > 1 or fx):
            ni = len(net_parts)
            bbox = (min(fx), max(fx), min(fy), max(fy)) if fx else None
            net_parts.append((tuple(sorted(parts)), bbox,
                              float(netlist.net_weight[e])))
            for p in parts:
                nets_of_part[p].append(ni)

    centers = [b.center for b in bins]

    def net_cost(ni, assign):
        parts, bbox, w = net_parts[ni]
        if bbox is not None:
            x0, x1, y0, y1 = bbox
        else:
            x0 = y0 = np.inf
            x1 = y1 = -np.inf
        for p in parts:
            cx, cy = centers[assign[p]]
            if cx < x0:
                x0 = cx
            if cx > x1:
                x1 = cx
            if cy < y0:
                y0 = cy
            if cy > y1:
                y1 = cy
        return w * ((x1 - x0) + (y1 - y0))

    # greedy initial assignment: biggest partitions into roomiest bins
    assign = np.zeros(k, dtype=np.int64)
    room = cap.astype(np.float64).copy()
    for p in np.argsort(-demand.sum(axis=1), kind="stable"):
        scores = np.array([np.min(room[b] - demand[p]) for b in range(nb)])
        b = int(np.argmax(scores))
        assign[p] = b
        room[b] -= demand[p]

    net_cost_now = np.array([net_cost(ni, assign)
                             for ni in range(len(net_parts))])
    used = np.zeros_like(cap)
    for p in range(k):
        used[assign[p]] += demand[p]
    over_now = int(np.maximum(used - cap, 0).sum())
    cur_obj = float(net_cost_now.sum()) + cfg.overflow_penalty * over_now

    def move_delta(moves):
        """moves: list of (partition, new bin). Returns (d_obj, d_over,
        affected net ids and their new costs)."""
        nets = set()
        for p, _ in moves:
            nets.update(nets_of_part[p])
        trial = assign.copy()
        for p, b in moves:
            trial[p] = b
        d_wl = 0.0
        new_costs = []
        for ni in nets:
            c = net_cost(ni, trial)
            new_costs.append((ni, c))
            d_wl += c - net_cost_now[ni]
        d_over = 0
        bins_touched = set()
        for p, b in moves:
            bins_touched.add(int(assign[p]))
            bins_touched.add(int(b))
        for bt in bins_touched:
            old_used = used[bt].copy()
            new_used = old_used.copy()
            for p, b in moves:
                if int(assign[p]) == bt:
                    new_used -= demand[p]
                if int(b) == bt:
                    new_used += demand[p]
            d_over += int(np.maximum(new_used - cap[bt], 0).sum()
                          - np.maximum(old_used - cap[bt], 0).sum())
        return d_wl + cfg.overflow_penalty * d_over, d_over, new_costs

    def apply_moves(moves, new_costs):
        for p, b in moves:
            used[int(assign[p])] -= demand[p]
            used[int(b)] += demand[p]
            assign[p] = b
        for ni, c in new_costs:
            net_cost_now[ni] = c

    best = assign.copy()
    best_obj = cur_obj
    best_feasible = assign.copy() if over_now == 0 else None
    best_feasible_obj = cur_obj if over_now == 0 else np.inf

    if cfg.t_init > 0:
        temp = cfg.t_init
    else:
        deltas = []
        for _ in range(32):
            p = int(rng.integers(k))
            b = int(rng.integers(nb))
            d, _, _ = move_delta([(p, b)])
            deltas.append(abs(d))
        temp = max(1.0, float(np.mean(deltas)))
    t_min = temp * cfg.min_temp_ratio
    moves_per_t = max(cfg.moves_per_temp, 8 * k)
    while temp > t_min:
        for _ in range(moves_per_t):
            if k >= 2 and rng.random() < 0.5:
                p, q = rng.choice(k, size=2, replace=False)
                mv = [(int(p), int(assign[q])), (int(q), int(assign[p]))]
            else:
                p = int(rng.integers(k))
                mv = [(int(p), int(rng.integers(nb)))]
            d, d_over, new_costs = move_delta(mv)
            if d <= 0 or rng.random() < math.exp(-d / temp):
                apply_moves(mv, new_costs)
                cur_obj += d
                over_now += d_over
                if cur_obj < best_obj:
                    best, best_obj = assign.copy(), cur_obj
                if over_now == 0 and cur_obj < best_feasible_obj:
                    best_feasible = assign.copy()
                    best_feasible_obj = cur_obj
        temp *= cfg.cooling
    if best_feasible is not None:
        return best_feasible, bins
    return best, bins
