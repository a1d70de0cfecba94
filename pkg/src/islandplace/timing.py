"""Piecewise-regression net delay model and a levelized static timing engine.

Net delay between two placed instances is a piecewise function of the
coordinate deltas, selected by Euclidean distance, with a per-macro-kind
cascade deduction and a region-pair crossing penalty. Logic delay comes
from a per-cell-kind lookup table. Arrival times propagate forward from
timing starts, required times backward from timing ends; flip-flops act
as both (paths are cut there: launch time restarts at zero).
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import accel
from .model import (BLOCKAGE, CELL_KINDS, KIND_CODE, MACRO_KINDS,
                    canonical_dumps, regions_of)

# default per-cell-kind logic delay (ns); ships with the synthetic device
DEFAULT_T_LOGIC = {
    "LUT": 0.12,
    "FF": 0.05,
    "CARRY": 0.06,
    "MUX": 0.05,
    "LUTRAM": 0.15,
    "DSP": 0.35,
    "BRAM": 0.40,
    "IO": 0.0,
}

DEFAULT_CASCADE_NS = {
    "CARRY_CHAIN": 0.04,
    "MUX_TREE": 0.03,
    "LUTRAM_GROUP": 0.02,
    "DSP_CASCADE": 0.15,
    "BRAM_CASCADE": 0.15,
}


class TimingCycleError(ValueError):
    """A combinational cycle not cut by any timing endpoint."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__(f"combinational cycle not cut by endpoints: "
                         f"{self.cycle}")


class DelayFitError(ValueError):
    pass


@dataclass
class DelayModelParams:
    """Fitted net-delay model: per-interval coefficients plus lookup terms."""

    breakpoints: np.ndarray = field(
        default_factory=lambda: np.array([3.0, 6.0]))
    coeffs: np.ndarray = field(
        default_factory=lambda: np.array([[0.15, 0.10, 0.15, 0.10],
                                          [0.12, 0.14, 0.12, 0.14],
                                          [0.08, 0.17, 0.08, 0.17]]))
    b0: float = 0.3
    b1: float = 0.5
    cascade_ns: dict = field(
        default_factory=lambda: dict(DEFAULT_CASCADE_NS))
    blockage_default_ns: float = 0.5
    blockage_pairs: dict = field(default_factory=dict)  # (r1, r2) -> ns

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=np.float64)
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.breakpoints.shape[0] + 1, 4):
            raise ValueError("coefficient rows must be breakpoints + 1")
        if not 0 < self.b0 < self.b1 <= 1:
            raise ValueError("exponents must satisfy 0 < b0 < b1 <= 1")
        if (self.coeffs < 0).any():
            raise ValueError("negative delay coefficients")

    def cascade_vector(self):
        """Deduction per cascade code; code 0 means no cascade. Cached:
        params are treated as immutable after construction."""
        vec = getattr(self, "_cas_vec", None)
        if vec is None:
            vec = np.zeros(len(MACRO_KINDS) + 1)
            for k, kind in enumerate(MACRO_KINDS):
                vec[k + 1] = self.cascade_ns.get(kind, 0.0)
            self._cas_vec = vec
        return vec

    def blockage_matrix(self, n_regions):
        """Penalty by (region, region); BLOCKAGE maps to the last index."""
        cache = getattr(self, "_bkg_mats", None)
        if cache is None:
            cache = {}
            self._bkg_mats = cache
        mat = cache.get(n_regions)
        if mat is None:
            size = n_regions + 1
            mat = np.full((size, size), self.blockage_default_ns)
            np.fill_diagonal(mat, 0.0)
            for (r1, r2), ns in self.blockage_pairs.items():
                mat[r1, r2] = ns
                mat[r2, r1] = ns
            cache[n_regions] = mat
        return mat

    def to_json(self):
        return {
            "breakpoints": self.breakpoints.tolist(),
            "coeffs": self.coeffs.tolist(),
            "b0": self.b0,
            "b1": self.b1,
            "cascade_ns": dict(self.cascade_ns),
            "blockage_default_ns": self.blockage_default_ns,
            "blockage_pairs": {f"{a},{b}": v
                               for (a, b), v in self.blockage_pairs.items()},
        }

    @classmethod
    def from_json(cls, obj):
        pairs = {}
        for key, v in obj.get("blockage_pairs", {}).items():
            a, b = key.split(",")
            pairs[(int(a), int(b))] = float(v)
        return cls(
            breakpoints=np.asarray(obj["breakpoints"]),
            coeffs=np.asarray(obj["coeffs"]),
            b0=float(obj["b0"]),
            b1=float(obj["b1"]),
            cascade_ns=dict(obj.get("cascade_ns", {})),
            blockage_default_ns=float(obj.get("blockage_default_ns", 0.0)),
            blockage_pairs=pairs,
        )

    def dump(self, path):
        with open(path, "w") as f:
            f.write(canonical_dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        import json

        with open(path) as f:
            return cls.from_json(json.load(f))


@dataclass
class TimingConfig:
    alpha: float = 0.9
    beta_crit: float = 3.0
    n_thr: float = 30.0
    t_thr: float = -1e-9  # refreshed by every timing-analysis pass

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.n_thr < 100:
            raise ValueError("n_thr is a percentage strictly inside (0,100)")


@dataclass
class StaMetrics:
    wns: float
    tns: float
    cpd: float
    t_thr: float


def _csr(n, keys, values):
    order = np.lexsort((values, keys))
    keys = keys[order]
    values = values[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, keys + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, values, order


class TimingGraph:
    """Directed timing graph over instances with cached levelization."""

    def __init__(self, netlist, t_logic_table=None):
        self.netlist = netlist
        table = dict(DEFAULT_T_LOGIC)
        if t_logic_table:
            table.update(t_logic_table)
        self.t_logic = np.array(
            [table[CELL_KINDS[c]] for c in netlist.kind_code])
        self.dly_max = netlist.clock_period_ns
        self._build_edges()
        self._levelize()
        n, m = netlist.n_instances, self.n_edges
        self.t_net = np.zeros(m)
        self.t_arr = np.zeros(n)       # launch-adjusted arrival (0 at starts)
        self.t_arr_end = np.zeros(n)   # captured arrival, drives CPD at ends
        self.t_req = np.full(n, np.inf)
        self.slack = np.full(m, np.inf)
        self.metrics = None

    def _build_edges(self):
        nl = self.netlist
        src, dst, enet = [], [], []
        for e in range(nl.n_nets):
            lo, hi = nl.net_ptr[e], nl.net_ptr[e + 1]
            drv = -1
            for p in range(lo, hi):
                if not nl.pin_is_sink[p]:
                    drv = int(nl.pin_inst[p])
            for p in range(lo, hi):
                if nl.pin_is_sink[p]:
                    src.append(drv)
                    dst.append(int(nl.pin_inst[p]))
                    enet.append(e)
        self.edge_src = np.array(src, dtype=np.int64)
        self.edge_dst = np.array(dst, dtype=np.int64)
        self.edge_net = np.array(enet, dtype=np.int64)
        self.n_edges = self.edge_src.shape[0]
        same = (nl.macro_of[self.edge_src] == nl.macro_of[self.edge_dst]) \
            & (nl.macro_of[self.edge_src] >= 0)
        cas = np.zeros(self.n_edges, dtype=np.int8)
        kind_idx = {k: i + 1 for i, k in enumerate(MACRO_KINDS)}
        for k in np.nonzero(same)[0]:
            macro = nl.macros[nl.macro_of[self.edge_src[k]]]
            cas[k] = kind_idx[macro.kind]
        self.edge_cascade = cas
        n = nl.n_instances
        eids = np.arange(self.n_edges, dtype=np.int64)
        self.in_ptr, in_order_eid, _ = _csr(n, self.edge_dst, eids)
        self.in_eid = in_order_eid
        self.in_src = self.edge_src[self.in_eid]
        self.out_ptr, out_order_eid, _ = _csr(n, self.edge_src, eids)
        self.out_eid = out_order_eid
        self.out_dst = self.edge_dst[self.out_eid]

    def _levelize(self):
        nl = self.netlist
        n = nl.n_instances
        # forward pass dependencies are cut at timing starts (launch edges
        # contribute a constant zero arrival), backward at timing ends
        self.topo_level, self.fwd_order = self._kahn(
            n, self.out_ptr, self.out_dst, self.in_ptr, self.in_src,
            cut=nl.tstart, cut_on_src=True)
        self.bwd_level, self.bwd_order = self._kahn(
            n, self.in_ptr, self.in_src, self.out_ptr, self.out_dst,
            cut=nl.tend, cut_on_src=True)
        self.fwd_pos = np.empty(n, dtype=np.int64)
        self.fwd_pos[self.fwd_order] = np.arange(n)
        self.bwd_pos = np.empty(n, dtype=np.int64)
        self.bwd_pos[self.bwd_order] = np.arange(n)

    def _kahn(self, n, succ_ptr, succ, pred_ptr, pred, cut, cut_on_src):
        level = np.zeros(n, dtype=np.int64)
        indeg = np.zeros(n, dtype=np.int64)
        for v in range(n):
            for p in range(pred_ptr[v], pred_ptr[v + 1]):
                u = pred[p]
                if not cut[u]:
                    indeg[v] += 1
                else:
                    level[v] = max(level[v], 1)
        queue = [v for v in range(n) if indeg[v] == 0]
        heapq.heapify(queue)
        seen = 0
        while queue:
            v = heapq.heappop(queue)
            seen += 1
            if cut[v]:
                continue
            for p in range(succ_ptr[v], succ_ptr[v + 1]):
                w = succ[p]
                level[w] = max(level[w], level[v] + 1)
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(queue, w)
        if seen < n:
            raise TimingCycleError(self._find_cycle(indeg, pred_ptr, pred,
                                                    cut))
        order = np.lexsort((np.arange(n), level))
        return level, order

    def _find_cycle(self, indeg, pred_ptr, pred, cut):
        stuck = np.nonzero(indeg > 0)[0]
        v = int(stuck[0])
        seen = {}
        path = []
        while v not in seen:
            seen[v] = len(path)
            path.append(v)
            nxt = -1
            for p in range(pred_ptr[v], pred_ptr[v + 1]):
                u = int(pred[p])
                if not cut[u] and indeg[u] > 0:
                    nxt = u
                    break
            if nxt < 0:
                break
            v = nxt
        if v in seen:
            cyc = path[seen[v]:]
            return [self.netlist.instances[i].name for i in reversed(cyc)]
        return [self.netlist.instances[i].name for i in path]

    def edge_delays(self, placement, params):
        """Evaluate the net-delay model on every timing edge."""
        x, y = placement.x, placement.y
        dx = np.abs(x[self.edge_src] - x[self.edge_dst])
        dy = np.abs(y[self.edge_src] - y[self.edge_dst])
        device = getattr(self, "device", None)
        if device is not None:
            rs = regions_of(device, x[self.edge_src], y[self.edge_src])
            rd = regions_of(device, x[self.edge_dst], y[self.edge_dst])
            nb = device.n_regions
            mat = params.blockage_matrix(nb)
            rs = np.where(rs == BLOCKAGE, nb, rs)
            rd = np.where(rd == BLOCKAGE, nb, rd)
            pen = mat[rs, rd]
        else:
            pen = np.zeros(self.n_edges)
        ded = params.cascade_vector()[self.edge_cascade]
        out = np.empty(self.n_edges)
        if self.n_edges:
            accel.eval_delay(dx, dy, params.breakpoints, params.coeffs,
                             params.b0, params.b1, ded, pen, out)
        return out


def build_timing_graph(netlist, device=None, t_logic_table=None):
    graph = TimingGraph(netlist, t_logic_table)
    graph.device = device
    return graph


def eval_net_delay(params, src, dst, cascade=None, blockage_matrix=None):
    """Scalar convenience wrapper around the vector delay kernel.

    src/dst are (x, y, region) triples; region may be BLOCKAGE.
    """
    dx = np.array([abs(src[0] - dst[0])], dtype=np.float64)
    dy = np.array([abs(src[1] - dst[1])], dtype=np.float64)
    ded = np.array([params.cascade_ns.get(cascade, 0.0) if cascade else 0.0])
    if src[2] == dst[2]:
        pen = np.zeros(1)
    elif blockage_matrix is not None:
        pen = np.array([blockage_matrix[src[2], dst[2]]])
    else:
        key = (min(src[2], dst[2]), max(src[2], dst[2]))
        pen = np.array([params.blockage_pairs.get(
            key, params.blockage_default_ns)])
    out = np.empty(1)
    accel.eval_delay(dx, dy, params.breakpoints, params.coeffs,
                     params.b0, params.b1, ded, pen, out)
    return float(out[0])


def _metrics_from_arrays(graph, n_thr):
    nl = graph.netlist
    if graph.n_edges:
        wns = float(np.min(graph.slack))
        neg = graph.slack[graph.slack < 0]
        tns = float(neg.sum())
    else:
        wns, neg, tns = np.inf, np.array([]), 0.0
    ends = np.nonzero(nl.tend)[0]
    if ends.size:
        cpd = float(np.max(graph.t_arr_end[ends] + graph.t_logic[ends]))
    else:
        cpd = 0.0
    if neg.size:
        t_thr = float(np.percentile(neg, n_thr))
    else:
        t_thr = -1e-9
    return StaMetrics(wns=wns, tns=tns, cpd=cpd, t_thr=t_thr)


def run_sta(graph, placement, params, n_thr=30.0):
    """Full arrival/required/slack analysis; returns global metrics."""
    nl = graph.netlist
    n = nl.n_instances
    graph.t_net = graph.edge_delays(placement, params)
    arr_in = np.zeros(n)
    launch = np.zeros(n)
    accel.sta_forward(graph.fwd_order, graph.in_ptr, graph.in_src,
                      graph.in_eid, graph.t_logic, nl.tstart,
                      graph.t_net, arr_in, launch)
    # endpoint required times are constants; pin them before the sweep so
    # predecessors of a mid-graph end (an FF with fanout sorts late in the
    # backward order) never read the uninitialized value
    req = np.full(n, np.inf)
    req[nl.tend] = graph.dly_max
    accel.sta_backward(graph.bwd_order, graph.out_ptr, graph.out_dst,
                       graph.out_eid, graph.t_logic, nl.tend,
                       graph.t_net, graph.dly_max, req)
    graph.t_arr = launch
    graph.t_arr_end = arr_in
    graph.t_req = req
    graph.slack = (req[graph.edge_dst] - launch[graph.edge_src]
                   - graph.t_logic[graph.edge_src] - graph.t_net)
    graph.metrics = _metrics_from_arrays(graph, n_thr)
    return graph.metrics


def negative_edges(graph):
    """Indexes of timing edges with negative slack."""
    return np.nonzero(graph.slack < 0)[0]


def incremental_sta(graph, placement, params, moved, n_thr=30.0):
    """Re-analyze after moving a set of instances.

    Produces metrics identical to a full pass on the new placement; only
    the affected cone of the timing graph is re-propagated.
    """
    if graph.metrics is None:
        return run_sta(graph, placement, params, n_thr)
    moved = np.asarray(sorted(set(int(v) for v in moved)), dtype=np.int64)
    if moved.size == 0:
        graph.metrics = _metrics_from_arrays(graph, n_thr)
        return graph.metrics
    nl = graph.netlist
    touched = set()
    for v in moved:
        for p in range(graph.in_ptr[v], graph.in_ptr[v + 1]):
            touched.add(int(graph.in_eid[p]))
        for p in range(graph.out_ptr[v], graph.out_ptr[v + 1]):
            touched.add(int(graph.out_eid[p]))
    eids = np.asarray(sorted(touched), dtype=np.int64)
    if eids.size:
        x, y = placement.x, placement.y
        src, dst = graph.edge_src[eids], graph.edge_dst[eids]
        dx = np.abs(x[src] - x[dst])
        dy = np.abs(y[src] - y[dst])
        device = getattr(graph, "device", None)
        if device is not None:
            rs = regions_of(device, x[src], y[src])
            rd = regions_of(device, x[dst], y[dst])
            nb = device.n_regions
            mat = params.blockage_matrix(nb)
            rs = np.where(rs == BLOCKAGE, nb, rs)
            rd = np.where(rd == BLOCKAGE, nb, rd)
            pen = mat[rs, rd]
        else:
            pen = np.zeros(eids.size)
        ded = params.cascade_vector()[graph.edge_cascade[eids]]
        out = np.empty(eids.size)
        accel.eval_delay(dx, dy, params.breakpoints, params.coeffs,
                         params.b0, params.b1, ded, pen, out)
        graph.t_net[eids] = out

    # forward repair in topological position order
    dirty = set(int(graph.edge_dst[e]) for e in eids)
    heap = [(int(graph.fwd_pos[v]), v) for v in dirty]
    heapq.heapify(heap)
    in_heap = set(dirty)
    launch = graph.t_arr
    arr_in = graph.t_arr_end
    while heap:
        _, v = heapq.heappop(heap)
        in_heap.discard(v)
        lo, hi = graph.in_ptr[v], graph.in_ptr[v + 1]
        best = 0.0
        for p in range(lo, hi):
            u = graph.in_src[p]
            cand = launch[u] + graph.t_logic[u] + graph.t_net[graph.in_eid[p]]
            if cand > best:
                best = cand
        new_launch = 0.0 if nl.tstart[v] else best
        changed = (arr_in[v] != best) or (launch[v] != new_launch)
        arr_in[v] = best
        propagate = launch[v] != new_launch
        launch[v] = new_launch
        if changed and propagate:
            for p in range(graph.out_ptr[v], graph.out_ptr[v + 1]):
                w = int(graph.out_dst[p])
                if w not in in_heap:
                    in_heap.add(w)
                    heapq.heappush(heap, (int(graph.fwd_pos[w]), w))

    # backward repair
    dirty = set(int(graph.edge_src[e]) for e in eids)
    heap = [(int(graph.bwd_pos[v]), v) for v in dirty]
    heapq.heapify(heap)
    in_heap = set(dirty)
    req = graph.t_req
    while heap:
        _, v = heapq.heappop(heap)
        in_heap.discard(v)
        if nl.tend[v]:
            new_req = graph.dly_max
        else:
            lo, hi = graph.out_ptr[v], graph.out_ptr[v + 1]
            best = np.inf
            for p in range(lo, hi):
                cand = req[graph.out_dst[p]] - graph.t_net[graph.out_eid[p]]
                if cand < best:
                    best = cand
            new_req = best - graph.t_logic[v] if best < np.inf else np.inf
        if req[v] != new_req:
            req[v] = new_req
            for p in range(graph.in_ptr[v], graph.in_ptr[v + 1]):
                u = int(graph.in_src[p])
                if u not in in_heap:
                    in_heap.add(u)
                    heapq.heappush(heap, (int(graph.bwd_pos[u]), u))

    graph.slack = (req[graph.edge_dst] - launch[graph.edge_src]
                   - graph.t_logic[graph.edge_src] - graph.t_net)
    graph.metrics = _metrics_from_arrays(graph, n_thr)
    return graph.metrics


# ---------------------------------------------------------------------------
# regression fit
# ---------------------------------------------------------------------------

def save_samples_csv(samples, path):
    """Write delay samples as dx,dy,region_src,region_dst,cascade,delay_ns."""
    with open(path, "w") as f:
        f.write("dx,dy,region_src,region_dst,cascade,delay_ns\n")
        for (dx, dy, rs, rd, cas, d) in samples:
            f.write(f"{dx},{dy},{rs},{rd},{cas or ''},{d}\n")


def load_samples_csv(path):
    samples = []
    with open(path) as f:
        header = f.readline()
        if not header.startswith("dx,"):
            raise ValueError(f"{path}: missing sample CSV header")
        for line in f:
            line = line.strip()
            if not line:
                continue
            dx, dy, rs, rd, cas, d = line.split(",")
            samples.append((float(dx), float(dy), int(rs), int(rd),
                            cas or None, float(d)))
    return samples


@dataclass
class FitConfig:
    breakpoints: np.ndarray = field(
        default_factory=lambda: np.array([3.0, 6.0]))
    b0: float = 0.3
    b1: float = 0.5
    cascade_ns: dict = field(default_factory=lambda: dict(DEFAULT_CASCADE_NS))
    blockage_default_ns: float = 0.5
    blockage_pairs: dict = field(default_factory=dict)
    min_samples: int = 50


def fit_delay_model(samples, config=None):
    """Least-squares fit of the per-interval distance coefficients.

    samples: iterable of (dx, dy, region_src, region_dst, cascade_kind,
    delay_ns). Cascade deductions and region penalties come from the
    config's lookup tables; the fit removes them from the target before
    solving for the four power-term coefficients of each interval.
    """
    cfg = config or FitConfig()
    breaks = np.asarray(cfg.breakpoints, dtype=np.float64)
    n_int = breaks.shape[0] + 1
    rows = [np.array([s[0] for s in samples], dtype=np.float64),
            np.array([s[1] for s in samples], dtype=np.float64)]
    dx, dy = rows
    rsrc = np.array([s[2] for s in samples])
    rdst = np.array([s[3] for s in samples])
    cas = np.array([cfg.cascade_ns.get(s[4], 0.0) if s[4] else 0.0
                    for s in samples])
    delay = np.array([s[5] for s in samples], dtype=np.float64)
    pen = np.zeros(delay.shape[0])
    for i in range(delay.shape[0]):
        if rsrc[i] != rdst[i]:
            key = (min(rsrc[i], rdst[i]), max(rsrc[i], rdst[i]))
            pen[i] = cfg.blockage_pairs.get(key, cfg.blockage_default_ns)
    target = delay - pen + cas
    d_eucl = np.hypot(dx, dy)
    interval = np.searchsorted(breaks, d_eucl, side="right")
    coeffs = np.zeros((n_int, 4))
    residuals = np.zeros(delay.shape[0])
    for k in range(n_int):
        mask = interval == k
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        if cnt < cfg.min_samples:
            raise DelayFitError(
                f"interval {k}: {cnt} samples, need >= {cfg.min_samples}")
        a_mat = np.column_stack([dx[mask] ** cfg.b0, dx[mask] ** cfg.b1,
                                 dy[mask] ** cfg.b0, dy[mask] ** cfg.b1])
        t = target[mask]
        sol, _, rank, _ = np.linalg.lstsq(a_mat, t, rcond=None)
        if rank < 4:
            if not a_mat.any() and not t.any():
                sol = np.zeros(4)
            else:
                raise DelayFitError(
                    f"interval {k}: rank-deficient design matrix "
                    f"(collinear samples)")
        coeffs[k] = sol
        residuals[mask] = t - a_mat @ sol
    params = DelayModelParams(
        breakpoints=breaks, coeffs=np.maximum(coeffs, 0.0),
        b0=cfg.b0, b1=cfg.b1, cascade_ns=dict(cfg.cascade_ns),
        blockage_default_ns=cfg.blockage_default_ns,
        blockage_pairs=dict(cfg.blockage_pairs))
    params.fit_report = {
        "mean_abs_error": float(np.mean(np.abs(residuals))),
        "std_residual": float(np.std(residuals)),
        "samples_per_interval": [int((interval == k).sum())
                                 for k in range(n_int)],
    }
    return params
