"""Timing-driven quadratic global placement.

Each iteration linearizes net wirelength with the bound2bound model,
adds three pseudo-net families (legalization anchors, blockage-region
anchors, timing edges weighted by slack criticality), solves the two
axis-separable SPD systems with conjugate gradients, then spreads cells
out of over-demanded bins. A wirelength/timing blend factor ramps from
pure wirelength to its maximum once timing analysis becomes reliable.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix

from . import accel
from .model import (BLOCKAGE, CELL_KINDS, DesignError, InfeasibleError,
                    hpwl, region_of, regions_of, slot_accepts)
from .timing import negative_edges, run_sta


@dataclass
class PseudoNet:
    kind: str            # "legalize" | "blockage" | "timing"
    inst: int
    other: int = -1      # second instance for timing nets
    anchor: tuple = None  # fixed point for anchor nets
    weight: float = 0.0


@dataclass
class AxisSystem:
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    rhs: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_w: np.ndarray
    anchor_i: np.ndarray
    anchor_p: np.ndarray
    anchor_w: np.ndarray


@dataclass
class QpSystem:
    mov: np.ndarray          # movable instance indexes (global)
    mov_index: np.ndarray    # global -> movable row, -1 for fixed
    x: AxisSystem = None
    y: AxisSystem = None
    lam: float = 0.0
    solve_info: dict = field(default_factory=dict)

    def objective(self, axis, coords):
        """Quadratic objective of one axis at arbitrary coordinates."""
        s = self.x if axis == "x" else self.y
        d = coords[s.pair_i] - coords[s.pair_j]
        val = float(np.dot(s.pair_w, d * d))
        if s.anchor_i.size:
            da = coords[s.anchor_i] - s.anchor_p
            val += float(np.dot(s.anchor_w, da * da))
        return val


def _b2b_axis_pairs(netlist, coord, net_scale, eps):
    counts = np.diff(netlist.net_ptr)
    cap = int(np.maximum(2 * counts - 1, 0).sum())
    pi = np.empty(cap, dtype=np.int64)
    pj = np.empty(cap, dtype=np.int64)
    pw = np.empty(cap, dtype=np.float64)
    k = accel.b2b_pairs(netlist.net_ptr, netlist.pin_inst, net_scale,
                        coord, eps, pi, pj, pw)
    return pi[:k], pj[:k], pw[:k]


def b2b_assemble(netlist, placement, pseudo, lam, eps=1e-4):
    """Build the per-axis quadratic systems at the current placement.

    Design nets and legalization anchors are scaled by (1 - lam);
    blockage anchors and timing nets by lam. Boundary pins per net come
    from the placement the system is assembled at.
    """
    n = netlist.n_instances
    mov = np.nonzero(~netlist.fixed_mask)[0]
    mov_index = np.full(n, -1, dtype=np.int64)
    mov_index[mov] = np.arange(mov.shape[0])
    wl_scale = 1.0 - lam
    system = QpSystem(mov=mov, mov_index=mov_index, lam=lam)

    for axis in ("x", "y"):
        coord = placement.x if axis == "x" else placement.y
        net_scale = netlist.net_weight * wl_scale
        pi, pj, pw = _b2b_axis_pairs(netlist, coord, net_scale, eps)
        extra_i, extra_j, extra_w = [], [], []
        anc_i, anc_p, anc_w = [], [], []
        for pn in pseudo:
            if pn.weight <= 0.0:
                continue
            if pn.kind == "timing":
                scale = lam
                d = abs(coord[pn.inst] - coord[pn.other])
                w = scale * pn.weight / max(d, eps)
                extra_i.append(pn.inst)
                extra_j.append(pn.other)
                extra_w.append(w)
            elif pn.kind == "blockage":
                # pulls along x only; the anchor shares the instance's y
                if axis != "x":
                    continue
                d = abs(coord[pn.inst] - pn.anchor[0])
                w = lam * pn.weight / max(d, eps)
                anc_i.append(pn.inst)
                anc_p.append(pn.anchor[0])
                anc_w.append(w)
            else:  # legalize: plain quadratic pull on both axes
                pos = pn.anchor[0] if axis == "x" else pn.anchor[1]
                anc_i.append(pn.inst)
                anc_p.append(pos)
                anc_w.append(wl_scale * pn.weight)
        if extra_i:
            pi = np.concatenate([pi, np.array(extra_i, dtype=np.int64)])
            pj = np.concatenate([pj, np.array(extra_j, dtype=np.int64)])
            pw = np.concatenate([pw, np.array(extra_w)])
        anc_i = np.array(anc_i, dtype=np.int64)
        anc_p = np.array(anc_p, dtype=np.float64)
        anc_w = np.array(anc_w, dtype=np.float64)

        nm = mov.shape[0]
        mi = mov_index[pi]
        mj = mov_index[pj]
        rows, cols, vals = [], [], []
        rhs = np.zeros(nm)
        both = (mi >= 0) & (mj >= 0)
        if both.any():
            rows.extend([mi[both], mj[both], mi[both], mj[both]])
            cols.extend([mi[both], mj[both], mj[both], mi[both]])
            vals.extend([pw[both], pw[both], -pw[both], -pw[both]])
        for sel_m, sel_f in (((mi >= 0) & (mj < 0), pj),
                             ((mj >= 0) & (mi < 0), pi)):
            if sel_m.any():
                m_side = np.where(mi >= 0, mi, mj)[sel_m]
                rows.append(m_side)
                cols.append(m_side)
                vals.append(pw[sel_m])
                np.add.at(rhs, m_side, pw[sel_m] * coord[sel_f[sel_m]])
        if anc_i.size:
            ma = mov_index[anc_i]
            ok = ma >= 0
            rows.append(ma[ok])
            cols.append(ma[ok])
            vals.append(anc_w[ok])
            np.add.at(rhs, ma[ok], anc_w[ok] * anc_p[ok])
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            vals = np.concatenate(vals)
        else:
            rows = np.zeros(0, dtype=np.int64)
            cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        mat = coo_matrix((vals, (rows, cols)), shape=(nm, nm)).tocsr()
        mat.sum_duplicates()
        ax = AxisSystem(indptr=mat.indptr.astype(np.int64),
                        indices=mat.indices.astype(np.int64),
                        data=mat.data.astype(np.float64), rhs=rhs,
                        pair_i=pi, pair_j=pj, pair_w=pw,
                        anchor_i=anc_i, anchor_p=anc_p, anchor_w=anc_w)
        if axis == "x":
            system.x = ax
        else:
            system.y = ax
    return system


def solve_qp(system, placement, tol=1e-6, iter_factor=10):
    """Per-axis conjugate-gradient solve; fixed instances never move."""
    out = placement.clone()
    info = {}
    for axis in ("x", "y"):
        s = system.x if axis == "x" else system.y
        coord = placement.x if axis == "x" else placement.y
        nm = system.mov.shape[0]
        if nm == 0:
            info[axis] = {"residual": 0.0, "iters": 0}
            continue
        x0 = coord[system.mov].astype(np.float64)
        sol, res, iters = accel.cg_solve(s.indptr, s.indices, s.data,
                                         s.rhs, x0, tol,
                                         max(1, iter_factor * nm))
        info[axis] = {"residual": float(res), "iters": int(iters)}
        if axis == "x":
            out.x[system.mov] = sol
        else:
            out.y[system.mov] = sol
    system.solve_info = info
    return out


def criticality_weight(slack, cfg, dly_max):
    """Slack-derived pseudo-net weight; zero for non-violating edges.

    Evaluated in log space: the exponent is unbounded when slack is far
    below the percentile threshold, so the result saturates at a huge
    finite value instead of overflowing.
    """
    if slack >= 0:
        return 0.0
    t_thr = cfg.t_thr if cfg.t_thr < 0 else -1e-9
    c = max(cfg.alpha, cfg.beta_crit * slack / t_thr)
    log_w = c * math.log1p(-slack / dly_max)
    return math.exp(min(log_w, 700.0))


def build_timing_pseudonets(graph, cfg, wns_aware=True):
    """One 2-pin pseudo net per negative-slack timing edge."""
    out = []
    dly_max = graph.dly_max
    for e in negative_edges(graph):
        s = float(graph.slack[e])
        if wns_aware:
            w = criticality_weight(s, cfg, dly_max)
        else:
            w = (1.0 - s / dly_max) ** cfg.alpha
        if w <= 0.0:
            continue
        out.append(PseudoNet(kind="timing", inst=int(graph.edge_src[e]),
                             other=int(graph.edge_dst[e]), weight=w))
    return out


# ---------------------------------------------------------------------------
# blockage-aware anchoring and stretching
# ---------------------------------------------------------------------------

@dataclass
class BlockagePlan:
    clusters: list           # (member list, target region id or None)
    beta_anchor: float
    max_cluster: int = 20000

    def anchored(self):
        for members, target in self.clusters:
            if target is not None:
                for v in members:
                    yield v, target


def plan_blockage(netlist, info, device, placement, threshold_len=None,
                  beta_anchor=0.01, max_cluster=20000, threshold_pct=75.0):
    """Cluster long-path circuits and bind clusters to their majority
    region.

    Depth-first traversal from the longest-path instances over still
    unclustered successors builds the clusters; a cluster binds to a
    region only when more than half of its members already sit inside.
    """
    g = info.graph
    n = netlist.n_instances
    mpl = info.max_path_len
    if threshold_len is None:
        threshold_len = float(np.percentile(mpl, threshold_pct))
    cand = np.nonzero((mpl > threshold_len) & ~netlist.fixed_mask)[0]
    order = cand[np.lexsort((cand, -mpl[cand]))]
    clustered = np.zeros(n, dtype=bool)
    clusters = []
    for seed in order:
        if clustered[seed]:
            continue
        members = []
        stack = [int(seed)]
        while stack and len(members) < max_cluster:
            v = stack.pop()
            if clustered[v] or netlist.fixed_mask[v]:
                continue
            clustered[v] = True
            members.append(v)
            for p in range(g.out_ptr[v], g.out_ptr[v + 1]):
                w = int(g.out_dst[p])
                if not clustered[w]:
                    stack.append(w)
        if not members:
            continue
        regs = regions_of(device, placement.x[np.array(members)],
                          placement.y[np.array(members)])
        target = None
        valid = regs[regs != BLOCKAGE]
        if valid.size:
            ids, counts = np.unique(valid, return_counts=True)
            best = int(np.argmax(counts))
            if counts[best] * 2 > len(members):  # strictly more than half
                target = int(ids[best])
        if target is None:
            # release members for other clusters
            for v in members:
                clustered[v] = False
            clusters.append((members, None))
        else:
            clusters.append((members, target))
    return BlockagePlan(clusters=clusters, beta_anchor=beta_anchor,
                        max_cluster=max_cluster)


def blockage_pseudonets(plan, netlist, device, placement):
    """Anchor nets for plan members, reweighted at current coordinates."""
    out = []
    beta = plan.beta_anchor
    for v, target in plan.anchored():
        reg = device.regions[target]
        ax = (reg.x0 + reg.x1) / 2.0
        w = beta * abs(placement.x[v] - ax) * float(netlist.pin_count[v])
        out.append(PseudoNet(kind="blockage", inst=v,
                             anchor=(ax, float(placement.y[v])), weight=w))
    return out


def stretch_region(placement, region, members_in, n_outside, device):
    """Open vertical room in a region for incoming guided instances."""
    members_in = np.asarray(members_in, dtype=np.int64)
    if members_in.size == 0:
        raise DesignError("stretch_region: empty region occupancy")
    out = placement.clone()
    if n_outside <= 0:
        return out
    ys = placement.y[members_in]
    y_t = float(ys.max())
    y_b = float(ys.min())
    ratio = n_outside / members_in.size
    half = ratio * (y_t - y_b) / 2.0
    y_t2 = y_t + half
    y_b2 = y_b - half
    if y_t > y_b:
        new = y_b2 + (ys - y_b) * (y_t2 - y_b2) / (y_t - y_b)
    else:
        new = ys.copy()
    lo = region.y0 + 0.5
    hi = region.y1 - 0.5
    if new.size:
        shift = 0.0
        if new.min() < lo:
            shift = lo - new.min()
        new = new + shift
        if new.max() > hi:
            new = new - (new.max() - hi)
        span = new.max() - new.min()
        if new.min() < lo and span > 0:
            # region shorter than the stretched span: squeeze linearly
            new = lo + (new - new.min()) * (hi - lo) / span
    out.y[members_in] = np.clip(new, 0.0, device.height)
    return out


def apply_blockage_stretch(plan, netlist, device, placement):
    """Stretch every target region for its incoming guided instances."""
    out = placement
    target_of = {}
    for v, t in plan.anchored():
        target_of[v] = t
    by_region = {}
    for v, t in target_of.items():
        by_region.setdefault(t, []).append(v)
    movable = np.nonzero(~netlist.fixed_mask)[0]
    regs = regions_of(device, out.x[movable], out.y[movable])
    for t, guided in sorted(by_region.items()):
        reg = device.regions[t]
        occupants = movable[regs == t]
        if occupants.size == 0:
            continue
        keep = [v for v in occupants if target_of.get(int(v), t) == t]
        n_in = len(keep)
        gx = np.clip(out.x[np.array(guided)], 0, device.width)
        gy = np.clip(out.y[np.array(guided)], 0, device.height)
        n_out = int(np.sum(regions_of(device, gx, gy) != t))
        if n_in == 0 or n_out == 0:
            continue
        out = stretch_region(out, reg, occupants, n_out, device)
    return out


# ---------------------------------------------------------------------------
# legalization anchors and cell spreading
# ---------------------------------------------------------------------------

def legalization_anchors(netlist, device, placement, weight):
    """Weak per-instance pull toward the nearest legal column."""
    out = []
    cols_for = {}
    for kind in CELL_KINDS:
        xs = sorted(c.x for c in device.columns_for(kind))
        cols_for[kind] = np.array(xs, dtype=np.float64)
    for v in np.nonzero(~netlist.fixed_mask)[0]:
        kind = CELL_KINDS[netlist.kind_code[v]]
        xs = cols_for[kind]
        if xs.size == 0:
            continue
        k = int(np.searchsorted(xs, placement.x[v] - 0.5))
        best, bd = -1.0, np.inf
        for j in (k - 1, k, k + 1):
            if 0 <= j < xs.size:
                d = abs(xs[j] + 0.5 - placement.x[v])
                if d < bd:
                    bd, best = d, xs[j] + 0.5
        ay = min(max(placement.y[v], 0.5), device.height - 0.5)
        out.append(PseudoNet(kind="legalize", inst=int(v),
                             anchor=(best, ay), weight=weight))
    return out


def _bin_supply(netlist, device, kind, bx, by, bw, bh):
    """Per-bin slot supply for one cell kind, less fixed occupancy."""
    nx, ny = len(bx) - 1, len(by) - 1
    supply = np.zeros((nx, ny), dtype=np.float64)
    for col in device.columns:
        cnt = 0
        for slot_kind, c in col.slots.items():
            if slot_accepts(kind, slot_kind, col.kind):
                cnt += c
        if cnt == 0:
            continue
        ix = min(int(col.x // bw), nx - 1)
        for iy in range(ny):
            y0, y1 = by[iy], by[iy + 1]
            free = 0
            for yy in range(int(y0), int(y1)):
                if not device.is_blocked(col.x, yy):
                    free += 1
            supply[ix, iy] += cnt * free
    fixed = np.nonzero(netlist.fixed_mask
                       & (netlist.kind_code == KIND_INDEX[kind]))[0]
    return supply, fixed


KIND_INDEX = {k: i for i, k in enumerate(CELL_KINDS)}


def spread_cells(netlist, device, placement, tol=0.1, bin_w=2, bin_h=4):
    """Bisection-style spreading until no bin exceeds supply*(1+tol).

    Works per cell kind; instances keep their relative order along each
    split axis inside every spreading window.
    """
    out = placement.clone()
    nx = max(1, math.ceil(device.width / bin_w))
    ny = max(1, math.ceil(device.height / bin_h))
    bx = np.arange(nx + 1) * bin_w
    bx[-1] = device.width
    by = np.arange(ny + 1) * bin_h
    by[-1] = device.height

    for kind in CELL_KINDS:
        code = KIND_INDEX[kind]
        inst = np.nonzero((netlist.kind_code == code)
                          & ~netlist.fixed_mask)[0]
        if inst.size == 0:
            continue
        supply, fixed = _bin_supply(netlist, device, kind, bx, by,
                                    bin_w, bin_h)
        for v in fixed:
            ix = min(int(out.x[v] // bin_w), nx - 1)
            iy = min(int(out.y[v] // bin_h), ny - 1)
            supply[ix, iy] = max(0.0, supply[ix, iy] - 1.0)
        if inst.size > supply.sum():
            raise InfeasibleError(
                f"{kind}: demand {inst.size} exceeds supply "
                f"{int(supply.sum())}")
        _spread_window(out, inst, supply, bx, by, 0, nx, 0, ny, tol,
                       bin_w, bin_h)
    return out


def _bin_counts(out, inst, bx, by, x0, x1, y0, y1, bin_w, bin_h):
    nxw, nyw = x1 - x0, y1 - y0
    counts = np.zeros((nxw, nyw), dtype=np.int64)
    ix = np.clip((out.x[inst] // bin_w).astype(int), 0, len(bx) - 2) - x0
    iy = np.clip((out.y[inst] // bin_h).astype(int), 0, len(by) - 2) - y0
    np.add.at(counts, (np.clip(ix, 0, nxw - 1), np.clip(iy, 0, nyw - 1)), 1)
    return counts


def _spread_window(out, inst, supply, bx, by, x0, x1, y0, y1, tol,
                   bin_w, bin_h):
    if inst.size == 0:
        return
    counts = _bin_counts(out, inst, bx, by, x0, x1, y0, y1, bin_w, bin_h)
    window_supply = supply[x0:x1, y0:y1]
    if np.all(counts <= window_supply * (1.0 + tol)):
        return  # demand already met everywhere: identity
    if (x1 - x0) == 1 and (y1 - y0) == 1:
        # single bin: lay instances out inside the bin, order-preserving
        lo_x, hi_x = bx[x0], bx[x0 + 1]
        lo_y, hi_y = by[y0], by[y0 + 1]
        order = np.argsort(out.y[inst], kind="stable")
        k = inst.size
        out.y[inst[order]] = lo_y + (np.arange(k) + 0.5) * (hi_y - lo_y) / k
        order = np.argsort(out.x[inst], kind="stable")
        out.x[inst[order]] = lo_x + (np.arange(k) + 0.5) * (hi_x - lo_x) / k
        return
    split_x = (x1 - x0) >= (y1 - y0)
    if split_x:
        mid = (x0 + x1) // 2
        s_l = supply[x0:mid, y0:y1].sum()
        s_r = supply[mid:x1, y0:y1].sum()
        coords = out.x[inst]
        lo_c, hi_c = bx[x0], bx[x1]
        mid_c = bx[mid]
    else:
        mid = (y0 + y1) // 2
        s_l = supply[x0:x1, y0:mid].sum()
        s_r = supply[x0:x1, mid:y1].sum()
        coords = out.y[inst]
        lo_c, hi_c = by[y0], by[y1]
        mid_c = by[mid]
    total = s_l + s_r
    d = inst.size
    if total <= 0:
        return
    want = d * s_l / total
    d_l = int(min(max(round(want), d - s_r), min(d, s_l)))
    d_l = max(0, d_l)
    order = np.argsort(coords, kind="stable")
    left = inst[order[:d_l]]
    right = inst[order[d_l:]]
    for group, g_lo, g_hi in ((left, lo_c, mid_c), (right, mid_c, hi_c)):
        if group.size == 0:
            continue
        c = out.x[group] if split_x else out.y[group]
        cmin, cmax = c.min(), c.max()
        span = cmax - cmin
        if span > 0:
            scaled = g_lo + 0.25 + (c - cmin) * (g_hi - g_lo - 0.5) / span
        else:
            scaled = np.full(group.size, (g_lo + g_hi) / 2.0)
        # only remap groups that spill outside their half
        if cmin < g_lo or cmax > g_hi:
            if split_x:
                out.x[group] = scaled
            else:
                out.y[group] = scaled
    if split_x:
        _spread_window(out, left, supply, bx, by, x0, mid, y0, y1, tol,
                       bin_w, bin_h)
        _spread_window(out, right, supply, bx, by, mid, x1, y0, y1, tol,
                       bin_w, bin_h)
    else:
        _spread_window(out, left, supply, bx, by, x0, x1, y0, mid, tol,
                       bin_w, bin_h)
        _spread_window(out, right, supply, bx, by, x0, x1, mid, y1, tol,
                       bin_w, bin_h)


def project_macros(netlist, placement):
    """Re-rigidify macros: members snap to the mean anchor position."""
    for m, macro in enumerate(netlist.macros):
        members = np.nonzero(netlist.macro_of == m)[0]
        if members.size == 0:
            continue
        dys = np.array([netlist.instances[v].macro_offset[1]
                        for v in members], dtype=np.float64)
        base_y = float(np.mean(placement.y[members] - dys))
        mx = float(np.mean(placement.x[members]))
        placement.x[members] = mx
        placement.y[members] = base_y + dys


# ---------------------------------------------------------------------------
# driver loop
# ---------------------------------------------------------------------------

@dataclass
class GpConfig:
    max_iters: int = 48
    wl_converge: float = 0.005   # relative HPWL change over the last window
    converge_window: int = 3
    lambda_max: float = 0.5
    lambda_ramp: int = 5
    ep_base: float = 0.002
    ep_growth: float = 1.25
    beta_anchor: float = 0.01
    eps: float = 1e-4
    spread_tol: float = 0.1
    spread_bin_w: int = 2
    spread_bin_h: int = 4
    qp_residual: float = 1e-6
    blockage_enabled: bool = True
    blockage_start: int = 2
    blockage_refresh: int = 4
    blockage_threshold: float = None
    blockage_threshold_pct: float = 75.0
    blockage_max_cluster: int = 20000
    min_sta_iters: int = 6
    timing_enabled: bool = True
    wns_aware: bool = True
    min_wl_iters: int = 4


def global_place(netlist, device, placement, info, graph, params, tcfg,
                 cfg=None, trace=None):
    """Alternate assemble/solve/spread until wirelength settles, then add
    timing pseudo nets and continue until settled again."""
    cfg = cfg or GpConfig()
    place = placement.clone()
    hist = []
    sta_on = False
    sta_iter = 0
    lam = 0.0
    plan = None
    w_ep = cfg.ep_base
    for it in range(cfg.max_iters):
        pseudo = legalization_anchors(netlist, device, place, w_ep)
        w_ep *= cfg.ep_growth
        # clusters bind to their majority region only once wirelength has
        # settled; an early majority vote reflects floorplan jitter and
        # anchors the cluster to the wrong side of a blockage
        if cfg.blockage_enabled and sta_on:
            if plan is None or sta_iter % cfg.blockage_refresh == 0:
                plan = plan_blockage(
                    netlist, info, device, place,
                    threshold_len=cfg.blockage_threshold,
                    beta_anchor=cfg.beta_anchor,
                    max_cluster=cfg.blockage_max_cluster,
                    threshold_pct=cfg.blockage_threshold_pct)
                place = apply_blockage_stretch(plan, netlist, device, place)
            pseudo.extend(blockage_pseudonets(plan, netlist, device, place))
        if sta_on:
            sta_iter += 1
            lam = cfg.lambda_max * min(1.0, sta_iter / cfg.lambda_ramp)
            metrics = run_sta(graph, place, params, tcfg.n_thr)
            tcfg.t_thr = metrics.t_thr
            pseudo.extend(build_timing_pseudonets(
                graph, tcfg, wns_aware=cfg.wns_aware))
        system = b2b_assemble(netlist, place, pseudo, lam, cfg.eps)
        place = solve_qp(system, place, tol=cfg.qp_residual)
        np.clip(place.x, 0.0, device.width, out=place.x)
        np.clip(place.y, 0.0, device.height, out=place.y)
        place = spread_cells(netlist, device, place, cfg.spread_tol,
                             cfg.spread_bin_w, cfg.spread_bin_h)
        project_macros(netlist, place)
        np.clip(place.x, 0.0, device.width, out=place.x)
        np.clip(place.y, 0.0, device.height, out=place.y)
        h = hpwl(netlist, place)
        hist.append(h)
        if trace is not None:
            trace.append({"iter": it, "hpwl": h, "lambda": lam,
                          "timing": sta_on})
        if len(hist) > cfg.converge_window and it >= cfg.min_wl_iters:
            prev = hist[-cfg.converge_window - 1]
            delta = abs(hist[-1] - prev) / max(prev, 1e-12)
            if delta < cfg.wl_converge:
                if cfg.timing_enabled and not sta_on:
                    sta_on = True
                    hist = hist[-1:]
                elif not cfg.timing_enabled or sta_iter >= cfg.min_sta_iters:
                    break
    return place
