"""Critical-path detailed placement over packed placements.

Each iteration extracts the worst endpoint-terminated paths, builds a
per-instance candidate window (small squares everywhere, directional
sectors at path endpoints and sharp turning points), and re-assigns the
path through a layered shortest-path sweep. Temporary critical-path
degradation is tolerated between improvements; the best placement seen
is recorded and restored, and a final pass accepts only single-instance
moves that cannot hurt the critical path.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import accel
from .model import BLOCKAGE, CELL_KINDS, regions_of
from .pack import SlotOccupancy, slot_kind_for
from .timing import incremental_sta, run_sta


@dataclass
class DpSchedule:
    n_dpi: int = 120
    n_cp_init: int = 1
    d_ncp: int = 20
    r_nbr_init: float = 1.0
    d_r: float = 0.01
    i_thr: int = 5
    r_square: float = 3.0
    r_sector: float = 5.0
    scale_sector: bool = True  # window scale also caps the sector radius
    use_sector: bool = True
    allow_degradation: bool = True
    final_paths: int = 20

    def clamp_r(self, r):
        return min(1.0, max(0.1, r))


@dataclass
class Path:
    vertices: list
    edges: list  # edge ids between consecutive vertices


def occupancy_from_placement(netlist, device, placement):
    occ = SlotOccupancy(device)
    for v in range(netlist.n_instances):
        sid = int(placement.site[v])
        slot = int(placement.slot[v])
        if sid >= 0 and slot >= 0:
            x, y = device.site_xy(sid)
            occ.place(v, x, y, slot)
    return occ


def extract_critical_paths(graph, n):
    """Top-n endpoint-terminated paths by arrival, via max-arrival
    backtracking from the worst endpoints."""
    nl = graph.netlist
    ends = np.nonzero(nl.tend)[0]
    if ends.size == 0:
        return []
    key = graph.t_arr_end[ends] + graph.t_logic[ends]
    order = ends[np.lexsort((ends, -key))]
    paths = []
    for end in order[:n]:
        v = int(end)
        verts = [v]
        eids = []
        while True:
            lo, hi = graph.in_ptr[v], graph.in_ptr[v + 1]
            if hi <= lo:
                break
            best_val, best_u, best_e = -np.inf, -1, -1
            for p in range(lo, hi):
                u = int(graph.in_src[p])
                e = int(graph.in_eid[p])
                val = graph.t_arr[u] + graph.t_logic[u] + graph.t_net[e]
                if val > best_val or (val == best_val and u < best_u):
                    best_val, best_u, best_e = val, u, e
            verts.append(best_u)
            eids.append(best_e)
            if nl.tstart[best_u]:
                break
            v = best_u
        verts.reverse()
        eids.reverse()
        paths.append(Path(vertices=verts, edges=eids))
    return paths


# ---------------------------------------------------------------------------
# candidate windows
# ---------------------------------------------------------------------------

def _sites_in_window(device, cx, cy, half):
    """Sites whose center lies within the square half-width."""
    out = []
    x0 = max(0, int(math.floor(cx - half)))
    x1 = min(device.width - 1, int(math.ceil(cx + half)))
    y0 = max(0, int(math.floor(cy - half)))
    y1 = min(device.height - 1, int(math.ceil(cy + half)))
    eps = 1e-9
    for x in range(x0, x1 + 1):
        if device.column_at.get(x) is None:
            continue
        if abs(x + 0.5 - cx) > half + eps:
            continue
        for y in range(y0, y1 + 1):
            if abs(y + 0.5 - cy) > half + eps:
                continue
            if not device.is_blocked(x, y):
                out.append((x, y))
    return out


def _sites_in_sector(device, cx, cy, radius, axis):
    """Sites within radius whose direction lies within 45 deg of axis."""
    norm = math.hypot(axis[0], axis[1])
    if norm == 0:
        return []
    ux, uy = axis[0] / norm, axis[1] / norm
    cos_lim = math.cos(math.pi / 4)
    out = []
    x0 = max(0, int(math.floor(cx - radius)))
    x1 = min(device.width - 1, int(math.ceil(cx + radius)))
    for x in range(x0, x1 + 1):
        col = device.column_at.get(x)
        if col is None:
            continue
        y0 = max(0, int(math.floor(cy - radius)))
        y1 = min(device.height - 1, int(math.ceil(cy + radius)))
        for y in range(y0, y1 + 1):
            dx = x + 0.5 - cx
            dy = y + 0.5 - cy
            d = math.hypot(dx, dy)
            if d == 0 or d > radius:
                continue
            if (dx * ux + dy * uy) / d >= cos_lim and \
                    not device.is_blocked(x, y):
                out.append((x, y))
    return out


def _macro_move_ok(netlist, device, occ, macro_idx, members, placement,
                   dx, dy):
    """Whole-footprint legality of shifting a macro by (dx, dy) sites."""
    macro = netlist.macros[macro_idx]
    vacated = {}
    for v in members:
        sx, sy = device.site_xy(int(placement.site[v]))
        kind = CELL_KINDS[netlist.kind_code[v]]
        col = device.column_at[sx]
        sk = slot_kind_for(kind, col.kind)
        vacated[(sx, sy, sk)] = vacated.get((sx, sy, sk), 0) + 1
    need = {}
    for v in members:
        sx, sy = device.site_xy(int(placement.site[v]))
        tx, ty = sx + dx, sy + dy
        if not (0 <= tx < device.width and 0 <= ty < device.height):
            return False
        col = device.column_at.get(tx)
        if col is None or col.kind != macro.column_kind or \
                device.is_blocked(tx, ty):
            return False
        kind = CELL_KINDS[netlist.kind_code[v]]
        sk = slot_kind_for(kind, col.kind)
        need[(tx, ty, sk)] = need.get((tx, ty, sk), 0) + 1
    for (tx, ty, sk), cnt in need.items():
        arr = occ.array_at(tx, ty)
        kinds = device.slot_kinds_at(tx)
        free = sum(1 for i, k2 in enumerate(kinds)
                   if k2 == sk and arr[i] < 0)
        free += vacated.get((tx, ty, sk), 0)
        if free < cnt:
            return False
    return True


def find_candidates(path, placement, device, schedule, occ, netlist,
                    locked=frozenset(), r_nbr=None):
    """Candidate (site, slot) locations per path instance.

    Every instance keeps its current location; locked instances get
    nothing else. Claims on one slot are split fewest-candidates-first.
    """
    r = schedule.clamp_r(r_nbr if r_nbr is not None else schedule.r_nbr_init)
    half = r * schedule.r_square
    verts = path.vertices
    npath = len(verts)
    pos = [(placement.x[v], placement.y[v]) for v in verts]
    site_lists = []
    macro_first = {}
    for k, v in enumerate(verts):
        if placement.site[v] >= 0:
            sx, sy = device.site_xy(int(placement.site[v]))
            cx, cy = sx + 0.5, sy + 0.5  # window centered on the site
        else:
            cx, cy = pos[k]
        if v in locked or netlist.fixed_mask[v]:
            site_lists.append([])
            continue
        m = int(netlist.macro_of[v])
        if m >= 0:
            if m in macro_first:
                site_lists.append([])  # only one member of a macro moves
                continue
            macro_first[m] = k
        sites = _sites_in_window(device, cx, cy, half)
        axis = None
        if not schedule.use_sector:
            pass
        elif k == 0 and npath > 1:
            axis = (pos[1][0] - cx, pos[1][1] - cy)
        elif k == npath - 1 and npath > 1:
            axis = (pos[k - 1][0] - cx, pos[k - 1][1] - cy)
        elif 0 < k < npath - 1:
            a = (pos[k - 1][0] - cx, pos[k - 1][1] - cy)
            b = (pos[k + 1][0] - cx, pos[k + 1][1] - cy)
            if a[0] * b[0] + a[1] * b[1] > 0:  # acute angle at self
                na = math.hypot(*a)
                nb = math.hypot(*b)
                if na > 0 and nb > 0:
                    axis = (a[0] / na + b[0] / nb, a[1] / na + b[1] / nb)
        if axis is not None:
            radius = schedule.r_sector * (r if schedule.scale_sector
                                          else 1.0)
            sites.extend(_sites_in_sector(device, cx, cy, radius, axis))
        kind = CELL_KINDS[netlist.kind_code[v]]
        seen = set()
        usable = []
        for (x, y) in sites:
            if (x, y) in seen:
                continue
            seen.add((x, y))
            if m >= 0:
                sx, sy = device.site_xy(int(placement.site[v]))
                if (x - sx, y - sy) == (0, 0):
                    continue
                mem = np.nonzero(netlist.macro_of == m)[0]
                if _macro_move_ok(netlist, device, occ, m, mem, placement,
                                  x - sx, y - sy):
                    usable.append((x, y))
            else:
                if occ.free_slot(x, y, kind) >= 0:
                    usable.append((x, y))
        usable.sort()
        site_lists.append(usable)

    # split contested sites fewest-candidates-first, then pin concrete slots
    order = sorted(range(npath), key=lambda k: (len(site_lists[k]), k))
    reserved = {}
    cand_map = {}
    for k in order:
        v = verts[k]
        cur_site = int(placement.site[v])
        cur_slot = int(placement.slot[v])
        sx, sy = device.site_xy(cur_site)
        cands = [(sx, sy, cur_slot)]
        kind = CELL_KINDS[netlist.kind_code[v]]
        for (x, y) in site_lists[k]:
            arr = occ.array_at(x, y)
            kinds = device.slot_kinds_at(x)
            col = device.column_at[x]
            sk = slot_kind_for(kind, col.kind)
            slot = -1
            for i, k2 in enumerate(kinds):
                if k2 == sk and arr[i] < 0 and (x, y, i) not in reserved:
                    slot = i
                    break
            if slot < 0:
                continue
            reserved[(x, y, slot)] = v
            cands.append((x, y, slot))
        cand_map[v] = cands
    return cand_map


# ---------------------------------------------------------------------------
# layered shortest path
# ---------------------------------------------------------------------------

def _pair_delays(device, params, graph, eid, from_pos, to_pos):
    """Delay matrix between two candidate position lists."""
    nf, nt = len(from_pos), len(to_pos)
    fx = np.repeat([p[0] for p in from_pos], nt)
    fy = np.repeat([p[1] for p in from_pos], nt)
    tx = np.tile([p[0] for p in to_pos], nf)
    ty = np.tile([p[1] for p in to_pos], nf)
    dx = np.abs(fx - tx)
    dy = np.abs(fy - ty)
    rs = regions_of(device, fx, fy)
    rd = regions_of(device, tx, ty)
    nb = device.n_regions
    mat = params.blockage_matrix(nb)
    rs = np.where(rs == BLOCKAGE, nb, rs)
    rd = np.where(rd == BLOCKAGE, nb, rd)
    pen = mat[rs, rd]
    ded = np.full(nf * nt, params.cascade_vector()[graph.edge_cascade[eid]])
    out = np.empty(nf * nt)
    accel.eval_delay(dx, dy, params.breakpoints, params.coeffs,
                     params.b0, params.b1, ded, pen, out)
    return out.reshape(nf, nt)


def shortest_path_assign(path, cand_map, graph, params, device, placement):
    """Optimal per-layer candidate choice minimizing total path delay.

    Dynamic program over the path layers; O(L * N^2) in the candidate
    count. Returns ({instance: (x, y, slot)}, predicted_path_delay).
    """
    verts = path.vertices
    layers = []
    for v in verts:
        cands = cand_map[v]
        layers.append([device.slot_position(x, y, s) if s >= 0
                       else (x + 0.5, y + 0.5) for (x, y, s) in cands])
    t_logic = graph.t_logic
    cost = np.zeros(len(layers[0]))
    back = []
    for k in range(1, len(verts)):
        delays = _pair_delays(device, params, graph, path.edges[k - 1],
                              layers[k - 1], layers[k])
        total = cost[:, None] + t_logic[verts[k - 1]] + delays
        best_prev = np.argmin(total, axis=0)
        cost = total[best_prev, np.arange(len(layers[k]))]
        back.append(best_prev)
    j = int(np.argmin(cost))
    delay = float(cost[j] + t_logic[verts[-1]])
    choice = [0] * len(verts)
    choice[-1] = j
    for k in range(len(verts) - 2, -1, -1):
        choice[k] = int(back[k][choice[k + 1]])
    moves = {}
    for k, v in enumerate(verts):
        moves[v] = cand_map[v][choice[k]]
    return moves, delay


def path_delay(path, graph, params, device, placement):
    """Current delay of a path from live coordinates (one vector eval)."""
    verts = np.asarray(path.vertices, dtype=np.int64)
    if verts.shape[0] < 2:
        return float(graph.t_logic[verts].sum())
    fx = placement.x[verts[:-1]]
    fy = placement.y[verts[:-1]]
    tx = placement.x[verts[1:]]
    ty = placement.y[verts[1:]]
    dx = np.abs(fx - tx)
    dy = np.abs(fy - ty)
    rs = regions_of(device, fx, fy)
    rd = regions_of(device, tx, ty)
    nb = device.n_regions
    mat = params.blockage_matrix(nb)
    rs = np.where(rs == BLOCKAGE, nb, rs)
    rd = np.where(rd == BLOCKAGE, nb, rd)
    pen = mat[rs, rd]
    eids = np.asarray(path.edges, dtype=np.int64)
    ded = params.cascade_vector()[graph.edge_cascade[eids]]
    out = np.empty(dx.shape[0])
    accel.eval_delay(dx, dy, params.breakpoints, params.coeffs,
                     params.b0, params.b1, ded, pen, out)
    return float(out.sum() + graph.t_logic[verts].sum())


# ---------------------------------------------------------------------------
# applying moves
# ---------------------------------------------------------------------------

@dataclass
class MoveRecord:
    moved: list
    rows: dict      # instance -> (site, slot, x, y) before the move
    touched: dict   # (x, y) -> occupancy array before the move


def revert_moves(placement, occ, record):
    for key, arr in record.touched.items():
        occ.slots[key] = arr
    for v, (sid, slot, px, py) in record.rows.items():
        placement.site[v] = sid
        placement.slot[v] = slot
        placement.x[v] = px
        placement.y[v] = py


def apply_path_moves(netlist, device, placement, occ, moves):
    """Relocate path instances (macros rigidly as whole bodies).

    Returns a MoveRecord usable with revert_moves. Raises on any
    occupancy conflict after restoring the previous state, so every
    accepted move keeps the placement legal.
    """
    real_moves = []
    for v, (x, y, slot) in moves.items():
        sid = device.site_id(x, y)
        if int(placement.site[v]) != sid:
            real_moves.append((v, x, y, slot))
    if not real_moves:
        return MoveRecord([], {}, {})
    touched = {}

    def snapshot(x, y):
        key = (x, y)
        if key not in touched:
            touched[key] = occ.array_at(x, y).copy()

    plan = []  # (instance, new_x, new_y, preferred slot)
    seen_macros = set()
    for v, x, y, slot in real_moves:
        m = int(netlist.macro_of[v])
        if m >= 0:
            if m in seen_macros:
                continue
            seen_macros.add(m)
            sx, sy = device.site_xy(int(placement.site[v]))
            dx, dy = x - sx, y - sy
            for u in np.nonzero(netlist.macro_of == m)[0]:
                u = int(u)
                ux, uy = device.site_xy(int(placement.site[u]))
                plan.append((u, ux + dx, uy + dy, -1))
        else:
            plan.append((v, x, y, slot))
    rows = {v: (int(placement.site[v]), int(placement.slot[v]),
                float(placement.x[v]), float(placement.y[v]))
            for v, _, _, _ in plan}
    record = MoveRecord([v for v, _, _, _ in plan], rows, touched)
    try:
        for v, x, y, _hint in plan:
            ox, oy = device.site_xy(rows[v][0])
            snapshot(ox, oy)
            occ.remove(v, ox, oy, rows[v][1])
        for v, x, y, hint in plan:
            snapshot(x, y)
            kind = CELL_KINDS[netlist.kind_code[v]]
            arr = occ.array_at(x, y)
            slot = hint if (hint >= 0 and arr[hint] < 0) else \
                occ.free_slot(x, y, kind)
            if slot < 0:
                raise RuntimeError(f"no free slot at ({x},{y}) for {v}")
            occ.place(v, x, y, slot)
            placement.site[v] = device.site_id(x, y)
            placement.slot[v] = slot
            px, py = device.slot_position(x, y, slot)
            placement.x[v] = px
            placement.y[v] = py
    except Exception:
        revert_moves(placement, occ, record)
        raise
    return record


# ---------------------------------------------------------------------------
# main loops
# ---------------------------------------------------------------------------

def detailed_place(netlist, device, placement, graph, params,
                   schedule=None, occ=None, trace=None, n_thr=30.0):
    """Iterative critical-path optimization with best-state recovery."""
    sched = schedule or DpSchedule()
    place = placement.clone()
    if sched.n_dpi == 0:
        return place
    occ = occ or occupancy_from_placement(netlist, device, place)
    metrics = run_sta(graph, place, params, n_thr)
    best_cpd = metrics.cpd
    best_place = place.clone()
    cur_cpd = metrics.cpd
    not_opt = 0
    n_cp = sched.n_cp_init
    r_nbr = sched.r_nbr_init
    for it in range(sched.n_dpi):
        paths = extract_critical_paths(graph, n_cp)
        locked = set()
        for path in paths:
            cand = find_candidates(path, place, device, sched, occ,
                                   netlist, locked, r_nbr)
            moves, _pred = shortest_path_assign(path, cand, graph, params,
                                                device, place)
            record = apply_path_moves(netlist, device, place, occ, moves)
            if record.moved and not sched.allow_degradation:
                m2 = incremental_sta(graph, place, params, record.moved,
                                     n_thr)
                if m2.cpd > cur_cpd + 1e-12:
                    revert_moves(place, occ, record)
                    incremental_sta(graph, place, params, record.moved,
                                    n_thr)
                else:
                    cur_cpd = m2.cpd
            elif record.moved:
                incremental_sta(graph, place, params, record.moved, n_thr)
            locked.update(path.vertices)
        metrics = run_sta(graph, place, params, n_thr)
        cpd = metrics.cpd
        cur_cpd = cpd
        r_nbr = sched.clamp_r(r_nbr - sched.d_r)
        n_cp = n_cp + sched.d_ncp
        not_opt += 1
        if trace is not None:
            trace.append({"iter": it, "cpd": cpd, "best_cpd": min(best_cpd,
                                                                  cpd),
                          "n_cp": n_cp, "r_nbr": r_nbr})
        if cpd < best_cpd - 1e-12:
            best_cpd = cpd
            best_place = place.clone()
            not_opt = 0
        elif not_opt == sched.i_thr:
            place = best_place.clone()
            occ = occupancy_from_placement(netlist, device, place)
            metrics = run_sta(graph, place, params, n_thr)
            cur_cpd = metrics.cpd
            not_opt = 0
            r_nbr = sched.clamp_r(r_nbr + (sched.i_thr + 1) * sched.d_r)
            n_cp = max(1, n_cp - (sched.i_thr + 1) * sched.d_ncp)
    place = best_place.clone()
    occ = occupancy_from_placement(netlist, device, place)
    run_sta(graph, place, params, n_thr)
    place = final_no_degradation_pass(netlist, device, place, graph,
                                      params, sched, occ, n_thr)
    run_sta(graph, place, params, n_thr)
    return place


def final_no_degradation_pass(netlist, device, placement, graph, params,
                              schedule=None, occ=None, n_thr=30.0):
    """Single-instance relocations accepted only when the critical path
    delay does not increase and the path delay strictly decreases."""
    sched = schedule or DpSchedule()
    place = placement
    occ = occ or occupancy_from_placement(netlist, device, place)
    metrics = incremental_sta(graph, place, params, [], n_thr)
    cur_cpd = metrics.cpd
    paths = extract_critical_paths(graph, sched.final_paths)
    for path in paths:
        for v in path.vertices:
            if netlist.fixed_mask[v]:
                continue
            single = Path(vertices=[v], edges=[])
            cand = find_candidates(single, place, device, sched, occ,
                                   netlist, frozenset(), 1.0)
            before = path_delay(path, graph, params, device, place)
            for (x, y, slot) in cand[v][1:]:
                record = apply_path_moves(netlist, device, place, occ,
                                          {v: (x, y, slot)})
                after = path_delay(path, graph, params, device, place)
                if after >= before - 1e-12:
                    # timing graph untouched so far: cheap revert
                    revert_moves(place, occ, record)
                    continue
                m2 = incremental_sta(graph, place, params, record.moved,
                                     n_thr)
                if m2.cpd <= cur_cpd + 1e-12:
                    cur_cpd = m2.cpd
                    before = after
                else:
                    revert_moves(place, occ, record)
                    incremental_sta(graph, place, params, record.moved,
                                    n_thr)
    return place
