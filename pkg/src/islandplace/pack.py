"""Exact legalization: macro snapping, site-centric packing, slot binding.

Macros snap to columns of their kind as rigid bodies, then sites grow
packing clusters in synchronized rounds. An instance contested by
several sites goes to the one where its marginal score gain is highest;
the score rewards nets absorbed into the site and long-path membership,
and charges wirelength disturbance. Finally the members of each site
are mapped to BEL slots by enumeration, minimizing the worst incident
edge delay.
"""

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from . import accel
from .model import CELL_KINDS, DesignError, InfeasibleError, slot_accepts

CLB_CLASS = ("LUT", "FF", "CARRY", "MUX", "LUTRAM")


class PackError(DesignError):
    pass


def slot_kind_for(cell_kind, column_kind):
    """The single slot kind a CLB-class cell occupies in a column."""
    if cell_kind == "LUTRAM" and column_kind == "SLICEM":
        return "LUT"
    return cell_kind


@dataclass
class PackConfig:
    theta: float = 0.01
    gamma: float = 0.05
    rounds: int = 50
    radius: int = 3       # candidate search radius, +1 per round
    max_candidates: int = 12
    enum_limit: int = 720  # permutations cap per slot-kind group

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")


class SlotOccupancy:
    """Sparse map from sites to their BEL slot occupants."""

    def __init__(self, device):
        self.device = device
        self.slots = {}

    def kinds_at(self, x):
        return self.device.slot_kinds_at(x)

    def array_at(self, x, y):
        key = (x, y)
        arr = self.slots.get(key)
        if arr is None:
            arr = np.full(len(self.kinds_at(x)), -1, dtype=np.int64)
            self.slots[key] = arr
        return arr

    def free_slot(self, x, y, cell_kind):
        col = self.device.column_at[x]
        arr = self.array_at(x, y)
        kinds = self.kinds_at(x)
        for i, sk in enumerate(kinds):
            if arr[i] < 0 and slot_accepts(cell_kind, sk, col.kind):
                return i
        return -1

    def count_free(self, x, y, cell_kind):
        col = self.device.column_at[x]
        arr = self.array_at(x, y)
        kinds = self.kinds_at(x)
        return sum(1 for i, sk in enumerate(kinds)
                   if arr[i] < 0 and slot_accepts(cell_kind, sk, col.kind))

    def place(self, inst, x, y, slot):
        arr = self.array_at(x, y)
        if arr[slot] >= 0:
            raise PackError(f"slot ({x},{y},{slot}) already bound to "
                            f"{arr[slot]}")
        arr[slot] = inst

    def remove(self, inst, x, y, slot):
        arr = self.array_at(x, y)
        if arr[slot] != inst:
            raise PackError(f"slot ({x},{y},{slot}) not bound to {inst}")
        arr[slot] = -1


def _bind(placement, occ, device, inst, x, y, slot):
    occ.place(inst, x, y, slot)
    placement.site[inst] = device.site_id(x, y)
    placement.slot[inst] = slot
    px, py = device.slot_position(x, y, slot)
    placement.x[inst] = px
    placement.y[inst] = py


def _column_free_spans(device, occ_intervals, col, height_needed):
    """Free y-spans of a column: blockage-free and not claimed by macros."""
    blocked = np.zeros(device.height, dtype=bool)
    for y in range(device.height):
        if device.is_blocked(col.x, y):
            blocked[y] = True
    for (y0, y1) in occ_intervals.get(col.x, []):
        blocked[y0:y1] = True
    spans = []
    y = 0
    while y < device.height:
        if not blocked[y]:
            y0 = y
            while y < device.height and not blocked[y]:
                y += 1
            if y - y0 >= height_needed:
                spans.append((y0, y))
        else:
            y += 1
    return spans


def bind_fixed(netlist, device, placement, occ):
    """Claim slots for pre-placed fixed instances at their coordinates."""
    for v in np.nonzero(netlist.fixed_mask)[0]:
        v = int(v)
        if placement.site[v] >= 0:
            continue
        x = int(placement.x[v])
        y = int(placement.y[v])
        col = device.column_at.get(x)
        kind = CELL_KINDS[netlist.kind_code[v]]
        if col is None:
            raise PackError(f"fixed instance {v} not on a column (x={x})")
        slot = occ.free_slot(x, y, kind)
        if slot < 0:
            raise PackError(f"fixed instance {v}: no free {kind} slot "
                            f"at ({x},{y})")
        _bind(placement, occ, device, v, x, y, slot)


def legalize_macros(netlist, device, placement, occ=None):
    """Snap each macro (and each standalone non-CLB cell) onto a legal
    column span, minimizing displacement greedily, tallest macros first.
    """
    place = placement.clone()
    occ = occ or SlotOccupancy(device)
    bind_fixed(netlist, device, place, occ)
    intervals = {}

    jobs = []
    for m, macro in enumerate(netlist.macros):
        members = np.nonzero(netlist.macro_of == m)[0]
        jobs.append(("macro", m, macro.height, members))
    for v in np.nonzero(~netlist.fixed_mask)[0]:
        v = int(v)
        kind = CELL_KINDS[netlist.kind_code[v]]
        if kind in CLB_CLASS or netlist.macro_of[v] >= 0:
            continue
        jobs.append(("cell", v, 1, np.array([v])))
    jobs.sort(key=lambda j: (-j[2], j[0], j[1]))

    for jtype, jid, height, members in jobs:
        if jtype == "macro":
            macro = netlist.macros[jid]
            col_kind = macro.column_kind
            by_dy = {}
            for v in members:
                dy = netlist.instances[int(v)].macro_offset[1]
                by_dy.setdefault(dy, []).append(int(v))
            member_dys = np.array(
                [netlist.instances[int(v)].macro_offset[1]
                 for v in members], dtype=np.float64)
            want_y = float(np.mean(place.y[members] - member_dys))
        else:
            kind = CELL_KINDS[netlist.kind_code[jid]]
            col_kind = {"DSP": "DSP", "BRAM": "BRAM", "IO": "IO"}[kind]
            by_dy = {0: [jid]}
            want_y = float(place.y[jid])
        want_x = float(np.mean(place.x[members]))
        best = None
        for col in device.columns:
            if col.kind != col_kind:
                continue
            spans = _column_free_spans(device, intervals, col, height)
            for (s0, s1) in spans:
                y0 = int(min(max(round(want_y - 0.5), s0), s1 - height))
                # per-site slot capacity check against fixed occupants
                ok = True
                for dy, mem in by_dy.items():
                    need = {}
                    for v in mem:
                        need[CELL_KINDS[netlist.kind_code[v]]] = \
                            need.get(CELL_KINDS[netlist.kind_code[v]], 0) + 1
                    for ck, cnt in need.items():
                        if occ.count_free(col.x, y0 + dy, ck) < cnt:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    continue
                disp = abs(col.x + 0.5 - want_x) + abs(y0 + 0.5 - want_y)
                if best is None or disp < best[0]:
                    best = (disp, col.x, y0)
        if best is None:
            label = (f"macro {netlist.macros[jid].id}" if jtype == "macro"
                     else f"instance {jid}")
            raise InfeasibleError(f"insufficient column capacity for {label} "
                            f"(kind {col_kind}, height {height})")
        _, cx, cy = best
        for dy, mem in sorted(by_dy.items()):
            for v in sorted(mem):
                kind = CELL_KINDS[netlist.kind_code[v]]
                slot = occ.free_slot(cx, cy + dy, kind)
                _bind(place, occ, device, v, cx, cy + dy, slot)
        intervals.setdefault(cx, []).append((cy, cy + height))
    return place, occ


# ---------------------------------------------------------------------------
# cluster scoring
# ---------------------------------------------------------------------------

def _net_pin_lists(netlist):
    lists = getattr(netlist, "_net_pin_lists", None)
    if lists is None:
        lists = [[int(i) for i in netlist.net_pin_indexes(e)]
                 for e in range(netlist.n_nets)]
        netlist._net_pin_lists = lists
    return lists


def _touched_nets(netlist, members):
    inst_nets = getattr(netlist, "_inst_nets", None)
    if inst_nets is None:
        inst_nets = [[] for _ in range(netlist.n_instances)]
        for e, pins in enumerate(_net_pin_lists(netlist)):
            for i in set(pins):
                inst_nets[i].append(e)
        netlist._inst_nets = inst_nets
    nets = set()
    for v in members:
        nets.update(inst_nets[int(v)])
    return sorted(nets)


def _ref_net_hpwl(netlist, ref_placement):
    from .model import hpwl_per_net

    cache = getattr(ref_placement, "_net_hpwl", None)
    if cache is None:
        cache = hpwl_per_net(netlist, ref_placement)
        ref_placement._net_hpwl = cache
    return cache


def pack_score(netlist, ref_placement, members, site_xy, theta):
    """Internal-pin reward minus theta times the wirelength disturbance
    of moving the members from their reference coordinates to the site."""
    mset = set(int(v) for v in members)
    sx, sy = site_xy
    xs = ref_placement.x
    ys = ref_placement.y
    before = _ref_net_hpwl(netlist, ref_placement)
    pin_lists = _net_pin_lists(netlist)
    score = 0.0
    d_hpwl = 0.0
    for e in _touched_nets(netlist, mset):
        internal = 0
        x0 = y0 = np.inf
        x1 = y1 = -np.inf
        pins = pin_lists[e]
        for i in pins:
            if i in mset:
                internal += 1
                px, py = sx, sy
            else:
                px, py = xs[i], ys[i]
            if px < x0:
                x0 = px
            if px > x1:
                x1 = px
            if py < y0:
                y0 = py
            if py > y1:
                y1 = py
        total = len(pins)
        if total > 1:
            score += (internal - 1) / (total - 1)
        d_hpwl += (x1 - x0) + (y1 - y0) - before[e]
    return score - theta * d_hpwl


def pack_score_pathlen(netlist, ref_placement, members, site_xy, info, cfg):
    """Score with a reward for members on long paths."""
    base = pack_score(netlist, ref_placement, members, site_xy, cfg.theta)
    if cfg.gamma == 0.0:
        return base
    bonus = sum(float(info.max_path_len[int(v)]) for v in members)
    return base + cfg.gamma * bonus


# ---------------------------------------------------------------------------
# site-centric packing rounds
# ---------------------------------------------------------------------------

def pack_sites(netlist, device, placement, cfg=None, info=None, occ=None,
               ref_placement=None):
    """Bind every CLB-class instance to a site slot in negotiation rounds.

    Each round, sites grow candidate clusters greedily by marginal score
    gain; every contested instance is awarded to the highest-gain site
    (ties to the lower site id). Raises after the round cap with
    nearest-site diagnostics if anything remains unpacked.
    """
    from .floorplan import PathLengthInfo

    cfg = cfg or PackConfig()
    place = placement.clone()
    if occ is None:
        occ = SlotOccupancy(device)
        bind_fixed(netlist, device, place, occ)
    if info is None:
        info = PathLengthInfo(
            dist_to_start=np.ones(netlist.n_instances, dtype=np.int64),
            dist_to_end=np.zeros(netlist.n_instances, dtype=np.int64),
            max_path_len=np.ones(netlist.n_instances, dtype=np.int64))
    ref = ref_placement or placement

    clb_codes = [CELL_KINDS.index(k) for k in CLB_CLASS]
    unassigned = set(
        int(v) for v in range(netlist.n_instances)
        if netlist.kind_code[v] in clb_codes and place.site[v] < 0
        and not netlist.fixed_mask[v])

    sites = []
    for col in device.columns:
        if col.kind not in ("CLB", "SLICEM"):
            continue
        for y in range(device.height):
            if not device.is_blocked(col.x, y):
                sites.append((col.x, y))
    sites.sort(key=lambda s: device.site_id(*s))
    members_of = {s: [] for s in sites}

    site_set = set(sites)
    for rnd in range(cfg.rounds):
        if not unassigned:
            break
        radius = cfg.radius + rnd
        # register instances to nearby sites instead of scanning per site
        near_site = {}
        for v in sorted(unassigned):
            vx, vy = place.x[v], place.y[v]
            x0 = max(0, int(vx - radius))
            x1 = min(device.width - 1, int(vx + radius))
            y0 = max(0, int(vy - radius))
            y1 = min(device.height - 1, int(vy + radius))
            for x in range(x0, x1 + 1):
                if device.column_at.get(x) is None:
                    continue
                for y in range(y0, y1 + 1):
                    s = (x, y)
                    if s in site_set and abs(vx - (x + 0.5)) <= radius \
                            and abs(vy - (y + 0.5)) <= radius:
                        near_site.setdefault(s, []).append(v)
        entries = []  # (gain, site_id, v, (x, y)) bids from cluster growth
        for (x, y) in sites:
            near = near_site.get((x, y))
            if not near:
                continue
            cx, cy = x + 0.5, y + 0.5
            cands = [v for v in near
                     if occ.free_slot(x, y, CELL_KINDS[netlist.kind_code[v]])
                     >= 0]
            if not cands:
                continue
            cands.sort(key=lambda v: (abs(place.x[v] - cx)
                                      + abs(place.y[v] - cy), v))
            cands = cands[:cfg.max_candidates]
            cluster = list(members_of[(x, y)])
            col_kind = device.column_at[x].kind
            arr = occ.array_at(x, y)
            kinds_here = device.slot_kinds_at(x)
            free = {}
            for i, sk in enumerate(kinds_here):
                if arr[i] < 0:
                    free[sk] = free.get(sk, 0) + 1
            cur = pack_score_pathlen(netlist, ref, cluster, (cx, cy),
                                     info, cfg) if cluster else 0.0
            while cands:
                best_v, best_gain = -1, -np.inf
                for v in cands:
                    kind = CELL_KINDS[netlist.kind_code[v]]
                    if free.get(slot_kind_for(kind, col_kind), 0) <= 0:
                        continue
                    trial = pack_score_pathlen(
                        netlist, ref, cluster + [v], (cx, cy), info, cfg)
                    gain = trial - cur
                    if gain > best_gain:
                        best_gain, best_v = gain, v
                if best_v < 0:
                    break
                kind = CELL_KINDS[netlist.kind_code[best_v]]
                free[slot_kind_for(kind, col_kind)] -= 1
                cluster.append(best_v)
                cands.remove(best_v)
                cur += best_gain
                entries.append((best_gain, device.site_id(x, y), best_v,
                                (x, y)))

        if not entries:
            continue
        # award by marginal gain, lazily revalidated against the permanent
        # clusters (growth gains assumed co-candidates that may have gone
        # elsewhere, or may have landed here and raised the gain)
        heap = [(-g, sid, v, xy) for g, sid, v, xy in entries]
        heapq.heapify(heap)
        revals = {}
        while heap:
            negg, sid, v, (x, y) = heapq.heappop(heap)
            if v not in unassigned:
                continue
            kind = CELL_KINDS[netlist.kind_code[v]]
            slot = occ.free_slot(x, y, kind)
            if slot < 0:
                continue
            cx, cy = x + 0.5, y + 0.5
            cluster = members_of[(x, y)]
            cur = pack_score_pathlen(netlist, ref, cluster, (cx, cy),
                                     info, cfg) if cluster else 0.0
            g_now = pack_score_pathlen(netlist, ref, cluster + [v],
                                       (cx, cy), info, cfg) - cur
            n_rev = revals.get((sid, v), 0)
            if abs(g_now - (-negg)) > 1e-12 and n_rev < 8:
                revals[(sid, v)] = n_rev + 1
                heapq.heappush(heap, (-g_now, sid, v, (x, y)))
                continue
            _bind(place, occ, device, v, x, y, slot)
            members_of[(x, y)].append(v)
            unassigned.discard(v)

    if unassigned:
        v = sorted(unassigned)[0]
        kind = CELL_KINDS[netlist.kind_code[v]]
        near = min(sites, key=lambda s: abs(s[0] + 0.5 - place.x[v])
                   + abs(s[1] + 0.5 - place.y[v]))
        raise PackError(
            f"unpackable instance {v} ({kind}) after {cfg.rounds} rounds; "
            f"nearest site ({near[0]},{near[1]}) free slots: "
            f"{occ.count_free(near[0], near[1], kind)}")
    return place, occ


# ---------------------------------------------------------------------------
# BEL slot assignment by enumeration
# ---------------------------------------------------------------------------

def _incident_edges(graph, members):
    mset = set(int(v) for v in members)
    out = []
    for v in mset:
        for p in range(graph.out_ptr[v], graph.out_ptr[v + 1]):
            out.append(int(graph.out_eid[p]))
        for p in range(graph.in_ptr[v], graph.in_ptr[v + 1]):
            out.append(int(graph.in_eid[p]))
    return sorted(set(out))


def _max_incident_delay(graph, params, placement, positions, edges):
    """Worst delay over the given edges with member positions overridden."""
    worst = 0.0
    for e in edges:
        u = int(graph.edge_src[e])
        w = int(graph.edge_dst[e])
        ux, uy = positions.get(u, (placement.x[u], placement.y[u]))
        wx, wy = positions.get(w, (placement.x[w], placement.y[w]))
        dx = np.array([abs(ux - wx)])
        dy = np.array([abs(uy - wy)])
        ded = np.array([params.cascade_vector()[graph.edge_cascade[e]]])
        pen = np.zeros(1)
        out = np.empty(1)
        accel.eval_delay(dx, dy, params.breakpoints, params.coeffs,
                         params.b0, params.b1, ded, pen, out)
        if out[0] > worst:
            worst = float(out[0])
    return worst


def assign_bels(netlist, device, graph, params, placement, occ, x, y,
                enum_limit=720):
    """Permute the members of one site over compatible slots to minimize
    the maximum delay of their incident timing edges.

    Groups members by required slot kind; each group is enumerated
    exhaustively up to enum_limit permutations (first minimum wins, i.e.
    lexicographic tie-break), larger groups fall back to a greedy order.
    """
    col = device.column_at[x]
    kinds = device.slot_kinds_at(x)
    arr = occ.array_at(x, y)
    members = [int(i) for i in arr if i >= 0]
    if not members:
        return {}
    groups = {}
    for v in members:
        ck = CELL_KINDS[netlist.kind_code[v]]
        slot_kind = "LUT" if (ck == "LUTRAM" and col.kind == "SLICEM") \
            else ck
        groups.setdefault(slot_kind, []).append(v)
    edges = _incident_edges(graph, members)
    assignment = {}
    positions = {}
    for slot_kind in sorted(groups):
        group = sorted(groups[slot_kind])
        slots = [i for i, sk in enumerate(kinds) if sk == slot_kind]
        cands = [s for s in slots]
        if len(group) > len(cands):
            raise PackError(f"no kind-compatible assignment at ({x},{y}) "
                            f"for {slot_kind}")
        n_perm = 1
        for i in range(len(cands), len(cands) - len(group), -1):
            n_perm *= i
        if n_perm <= enum_limit:
            best_perm, best_cost = None, np.inf
            for perm in itertools.permutations(cands, len(group)):
                trial = dict(positions)
                for v, s in zip(group, perm):
                    trial[v] = device.slot_position(x, y, s)
                cost = _max_incident_delay(graph, params, placement,
                                           trial, edges)
                if cost < best_cost - 1e-15:
                    best_cost = cost
                    best_perm = perm
            perm = best_perm
        else:
            perm = tuple(cands[:len(group)])
        for v, s in zip(group, perm):
            assignment[v] = s
            positions[v] = device.slot_position(x, y, s)
    # rebind
    for v in members:
        old = int(placement.slot[v])
        occ.remove(v, x, y, old)
    for v, s in assignment.items():
        _bind(placement, occ, device, v, x, y, s)
    return assignment


def assign_all_bels(netlist, device, graph, params, placement, occ,
                    enum_limit=720):
    for (x, y) in sorted(occ.slots):
        arr = occ.slots[(x, y)]
        if (arr >= 0).sum() > 1:
            assign_bels(netlist, device, graph, params, placement, occ,
                        x, y, enum_limit)
    return placement


# ---------------------------------------------------------------------------
# legality scan
# ---------------------------------------------------------------------------

def check_legal(netlist, device, placement):
    """Return a list of legality violations (empty means legal)."""
    issues = []
    seen = {}
    for v in range(netlist.n_instances):
        sid = int(placement.site[v])
        slot = int(placement.slot[v])
        if sid < 0 or slot < 0:
            issues.append(f"instance {v}: unbound")
            continue
        x, y = device.site_xy(sid)
        if not (0 <= x < device.width and 0 <= y < device.height):
            issues.append(f"instance {v}: site ({x},{y}) outside grid")
            continue
        col = device.column_at.get(x)
        if col is None:
            issues.append(f"instance {v}: x={x} has no column")
            continue
        if device.is_blocked(x, y):
            issues.append(f"instance {v}: site ({x},{y}) inside blockage")
        kinds = device.slot_kinds_at(x)
        if slot >= len(kinds):
            issues.append(f"instance {v}: slot {slot} out of range")
            continue
        ck = CELL_KINDS[netlist.kind_code[v]]
        if not slot_accepts(ck, kinds[slot], col.kind):
            issues.append(f"instance {v}: {ck} in {kinds[slot]} slot "
                          f"of {col.kind} column")
        key = (sid, slot)
        if key in seen:
            issues.append(f"slot {key} bound twice: {seen[key]} and {v}")
        seen[key] = v
    for m, macro in enumerate(netlist.macros):
        members = np.nonzero(netlist.macro_of == m)[0]
        if members.size == 0:
            continue
        base = None
        for v in members:
            v = int(v)
            if placement.site[v] < 0:
                continue
            x, y = device.site_xy(int(placement.site[v]))
            dy = netlist.instances[v].macro_offset[1]
            if base is None:
                base = (x, y - dy)
            elif (x, y - dy) != base:
                issues.append(f"macro {macro.id}: member {v} off its "
                              f"offset (anchor {base}, got ({x},{y - dy}))")
    return issues
