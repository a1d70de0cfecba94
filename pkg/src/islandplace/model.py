"""Netlist/device/placement data model, JSON I/O and geometric primitives.

Coordinates are abstract site units: one site is one grid cell. A device
is a ``width x height`` grid whose sites live in vertical resource
columns; rectangles are half-open ``[x0, x1) x [y0, y1)``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import accel

CELL_KINDS = ("LUT", "FF", "CARRY", "MUX", "LUTRAM", "DSP", "BRAM", "IO")
KIND_CODE = {k: i for i, k in enumerate(CELL_KINDS)}

MACRO_KINDS = ("CARRY_CHAIN", "MUX_TREE", "LUTRAM_GROUP", "DSP_CASCADE",
               "BRAM_CASCADE")
COLUMN_KINDS = ("CLB", "SLICEM", "DSP", "BRAM", "IO")

# which column kinds can host a cell kind
CELL_COLUMNS = {
    "LUT": ("CLB", "SLICEM"),
    "FF": ("CLB", "SLICEM"),
    "CARRY": ("CLB", "SLICEM"),
    "MUX": ("CLB", "SLICEM"),
    "LUTRAM": ("SLICEM",),
    "DSP": ("DSP",),
    "BRAM": ("BRAM",),
    "IO": ("IO",),
}

BLOCKAGE = -1  # region marker returned for points inside a blockage


class DesignError(ValueError):
    """Raised for schema violations and inconsistent design inputs."""


class InfeasibleError(DesignError):
    """Demand exceeds device capacity; no placement can exist."""


def slot_accepts(cell_kind, slot_kind, column_kind):
    """True when a cell of cell_kind may occupy a slot of slot_kind."""
    if cell_kind == slot_kind:
        return column_kind in CELL_COLUMNS[cell_kind]
    # LUTRAM cells use LUT slots, but only in SLICEM columns
    if cell_kind == "LUTRAM" and slot_kind == "LUT":
        return column_kind == "SLICEM"
    return False


@dataclass
class Instance:
    id: int
    name: str
    kind: str
    macro_id: int | None = None
    macro_offset: tuple = (0, 0)
    fixed: bool = False
    is_timing_start: bool = False
    is_timing_end: bool = False
    x: float | None = None  # required for fixed instances
    y: float | None = None


@dataclass
class Net:
    id: int
    weight: float
    pins: list  # [(instance_id, role)] with role in {"driver", "sink"}


@dataclass
class Macro:
    id: int
    kind: str
    column_kind: str
    member_ids: list
    height: int


class Netlist:
    """Hypergraph of instances and nets with flat numpy views.

    Immutable after construction; shared freely between phases.
    """

    def __init__(self, instances, nets, macros, clock_period_ns):
        self.instances = instances
        self.nets = nets
        self.macros = macros
        self.clock_period_ns = float(clock_period_ns)
        self.id_to_index = {inst.id: i for i, inst in enumerate(instances)}
        if len(self.id_to_index) != len(instances):
            raise DesignError("duplicate instance id")
        self._validate()
        self._build_arrays()

    @property
    def n_instances(self):
        return len(self.instances)

    @property
    def n_nets(self):
        return len(self.nets)

    def _validate(self):
        macro_ids = {m.id for m in self.macros}
        if len(macro_ids) != len(self.macros):
            raise DesignError("duplicate macro id")
        member_owner = {}
        for m in self.macros:
            if m.kind not in MACRO_KINDS:
                raise DesignError(f"unknown macro kind {m.kind!r}")
            if m.column_kind not in COLUMN_KINDS:
                raise DesignError(f"unknown column kind {m.column_kind!r}")
            dys = []
            for mid in m.member_ids:
                if mid not in self.id_to_index:
                    raise DesignError(
                        f"dangling reference: macro {m.id} member {mid}")
                if mid in member_owner:
                    raise DesignError(
                        f"instance {mid} is a member of two macros "
                        f"({member_owner[mid]} and {m.id})")
                member_owner[mid] = m.id
                inst = self.instances[self.id_to_index[mid]]
                if inst.macro_id != m.id:
                    raise DesignError(
                        f"instance {mid} does not point back to macro {m.id}")
                dx, dy = inst.macro_offset
                if dx != 0:
                    raise DesignError(
                        f"macro {m.id}: member {mid} has nonzero column "
                        f"offset; members share one column")
                dys.append(dy)
            span = set(dys)
            if span != set(range(m.height)):
                raise DesignError(
                    f"macro {m.id}: member offsets {sorted(span)} do not "
                    f"cover 0..{m.height - 1}")
        for inst in self.instances:
            if inst.kind not in CELL_KINDS:
                raise DesignError(f"unknown cell kind {inst.kind!r}")
            if inst.fixed and (inst.x is None or inst.y is None):
                raise DesignError(
                    f"fixed instance {inst.id} has no coordinates")
            if inst.macro_id is None:
                if tuple(inst.macro_offset) != (0, 0):
                    raise DesignError(
                        f"instance {inst.id}: offset without a macro")
            elif inst.macro_id not in macro_ids:
                raise DesignError(
                    f"dangling reference: instance {inst.id} -> macro "
                    f"{inst.macro_id}")
        net_ids = set()
        for net in self.nets:
            if net.id in net_ids:
                raise DesignError("duplicate net id")
            net_ids.add(net.id)
            if net.weight <= 0:
                raise DesignError(f"net {net.id}: non-positive weight")
            drivers = [p for p in net.pins if p[1] == "driver"]
            sinks = [p for p in net.pins if p[1] == "sink"]
            if len(drivers) != 1:
                raise DesignError(f"net {net.id}: needs exactly one driver")
            if not sinks:
                raise DesignError(f"net {net.id}: needs at least one sink")
            for iid, role in net.pins:
                if role not in ("driver", "sink"):
                    raise DesignError(f"net {net.id}: bad pin role {role!r}")
                if iid not in self.id_to_index:
                    raise DesignError(
                        f"dangling reference: net {net.id} pin -> {iid}")

    def _build_arrays(self):
        n = self.n_instances
        self.kind_code = np.array(
            [KIND_CODE[i.kind] for i in self.instances], dtype=np.int8)
        self.fixed_mask = np.array(
            [i.fixed for i in self.instances], dtype=bool)
        self.tstart = np.array(
            [i.is_timing_start for i in self.instances], dtype=bool)
        self.tend = np.array(
            [i.is_timing_end for i in self.instances], dtype=bool)
        self.macro_of = np.full(n, -1, dtype=np.int32)
        macro_index = {m.id: k for k, m in enumerate(self.macros)}
        for inst in self.instances:
            if inst.macro_id is not None:
                self.macro_of[self.id_to_index[inst.id]] = \
                    macro_index[inst.macro_id]
        ptr = [0]
        pin_inst = []
        pin_is_sink = []
        for net in self.nets:
            for iid, role in net.pins:
                pin_inst.append(self.id_to_index[iid])
                pin_is_sink.append(role == "sink")
            ptr.append(len(pin_inst))
        self.net_ptr = np.array(ptr, dtype=np.int64)
        self.pin_inst = np.array(pin_inst, dtype=np.int64)
        self.pin_is_sink = np.array(pin_is_sink, dtype=bool)
        self.net_weight = np.array(
            [net.weight for net in self.nets], dtype=np.float64)
        self.pin_count = np.bincount(
            self.pin_inst, minlength=n).astype(np.int64)

    def net_pin_indexes(self, net_idx):
        lo, hi = self.net_ptr[net_idx], self.net_ptr[net_idx + 1]
        return self.pin_inst[lo:hi]

    def driver_of(self, net_idx):
        lo, hi = self.net_ptr[net_idx], self.net_ptr[net_idx + 1]
        for p in range(lo, hi):
            if not self.pin_is_sink[p]:
                return int(self.pin_inst[p])
        raise DesignError(f"net {net_idx} has no driver pin")

    def to_json(self):
        return {
            "clock_period_ns": self.clock_period_ns,
            "instances": [
                {
                    "id": i.id,
                    "name": i.name,
                    "kind": i.kind,
                    "macro": i.macro_id,
                    "offset": list(i.macro_offset),
                    "fixed": i.fixed,
                    "tstart": i.is_timing_start,
                    "tend": i.is_timing_end,
                    **({"x": i.x, "y": i.y} if i.fixed else {}),
                }
                for i in self.instances
            ],
            "nets": [
                {
                    "id": n.id,
                    "weight": n.weight,
                    "pins": [{"inst": iid, "role": role}
                             for iid, role in n.pins],
                }
                for n in self.nets
            ],
            "macros": [
                {
                    "id": m.id,
                    "kind": m.kind,
                    "column": m.column_kind,
                    "members": list(m.member_ids),
                    "height": m.height,
                }
                for m in self.macros
            ],
        }

    @classmethod
    def from_json(cls, obj):
        try:
            instances = [
                Instance(
                    id=int(it["id"]),
                    name=str(it["name"]),
                    kind=it["kind"],
                    macro_id=it["macro"],
                    macro_offset=tuple(it["offset"]),
                    fixed=bool(it["fixed"]),
                    is_timing_start=bool(it["tstart"]),
                    is_timing_end=bool(it["tend"]),
                    x=it.get("x"),
                    y=it.get("y"),
                )
                for it in obj["instances"]
            ]
            nets = [
                Net(
                    id=int(nt["id"]),
                    weight=float(nt["weight"]),
                    pins=[(p["inst"], p["role"]) for p in nt["pins"]],
                )
                for nt in obj["nets"]
            ]
            macros = [
                Macro(
                    id=int(mc["id"]),
                    kind=mc["kind"],
                    column_kind=mc["column"],
                    member_ids=list(mc["members"]),
                    height=int(mc["height"]),
                )
                for mc in obj["macros"]
            ]
            clock = obj["clock_period_ns"]
        except (KeyError, TypeError) as exc:
            raise DesignError(f"netlist schema violation: {exc}") from exc
        return cls(instances, nets, macros, clock)


@dataclass
class Column:
    x: int
    kind: str
    slots: dict  # slot kind -> count per site

    def slot_kinds(self):
        out = []
        for kind in CELL_KINDS:
            out.extend([kind] * int(self.slots.get(kind, 0)))
        return tuple(out)


@dataclass
class Rect:
    x0: int
    y0: int
    x1: int
    y1: int

    def contains(self, x, y):
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1


class DeviceGrid:
    """Columnar site grid with placement blockages and derived free regions."""

    def __init__(self, width, height, columns, blockages):
        self.width = int(width)
        self.height = int(height)
        self.columns = columns
        self.blockages = blockages
        if len({c.x for c in columns}) != len(columns):
            raise DesignError("two columns share an x coordinate")
        for c in columns:
            if not 0 <= c.x < self.width:
                raise DesignError(f"column x={c.x} outside grid")
            if c.kind not in COLUMN_KINDS:
                raise DesignError(f"unknown column kind {c.kind!r}")
        self.column_at = {c.x: c for c in columns}
        self._build_regions()
        self._slot_kind_cache = {c.x: c.slot_kinds() for c in columns}

    def _build_regions(self):
        blocked = np.zeros((self.width, self.height), dtype=bool)
        for r in self.blockages:
            x0, y0, x1, y1 = r.x0, r.y0, r.x1, r.y1
            if not (0 <= x0 < x1 <= self.width and
                    0 <= y0 < y1 <= self.height):
                raise DesignError(f"blockage {r} outside grid")
            if blocked[x0:x1, y0:y1].any():
                raise DesignError("overlapping blockages")
            blocked[x0:x1, y0:y1] = True
        # maximal columnar rectangles: merge adjacent x-strips whose free
        # y-interval decomposition is identical
        strips = []
        for x in range(self.width):
            free = ~blocked[x]
            ivs = []
            y = 0
            while y < self.height:
                if free[y]:
                    y0 = y
                    while y < self.height and free[y]:
                        y += 1
                    ivs.append((y0, y))
                else:
                    y += 1
            strips.append(tuple(ivs))
        self.regions = []
        grid = np.full((self.width, self.height), BLOCKAGE, dtype=np.int32)
        x = 0
        while x < self.width:
            x1 = x + 1
            while x1 < self.width and strips[x1] == strips[x]:
                x1 += 1
            for (y0, y1) in strips[x]:
                rid = len(self.regions)
                self.regions.append(Rect(x, y0, x1, y1))
                grid[x:x1, y0:y1] = rid
            x = x1
        self.region_grid = grid

    @property
    def n_regions(self):
        return len(self.regions)

    def site_id(self, x, y):
        return int(x) * self.height + int(y)

    def site_xy(self, site):
        return divmod(int(site), self.height)

    def slot_kinds_at(self, x):
        return self._slot_kind_cache[x]

    def site_center(self, x, y):
        return x + 0.5, y + 0.5

    def slot_position(self, x, y, slot):
        """Sub-site coordinate of a BEL slot: slots stack vertically."""
        n = len(self._slot_kind_cache[x])
        return x + 0.5, y + (slot + 0.5) / n

    def columns_for(self, cell_kind):
        ok = CELL_COLUMNS[cell_kind]
        return [c for c in self.columns if c.kind in ok]

    def is_blocked(self, x, y):
        return self.region_grid[int(x), int(y)] == BLOCKAGE

    def to_json(self):
        return {
            "width": self.width,
            "height": self.height,
            "columns": [
                {"x": c.x, "kind": c.kind, "slots": dict(c.slots)}
                for c in self.columns
            ],
            "blockages": [[r.x0, r.y0, r.x1, r.y1] for r in self.blockages],
        }

    @classmethod
    def from_json(cls, obj):
        try:
            columns = []
            for c in obj["columns"]:
                slots = c["slots"]
                if isinstance(slots, int):
                    if c["kind"] not in ("DSP", "BRAM", "IO"):
                        raise DesignError(
                            f"column kind {c['kind']} needs a slot map")
                    slots = {c["kind"]: slots}
                columns.append(Column(int(c["x"]), c["kind"], dict(slots)))
            blockages = [Rect(*map(int, b)) for b in obj["blockages"]]
            return cls(obj["width"], obj["height"], columns, blockages)
        except (KeyError, TypeError) as exc:
            raise DesignError(f"device schema violation: {exc}") from exc


class PlacementState:
    """Continuous coordinates plus optional discrete site/slot bindings."""

    def __init__(self, n):
        self.x = np.zeros(n, dtype=np.float64)
        self.y = np.zeros(n, dtype=np.float64)
        self.site = np.full(n, -1, dtype=np.int64)
        self.slot = np.full(n, -1, dtype=np.int32)

    @property
    def n(self):
        return self.x.shape[0]

    def clone(self):
        out = PlacementState(self.n)
        out.x[:] = self.x
        out.y[:] = self.y
        out.site[:] = self.site
        out.slot[:] = self.slot
        return out

    def copy_from(self, other):
        self.x[:] = other.x
        self.y[:] = other.y
        self.site[:] = other.site
        self.slot[:] = other.slot

    def to_json(self, netlist, metrics=None):
        out = {}
        for i, inst in enumerate(netlist.instances):
            out[str(inst.id)] = {
                "x": float(self.x[i]),
                "y": float(self.y[i]),
                "site": int(self.site[i]),
                "slot": int(self.slot[i]),
            }
        doc = {"placement": out}
        if metrics is not None:
            doc["metrics"] = metrics
        return doc


# ---------------------------------------------------------------------------
# geometry / objective
# ---------------------------------------------------------------------------

def hpwl(netlist, placement):
    """Weighted half-perimeter wirelength over all nets.

    Nets with fewer than two pins contribute zero.
    """
    per_net = np.zeros(netlist.n_nets, dtype=np.float64)
    if netlist.n_nets:
        accel.hpwl_per_net(netlist.net_ptr, netlist.pin_inst,
                           placement.x, placement.y, per_net)
    return float(np.dot(per_net, netlist.net_weight))


def hpwl_per_net(netlist, placement):
    per_net = np.zeros(netlist.n_nets, dtype=np.float64)
    if netlist.n_nets:
        accel.hpwl_per_net(netlist.net_ptr, netlist.pin_inst,
                           placement.x, placement.y, per_net)
    return per_net


def region_of(device, x, y):
    """Region id containing (x, y), or BLOCKAGE inside a blockage."""
    if not (0 <= x <= device.width and 0 <= y <= device.height):
        raise DesignError(f"point ({x}, {y}) outside grid")
    cx = min(int(x), device.width - 1)
    cy = min(int(y), device.height - 1)
    return int(device.region_grid[cx, cy])


def regions_of(device, xs, ys):
    """Vectorized region lookup; coordinates clamped onto the grid."""
    cx = np.clip(xs.astype(np.int64), 0, device.width - 1)
    cy = np.clip(ys.astype(np.int64), 0, device.height - 1)
    return device.region_grid[cx, cy]


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def canonical_dumps(obj):
    """Deterministic JSON encoding used by every writer in the package."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_design(netlist_file, device_file):
    with open(netlist_file) as f:
        net_obj = json.load(f)
    with open(device_file) as f:
        dev_obj = json.load(f)
    netlist = Netlist.from_json(net_obj)
    device = DeviceGrid.from_json(dev_obj)
    return netlist, device


def save_design(netlist, device, netlist_file, device_file):
    with open(netlist_file, "w") as f:
        f.write(canonical_dumps(netlist.to_json()))
    with open(device_file, "w") as f:
        f.write(canonical_dumps(device.to_json()))
