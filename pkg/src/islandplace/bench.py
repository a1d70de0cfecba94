"""Deterministic synthetic benchmark generator.

Builds FF-bounded pipeline netlists with configurable depth profiles,
macro content (carry chains with route-thru placeholders, mux trees,
LUTRAM groups, DSP/BRAM cascades) and columnar devices with optional
placement blockages. The same seed always yields byte-identical files.
"""

import argparse
import math
from dataclasses import dataclass, replace

import numpy as np

from .model import (DeviceGrid, Instance, InfeasibleError, Macro, Net,
                    Netlist, canonical_dumps)

CLB_SLOTS = {"LUT": 8, "FF": 8, "CARRY": 1, "MUX": 2}
SLICEM_SLOTS = {"LUT": 8, "FF": 8, "CARRY": 1, "MUX": 2}
DSP_SLOTS = {"DSP": 2}
BRAM_SLOTS = {"BRAM": 2}
IO_SLOTS = {"IO": 8}


@dataclass
class BenchSpec:
    name: str = "default"
    seed: int = 0
    width: int = 26
    height: int = 24
    blockage: str = "none"       # "none" | "central"
    n_ios: int = 16
    n_chains: int = 40
    depth_mean: float = 5.0
    n_long_chains: int = 0
    long_depth: int = 24
    extra_net_frac: float = 0.3
    n_carry: int = 3
    carry_height: int = 3
    n_mux: int = 3
    n_lutram: int = 2
    lutram_width: int = 4
    n_dsp: int = 2
    dsp_height: int = 2
    n_bram: int = 1
    bram_height: int = 2
    macro_ratio: float = None    # target fraction of instances in macros
    clock_period_ns: float = 6.0


def preset(name, seed=0):
    """Named generator presets bundled with the package."""
    if name == "default":
        return BenchSpec(name=name, seed=seed)
    if name == "blockage_stress":
        # central full-height blockage; long high-fanout chains that have
        # to span both halves of the device
        return BenchSpec(
            name=name, seed=seed, width=30, height=24, blockage="central",
            n_ios=16, n_chains=36, depth_mean=5.0, n_long_chains=6,
            long_depth=18, extra_net_frac=0.45, n_carry=4, carry_height=3,
            n_mux=2, n_lutram=1, n_dsp=2, n_bram=1,
            clock_period_ns=12.0)
    if name == "wns_skew":
        # many shallow paths with small violations plus a handful of very
        # deep ones that dominate the worst slack
        return BenchSpec(
            name=name, seed=seed, width=26, height=24, n_ios=16,
            n_chains=40, depth_mean=7.0, n_long_chains=5, long_depth=24,
            extra_net_frac=0.25, n_carry=2, carry_height=3, n_mux=2,
            n_lutram=1, n_dsp=1, n_bram=1, clock_period_ns=8.0)
    if name == "large":
        return BenchSpec(
            name=name, seed=seed, width=56, height=44, n_ios=40,
            n_chains=560, depth_mean=6.0, n_long_chains=12, long_depth=24,
            extra_net_frac=0.35, n_carry=12, carry_height=4, n_mux=12,
            n_lutram=5, n_dsp=5, n_bram=3, clock_period_ns=7.0)
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("default", "blockage_stress", "wns_skew", "large")


def _make_device(spec):
    columns = []
    pattern = ["CLB", "CLB", "SLICEM", "CLB", "DSP", "CLB", "SLICEM",
               "CLB", "BRAM"]
    for x in range(spec.width):
        if x == 0 or x == spec.width - 1:
            columns.append({"x": x, "kind": "IO", "slots": dict(IO_SLOTS)})
            continue
        kind = pattern[(x - 1) % len(pattern)]
        slots = {"CLB": CLB_SLOTS, "SLICEM": SLICEM_SLOTS,
                 "DSP": DSP_SLOTS, "BRAM": BRAM_SLOTS}[kind]
        columns.append({"x": x, "kind": kind, "slots": dict(slots)})
    blockages = []
    if spec.blockage == "central":
        cx = spec.width // 2
        blockages.append([cx - 1, 0, cx + 1, spec.height])
    elif spec.blockage != "none":
        raise ValueError(f"unknown blockage layout {spec.blockage!r}")
    return {"width": spec.width, "height": spec.height,
            "columns": columns, "blockages": blockages}


class _Builder:
    def __init__(self, spec, device):
        self.spec = spec
        self.device = device
        self.rng = np.random.default_rng(spec.seed)
        self.instances = []
        self.nets = []
        self.macros = []
        self.rank = []  # combinational order, guards against cycles

    def add_inst(self, kind, name, rank, macro_id=None, offset=(0, 0),
                 fixed=False, tstart=False, tend=False, x=None, y=None):
        iid = len(self.instances)
        self.instances.append(Instance(
            id=iid, name=name, kind=kind, macro_id=macro_id,
            macro_offset=offset, fixed=fixed, is_timing_start=tstart,
            is_timing_end=tend, x=x, y=y))
        self.rank.append(rank)
        return iid

    def add_net(self, driver, sinks, weight=1.0):
        nid = len(self.nets)
        pins = [(driver, "driver")] + [(s, "sink") for s in sinks]
        self.nets.append(Net(id=nid, weight=weight, pins=pins))
        return nid

    def add_macro(self, kind, column_kind, members, height):
        mid = len(self.macros)
        self.macros.append(Macro(id=mid, kind=kind, column_kind=column_kind,
                                 member_ids=members, height=height))
        return mid


def _build_netlist(spec, device_obj):
    b = _Builder(spec, device_obj)
    rng = b.rng
    height = spec.height

    # fixed IOs on the edge columns
    n_in = spec.n_ios // 2
    n_out = spec.n_ios - n_in
    inputs, outputs = [], []
    for i in range(n_in):
        y = (i * max(1, height // max(1, n_in))) % height
        inputs.append(b.add_inst(
            "IO", f"in{i}", 0, fixed=True, tstart=True,
            x=0.5, y=y + 0.5))
    for i in range(n_out):
        y = (i * max(1, height // max(1, n_out))) % height
        outputs.append(b.add_inst(
            "IO", f"out{i}", 1 << 30, fixed=True, tend=True,
            x=spec.width - 0.5, y=y + 0.5))

    ffs = []

    def new_ff(rank):
        f = b.add_inst("FF", f"ff{len(ffs)}", rank, tstart=True, tend=True)
        ffs.append(f)
        return f

    def chain(depth, io_ok=True):
        if io_ok and (rng.random() < 0.3 or not ffs):
            src = inputs[int(rng.integers(len(inputs)))]
        else:
            src = ffs[int(rng.integers(len(ffs)))] if ffs else \
                inputs[int(rng.integers(len(inputs)))]
        prev = src
        rank = b.rank[src] + 1
        for _ in range(depth):
            lut = b.add_inst("LUT", f"lut{len(b.instances)}", rank)
            b.add_net(prev, [lut])
            prev = lut
            rank += 1
        if io_ok and rng.random() < 0.25:
            dst = outputs[int(rng.integers(len(outputs)))]
        else:
            dst = new_ff(rank)
        b.add_net(prev, [dst])

    new_ff(1)  # seed register pool so long chains never tie to the pads
    for _ in range(spec.n_chains):
        depth = max(1, int(rng.poisson(spec.depth_mean)))
        chain(depth)
    # long chains run register-to-register: both ends stay movable so
    # later phases can consolidate them into one placement region
    for _ in range(spec.n_long_chains):
        chain(spec.long_depth, io_ok=False)

    def add_carry(height_sites):
        members = []
        mid = len(b.macros)
        core = []
        base_rank = 1 << 20
        for dy in range(height_sites):
            c = b.add_inst("CARRY", f"carry{mid}_{dy}", base_rank + dy,
                           macro_id=mid, offset=(0, dy))
            members.append(c)
            core.append(c)
            # route-thru placeholders block LUT/FF slots in the same site
            for j in range(2):
                members.append(b.add_inst(
                    "LUT", f"carry{mid}_{dy}_rt{j}", 0,
                    macro_id=mid, offset=(0, dy)))
            members.append(b.add_inst(
                "FF", f"carry{mid}_{dy}_rtf", 0,
                macro_id=mid, offset=(0, dy)))
        for k in range(len(core) - 1):
            b.add_net(core[k], [core[k + 1]])  # cascade edges
        # high fan-in/fan-out to the logic fabric
        for c in core:
            drv = ffs[int(rng.integers(len(ffs)))] if ffs else inputs[0]
            b.add_net(drv, [c])
            caps = [new_ff(b.rank[c] + 1)
                    for _ in range(int(rng.integers(1, 3)))]
            b.add_net(c, caps)
        b.add_macro("CARRY_CHAIN", "CLB", members, height_sites)

    def add_mux():
        mid = len(b.macros)
        l0 = b.add_inst("LUT", f"mux{mid}_l0", 5, macro_id=mid,
                        offset=(0, 0))
        l1 = b.add_inst("LUT", f"mux{mid}_l1", 5, macro_id=mid,
                        offset=(0, 0))
        mx = b.add_inst("MUX", f"mux{mid}_m", 6, macro_id=mid,
                        offset=(0, 0))
        b.add_net(l0, [mx])
        b.add_net(l1, [mx])
        drv = ffs[int(rng.integers(len(ffs)))] if ffs else inputs[0]
        b.add_net(drv, [l0, l1])
        b.add_net(mx, [new_ff(7)])
        b.add_macro("MUX_TREE", "CLB", [l0, l1, mx], 1)

    def add_lutram(width_cells):
        mid = len(b.macros)
        cells = [b.add_inst("LUTRAM", f"lr{mid}_{j}", 5, macro_id=mid,
                            offset=(0, 0)) for j in range(width_cells)]
        drv = ffs[int(rng.integers(len(ffs)))] if ffs else inputs[0]
        b.add_net(drv, cells)  # shared address/data net
        b.add_net(cells[0], [new_ff(6)])
        b.add_macro("LUTRAM_GROUP", "SLICEM", cells, 1)

    def add_cascade(kind, cell_kind, column, height_sites):
        mid = len(b.macros)
        cells = [b.add_inst(cell_kind, f"{cell_kind.lower()}{mid}_{j}",
                            (1 << 20) + j, macro_id=mid, offset=(0, j))
                 for j in range(height_sites)]
        for k in range(height_sites - 1):
            b.add_net(cells[k], [cells[k + 1]])
        drv = ffs[int(rng.integers(len(ffs)))] if ffs else inputs[0]
        b.add_net(drv, [cells[0]])
        b.add_net(cells[-1], [new_ff(1 << 21)])
        b.add_macro(kind, column, cells, height_sites)

    for _ in range(spec.n_carry):
        add_carry(spec.carry_height)
    for _ in range(spec.n_mux):
        add_mux()
    for _ in range(spec.n_lutram):
        add_lutram(spec.lutram_width)
    for _ in range(spec.n_dsp):
        add_cascade("DSP_CASCADE", "DSP", "DSP", spec.dsp_height)
    for _ in range(spec.n_bram):
        add_cascade("BRAM_CASCADE", "BRAM", "BRAM", spec.bram_height)

    if spec.macro_ratio is not None:
        def ratio():
            in_macro = sum(1 for i in b.instances if i.macro_id is not None)
            return in_macro / max(1, len(b.instances))
        while ratio() < spec.macro_ratio - 0.02:
            add_carry(spec.carry_height)

    # extra random fan-out nets; rank ordering keeps the graph acyclic
    luts = sorted((i.id for i in b.instances
                   if i.kind == "LUT" and i.macro_id is None),
                  key=lambda v: (b.rank[v], v))
    lut_ranks = np.array([b.rank[v] for v in luts])
    n_extra = int(spec.extra_net_frac * len(luts))
    for _ in range(n_extra):
        di = int(rng.integers(len(luts)))
        drv = luts[di]
        lo = int(np.searchsorted(lut_ranks, b.rank[drv], side="right"))
        sinks = []
        n_sk = int(rng.integers(1, 4))
        if lo < len(luts):
            picks = rng.choice(len(luts) - lo,
                               size=min(n_sk, len(luts) - lo),
                               replace=False)
            sinks = [luts[lo + int(p)] for p in picks]
        if not sinks:
            sinks = [ffs[int(rng.integers(len(ffs)))]]
        b.add_net(drv, sorted(set(sinks)))

    return Netlist(b.instances, b.nets, b.macros, spec.clock_period_ns)


def _check_feasible(netlist, device):
    from .model import CELL_KINDS, slot_accepts

    demand = {k: 0 for k in CELL_KINDS}
    for inst in netlist.instances:
        demand[inst.kind] += 1
    cap = {k: 0 for k in CELL_KINDS}
    for col in device.columns:
        free = sum(1 for y in range(device.height)
                   if not device.is_blocked(col.x, y))
        for slot_kind, cnt in col.slots.items():
            for ck in CELL_KINDS:
                if slot_accepts(ck, slot_kind, col.kind):
                    cap[ck] += cnt * free
    for k in CELL_KINDS:
        if demand[k] > cap[k]:
            raise InfeasibleError(
                f"infeasible spec: {k} demand {demand[k]} exceeds "
                f"capacity {cap[k]}")


def gen_benchmark(spec):
    """Generate (netlist, device) for a spec; raises on infeasible specs."""
    if spec.macro_ratio == 0.0:
        spec = replace(spec, n_carry=0, n_mux=0, n_lutram=0, n_dsp=0,
                       n_bram=0, macro_ratio=None)
    dev_obj = _make_device(spec)
    device = DeviceGrid.from_json(dev_obj)
    netlist = _build_netlist(spec, dev_obj)
    _check_feasible(netlist, device)
    return netlist, device


def write_benchmark(spec, netlist_path, device_path):
    netlist, device = gen_benchmark(spec)
    with open(netlist_path, "w") as f:
        f.write(canonical_dumps(netlist.to_json()))
    with open(device_path, "w") as f:
        f.write(canonical_dumps(device.to_json()))
    return netlist, device


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="generate a synthetic placement benchmark")
    ap.add_argument("--preset", default="default", choices=PRESETS)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-netlist", default="netlist.json")
    ap.add_argument("--out-device", default="device.json")
    args = ap.parse_args(argv)
    spec = preset(args.preset, args.seed)
    netlist, device = write_benchmark(spec, args.out_netlist,
                                      args.out_device)
    print(f"{args.preset}: {netlist.n_instances} instances, "
          f"{netlist.n_nets} nets, {len(netlist.macros)} macros, "
          f"{device.width}x{device.height} device")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
