import numpy as np
import pytest

from islandplace.model import (DeviceGrid, Instance, Macro, Net, Netlist,
                               PlacementState)


def make_device(width=8, height=8, mid_kinds=("CLB",), blockages=(),
                clb_slots=None, io_slots=8):
    """Small columnar device: IO columns on the edges, a repeating kind
    pattern in between."""
    slots = clb_slots or {"LUT": 8, "FF": 8, "CARRY": 1, "MUX": 2}
    columns = []
    for x in range(width):
        if x in (0, width - 1):
            columns.append({"x": x, "kind": "IO", "slots": {"IO": io_slots}})
        else:
            kind = mid_kinds[(x - 1) % len(mid_kinds)]
            if kind in ("CLB", "SLICEM"):
                columns.append({"x": x, "kind": kind, "slots": dict(slots)})
            elif kind == "DSP":
                columns.append({"x": x, "kind": kind, "slots": {"DSP": 2}})
            elif kind == "BRAM":
                columns.append({"x": x, "kind": kind, "slots": {"BRAM": 2}})
            else:
                raise ValueError(kind)
    return DeviceGrid.from_json({
        "width": width, "height": height, "columns": columns,
        "blockages": [list(b) for b in blockages]})


def build_netlist(kinds, nets, macros=(), clock=10.0, starts=(), ends=(),
                  fixed=None, weights=None):
    """kinds: list of cell kinds; nets: list of (driver, sinks) tuples."""
    fixed = fixed or {}
    instances = []
    for i, kind in enumerate(kinds):
        fx = fixed.get(i)
        instances.append(Instance(
            id=i, name=f"i{i}", kind=kind,
            fixed=fx is not None,
            is_timing_start=i in starts, is_timing_end=i in ends,
            x=fx[0] if fx else None, y=fx[1] if fx else None))
    net_objs = []
    for e, (drv, sinks) in enumerate(nets):
        w = weights[e] if weights else 1.0
        net_objs.append(Net(id=e, weight=w,
                            pins=[(drv, "driver")]
                            + [(s, "sink") for s in sinks]))
    return Netlist(instances, net_objs, list(macros), clock)


def place_at(netlist, coords):
    place = PlacementState(netlist.n_instances)
    for i, (x, y) in enumerate(coords):
        place.x[i] = x
        place.y[i] = y
    return place


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
