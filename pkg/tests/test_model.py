import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_netlist, make_device, place_at
from islandplace.bench import BenchSpec, gen_benchmark
from islandplace.model import (BLOCKAGE, DesignError, DeviceGrid, Instance,
                               Macro, Net, Netlist, canonical_dumps, hpwl,
                               load_design, region_of, save_design)


def test_minimal_design_roundtrip(tmp_path):
    nl = build_netlist(["LUT", "LUT"], [(0, [1])], starts=(0,), ends=(1,))
    dev = make_device()
    save_design(nl, dev, tmp_path / "n.json", tmp_path / "d.json")
    nl2, dev2 = load_design(tmp_path / "n.json", tmp_path / "d.json")
    assert nl2.n_instances == 2
    assert nl2.n_nets == 1
    assert dev2.width == dev.width


def test_dangling_net_reference():
    with pytest.raises(DesignError, match="dangling reference"):
        build_netlist(["LUT", "LUT"], [(0, [7])])


def test_dangling_macro_member():
    inst = [Instance(id=0, name="a", kind="CARRY", macro_id=0)]
    mac = [Macro(id=0, kind="CARRY_CHAIN", column_kind="CLB",
                 member_ids=[0, 5], height=1)]
    with pytest.raises(DesignError, match="dangling reference"):
        Netlist(inst, [], mac, 10.0)


def test_member_of_two_macros():
    inst = [Instance(id=0, name="a", kind="CARRY", macro_id=0)]
    mac = [Macro(id=0, kind="CARRY_CHAIN", column_kind="CLB",
                 member_ids=[0], height=1),
           Macro(id=1, kind="CARRY_CHAIN", column_kind="CLB",
                 member_ids=[0], height=1)]
    with pytest.raises(DesignError, match="two macros"):
        Netlist(inst, [], mac, 10.0)


def test_net_needs_one_driver():
    inst = [Instance(id=0, name="a", kind="LUT"),
            Instance(id=1, name="b", kind="LUT")]
    with pytest.raises(DesignError, match="exactly one driver"):
        Netlist(inst, [Net(id=0, weight=1.0,
                           pins=[(0, "sink"), (1, "sink")])], [], 10.0)


def test_fixed_instance_needs_coordinates():
    inst = [Instance(id=0, name="a", kind="IO", fixed=True)]
    with pytest.raises(DesignError, match="no coordinates"):
        Netlist(inst, [], [], 10.0)


def test_large_synthetic_roundtrip_bitwise(tmp_path):
    spec = BenchSpec(name="big", seed=7, width=64, height=48, n_ios=48,
                     n_chains=1450, depth_mean=6.0, n_carry=16, n_mux=16,
                     n_lutram=6, n_dsp=6, n_bram=3)
    netlist, device = gen_benchmark(spec)
    assert netlist.n_instances >= 10000
    raw = canonical_dumps(netlist.to_json())
    path = tmp_path / "n.json"
    path.write_text(raw)
    parsed = Netlist.from_json(json.loads(path.read_text()))
    assert canonical_dumps(parsed.to_json()) == raw


# ---------------------------------------------------------------------------
# hpwl
# ---------------------------------------------------------------------------

def test_hpwl_definition():
    nl = build_netlist(["LUT", "LUT"], [(0, [1])])
    place = place_at(nl, [(0, 0), (3, 4)])
    assert hpwl(nl, place) == pytest.approx(7.0)


def test_hpwl_coincident_zero():
    nl = build_netlist(["LUT", "LUT", "LUT"], [(0, [1, 2])])
    place = place_at(nl, [(2, 2), (2, 2), (2, 2)])
    assert hpwl(nl, place) == 0.0


def test_hpwl_matches_per_net_recomputation(rng):
    # 3 random nets over 5 instances against a direct per-net bbox sum
    coords = rng.uniform(0, 10, size=(5, 2))
    nets = [(0, [1, 2]), (2, [3]), (1, [0, 3, 4])]
    weights = [1.0, 2.5, 0.5]
    nl = build_netlist(["LUT"] * 5, nets, weights=weights)
    place = place_at(nl, coords)
    expect = 0.0
    for (drv, sinks), w in zip(nets, weights):
        pins = [drv] + sinks
        xs = coords[pins, 0]
        ys = coords[pins, 1]
        expect += w * ((xs.max() - xs.min()) + (ys.max() - ys.min()))
    assert hpwl(nl, place) == pytest.approx(expect, rel=1e-12)


@given(perm=st.permutations(list(range(4))))
@settings(max_examples=20, deadline=None)
def test_hpwl_pin_order_invariant(perm):
    coords = [(0.0, 0.0), (1.5, 2.0), (4.0, 1.0), (2.0, 5.0)]
    base = build_netlist(["LUT"] * 4, [(0, [1, 2, 3])])
    pins = [0, 1, 2, 3]
    permuted = [pins[p] for p in perm]
    shuffled = build_netlist(["LUT"] * 4,
                             [(permuted[0], permuted[1:])])
    place = place_at(base, coords)
    assert hpwl(base, place) == pytest.approx(hpwl(shuffled, place))


@given(dx=st.floats(-20, 20), dy=st.floats(-20, 20))
@settings(max_examples=25, deadline=None)
def test_hpwl_translation_invariant(dx, dy):
    nl = build_netlist(["LUT"] * 4, [(0, [1, 2]), (2, [3])])
    a = place_at(nl, [(0, 0), (3, 1), (5, 4), (2, 2)])
    b = place_at(nl, [(0 + dx, 0 + dy), (3 + dx, 1 + dy),
                      (5 + dx, 4 + dy), (2 + dx, 2 + dy)])
    assert hpwl(nl, a) == pytest.approx(hpwl(nl, b), rel=1e-9, abs=1e-9)
    assert hpwl(nl, a) >= 0.0


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

def test_region_left_of_blockage():
    dev = make_device(width=9, height=8, blockages=[(4, 0, 5, 8)])
    assert region_of(dev, 1.0, 3.0) == 0
    assert region_of(dev, 6.0, 3.0) != region_of(dev, 1.0, 3.0)


def test_region_inside_blockage_marker():
    dev = make_device(width=9, height=8, blockages=[(4, 0, 5, 8)])
    assert region_of(dev, 4.5, 3.0) == BLOCKAGE


def test_region_outside_grid_raises():
    dev = make_device()
    with pytest.raises(DesignError):
        region_of(dev, -1.0, 2.0)


def test_region_of_matches_containment_scan(rng):
    dev = make_device(width=12, height=10,
                      blockages=[(4, 0, 5, 10), (8, 2, 9, 7)])
    for _ in range(1000):
        x = rng.uniform(0, 12)
        y = rng.uniform(0, 10)
        got = region_of(dev, x, y)
        cx, cy = min(int(x), 11), min(int(y), 9)
        hit = BLOCKAGE
        for rid, r in enumerate(dev.regions):
            if r.contains(cx, cy):
                hit = rid
                break
        assert got == hit


def test_regions_and_blockages_tile_grid():
    dev = make_device(width=12, height=10,
                      blockages=[(4, 0, 5, 10), (8, 2, 9, 7)])
    covered = np.zeros((12, 10), dtype=int)
    for r in dev.regions:
        covered[r.x0:r.x1, r.y0:r.y1] += 1
    for b in dev.blockages:
        covered[b.x0:b.x1, b.y0:b.y1] += 1
    assert (covered == 1).all()
