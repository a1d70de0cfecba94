"""Pipeline driver: configuration, phase orchestration and reporting.

Runs floorplanning, timing-driven global placement, packing and detailed
placement in order, honoring phase toggles and the cfg1..cfg6 ablation
switches. Metrics in reports are always recomputed by a full timing pass
and a fresh wirelength sum at phase boundaries.
"""

import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import accel
from .dplace import DpSchedule, detailed_place, occupancy_from_placement
from .floorplan import (SaConfig, cluster_by_fanout, compute_path_lengths,
                        partition, sa_floorplan)
from .gplace import GpConfig, global_place
from .model import (DesignError, PlacementState, canonical_dumps, hpwl,
                    load_design)
from .pack import (PackConfig, assign_all_bels, check_legal, legalize_macros,
                   pack_sites)
from .render import render_svg
from .timing import (DelayModelParams, TimingConfig, build_timing_graph,
                     run_sta)


class PhaseError(RuntimeError):
    def __init__(self, phase, cause):
        self.phase = phase
        self.cause = cause
        super().__init__(f"phase {phase!r} failed: {cause}")


@dataclass
class RunConfig:
    design: str = ""
    device: str = ""
    seed: int = 0
    threads: int = 1
    out_dir: str = "out"
    svg: bool = False
    trace: bool = False
    # phase toggles
    run_floorplan: bool = True
    run_global: bool = True
    run_pack: bool = True
    run_detailed: bool = True
    # ablation switches (cfg0 means all of these stay False)
    cfg1: bool = False  # no path-length clustering before partitioning
    cfg2: bool = False  # no blockage-aware anchors/stretching
    cfg3: bool = False  # fixed criticality exponent
    cfg4: bool = False  # no path-length packing term
    cfg5: bool = False  # no sector windows
    cfg6: bool = False  # no sector windows, enlarged square window
    # floorplan
    top_fraction: float = 0.05
    k_partitions: int = 32
    fm_starts: int = 16
    sa_bin_rows: int = 4
    sa_t_init: float = 0.0  # 0 -> calibrated from sampled move deltas
    sa_cooling: float = 0.97
    sa_moves: int = 64
    # timing
    alpha: float = 0.9
    beta_crit: float = 3.0
    n_thr: float = 30.0
    delay_model: str = ""  # optional params JSON; defaults otherwise
    bkg_penalty_ns: float = 0.5  # region-crossing delay penalty
    # global placement
    lambda_max: float = 0.5
    beta_anchor: float = 0.01
    blockage_threshold_pct: float = 75.0
    blockage_max_cluster: int = 20000
    b2b_eps: float = 1e-4
    spread_tol: float = 0.1
    qp_residual: float = 1e-6
    gp_max_iters: int = 48
    # packing
    theta: float = 0.01
    gamma: float = 0.05
    pack_radius: int = 3
    pack_rounds: int = 50
    # detailed placement
    n_dpi: int = 120
    d_ncp: int = 20
    d_r: float = 0.01
    i_thr: int = 5
    r_square: float = 3.0
    r_sector: float = 5.0
    dp_final_paths: int = 20
    dp_allow_degradation: bool = True

    def apply_ablation(self, name):
        if name in ("", "cfg0"):
            return
        if name not in ("cfg1", "cfg2", "cfg3", "cfg4", "cfg5", "cfg6"):
            raise ValueError(f"unknown ablation {name!r}")
        setattr(self, name, True)


def load_config_file(path):
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        with open(path, "rb") as f:
            return tomllib.load(f)
    with open(path) as f:
        return json.load(f)


def make_config(file_path=None, **overrides):
    values = {}
    if file_path:
        values.update(load_config_file(file_path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values)


@dataclass
class RunReport:
    seed: int = 0
    phases: list = field(default_factory=list)
    dp_trace: list = field(default_factory=list)
    error: str = ""

    def add(self, name, seconds, metrics):
        self.phases.append({
            "phase": name,
            "seconds": round(seconds, 6),
            "hpwl": metrics["hpwl"],
            "wns": metrics["wns"],
            "tns": metrics["tns"],
            "cpd": metrics["cpd"],
        })

    def final_metrics(self):
        return self.phases[-1] if self.phases else None

    def to_json(self):
        return {"seed": self.seed, "phases": self.phases,
                "error": self.error}


def initial_placement(netlist, device, seed):
    """Fixed instances at their given coordinates, everything else
    scattered uniformly over the free area."""
    rng = np.random.default_rng(seed)
    place = PlacementState(netlist.n_instances)
    for i, inst in enumerate(netlist.instances):
        if inst.fixed:
            place.x[i] = inst.x
            place.y[i] = inst.y
    movable = np.nonzero(~netlist.fixed_mask)[0]
    for v in movable:
        for _ in range(64):
            x = rng.uniform(0, device.width)
            y = rng.uniform(0, device.height)
            if not device.is_blocked(min(int(x), device.width - 1),
                                     min(int(y), device.height - 1)):
                break
        place.x[v] = x
        place.y[v] = y
    return place


def measure(netlist, device, place, graph, params, n_thr):
    m = run_sta(graph, place, params, n_thr)
    return {"hpwl": hpwl(netlist, place), "wns": m.wns, "tns": m.tns,
            "cpd": m.cpd}


def run_pipeline(config, netlist=None, device=None):
    """Execute the configured phases; returns (report, placement, graph).

    Writes placement/report/trace files into config.out_dir when set.
    """
    cfg = config
    accel.set_threads(cfg.threads)
    if netlist is None or device is None:
        netlist, device = load_design(cfg.design, cfg.device)
    if cfg.delay_model:
        params = DelayModelParams.load(cfg.delay_model)
    else:
        params = DelayModelParams(blockage_default_ns=cfg.bkg_penalty_ns)
    tcfg = TimingConfig(alpha=cfg.alpha, beta_crit=cfg.beta_crit,
                        n_thr=cfg.n_thr)
    report = RunReport(seed=cfg.seed)
    t_start = time.perf_counter()
    graph = build_timing_graph(netlist, device)
    place = initial_placement(netlist, device, cfg.seed)
    report.add("load", time.perf_counter() - t_start,
               measure(netlist, device, place, graph, params, cfg.n_thr))

    info = compute_path_lengths(netlist, graph)
    rng = np.random.default_rng(cfg.seed + 1)
    current_phase = "floorplan"
    try:
        if cfg.run_floorplan:
            t0 = time.perf_counter()
            clusters = None
            if not cfg.cfg1:
                clusters = cluster_by_fanout(netlist, info,
                                             cfg.top_fraction)
            k = min(cfg.k_partitions,
                    max(1, int((~netlist.fixed_mask).sum())))
            labels = partition(netlist, clusters, k, seed=cfg.seed,
                               n_starts=cfg.fm_starts)
            sa_cfg = SaConfig(t_init=cfg.sa_t_init,
                              cooling=cfg.sa_cooling,
                              moves_per_temp=cfg.sa_moves,
                              bin_rows=cfg.sa_bin_rows, seed=cfg.seed)
            assign, bins = sa_floorplan(netlist, labels, k, device, sa_cfg,
                                        place)
            for v in np.nonzero(~netlist.fixed_mask)[0]:
                b = bins[assign[labels[v]]]
                place.x[v] = rng.uniform(b.rect.x0, b.rect.x1)
                place.y[v] = rng.uniform(b.rect.y0, b.rect.y1)
            report.add("floorplan", time.perf_counter() - t0,
                       measure(netlist, device, place, graph, params,
                               cfg.n_thr))

        if cfg.run_global:
            current_phase = "global"
            t0 = time.perf_counter()
            gp_cfg = GpConfig(
                max_iters=cfg.gp_max_iters, lambda_max=cfg.lambda_max,
                beta_anchor=cfg.beta_anchor, eps=cfg.b2b_eps,
                spread_tol=cfg.spread_tol, qp_residual=cfg.qp_residual,
                blockage_threshold_pct=cfg.blockage_threshold_pct,
                blockage_max_cluster=cfg.blockage_max_cluster,
                blockage_enabled=not cfg.cfg2, wns_aware=not cfg.cfg3)
            place = global_place(netlist, device, place, info, graph,
                                 params, tcfg, gp_cfg)
            report.add("global", time.perf_counter() - t0,
                       measure(netlist, device, place, graph, params,
                               cfg.n_thr))

        occ = None
        if cfg.run_pack:
            current_phase = "pack"
            t0 = time.perf_counter()
            ref = place.clone()
            pk_cfg = PackConfig(theta=cfg.theta,
                                gamma=0.0 if cfg.cfg4 else cfg.gamma,
                                rounds=cfg.pack_rounds,
                                radius=cfg.pack_radius)
            place, occ = legalize_macros(netlist, device, place)
            place, occ = pack_sites(netlist, device, place, pk_cfg, info,
                                    occ, ref)
            assign_all_bels(netlist, device, graph, params, place, occ)
            issues = check_legal(netlist, device, place)
            if issues:
                raise DesignError(f"packing produced illegal placement: "
                                  f"{issues[:3]}")
            report.add("pack", time.perf_counter() - t0,
                       measure(netlist, device, place, graph, params,
                               cfg.n_thr))

        if cfg.run_detailed:
            current_phase = "detailed"
            t0 = time.perf_counter()
            sched = DpSchedule(
                n_dpi=cfg.n_dpi, d_ncp=cfg.d_ncp, d_r=cfg.d_r,
                i_thr=cfg.i_thr, r_sector=cfg.r_sector,
                r_square=5.0 if cfg.cfg6 else cfg.r_square,
                use_sector=not (cfg.cfg5 or cfg.cfg6),
                allow_degradation=cfg.dp_allow_degradation,
                final_paths=cfg.dp_final_paths)
            if occ is None:
                occ = occupancy_from_placement(netlist, device, place)
            trace = report.dp_trace if cfg.trace else None
            place = detailed_place(netlist, device, place, graph, params,
                                   sched, occ, trace, cfg.n_thr)
            report.add("detailed", time.perf_counter() - t0,
                       measure(netlist, device, place, graph, params,
                               cfg.n_thr))
    except Exception as exc:
        report.error = f"{current_phase}: {exc}"
        _write_outputs(cfg, netlist, device, place, graph, report,
                       time.perf_counter() - t_start)
        raise PhaseError(current_phase, exc) from exc

    _write_outputs(cfg, netlist, device, place, graph, report,
                   time.perf_counter() - t_start)
    return report, place, graph


def _write_outputs(cfg, netlist, device, place, graph, report, runtime_s):
    if not cfg.out_dir:
        return
    os.makedirs(cfg.out_dir, exist_ok=True)
    final = report.final_metrics()
    metrics = {
        "hpwl": final["hpwl"] if final else 0.0,
        "wns": final["wns"] if final else 0.0,
        "tns": final["tns"] if final else 0.0,
        "cpd": final["cpd"] if final else 0.0,
        "runtime_s": round(runtime_s, 6),
    }
    with open(os.path.join(cfg.out_dir, "placement.json"), "w") as f:
        f.write(canonical_dumps(place.to_json(netlist, metrics)))
    with open(os.path.join(cfg.out_dir, "report.json"), "w") as f:
        f.write(canonical_dumps(report.to_json()))
    if cfg.trace:
        rows = ["iter,cpd,best_cpd,n_cp,r_nbr"]
        for t in report.dp_trace:
            rows.append(f"{t['iter']},{t['cpd']:.9f},{t['best_cpd']:.9f},"
                        f"{t['n_cp']},{t['r_nbr']:.4f}")
        with open(os.path.join(cfg.out_dir, "dp_trace.csv"), "w") as f:
            f.write("\n".join(rows) + "\n")
    if cfg.svg:
        render_svg(netlist, device, place,
                   os.path.join(cfg.out_dir, "placement.svg"), graph)
