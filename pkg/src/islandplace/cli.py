"""Command-line entry point.

    place --design D.json --device V.json [--config C.toml] [--seed N]
          [--threads T] [--out DIR] [--ablate cfgK] [--svg] [--trace]

Exit codes: 0 success, 2 infeasible design, 3 phase failure.
"""

import argparse
import sys

from .model import DesignError, InfeasibleError
from .pipeline import PhaseError, make_config, run_pipeline


def build_parser():
    ap = argparse.ArgumentParser(
        prog="place",
        description="timing-driven mixed-size FPGA placement")
    ap.add_argument("--design", required=True, help="netlist JSON")
    ap.add_argument("--device", required=True, help="device JSON")
    ap.add_argument("--config", default=None, help="TOML/JSON config file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--ablate", default="cfg0",
                    choices=["cfg0", "cfg1", "cfg2", "cfg3", "cfg4",
                             "cfg5", "cfg6"])
    ap.add_argument("--svg", action="store_true", default=None)
    ap.add_argument("--trace", action="store_true", default=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(
            args.config, design=args.design, device=args.device,
            seed=args.seed, threads=args.threads, out_dir=args.out,
            svg=args.svg, trace=args.trace)
        cfg.apply_ablation(args.ablate)
        report, _place, _graph = run_pipeline(cfg)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except PhaseError as exc:
        if isinstance(exc.cause, InfeasibleError):
            print(f"infeasible: {exc}", file=sys.stderr)
            return 2
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DesignError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 3
    final = report.final_metrics()
    print(f"done: hpwl={final['hpwl']:.1f} wns={final['wns']:.4f} "
          f"tns={final['tns']:.4f} cpd={final['cpd']:.4f}")
    for ph in report.phases:
        print(f"  {ph['phase']:<10} {ph['seconds']:8.3f}s "
              f"cpd={ph['cpd']:.4f} hpwl={ph['hpwl']:.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
