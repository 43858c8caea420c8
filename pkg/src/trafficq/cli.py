"""Command-line entry point: ``trafficq {simulate,sweep,oracle,calibrate}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import harness, plotting
from .config import ConfigError, ExperimentConfig, load_config
from .horizon import build_actions
from .network import GreenTimeError, ScenarioError
from .stochastics import TurningSampleError

log = logging.getLogger("trafficq")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.scenario)
    if getattr(args, "demand", None) is not None:
        cfg = cfg.with_demand(args.demand)
    return cfg


def _controller(cfg, kind: str, seed: int):
    if kind == "regular":
        return harness.train_regular(cfg, seed), None
    return harness.train_adaptive(cfg, seed)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _outdir(args.out)
    glog = None
    if args.controller == "regular":
        trace = harness.run_regular(cfg, args.seed)
    elif args.controller == "adaptive":
        trace, glog = harness.run_adaptive(cfg, args.seed)
    else:
        greens = args.greens or [cfg.scenario.default_green] * cfg.scenario.n_intersections
        if len(greens) != cfg.scenario.n_intersections:
            raise ConfigError(f"--greens needs {cfg.scenario.n_intersections} values")
        trace = harness.run_fixed_time(cfg, greens, args.seed)
    harness.write_trace_csv(trace, out / "trace.csv")
    extra = {}
    if glog is not None:
        glog.to_csv(out / "generations.csv")
        last = glog.records[-1]
        extra["final_grid"] = {"lo": list(last.grid.lo), "hi": list(last.grid.hi)}
    harness.write_meta(out / "run_meta.json", cfg, command="simulate", controller=args.controller,
                       seed=args.seed, total_cost=trace.total_cost, any_overflow=trace.any_overflow, **extra)
    if not args.no_plots:
        plotting.plot_queues(trace, out / "queues.png", title=f"Queue length ({args.controller})")
        plotting.plot_costs({args.controller: trace}, out / "costs.png")
        if glog is not None:
            plotting.plot_generations(glog, out / "generations.png")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["step", "cost", "overflow", *[f"action_{i}" for i in trace.intersection_ids]])
    for k in range(trace.horizon):
        w.writerow([k + 1, f"{trace.costs[k]:.2f}", int(trace.overflow[k].any()),
                    *[f"{a:g}" for a in trace.actions[k]]])
    print(f"# total_cost={trace.total_cost:.2f} overflow={int(trace.any_overflow)} out={out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _outdir(args.out)
    ctrl, _ = _controller(cfg, args.controller, args.controller_seed)
    seeds = list(range(args.seeds))
    res = harness.sweep_uncertainty(cfg, ctrl, args.axis, args.pcts, seeds)
    harness.write_sweep_csv(res, out / "sweep.csv")
    harness.write_sweep_csv(res, out / "sweep_single_seed.csv", single=True)
    harness.write_meta(out / "run_meta.json", cfg, command="sweep", axis=args.axis, pcts=res.pcts,
                       seeds=len(seeds), controller=args.controller, controller_seed=args.controller_seed,
                       spearman=res.spearman())
    if not args.no_plots:
        plotting.plot_sweep(res, out / "sweep.png")
    sys.stdout.write((out / "sweep.csv").read_text())
    return 0


def cmd_oracle(args) -> int:
    cfg = _load(args)
    horizon = args.horizon or cfg.agent.horizon
    actions = build_actions(cfg.initial_grid())
    res = harness.oracle_search(cfg.scenario, horizon, args.mode, actions, cfg.reward, budget=args.budget,
                                uncertainty=cfg.uncertainty)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["step", *[f"action_{i}" for i in cfg.scenario.intersection_ids]])
    for k, row in enumerate(res.best_actions):
        w.writerow([k + 1, *[f"{a:g}" for a in row]])
    print(f"# mode={res.mode} best_cost={res.best_cost:.6f} evaluated={res.evaluated}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    out = _outdir(args.out)
    chosen, records = harness.calibrate_demand(cfg, args.candidates, list(range(args.seeds)), args.controller_seed)
    keys = sorted({k for r in records for k in r})
    with open(out / "calibration.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: r.get(k, "") for k in keys})
    harness.write_meta(out / "run_meta.json", cfg.with_demand(chosen), command="calibrate",
                       chosen_demand=chosen, candidates=list(args.candidates), seeds=args.seeds)
    sys.stdout.write((out / "calibration.csv").read_text())
    print(f"# chosen_demand={chosen:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trafficq", description="Q-learning traffic signal control experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--scenario", default=None, help="scenario/config JSON (default: shipped 4-intersection network)")
        sp.add_argument("--demand", type=float, default=None, help="override mean demand on every entry road (veh/s)")
        if out_default is not None:
            sp.add_argument("--out", default=out_default, help="output directory")
            sp.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    sp = sub.add_parser("simulate", help="train a controller and write its greedy rollout")
    common(sp, "results/simulate")
    sp.add_argument("--controller", choices=("regular", "adaptive", "fixed"), default="adaptive")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--greens", type=_floats, default=None, help="fixed controller: comma-separated green times")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="overflow and cost under growing uncertainty")
    common(sp, "results/sweep")
    sp.add_argument("--axis", choices=harness.AXES, default="demand")
    sp.add_argument("--pcts", type=_floats, default=[5, 10, 20, 30, 40])
    sp.add_argument("--seeds", type=int, default=20, help="number of sweep seeds (0..N-1)")
    sp.add_argument("--controller", choices=("regular", "adaptive"), default="adaptive")
    sp.add_argument("--controller-seed", type=int, default=0)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", help="exhaustive minimum cost on a small deterministic instance")
    common(sp, None)
    sp.add_argument("--mode", choices=harness.ORACLE_MODES, default="fixed_action")
    sp.add_argument("--horizon", type=int, default=None)
    sp.add_argument("--budget", type=int, default=2_000_000)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("calibrate", help="scan entry demand for feasibility and robustness bands")
    common(sp, "results/calibrate")
    sp.add_argument("--candidates", type=_floats, default=[0.31, 0.33, 0.35, 0.37])
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--controller-seed", type=int, default=0)
    sp.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, GreenTimeError, harness.OracleBudgetError,
            TurningSampleError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
