"""Command-line front end.

Subcommands:
    simulate    run one episode, emit the episode CSV and plots
    montecarlo  run the seeded Monte Carlo study, emit metrics CSV and plots
    equivalence run the randomized matrix/dual reset-map equivalence gate
    bench       FLOP counts and latency benchmark of the impulse formulations
    plot        re-render the plots from an existing episode CSV

Every run is deterministic under a fixed seed except wall-clock timing
columns. Output files are written atomically.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import config as config_mod
from . import harness

logger = logging.getLogger("dqimpact")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dqimpact",
        description=__doc__,
        epilog=config_mod.schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", action="store_true", help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="configuration file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")

    p_sim = sub.add_parser("simulate", help="run one episode and emit CSV + plots")
    common(p_sim)
    p_sim.add_argument("--controller", choices=("dq", "baseline"), help="override controller.type")
    p_sim.add_argument(
        "--impulse", choices=("decoupled", "matrix", "coupled"), help="override experiment.impulse_model"
    )

    p_mc = sub.add_parser("montecarlo", help="run the Monte Carlo study and emit metrics")
    common(p_mc)
    p_mc.add_argument("--trials", type=int, help="override experiment.trials")
    p_mc.add_argument(
        "--impulse", choices=("decoupled", "matrix", "coupled"), help="override experiment.impulse_model"
    )

    p_eq = sub.add_parser("equivalence", help="randomized matrix/dual reset-map equivalence gate")
    p_eq.add_argument("--samples", type=int, default=10_000, help="random sample count (default 10000)")
    p_eq.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p_eq.add_argument(
        "--inject-fault",
        action="store_true",
        help="test hook: perturb the matrix-path inertia by 1e-6 to prove the gate detects divergence",
    )

    p_bench = sub.add_parser("bench", help="FLOP counts and impulse latency benchmark")
    p_bench.add_argument(
        "--formulations",
        default=",".join(bench_mod.FORMULATIONS),
        help="comma list among inertial,matrix,dq (default: all)",
    )
    p_bench.add_argument("--iters", type=int, default=1_000_000, help="timed iterations per formulation")
    p_bench.add_argument("--seed", type=int, default=0, help="input generation seed")
    p_bench.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")

    p_plot = sub.add_parser("plot", help="re-render plots from an episode CSV")
    p_plot.add_argument("--episode", required=True, metavar="CSV", help="episode CSV written by simulate")
    p_plot.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")

    return parser


def _overrides(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides[("experiment", "seed")] = str(args.seed)
    if getattr(args, "controller", None):
        overrides[("controller", "type")] = args.controller
    if getattr(args, "impulse", None):
        overrides[("experiment", "impulse_model")] = args.impulse
    if getattr(args, "trials", None) is not None:
        overrides[("experiment", "trials")] = str(args.trials)
    return overrides


def cmd_simulate(args) -> int:
    cfg = config_mod.load_experiment(args.config, _overrides(args))
    log, metrics, _reference = harness.run_single(cfg)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "episode.csv")
    svg_path = os.path.join(args.out, "episode.svg")
    harness.emit_episode_csv(log, csv_path)
    harness.emit_episode_plot(log, svg_path)
    print(f"scenario: {cfg.scenario}  controller: {cfg.controller_type}  impulse: {cfg.impulse_model}")
    print(f"episode: {len(log)} samples, {len(log.jumps)} jump(s), failed={metrics.failed}")
    print(
        f"metrics: peak L2 {metrics.peak_error:.4f} m, RMSE {metrics.rmse_error:.4f} m, "
        f"peak Ek {metrics.peak_kinetic_energy:.4f} J, settling {metrics.settling_time:.3f} s"
    )
    print(f"wrote {csv_path} and {svg_path}")
    return 1 if metrics.failed else 0


def cmd_montecarlo(args) -> int:
    cfg = config_mod.load_experiment(args.config, _overrides(args))
    result = harness.run_monte_carlo(cfg)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "metrics.csv")
    harness.emit_metrics_csv(result.rows, csv_path)
    harness.emit_mc_plot(
        result,
        os.path.join(args.out, "mc_error.svg"),
        os.path.join(args.out, "mc_kinetic.svg"),
    )
    print(harness.summary_table(result))
    print(f"wrote {csv_path}")
    return 0


def cmd_equivalence(args) -> int:
    report = harness.run_equivalence(args.samples, args.seed, args.inject_fault)
    tol = 1e-9
    print(f"matrix <-> dual reset-map equivalence over {report['samples']} random impacts:")
    worst = 0.0
    for name, label in (
        ("rho", "effective inverse mass"),
        ("magnitude", "impulse magnitude"),
        ("delta_v", "world velocity jump"),
        ("delta_w", "angular velocity jump"),
    ):
        print(f"  max relative deviation, {label:<24}: {report[name]:.3e}")
        worst = max(worst, report[name])
    ok = worst <= tol
    print(f"gate: {'PASS' if ok else 'FAIL'} (tolerance {tol:.0e})")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    formulations = [f.strip() for f in args.formulations.split(",") if f.strip()]
    for f in formulations:
        if f not in bench_mod.FORMULATIONS:
            print(f"unknown formulation {f!r}; choose among {bench_mod.FORMULATIONS}", file=sys.stderr)
            return 2

    worst = bench_mod.correctness_check()
    print(f"correctness gate: max relative magnitude deviation {worst:.3e}")
    if worst > 1e-10:
        print("correctness gate FAILED; not timing", file=sys.stderr)
        return 1

    results = {}
    for f in formulations:
        ops = bench_mod.flop_count(f)
        lat = bench_mod.latency_bench(f, args.iters, args.seed)
        results[f] = (ops, lat)
        print(
            f"{f:<9} ops: {ops.total:>4} ({ops.adds} adds + {ops.muls} muls)   "
            f"median {lat.median_ns:8.1f} ns/op   p95 {lat.p95_ns:8.1f} ns/op   "
            f"checksum {lat.checksum:.6e}"
        )
        for label, stage in bench_mod.flop_breakdown(f):
            print(f"    {label:<28} {stage.total:>4} ({stage.adds} adds + {stage.muls} muls)")

    if "dq" in results and "matrix" in results:
        ratio = results["dq"][1].median_ns / results["matrix"][1].median_ns
        red = 100.0 * (1.0 - ratio)
        print(f"dq/matrix median latency ratio: {ratio:.3f} ({red:.1f}% reduction on this host)")

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bench.csv")
    harness.atomic_write_text(path, bench_mod.bench_csv(results))
    print(f"wrote {path}")
    return 0


def cmd_plot(args) -> int:
    from .hybridsim import EpisodeLog

    data = np.genfromtxt(args.episode, delimiter=",", names=True, dtype=None, encoding="utf-8")
    log = EpisodeLog()
    for row in np.atleast_1d(data):
        log.time.append(float(row["t"]))
        log.jump_count.append(int(row["j"]))
        log.position.append(np.array([row["px"], row["py"], row["pz"]]))
        log.attitude.append(np.array([row["qw"], row["qx"], row["qy"], row["qz"]]))
        log.angular_rate.append(np.array([row["wx"], row["wy"], row["wz"]]))
        log.linear_velocity_body.append(np.array([row["vbx"], row["vby"], row["vbz"]]))
        log.lyapunov.append(float(row["V"]))
        log.lyapunov_potential.append(float(row["Vpos"]))
        log.lyapunov_kinetic.append(float(row["Vkin"]))
        log.kinetic_energy.append(float(row["Ek"]))
        log.dissipated.append(0.0)
        log.signed_distance.append(0.0)
        log.pose_drift.append(0.0)
        log.wrench.append(None)
        log.event.append(str(row["event"]) if row["event"] else "")
    os.makedirs(args.out, exist_ok=True)
    svg_path = os.path.join(args.out, "episode.svg")
    harness.emit_episode_plot(log, svg_path)
    print(f"wrote {svg_path}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "equivalence": cmd_equivalence,
    "bench": cmd_bench,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except config_mod.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
