"""Command-line entry point: reproducible runs under a per-command run directory.

Every command writes the resolved configuration (``config.json``) and the
defaults table (``defaults.md``) next to its outputs, so the snapshot alone
reproduces the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .ballistics import predict, read_track_csv, run_filter
from .errors import CatchError, ParseError
from .plstm import (
    dataset_hash,
    generate_demos,
    load_params,
    read_demos,
    save_params,
    train,
    write_demos,
)
from .prc import export_csv as export_prc_csv
from .prc import plan_prc
from .sim import (
    Mode,
    TrialSpec,
    ablate,
    decay_policy,
    monte_carlo,
    network_policy,
    run_postcatch,
    run_precatch,
    sample_specs,
    write_report,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags, config or missing inputs; exits with status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (unknown keys are rejected)")
    common.add_argument("--seed", type=int, help="global seed; overrides the config's seed")
    common.add_argument("--out-dir", default="runs", help="parent of the run directory (default: runs)")
    common.add_argument("--paper-literal", action="store_true",
                        help="weight tracking slack and joint speed equally (slack weight 1)")

    policy = _Parser(add_help=False)
    policy.add_argument("--params", help="trained network parameter file")
    policy.add_argument("--untrained", action="store_true",
                        help="use the generator's decay labels as the cushioning command")

    mode = _Parser(add_help=False)
    mode.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.FULL.value)

    throw = _Parser(add_help=False)
    throw.add_argument("--state", type=float, nargs=6, metavar=("X", "Y", "Z", "VX", "VY", "VZ"),
                       help="ball state at t = 0; sampled from the seed when omitted")

    parser = _Parser(prog="compliant-catch", description="Ball catching with learned cushioning.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("predict", parents=[common], help="filter a t,x,y,z track and predict the flight")
    p.add_argument("track", help="CSV with header t,x,y,z")

    sub.add_parser("plan", parents=[common, throw], help="plan the catch and the pre-catch motion for one throw")
    sub.add_parser("simulate", parents=[common, throw, policy, mode], help="run one catching trial")

    p = sub.add_parser("montecarlo", parents=[common, policy, mode], help="Monte-Carlo trials in one mode")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--trials", action="store_true", help="also write per-trial JSONL logs")

    p = sub.add_parser("ablate", parents=[common, policy], help="all modes on shared throws")
    p.add_argument("--n", type=int, default=500)

    p = sub.add_parser("gen-demos", parents=[common], help="write synthetic cushioning demonstrations")
    p.add_argument("--count", type=int, help="number of demonstrations (default: training.demo_count)")

    p = sub.add_parser("train", parents=[common], help="train the cushioning network")
    p.add_argument("--demos", help="JSONL demonstrations; generated from the seed when omitted")
    p.add_argument("--epochs", type=int, help="overrides training.epochs")
    return parser


def resolve_config(args) -> config_mod.RunConfig:
    try:
        cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    except config_mod.ConfigError as exc:
        raise UsageError(str(exc)) from None
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.paper_literal:
        cfg = replace(cfg, poc=replace(cfg.poc, slack_weight=1.0))
    return cfg


def run_dir(args, cfg: config_mod.RunConfig) -> Path:
    path = Path(args.out_dir) / f"{args.command}-seed{cfg.seed}"
    path.mkdir(parents=True, exist_ok=True)
    config_mod.dump(cfg, path / "config.json")
    (path / "defaults.md").write_text(config_mod.defaults_markdown())
    return path


def resolve_policy(args):
    if args.untrained:
        return decay_policy()
    if not args.params:
        raise UsageError("pass --params FILE or --untrained")
    if not os.path.isfile(args.params):
        raise UsageError(f"params file not found: {args.params}")
    try:
        return network_policy(load_params(args.params))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _throw(args, cfg) -> TrialSpec:
    sim = cfg.sim
    if args.state is not None:
        return TrialSpec(np.array(args.state), cfg.seed, sim.obs_window, sim.control_rate, "given")
    return sample_specs(1, cfg.seed, sim)[0]


def _write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_predict(args, cfg, out: Path) -> int:
    try:
        times, points = read_track_csv(args.track)
    except OSError as exc:
        raise UsageError(f"cannot read {args.track}: {exc.strerror}") from None
    sim = cfg.sim
    R = np.eye(3) * sim.meas_sigma**2
    belief = run_filter(times, points, sim.k_ad, R=R)[-1]
    pred = predict(belief, sim.horizon, sim.pred_dt, sim.k_ad)
    path = out / "prediction.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "z", "vx", "vy", "vz"])
        for t, p, v in zip(pred.times, pred.positions, pred.velocities):
            w.writerow([f"{belief.t + t:.6f}"] + [f"{x:.9g}" for x in (*p, *v)])
    print(f"wrote {len(pred.times)} predicted knots to {path}")
    return EXIT_OK


def cmd_plan(args, cfg, out: Path) -> int:
    model, planners = cfg.model(), cfg.planners()
    spec = _throw(args, cfg)
    pre = run_precatch(model, spec, cfg.sim, planners)
    report = {"spec": spec.to_dict(), "caught": pre.caught, "reason": pre.reason}
    if pre.q_ca is not None:
        report.update(q_ca=pre.q_ca.tolist(), t_ca=pre.t_ca, prc_duration=pre.prc_duration,
                      catch_error=pre.catch_error, alignment_deg=pre.alignment_deg)
        traj = plan_prc(model, planners.home, pre.q_ca, planners.prc)
        export_prc_csv(traj, out / "prc.csv", rate=spec.control_rate)
    _write_json(out / "plan.json", report)
    print(f"caught={pre.caught} {pre.reason}".rstrip())
    return EXIT_OK


def cmd_simulate(args, cfg, out: Path) -> int:
    policy = resolve_policy(args)
    model, planners = cfg.model(), cfg.planners()
    spec = _throw(args, cfg)
    pre = run_precatch(model, spec, cfg.sim, planners)
    outcome = run_postcatch(model, pre, policy, Mode(args.mode), cfg.sim, planners)
    _write_json(out / "trial.json", {"spec": spec.to_dict(), **outcome.to_dict()})
    print(f"{outcome.outcome.value} impact_proxy={outcome.impact_proxy:.6g}")
    return EXIT_OK


def cmd_montecarlo(args, cfg, out: Path) -> int:
    policy = resolve_policy(args)
    if args.n < 1:
        raise UsageError("--n must be positive")
    report = monte_carlo(cfg.model(), args.n, cfg.seed, Mode(args.mode), policy, cfg.sim, cfg.planners(),
                         keep_trials=args.trials)
    trials = report.pop("trials", None)
    write_report(report, out / "report.json")
    if trials is not None:
        with open(out / "trials.jsonl", "w") as fh:
            for t in trials:
                fh.write(json.dumps(t, sort_keys=True) + "\n")
    print(_rate_line(report["mode"], report["rates"]))
    return EXIT_OK


def cmd_ablate(args, cfg, out: Path) -> int:
    policy = resolve_policy(args)
    if args.n < 1:
        raise UsageError("--n must be positive")
    report = ablate(cfg.model(), args.n, cfg.seed, policy, cfg.sim, cfg.planners())
    write_report(report, out / "report.json")
    for name, summary in report["modes"].items():
        print(_rate_line(name, summary["rates"]))
    pairs = report.get("impact_pairs")
    if pairs and pairs["median_reduction"] is not None:
        print(f"impact reduced on {pairs['reduced']}/{pairs['pairs']} pairs, "
              f"median reduction {pairs['median_reduction']:.3f}")
    return EXIT_OK


def _rate_line(mode: str, rates: dict) -> str:
    return f"{mode:>6}  " + "  ".join(f"{k}={v:.4f}" for k, v in rates.items())


def cmd_gen_demos(args, cfg, out: Path) -> int:
    count = cfg.training.demo_count if args.count is None else args.count
    if count < 1:
        raise UsageError("--count must be positive")
    demos = generate_demos(count, cfg.seed, cfg.demos)
    write_demos(demos, out / "demos.jsonl")
    print(f"{count} demos sha256={dataset_hash(demos)}")
    return EXIT_OK


def cmd_train(args, cfg, out: Path) -> int:
    if args.demos:
        try:
            demos = read_demos(args.demos)
        except OSError as exc:
            raise UsageError(f"cannot read {args.demos}: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise UsageError(f"{args.demos}: malformed demonstration ({exc})") from None
    else:
        demos = generate_demos(cfg.training.demo_count, cfg.seed, cfg.demos)
    if not demos:
        raise UsageError("no demonstrations to train on")
    epochs = cfg.training.epochs if args.epochs is None else args.epochs
    if epochs < 1:
        raise UsageError("--epochs must be positive")
    tcfg = cfg.train_config()
    if len(demos) < tcfg.min_demos:
        print(f"warning: {len(demos)} demonstrations is below {tcfg.min_demos}; fit is an overfit check",
              file=sys.stderr)
    params, curve = train(demos, epochs, cfg.seed, tcfg, enforce_min=False)
    save_params(params, out / "params.bin")
    _write_json(out / "loss_curve.json", {"epochs": epochs, "dataset_sha256": dataset_hash(demos), "loss": curve})
    print(f"final loss {curve[-1]:.6g}; params at {out / 'params.bin'}")
    return EXIT_OK


COMMANDS = {
    "predict": cmd_predict,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "ablate": cmd_ablate,
    "gen-demos": cmd_gen_demos,
    "train": cmd_train,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        if hasattr(args, "params"):
            resolve_policy(args)  # fail on a missing params file before any work
        out = run_dir(args, cfg)
        return COMMANDS[args.command](args, cfg, out)
    except (UsageError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CatchError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
