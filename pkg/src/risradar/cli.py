"""Command-line entry point: ``risradar <command> [options]``.

Every command reads an optional YAML config (see :mod:`risradar.config`) or
a previously written ``manifest.json``, applies flag overrides (flags win),
writes its CSV/JSON outputs plus ``manifest.json`` into ``--out`` and prints
a one-line summary. On any error the files written so far are removed and
the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .config import ConfigError, check_divisibility, parse_config, scenario_from_dict, sweep_from_dict
from .forward import save_observation
from .geometry import ScenarioConfig

COMMANDS = ("crb", "rmse-sweep", "detect-sweep", "objective-cut", "simulate", "calibrate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risradar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config or manifest.json to re-run")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--ml", type=int, action="append", help="M/L value (repeatable)")
    common.add_argument("--powers", type=float, nargs="+", metavar="DBM", help="transmit powers in dBm")
    common.add_argument("--trials", type=int, help="trials per point")
    common.add_argument("--desk", action="store_true", help="desk scale: N=256, M=280, 200 trials")
    common.add_argument("--estimator", choices=("joint", "di", "both"), help="estimator selection")
    common.add_argument("--p-fa", type=float, action="append", dest="p_fa", help="false-alarm rate (repeatable)")
    common.add_argument("--noise-trials", type=int, help="noise-only trials for threshold calibration")
    common.add_argument("--workers", type=int, help=f"worker processes (capped by ${ex.WORKERS_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("crb", parents=[common], help="CRB sweep over transmit power -> crb.csv")
    sub.add_parser("rmse-sweep", parents=[common], help="Monte-Carlo RMSE sweep -> rmse.csv")
    sub.add_parser("detect-sweep", parents=[common], help="detection probability sweep -> detection.csv")
    cut = sub.add_parser("objective-cut", parents=[common], help="noiseless velocity cuts -> objective_cut.csv")
    cut.add_argument("--which", choices=("4d", "2d", "both"), default="both")
    cut.add_argument("--span", type=float, default=40.0, help="half span around the true velocity (m/s)")
    cut.add_argument("--step", type=float, default=0.02, help="velocity step (m/s)")
    sub.add_parser("simulate", parents=[common], help="single trial dump (observation + estimates)")
    sub.add_parser("calibrate", parents=[common], help="GLRT threshold table -> thresholds.csv")
    return parser


def resolve(args) -> tuple[ScenarioConfig, ex.SweepConfig, dict]:
    """Configs from file/manifest with flag overrides applied."""
    options = {}
    if args.config is not None and args.config.suffix == ".json":
        manifest = json.loads(args.config.read_text())
        scenario = scenario_from_dict(manifest["scenario"])
        sweep = sweep_from_dict(manifest["sweep"])
        options = manifest.get("options", {})
    else:
        scenario, sweep = parse_config(args.config)
    changes = {}
    if args.desk:
        changes.update(n_subcarriers=256, n_symbols=280, trials=200)
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.ml:
        changes["m_over_l"] = tuple(args.ml)
    if args.powers:
        changes["powers_dbm"] = tuple(args.powers)
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.estimator:
        changes["estimators"] = ("joint", "di") if args.estimator == "both" else (args.estimator,)
    if args.p_fa:
        changes["p_fa"] = tuple(args.p_fa)
    if args.noise_trials is not None:
        changes["noise_trials"] = args.noise_trials
    if changes:
        sweep = dataclasses.replace(sweep, **changes)
    check_divisibility(scenario, sweep)
    for key in ("which", "span", "step"):
        if hasattr(args, key):
            options[key] = getattr(args, key)
    if args.ml:
        options["ml"] = list(args.ml)
    if args.powers:
        options["powers_dbm"] = list(args.powers)
    return scenario, sweep, options


def _single_ml(scenario: ScenarioConfig, sweep: ex.SweepConfig, options: dict) -> ScenarioConfig:
    """Scenario for single-M/L commands: first --ml if given, else the scenario's own value."""
    ml = options["ml"][0] if options.get("ml") else scenario.m_over_l
    return sweep.scenario(scenario, m_over_l=ml)


def run_command(args, scenario, sweep, options, out: Path, written: list) -> str:
    cmd = args.command
    workers = args.workers
    if cmd == "crb":
        cfg = _single_ml(scenario, sweep, options)
        rows = [{**r, "m_over_l": cfg.m_over_l} for r in ex.crb_sweep(cfg, sweep.powers_dbm)]
        written.append(ex.write_csv(out / "crb.csv", ex.CRB_FIELDS + ["m_over_l"], rows))
        last = rows[-1]
        return (f"crb: {len(rows)} rows, M/L={cfg.m_over_l}; at {last['power_dbm']:g} dBm range "
                f"{last['range_crb_m']:.4g} m, velocity {last['velocity_crb_mps']:.4g} m/s, "
                f"az {last['az_crb_deg']:.4g} deg, el {last['el_crb_deg']:.4g} deg")
    if cmd == "rmse-sweep":
        report = ex.rmse_sweep(sweep, scenario, workers=workers)
        written.extend(report.write(out))
        return f"rmse-sweep: {len(report.rmse_rows)} rows over {sweep.trials} trials each"
    if cmd == "detect-sweep":
        report = ex.detection_sweep(sweep, scenario, workers=workers)
        written.extend(report.write(out))
        return f"detect-sweep: {len(report.detection_rows)} rows, thresholds from {sweep.noise_trials} noise-only trials"
    if cmd == "calibrate":
        rows = []
        for ml in sweep.m_over_l:
            cfg = sweep.scenario(scenario, m_over_l=ml)
            for name in sweep.estimators:
                stats = ex.noise_statistics(cfg, sweep.noise_trials, sweep.master_seed, ex.CALIBRATION_STREAM,
                                            name, workers=workers)
                for pf in sweep.p_fa:
                    rows.append({"m_over_l": ml, "estimator": name, "p_fa": pf, "noise_trials": len(stats),
                                 "gamma": ex.calibrate_threshold(stats, pf)})
        written.append(ex.write_csv(out / "thresholds.csv", ["m_over_l", "estimator", "p_fa", "noise_trials", "gamma"], rows))
        return f"calibrate: {len(rows)} thresholds from {sweep.noise_trials} noise-only trials"
    if cmd == "objective-cut":
        which = ("4d", "2d") if options["which"] == "both" else (options["which"],)
        mls = tuple(options["ml"]) if options.get("ml") else (scenario.m_over_l,)
        rows = []
        for ml in mls:
            cfg = sweep.scenario(scenario, m_over_l=ml)
            for w in which:
                v, f = ex.objective_cut(cfg, which=w, half_span_mps=options["span"], step_mps=options["step"])
                rows.extend({"velocity_mps": a, "value": b, "which": w, "m_over_l": ml} for a, b in zip(v, f))
        written.append(ex.write_csv(out / "objective_cut.csv", ex.CUT_FIELDS, rows))
        return f"objective-cut: {len(mls) * len(which)} curve(s), {len(rows)} samples"
    if cmd == "simulate":
        return _simulate(scenario, sweep, options, out, written)
    raise ValueError(f"unknown command {cmd}")


def _simulate(scenario, sweep, options, out: Path, written: list) -> str:
    cfg = _single_ml(scenario, sweep, options)
    power = options["powers_dbm"][-1] if options.get("powers_dbm") else float(10 * np.log10(cfg.tx_power * 1e3))
    seed = (sweep.master_seed, ex.TARGET_STREAM, 0)
    trial = ex.run_trial(seed, power, cfg, estimators=sweep.estimators, keep_observation=True)
    obs = trial.observation
    obs_path = out / "observation.bin"
    written.extend([obs_path, obs_path.with_name(obs_path.name + ".json")])
    save_observation(obs, obs_path)
    truth = trial.truth
    record = {
        "seed": list(trial.seed),
        "power_dbm": power,
        "m_over_l": cfg.m_over_l,
        "truth": {
            "tau_s": truth.tau, "nu_hz": truth.nu,
            "az_deg": float(np.degrees(truth.theta.az)), "el_deg": float(np.degrees(truth.theta.el)),
            "alpha_re": float(truth.alpha.real), "alpha_im": float(truth.alpha.imag),
        },
        "estimates": {k: e.to_record(cfg.wavelength) for k, e in trial.estimates.items()},
        "errors": {k: dict(zip(["range_m", "velocity_mps", "az_deg", "el_deg"], map(float, v)))
                   for k, v in trial.errors.items()},
    }
    written.append(out / "trial.json")
    (out / "trial.json").write_text(json.dumps(record, indent=2, default=float))
    errs = ", ".join(f"{k} range err {v[0]:.3g} m" for k, v in trial.errors.items())
    return f"simulate: seed {sweep.master_seed} at {power:g} dBm, M/L={cfg.m_over_l}: {errs}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out: Path = args.out
    written: list = []
    created_dir = not out.exists()
    try:
        scenario, sweep, options = resolve(args)
        out.mkdir(parents=True, exist_ok=True)
        summary = run_command(args, scenario, sweep, options, out, written)
        manifest = {
            "version": __version__,
            "command": args.command,
            "config_path": str(args.config) if args.config else None,
            "output_dir": str(out),
            "master_seed": sweep.master_seed,
            "config_hash": scenario.digest(),
            "scenario": scenario.to_dict(),
            "sweep": sweep.to_dict(),
            "options": options,
            "files": sorted(p.name for p in written),
        }
        written.append(out / "manifest.json")
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    except (ConfigError, ValueError, OSError, KeyError, np.linalg.LinAlgError) as exc:
        for p in written:
            Path(p).unlink(missing_ok=True)
        if created_dir and out.exists() and not any(out.iterdir()):
            out.rmdir()
        print(f"risradar {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
