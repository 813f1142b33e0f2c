"""Command-line front end: ``insod simulate | fuse | verify | metrics | experiment``.

Exit codes: 0 success, 1 validation failure (bad input or failed checks),
2 numerical divergence of the filter.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time

import numpy as np

from . import io
from .config import RunConfig, config_from_dict
from .errors import (CovarianceNotPD, InsodError, InsufficientDistance, InvalidConfig, SchemaError,
                     SingularInnovationCovariance)
from .metrics import ErrorSeries, report

log = logging.getLogger("insod")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2

PRESETS = {
    "sim-baseline": {"noise_schedule": None},
    "sim-mmae": {"noise_schedule": "reference", "filter": {"mmae": True}},
}


class Diverged(InsodError):
    pass


def _load_raw(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def resolve_config(args, base: dict | None = None) -> RunConfig:
    """Config file merged with preset values and command-line overrides."""
    data = dict(base or {})
    raw = _load_raw(getattr(args, "config", None))
    for k, v in raw.items():
        if isinstance(v, dict) and isinstance(data.get(k), dict):
            data[k] = {**data[k], **v}
        else:
            data[k] = v
    filt = dict(data.get("filter", {}))
    if getattr(args, "meas", None):
        if filt.get("kind") not in (None, args.meas):
            filt.pop("meas", None)
        filt["kind"] = args.meas
    if getattr(args, "mmae", False):
        filt["mmae"] = True
    if filt.get("mmae") and "bank" not in filt and data.get("noise_schedule"):
        from .fusion import INJECTION_BANKS
        from .odometry import MeasKind

        filt["bank"] = list(INJECTION_BANKS[MeasKind.parse(filt.get("kind", "pv"))])
    data["filter"] = filt
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "out", None):
        data["out"] = args.out
    return config_from_dict(data)


def _jsonable(x):
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return {f.name: _jsonable(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "value") and not isinstance(x, (int, float)):
        return x.value
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(cfg: RunConfig, out_dir: str) -> dict:
    from .experiments import simulate

    os.makedirs(out_dir, exist_ok=True)
    truth, imu, odo = simulate(cfg)
    every = max(1, int(round(cfg.truth_interval / cfg.truth_dt)))
    io.write_truth(os.path.join(out_dir, "truth.csv"), truth, every)
    io.write_imu(os.path.join(out_dir, "imu.csv"), imu)
    io.write_odo(os.path.join(out_dir, "odo.csv"), odo)
    return dict(duration=float(truth.t[-1]), distance=float(truth.d[-1]), imu_epochs=len(imu))


def cmd_fuse(cfg: RunConfig, imu_path, odo_path, truth_path, out_dir) -> dict:
    from .experiments import seeds_for, start_state
    from .fusion import run_filter

    imu = io.read_imu(imu_path)
    odo = io.read_odo(odo_path)
    truth = io.read_truth(truth_path) if truth_path else None
    if truth is not None:
        if abs(truth.t[0] - (imu.t[0] - cfg.filter.T)) > 1e-6:
            raise SchemaError(f"{truth_path}:2: first truth epoch must precede the first IMU "
                              f"step by {cfg.filter.T} s")
        start = start_state(truth)
    else:
        # without truth the start state comes from the configured trajectory
        start = start_state(cfg.build_truth())
    nav0, mount0, bg0, ba0 = cfg.init.apply(start, cfg.sensors.K)
    _, inj_seed = seeds_for(cfg.seed)
    try:
        out = run_filter(imu, odo, cfg.filter, nav0, mount0, bg0, ba0, seed=inj_seed)
    except (CovarianceNotPD, SingularInnovationCovariance, np.linalg.LinAlgError) as exc:
        raise Diverged(str(exc)) from None
    if not (np.all(np.isfinite(out.p)) and np.all(np.isfinite(out.P_diag))):
        raise Diverged("non-finite filter state")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "results.csv")
    io.write_results(path, out, truth, mmae=cfg.filter.mmae)
    res = io.read_results(path)
    summary = dict(updates=len(out.t), results=path)
    if np.any(np.isfinite(res["herr"])):
        summary.update(final_herr=float(res["herr"][-1]), distance=float(res["dist"][-1]),
                       final_rel_permille=float(res["herr"][-1] / res["dist"][-1] * 1e3))
    return summary


def cmd_metrics(results_path, threshold: float = 20e3):
    res = io.read_results(results_path)
    m = np.isfinite(res["herr"])
    if not m.any():
        raise InsufficientDistance(f"{results_path}: no horizontal-error values")
    return report(ErrorSeries(res["dist"][m], res["herr"][m], res["t"][m]), threshold)


def cmd_verify(suite: str, seed) -> list:
    from .verify import SUITES, run_suite

    names = list(SUITES) if suite == "all" else [suite]
    checks = []
    for n in names:
        for c in run_suite(n, seed=seed):
            c.name = f"{n}: {c.name}"
            checks.append(c)
    return checks


def _print_metrics(rep, path=None):
    print(rep.table())
    if path:
        io.write_csv(path, ["mean20_abs", "mean20_rel", "gra20_abs", "gra20_rel", "max20"],
                     [rep.row()])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="insod", description="INS/odometer navigation toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, meas=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="random seed (overrides config)")
        sp.add_argument("--out", help="output directory (overrides config)")
        if meas:
            sp.add_argument("--meas", choices=("pa", "pi", "pv"), help="odometer measurement kind")
            sp.add_argument("--mmae", action="store_true", help="adaptive model bank")

    sp = sub.add_parser("simulate", help="write truth.csv, imu.csv and odo.csv")
    common(sp, meas=False)

    sp = sub.add_parser("fuse", help="run the filter and write results.csv")
    common(sp)
    sp.add_argument("--imu", required=True)
    sp.add_argument("--odo", required=True)
    sp.add_argument("--truth", help="truth.csv (initial state and error columns); without it the "
                    "start state comes from the configured trajectory")

    sp = sub.add_parser("verify", help="run an oracle verification suite")
    sp.add_argument("suite", choices=("lemmas", "jacobians", "integrals", "prefilter", "all"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--json", action="store_true", help="machine-readable report")

    sp = sub.add_parser("metrics", help="Mean20/Gra20/Max20 of a results.csv")
    sp.add_argument("results")
    sp.add_argument("--threshold", type=float, default=20e3, help="distance threshold (m)")
    sp.add_argument("--csv", help="also write the metrics row to this file")

    sp = sub.add_parser("experiment", help="simulate, fuse and evaluate a preset")
    sp.add_argument("preset", choices=sorted(PRESETS))
    common(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            cfg = resolve_config(args)
            info = cmd_simulate(cfg, cfg.out)
            print(json.dumps(info))
        elif args.command == "fuse":
            cfg = resolve_config(args)
            print(json.dumps(cmd_fuse(cfg, args.imu, args.odo, args.truth, cfg.out)))
        elif args.command == "verify":
            checks = cmd_verify(args.suite, args.seed)
            if args.json:
                print(json.dumps([c.as_dict() for c in checks], indent=2))
            else:
                for c in checks:
                    print(c.line())
            return EXIT_OK if all(c.passed for c in checks) else EXIT_INVALID
        elif args.command == "metrics":
            t0 = time.perf_counter()
            _print_metrics(cmd_metrics(args.results, args.threshold), args.csv)
            log.info("metrics in %.3f s", time.perf_counter() - t0)
        elif args.command == "experiment":
            cfg = resolve_config(args, base=PRESETS[args.preset])
            out = cfg.out
            log.info("simulating into %s", out)
            cmd_simulate(cfg, out)
            log.info("fusing (%s%s)", cfg.filter.kind.value, ", mmae" if cfg.filter.mmae else "")
            summary = cmd_fuse(cfg, os.path.join(out, "imu.csv"), os.path.join(out, "odo.csv"),
                               os.path.join(out, "truth.csv"), out)
            print(json.dumps(summary))
            _print_metrics(cmd_metrics(summary["results"]), os.path.join(out, "metrics.csv"))
            _write_json(os.path.join(out, "config.json"), cfg)
    except Diverged as exc:
        print(f"error: filter diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except InsodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
