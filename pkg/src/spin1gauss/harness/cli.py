"""``simulate`` command-line entry point."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import magnetics, oracle
from ..state import EnsembleSpec
from .config import ConfigError, ExperimentConfig
from .run import RunResult, SimulationError, run_experiment

log = logging.getLogger("spin1gauss")

COLUMNS = ("t_s", "phi_mean_rad", "phi_var_rad2", "tau_gauss_s", "flags")
ORACLE_TOL = 1e-8


def write_results(result: RunResult, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(COLUMNS)
    horizon = result.metadata.get("tau_gauss_s", np.inf)
    for r in result.records:
        w.writerow([repr(float(r.time)), repr(float(r.phi_mean)), repr(float(r.phi_var)), repr(float(horizon)), ";".join(r.flags)])


def write_diagonal(times, diagonals, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    names = ["B_x", "B_y", "B_z", "F_x", "F_y", "F_z", "J_x", "J_y", "J_k", "J_l", "J_m"]
    w.writerow(["t_s"] + [f"var_{n}" for n in names])
    for t, d in zip(times, diagonals):
        w.writerow([repr(float(t))] + [repr(float(x)) for x in d])


def oracle_trace(cfg: ExperimentConfig, times) -> tuple[list, float]:
    """Single-atom engine rotation vs exact density-matrix propagation at ``times``."""
    fm = cfg.field_model()
    lam0 = EnsembleSpec(1.0, 0.0, cfg.ensemble.pump).single_atom_mean()
    rho0 = oracle.rho_from_lambda(lam0)
    rows, worst = [], 0.0
    for t in times:
        eng = magnetics.coherent_rotation(lam0, t, fm)
        ref = oracle.lambda_from_rho(oracle.exact_field_evolution(rho0, fm.b, fm.gyro, t))
        err = float(np.max(np.abs(eng - ref)))
        worst = max(worst, err)
        rows.append((t, eng, ref, err))
    return rows, worst


def write_oracle(rows, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["t_s"] + [f"engine_{i}" for i in range(8)] + [f"oracle_{i}" for i in range(8)] + ["max_abs_err"])
    for t, eng, ref, err in rows:
        w.writerow([repr(float(t))] + [repr(float(x)) for x in eng] + [repr(float(x)) for x in ref] + [repr(err)])


def parse_sweep(text: str) -> tuple[str, np.ndarray]:
    try:
        param, rng = text.split("=", 1)
        lo, hi, n = rng.split(":")
        values = np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ConfigError(f"bad --sweep {text!r}; expected param=lo:hi:n") from exc
    if int(n) < 1:
        raise ConfigError("--sweep needs at least one point")
    return param.strip(), values


def _run_one(cfg: ExperimentConfig) -> RunResult:
    return run_experiment(cfg)


def _output(path: Path | None, writer, *args) -> None:
    if path is None:
        writer(*args, sys.stdout)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer(*args, fh)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="simulate", description="Gaussian spin-1 Faraday-rotation simulation")
    parser.add_argument("config", type=Path, help="experiment configuration (JSON)")
    parser.add_argument("--out", type=Path, help="results CSV (default: stdout)")
    parser.add_argument("--oracle-check", action="store_true",
                        help="also emit single-atom engine-vs-exact traces; fail if they disagree")
    parser.add_argument("--sweep", metavar="PARAM=LO:HI:N",
                        help="run N configurations with a dotted parameter spaced linearly")
    parser.add_argument("--diag-out", type=Path, help="CSV of the field and atomic variances after each readout")
    parser.add_argument("--workers", type=int, default=None, help="processes for --sweep")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)

    try:
        cfg = ExperimentConfig.from_json(args.config)
        if args.sweep:
            if args.out is None:
                raise ConfigError("--sweep needs --out; one file is written per sweep value")
            param, values = parse_sweep(args.sweep)
            cfgs = [cfg.with_path(param, float(v)) for v in values]
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(_run_one, cfgs))
            for v, res in zip(values, results):
                path = args.out.with_name(f"{args.out.stem}_{param}={v:g}{args.out.suffix}")
                _output(path, write_results, res)
                log.info("wrote %s", path)
            return 0

        diag_t, diag = [], []

        def observer(stage, step, t, state):
            if stage == "readout":
                diag_t.append(t)
                diag.append(np.diag(state.cov)[:11].copy())

        result = run_experiment(cfg, observer if args.diag_out else None)
        _output(args.out, write_results, result)
        if args.diag_out:
            _output(args.diag_out, write_diagonal, diag_t, diag)
        meta = {k: v for k, v in result.metadata.items() if k != "refinement"}
        log.info("metadata %s", json.dumps(meta, default=float))

        if args.oracle_check:
            rows, worst = oracle_trace(cfg, result.t)
            path = None if args.out is None else args.out.with_name(f"{args.out.stem}.oracle.csv")
            if path is None:
                buf = io.StringIO()
                write_oracle(rows, buf)
                sys.stderr.write(buf.getvalue())
            else:
                _output(path, write_oracle, rows)
            print(f"oracle check: max |engine - exact| = {worst:.3e}", file=sys.stderr)
            if worst > ORACLE_TOL:
                print(f"oracle check failed (tolerance {ORACLE_TOL:g})", file=sys.stderr)
                return 3
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
