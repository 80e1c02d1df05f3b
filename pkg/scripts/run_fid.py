"""Run one FID configuration, fit the precession signal and write the per-pulse records.

    python3 scripts/run_fid.py configs/fid_single.json --out results/fid_single.csv
"""
import argparse
import sys
from pathlib import Path

from spin1gauss.harness import ExperimentConfig, run_experiment
from spin1gauss.harness.analysis import fit_damped_cosine, rotation_angle
from spin1gauss.harness.cli import write_results


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results/fid.csv"))
    ap.add_argument("--fit-window-us", type=float, default=None,
                    help="fit only records up to this time (default: all)")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig.from_json(args.config)
    res = run_experiment(cfg).select("h")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        write_results(res, fh)

    t, y = res.t, rotation_angle(res.phi_mean)
    if args.fit_window_us is not None:
        sel = t <= args.fit_window_us * 1e-6
        t, y = t[sel], y[sel]
    fit = fit_damped_cosine(t, y, res.metadata["larmor_frequency_hz"])
    print(f"config       {cfg.name} ({res.metadata['config_hash']})")
    print(f"records      {len(res.records)} -> {args.out}")
    print(f"Larmor       {res.metadata['larmor_frequency_hz']:.1f} Hz from |B|")
    print(f"fit          f = {fit.frequency_hz:.1f} Hz, T = {fit.decay_time_s * 1e6:.1f} us, "
          f"A = {fit.amplitude:.4f} rad, rms residual {fit.rms_residual:.2e}")
    ref = res.metadata["tau_gauss_reference_s"]
    print(f"tau_gauss    {res.metadata['tau_gauss_s'] * 1e3:.3f} ms"
          + ("" if ref is None else f" (reference value {ref * 1e3:.3f} ms)"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
