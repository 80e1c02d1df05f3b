"""Split var(phi) into field-noise, atom-number-noise and quantum contributions.

Runs the configuration four times (all noise; no field noise; no atom-number
noise; neither) and writes one CSV with the variance traces side by side.

    python3 scripts/noise_attribution.py configs/fid_single.json --out results/noise.csv
"""
import argparse
import csv
import sys
from pathlib import Path

from spin1gauss.harness import ExperimentConfig, run_experiment
from spin1gauss.harness.analysis import window_max

VARIANTS = {
    "all": {},
    "no_field_noise": {"field_noise": False},
    "no_number_noise": {"atom_number_noise": False},
    "quantum_only": {"field_noise": False, "atom_number_noise": False},
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results/noise_attribution.csv"))
    ap.add_argument("--probe-us", type=float, nargs="+", default=[50.0, 800.0],
                    help="report the largest variance within +-25 us of these times")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig.from_json(args.config)
    runs = {k: run_experiment(cfg.replace(toggles=v)).select("h") for k, v in VARIANTS.items()}
    t = runs["all"].t
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s"] + [f"phi_var_{k}_rad2" for k in VARIANTS])
        for i, ti in enumerate(t):
            w.writerow([repr(float(ti))] + [repr(float(runs[k].phi_var[i])) for k in VARIANTS])

    print(f"{'t [us]':>8} " + " ".join(f"{k:>16}" for k in VARIANTS) + "   [mrad^2]")
    for tp in args.probe_us:
        lo, hi = (tp - 25) * 1e-6, (tp + 25) * 1e-6
        vals = [window_max(runs[k].t, runs[k].phi_var, lo, hi) * 1e6 for k in VARIANTS]
        print(f"{tp:8.0f} " + " ".join(f"{v:16.4g}" for v in vals))
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
