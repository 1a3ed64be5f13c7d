"""Per-frame wrist-load data for plotting BACH next to RULA and HAL.

Writes one CSV per hand with tick, time, torque, flexion angle, scaling factor
and the three scores, plus the flexion-capacity curve used for scaling.

    python3 scripts/bach_figure_data.py --spec scripts/demo.cfg --out results/bach
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from ergorisk.bach import BachParams, bach_series, m_flex
from ergorisk.hal import hal_series
from ergorisk.rula import rula_series
from ergorisk.sync import synchronize
from ergorisk.synth import generate_synthetic_trial, load_scenario, participant_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", help="scenario INI; default is a 60 s stock stringer trial")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--torque-mode", choices=("magnitude", "flexion"), default="magnitude")
    ap.add_argument("--out", default="results/bach")
    args = ap.parse_args()

    spec = load_scenario(args.spec) if args.spec else participant_scenario("P01", "stringer", 60.0, args.seed)
    trial = synchronize(generate_synthetic_trial(spec, args.seed))
    bach, diag = bach_series(trial, params=BachParams(args.torque_mode), with_diagnostics=True)
    rula = rula_series(trial)
    hal = hal_series(trial)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for side in ("left", "right"):
        with open(out / f"{side}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tick", "t", "tau", "theta", "alpha", "bach", "rula", "hal"])
            for k in range(len(trial)):
                w.writerow([k, repr(float(trial.t[k])), repr(float(diag.tau[side][k])),
                            repr(float(diag.theta[side][k])), repr(float(diag.alpha[side][k])),
                            repr(float(bach.side(side)[k])), int(rula.side(side)[k]),
                            repr(float(hal.side(side)[k]))])
        print(f"{side}: median torque {diag.tau_median[side]:.4f} N m -> {out / (side + '.csv')}")

    theta = np.linspace(-89.5, 89.5, 359)
    np.savetxt(out / "m_flex.csv", np.column_stack([theta, m_flex(theta)]), delimiter=",",
               header="theta,m_flex", comments="", fmt="%.6f")


if __name__ == "__main__":
    main()
