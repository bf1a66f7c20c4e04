#!/usr/bin/env python3
"""Summarize a diagnostics.csv written by ``tripleflow run``.

Usage: python3 scripts/summarize_run.py RUN_DIR_OR_CSV [--every N]

Prints per-region volume drift and benchmark quantities, the energy
history, the worst energy-law slack and the junction positions.
"""

import argparse
import math
from pathlib import Path

import numpy as np

from tripleflow.diagnostics import moving_average, read_csv


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("path")
    p.add_argument("--every", type=int, default=10, help="print every N-th step")
    args = p.parse_args()
    path = Path(args.path)
    if path.is_dir():
        path = path / "diagnostics.csv"
    d = read_csv(path.read_text())
    n_reg = sum(1 for k in d if k.startswith("vol_"))
    n_jun = sum(1 for k in d if k.startswith("junction_") and k.endswith("_x"))
    t, E = d["t"], d["E"]
    print(f"{path}: {len(t) - 1} steps to t = {t[-1]:.6g}")
    slack = d["energy_slack"][1:]
    rel = slack / np.abs(E[1:])
    if rel.size:
        print(f"energy {E[0]:.10g} -> {E[-1]:.10g}; min slack/|E| = {np.nanmin(rel):.3e}")
    for ell in range(n_reg):
        vd = np.abs(d[f"vdelta_{ell}"]).max()
        print(
            f"region {ell}: vol {d[f'vol_{ell}'][0]:.6g}, max |v_delta| {vd:.2e}, "
            f"y_c {d[f'yc_{ell}'][0]:.4f} -> {d[f'yc_{ell}'][-1]:.4f}, V_c(T) {d[f'Vc_{ell}'][-1]:.4f}"
        )
    for k in range(n_jun):
        x = d[f"junction_{k}_x"]
        ma = moving_average(x, 5)
        trend = "increasing" if np.all(np.diff(ma) > 0) else "not monotone"
        print(f"junction {k}: x {x[0]:.5f} -> {x[-1]:.5f} (5-sample average {trend})")
    print("step        t            E      u_max  picard")
    for i in range(0, len(t), max(args.every, 1)):
        pi = d["picard_iters"][i]
        print(f"{int(d['step'][i]):4d}  {t[i]:9.4f}  {E[i]:12.8g}  {d['u_max'][i]:9.3e}  {'' if math.isnan(pi) else int(pi)}")


if __name__ == "__main__":
    main()
