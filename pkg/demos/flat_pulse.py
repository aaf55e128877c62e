"""
Flat-space pulse traced from the initial slice to future null infinity.

Prints the relative L2 error against the exact profile at three resolutions
and the observed convergence order.
"""

import math

from scri_scatter.cli import run_evolve_cauchy
from scri_scatter.config import load_config


def main():
    base = load_config("evolve-cauchy")
    errs = []
    for k in range(3):
        cfg = base.refined(k)
        err = run_evolve_cauchy(cfg).summary["rel_l2_vs_exact"]
        errs.append(err)
        print(f"Nu = {cfg.grid.Nu:5d}  dr = {cfg.grid.dr:.4f}  rel L2 error = {err:.3e}")
    print(f"observed order: {math.log2(errs[1] / errs[2]):.3f}")


if __name__ == "__main__":
    main()
