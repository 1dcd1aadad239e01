#!/usr/bin/env python3
"""Temporal convergence sweep: cGP(k) on a fixed mesh, slab count doubling.

Writes out/time_k{K}/study_time.csv and a pass/fail summary.
"""

import sys

from biotcgp.cli import RunConfig, run

if __name__ == "__main__":
    k = int(sys.argv[1]) if len(sys.argv) > 1 else 1
    cfg = RunConfig(mode="time-study", k=k, ell=0, levels=4,
                    base_slabs=4 if k == 1 else 2, base_mesh=4, omega=4.0,
                    out_dir=f"out/time_k{k}")
    sys.exit(run(cfg))
