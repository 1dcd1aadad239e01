#!/usr/bin/env python3
"""Spatial convergence sweep on h = 1/4 .. 1/32 with tau fixed small.

Writes out/space_ell{L}/study_space.csv and a pass/fail summary; the summary
includes the tau-halving subdominance check and the conservation audit.
"""

import sys

from biotcgp.cli import RunConfig, run

if __name__ == "__main__":
    ell = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    cfg = RunConfig(mode="space-study", k=2, ell=ell, levels=4, base_slabs=8,
                    base_mesh=4, omega=2.0, out_dir=f"out/space_ell{ell}")
    sys.exit(run(cfg))
