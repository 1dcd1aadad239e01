#!/usr/bin/env python3
"""One simulation with the default manufactured solution; writes VTK
snapshots at every slab endpoint plus the error table and audit summary."""

import sys

from biotcgp.cli import RunConfig, run

if __name__ == "__main__":
    cfg = RunConfig(mode="single-run", k=1, ell=0, base_mesh=8, base_slabs=8,
                    omega=4.0, out_dir="out/single")
    sys.exit(run(cfg))
