"""Complement component counts of the B_t bundle cone over a range of t.

    python scripts/bt_sweep.py --start -3 --stop 2 --steps 21 --grid 128
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from dirbundle.experiments import BT_BUNDLE, BT_EXPECTED, bt_link
from dirbundle.topology import SphericalGrid, complement_components, planar_section_components, rasterize_cone


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--start", type=float, default=-3.0)
    parser.add_argument("--stop", type=float, default=2.0)
    parser.add_argument("--steps", type=int, default=11)
    parser.add_argument("--grid", type=int, default=128, help="cube-face cells")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--thickness", type=float, default=BT_BUNDLE["thickness_deg"], help="degrees")
    args = parser.parse_args(argv)

    thickness = math.radians(args.thickness)
    grid = SphericalGrid(3, args.grid)
    print(f"{'t':>7s} {'m1':>4s} {'m':>4s} {'stable':>6s}  expected")
    for t in np.linspace(args.start, args.stop, args.steps):
        t = float(round(t, 6))
        link = bt_link(t, args.seed).limit
        sphere = complement_components(rasterize_cone(link, grid, thickness))
        plane = planar_section_components(link, 1.0, thickness=thickness)
        want = BT_EXPECTED.get(t)
        note = f"m1={want[0]} m={want[1]}" if want else ""
        print(f"{t:7.3f} {plane.component_count:4d} {sphere.component_count:4d} "
              f"{str(sphere.stable and plane.stable):>6s}  {note}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
