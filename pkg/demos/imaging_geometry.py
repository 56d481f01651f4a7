"""Lens focal lengths that bring each reference arm into focus.

Uses the beam wave numbers of the two-slit experiments (k1 = 6e4 /cm,
k3 = 1.7e5 /cm) and lets you pick the distances.  For the up-conversion
arm the effective object distance can vanish or turn negative; those
geometries cannot image and are reported as such.

    python demos/imaging_geometry.py --l11 3 --l12 5 --l1 10 --l2 20
"""

import argparse

import numpy as np

from mgi.errors import ImagingImpossibleError
from mgi.optics import (
    OpticalSetup,
    ReferenceArm,
    effective_object_distance,
    imaging_condition_residual,
    magnification,
    required_focal_length,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k1", type=float, default=6e4)
    ap.add_argument("--k3", type=float, default=1.7e5)
    ap.add_argument("--l11", type=float, default=3.0, help="crystal to object, cm")
    ap.add_argument("--l12", type=float, default=5.0, help="object to bucket, cm")
    ap.add_argument("--l1", type=float, default=10.0, help="crystal to lens in every reference arm, cm")
    ap.add_argument("--l2", type=float, default=20.0, help="lens to detector, cm")
    args = ap.parse_args()

    arm = ReferenceArm(args.l1, args.l2)
    setup = OpticalSetup.from_frequency_relations(args.k1, args.k3, args.l11, args.l12,
                                                  {2: arm, 3: arm, 4: arm})
    print(f"k2 = {setup.k2:g} /cm, k4 = {setup.k4:g} /cm")
    for j in (2, 3, 4):
        d = effective_object_distance(setup, j)
        try:
            fl = required_focal_length(setup, j)
        except ImagingImpossibleError as exc:
            print(f"arm {j}: effective object distance {d:.4g} cm -> {exc}")
            continue
        res = imaging_condition_residual(setup, j, fl)
        print(f"arm {j}: d_eff {d:.4g} cm, f {fl:.6g} cm, magnification {magnification(setup, j):.4g}"
              f" (residual {res:.1e})")

    # Sweep the lens position in the up-conversion arm to show where it
    # stops imaging: d_eff = l1 - (lambda1/lambda3) l11 crosses zero.
    print("\narm 3, lens position sweep:")
    for l1 in np.linspace(0.5 * args.l1, 1.5 * args.l1, 5):
        s = OpticalSetup.from_frequency_relations(args.k1, args.k3, args.l11, args.l12,
                                                  {3: ReferenceArm(l1, args.l2)})
        try:
            print(f"  l1 = {l1:6.3f} cm -> f = {required_focal_length(s, 3):.5g} cm")
        except ImagingImpossibleError:
            print(f"  l1 = {l1:6.3f} cm -> no real image")


if __name__ == "__main__":
    main()
