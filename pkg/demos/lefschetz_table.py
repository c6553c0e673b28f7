"""Lefschetz numbers of torus rotations and sphere rotations, three routes each."""
from __future__ import annotations

import math

from eqindex.oracle import SphereModel, SphereRotation, TorusIsometry, TorusModel, lefschetz_number


def main() -> None:
    print(f"{'geometry':10} {'map':12} {'spin':7} {'kernel':>20} {'heat (t=0.05)':>20} {'fixed points':>20} agree")
    for delta in ((0, 0), (1, 1)):
        for q, name in ((1, "rot 90"), (2, "x -> -x"), (3, "rot 270")):
            res = lefschetz_number(TorusModel(delta, 40), TorusIsometry.rotation(q))
            print(f"{'torus':10} {name:12} {str(delta):7} {res['kernel']:>20.10f} {res['heat'][0]:>20.10f} "
                  f"{res['density']:>20.10f} {res['agree']}")
    for theta in (math.pi / 7, math.pi / 2, math.pi):
        res = lefschetz_number(SphereModel(), SphereRotation(theta))
        print(f"{'sphere':10} {f'rot {theta:.4f}':12} {'-':7} {res['kernel']:>20.10f} {res['heat'][0]:>20.10f} "
              f"{res['density']:>20.10f} {res['agree']}")


if __name__ == "__main__":
    main()
