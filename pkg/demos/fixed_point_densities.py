"""Local densities of the shipped fixed-point fixtures, by both evaluation routes."""
from __future__ import annotations

import json
from pathlib import Path

from eqindex.density import density_via_model, load_fixed_points, local_density

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def main() -> None:
    for name in ("identity", "involution", "curved", "sphere_rotation"):
        comps = load_fixed_points(json.loads((FIXTURES / f"{name}.json").read_text()))
        total = 0j
        for c in comps:
            d = complex(local_density(c)) * c.weight
            m = complex(density_via_model(c)) * c.weight
            total += d
            print(f"{name:16} {c.label or '-':28} a={c.a} b={c.b} s={c.lift_sign:+d} {d:.10f} | model {m:.10f}")
        print(f"{name:16} total {total:.10f}")


if __name__ == "__main__":
    main()
