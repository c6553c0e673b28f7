"""Small-time behaviour of Str[f0 [D,f1] [D,f2] e^{-tD^2}] on the flat torus."""
from __future__ import annotations

import math

from eqindex.oracle import TorusModel, TrigPoly, geometric_grid, smalltime_fit, torus_pk_series, transverse_integral


def main() -> None:
    fs = [TrigPoly.cos((1, 0)) * TrigPoly.cos((0, 1)) + TrigPoly.const(0.5),
          TrigPoly.sin((1, 0)) + TrigPoly.cos((0, 1), 0.3), TrigPoly.sin((0, 1))]
    model = TorusModel((0, 0), 40)
    tg = geometric_grid(0.1, 0.5, 10)
    vals = torus_pk_series(model, fs, None, tg)
    print(f"{'t':>8} {'Im Str':>16} {'t * Im Str':>16}")
    for t, v in zip(tg, vals):
        print(f"{t:8.4f} {v.imag:16.10f} {t * v.imag:16.10f}")
    fit = smalltime_fit(vals, tg, -1, 6)
    pred = -1j / (2 * math.pi) * transverse_integral(fs)
    print(f"fitted t^-1 coefficient   {fit['coefficients'][-1]:.10f}")
    print(f"local formula prediction  {pred:.10f}")
    alpha = smalltime_fit(torus_pk_series(model, fs, (1, 0), tg), tg, -2, 6)["coefficients"][-2]
    print(f"one iterated commutator: fitted t^-2 coefficient {abs(alpha):.2e}")


if __name__ == "__main__":
    main()
