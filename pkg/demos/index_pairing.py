"""Cocycle pairing with a degree-d projection on the torus against a brute-force index."""
from __future__ import annotations

from eqindex.oracle import TorusModel, brute_force_index, torus_pairing, truncated_projection


def main() -> None:
    for degree, cutoffs in ((1, (12, 20, 30)), (2, (24, 32))):
        for c in cutoffs:
            tp = truncated_projection(TorusModel((1, 1), c), degree)
            pairing = torus_pairing(tp)
            print(f"degree {degree} cutoff {c:3d}: chern {tp.chern:+.6f} pairing {pairing.real:+.6f} "
                  f"idempotent defect {tp.idempotent_defect:.1e}")
        bf = brute_force_index(tp)
        print(f"degree {degree} brute-force index {bf['index']:+d} (kernel {bf['kernel']}, cokernel {bf['cokernel']}, "
              f"gap {bf['gap']:.3f})")


if __name__ == "__main__":
    main()
