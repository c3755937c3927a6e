"""Regenerate the embedded Sobol direction-number table.

Extracts the first 64 dimensions of the Joe-Kuo initialization data that
ships with scipy (scipy/stats/_sobol_direction_numbers.npz) and prints
them as a plain tuple of (s, a, m) entries.  Dimension 1 needs no entry;
it is the van der Corput sequence in base 2.

Usage: python3 scripts/gen_sobol_table.py > src/smoothquad/_sobol_table.py
"""

import os

import numpy as np
import scipy.stats._sobol as _sobol_mod

MAX_DIM = 64


def main():
    path = os.path.join(
        os.path.dirname(_sobol_mod.__file__), "_sobol_direction_numbers.npz"
    )
    data = np.load(path)
    poly = data["poly"]
    vinit = data["vinit"]

    entries = []
    for j in range(1, MAX_DIM):
        p = int(poly[j])
        s = p.bit_length() - 1
        # strip the trailing coefficient, then the leading one
        a = (p >> 1) ^ (1 << (s - 1))
        m = tuple(int(x) for x in vinit[j, :s])
        assert all(v % 2 == 1 and v < (1 << (k + 1)) for k, v in enumerate(m))
        entries.append((s, a, m))

    print('"""Joe-Kuo style Sobol direction numbers for dimensions 2..64.')
    print()
    print("Generated by scripts/gen_sobol_table.py; do not edit by hand.")
    print("Each entry is (s, a, m): primitive-polynomial degree, encoded")
    print("middle coefficients, and the first s initialization integers.")
    print('"""')
    print()
    print("SOBOL_MAX_DIM = 64")
    print()
    print("DIRECTION_DATA = (")
    for s, a, m in entries:
        print(f"    ({s}, {a}, {m!r}),")
    print(")")


if __name__ == "__main__":
    main()
