"""Classify local maps on two and three factors.

Run with ``python demos/tensor_products.py``.
"""

import numpy as np

from canonmap import classify_bipartite, classify_multipartite
from canonmap.maps import ConstantSlot, MeasurementOp, MeasureSlot, local_map, local_measurement_map
from canonmap.states import random_pure


def op(rng, k, m, flag=False):
    return MeasurementOp(rng.normal(size=(k, m)) + 1j * rng.normal(size=(k, m)), flag)


def main():
    rng = np.random.default_rng(0)

    # swap wiring with a partial transpose on the second output slot
    swapped = local_measurement_map([op(rng, 3, 3), op(rng, 3, 2, True)], perm=(1, 0))
    form = classify_bipartite(swapped).form
    print(f"swap oracle -> form {form.form_number}, pi {form.pi}, flags {form.flags}")

    # one output slot held constant, the other measuring the second input
    mixed = local_map([ConstantSlot(random_pure(2, rng)), MeasureSlot(1, op(rng, 2, 2))], (2, 2))
    form = classify_bipartite(mixed).form
    print(f"constant-slot oracle -> form {form.form_number}, reads {[(j, p) for j, p, _ in form.reads]}")

    # three qubits wired by a cyclic permutation
    cyclic = local_measurement_map([op(rng, 2, 2, bool(f)) for f in (0, 1, 0)], perm=(2, 0, 1))
    rep = classify_multipartite(cyclic)
    print(f"tripartite oracle -> pi {rep.form.pi}, flags {rep.form.flags}, residual {rep.form.residual:.1e}")


if __name__ == "__main__":
    main()
