"""Recover a hidden measurement, a constant map and a segment map on one system.

Run with ``python demos/single_system.py``.
"""

import numpy as np

from canonmap import classify_single, constant_map, measurement_map, random_pure, segment_map
from canonmap.classify import gauge_fix
from canonmap.maps import SegmentSpec


def main():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
    hidden = measurement_map(m, transpose=True)

    rep = classify_single(hidden, seed=1)
    print(f"measurement oracle -> {rep.form.variant}, transpose flag {rep.form.transpose_flag}")
    print(f"  operator error after gauge fixing: {np.max(np.abs(rep.form.m - gauge_fix(m))):.2e}")
    print(f"  reconstruction residual: {rep.form.residual:.2e}")
    print(f"  samples used: {rep.samples_used}")

    q = random_pure(3, rng)
    rep = classify_single(constant_map(q, (2,)))
    print(f"constant oracle -> {rep.form.variant}, state error {np.max(np.abs(rep.form.q.mat - q.mat)):.2e}")

    rep = classify_single(segment_map(SegmentSpec(random_pure(2, rng), random_pure(2, rng))))
    print(f"segment oracle -> {rep.form.variant}, {len(rep.form.h_samples)} sampled partition values")


if __name__ == "__main__":
    main()
