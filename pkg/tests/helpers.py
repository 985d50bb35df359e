"""Seeded random 2-D multi-affine systems shared by property and acceptance tests."""
import itertools

import numpy as np

from qdaa.model import BiochemicalSystem, MultiAffineField, MultiAffineTerm, Partition

MONOMIALS = ((), (0,), (1,), (0, 1))


def random_system(seed: int) -> BiochemicalSystem:
    """Coefficients uniform in [-1, 1] on every monomial, thresholds {0,1,2,3}^2, one random initial cell."""
    rng = np.random.default_rng(seed)
    comps = tuple(tuple(MultiAffineTerm(float(c), m) for c, m in zip(rng.uniform(-1, 1, 4), MONOMIALS))
                  for _ in range(2))
    partition = Partition(((0.0, 1.0, 2.0, 3.0), (0.0, 1.0, 2.0, 3.0)))
    cells = list(itertools.product(range(3), repeat=2))
    initial = (cells[int(rng.integers(len(cells)))],)
    return BiochemicalSystem(MultiAffineField(2, comps), partition, initial, ("x", "y"), name=f"random{seed}")
