from fractions import Fraction

import numpy as np
import pytest

from fairrecon import DiscreteChannel, DiscreteModel, GroupCollection

CATDOG_PRIOR = (Fraction(1, 5), Fraction(4, 5))
CATDOG_KERNEL = ((Fraction(2, 3), Fraction(1, 3)), (Fraction(1, 3), Fraction(2, 3)))


@pytest.fixture
def catdog():
    model = DiscreteModel([0.2, 0.8], ("cat", "dog"))
    channel = DiscreteChannel([[2 / 3, 1 / 3], [1 / 3, 2 / 3]], ("y1", "y2"))
    groups = GroupCollection(("cat", "dog"), ([0], [1]))
    return model, channel, groups


def random_model(rng, n_states, n_symbols):
    prior = rng.dirichlet(np.ones(n_states))
    kernel = rng.dirichlet(np.ones(n_symbols), size=n_states)
    return DiscreteModel(prior), DiscreteChannel(kernel)


def random_partition(rng, n_states, k):
    labels = np.concatenate([np.arange(k), rng.integers(0, k, n_states - k)])
    rng.shuffle(labels)
    return GroupCollection.from_labels([f"g{v}" for v in labels], [f"g{i}" for i in range(k)])
