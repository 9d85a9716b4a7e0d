import pytest
from numpy.random import Generator, default_rng

from cmdp_alm.run_config import RunConfig


@pytest.mark.parametrize(
    "seed, expected_equivalence",
    (
        [42, True],
        [None, False],
    ),
)
def test_random_num_generator(seed, expected_equivalence):
    rc = RunConfig(seed=seed)

    # Check type
    assert isinstance(rc.rng, Generator)

    # Check generated value
    rng = default_rng(seed=seed)
    assert (rc.rng.random() == rng.random()) == expected_equivalence


def test_spawned_generators_depend_on_seed_and_index_only():
    first = RunConfig(seed=7, max_workers=1).spawn_rng(3).random(4)
    second = RunConfig(seed=7, max_workers=8).spawn_rng(3).random(4)
    other = RunConfig(seed=7).spawn_rng(4).random(4)
    assert list(first) == list(second)
    assert list(first) != list(other)


@pytest.mark.parametrize("max_workers", [0, -2])
def test_max_workers_validation(max_workers):
    with pytest.raises(ValueError):
        RunConfig(max_workers=max_workers)
