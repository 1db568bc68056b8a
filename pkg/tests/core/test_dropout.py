"""
dropout 测试
"""
import numpy as np
import pytest

from src.core.dropout import dropout_apply, dropout_mask


def test_keep_one_is_identity():
    x = np.arange(6.0)
    assert dropout_apply(x, 1.0, np.random.default_rng(0)) is x
    assert dropout_mask((3,), 1.0, None) is None


def test_evaluation_mode_is_identity():
    x = np.ones(10)
    np.testing.assert_array_equal(dropout_apply(x, 0.5, np.random.default_rng(0), training=False), x)


def test_expectation_preserved():
    rng = np.random.default_rng(1)
    masked = dropout_apply(np.ones(100000), 0.75, rng)
    assert abs(masked.mean() - 1.0) <= 0.01


def test_kept_fraction_concentrates():
    rng = np.random.default_rng(2)
    masked = dropout_apply(np.ones(1000000), 0.75, rng)
    assert abs(np.count_nonzero(masked) / masked.size - 0.75) <= 0.005
    assert set(np.unique(masked)) <= {0.0, 1.0 / 0.75}


def test_seeded_masks_repeat():
    a = dropout_mask((4, 5), 0.6, np.random.default_rng(3))
    b = dropout_mask((4, 5), 0.6, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("keep", [0.0, -0.5, 1.5])
def test_invalid_keep_probability(keep):
    with pytest.raises(ValueError):
        dropout_apply(np.ones(3), keep, np.random.default_rng(0))


def test_requires_generator_when_dropping():
    with pytest.raises(ValueError):
        dropout_apply(np.ones(3), 0.5)
