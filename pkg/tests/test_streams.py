import numpy as np
import pytest

from viab_qt.streams import as_generator, substream


def test_same_key_same_stream():
    a = substream(42, "mild", 3).standard_normal(8)
    b = substream(42, "mild", 3).standard_normal(8)
    np.testing.assert_array_equal(a, b)


def test_distinct_keys_differ():
    a = substream(42, "mild", 3).standard_normal(8)
    b = substream(42, "mild", 4).standard_normal(8)
    c = substream(43, "mild", 3).standard_normal(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_string_labels_are_stable():
    a = substream(7, "tangency", 0).integers(0, 1 << 30, 4)
    b = substream(7, "tangency", 0).integers(0, 1 << 30, 4)
    np.testing.assert_array_equal(a, b)


def test_negative_key_rejected():
    with pytest.raises(ValueError):
        substream(1, -3)


def test_as_generator_passthrough():
    gen = substream(1, "x")
    assert as_generator(gen) is gen
    fresh = as_generator(5, "y")
    np.testing.assert_array_equal(fresh.standard_normal(3),
                                  substream(5, "y").standard_normal(3))
