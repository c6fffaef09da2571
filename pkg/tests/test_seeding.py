import numpy as np
import pytest

from flbounds.errors import ParameterError
from flbounds.seeding import SeedPath


def test_same_path_same_stream():
    a = SeedPath(7).child("data", 3, "cell", 1).generator().integers(0, 1 << 30, 100)
    b = SeedPath(7).child("data", 3, "cell", 1).generator().integers(0, 1 << 30, 100)
    assert np.array_equal(a, b)


def test_different_paths_differ():
    a = SeedPath(7).child("data", 3).generator().integers(0, 1 << 30, 100)
    b = SeedPath(7).child("data", 4).generator().integers(0, 1 << 30, 100)
    c = SeedPath(8).child("data", 3).generator().integers(0, 1 << 30, 100)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_draw_independent_of_execution_order():
    # drawing from one path must not perturb another path's stream
    first = SeedPath(0).child("a").generator().standard_normal(5)
    SeedPath(0).child("b").generator().standard_normal(1000)
    again = SeedPath(0).child("a").generator().standard_normal(5)
    assert np.array_equal(first, again)


def test_string_and_int_components_mix():
    p = SeedPath(1).child("grid", 0, "cell", 2, 1)
    assert p.path == ("grid", 0, "cell", 2, 1)


@pytest.mark.parametrize("bad", [-1, 1.5, None, b"bytes"])
def test_invalid_components_rejected(bad):
    with pytest.raises(ParameterError):
        SeedPath(0).child(bad).generator()
