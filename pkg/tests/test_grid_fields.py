import numpy as np
import pytest

from finslerlab.errors import DomainError
from finslerlab.fields import ModeField
from finslerlab.grid import ScalarField, TorusGrid, sample


def test_geometry():
    g = TorusGrid(2, 16, 2.0)
    assert g.h == 0.125 and g.shape == (16, 16) and g.size == 256
    assert g.nodes().shape == (256, 2)
    assert g.snap([1.99, 0.06]) == (0, 0)
    assert g.refine().m == 32


@pytest.mark.parametrize("kw", [dict(n=1, m=16), dict(n=2, m=4), dict(n=2, m=16, L=0.0)])
def test_invalid_grid(kw):
    with pytest.raises(DomainError):
        TorusGrid(**kw)


def test_integral_of_constant_is_volume():
    g = TorusGrid(3, 8, 1.5)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(1.5**3)


def test_central_difference_order():
    errs = []
    for m in (16, 32):
        g = TorusGrid(2, m)
        u = sample(g, lambda X: np.sin(2 * np.pi * X[..., 0]))
        exact = 2 * np.pi * np.cos(2 * np.pi * g.coords()[..., 0])
        errs.append(np.max(np.abs(g.diff(u.values, 0) - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_mode_field_values():
    f = ModeField(1.0, [(0.5, [1, 0], 0.0), (0.25, [0, 2], 0.3)])
    X = np.array([[0.1, 0.2]])
    expected = 1.0 + 0.5 * np.cos(2 * np.pi * 0.1) + 0.25 * np.cos(2 * np.pi * 0.4 + 0.3)
    assert f(X)[0] == pytest.approx(expected)


def test_scalar_field_shape_check():
    with pytest.raises(DomainError):
        ScalarField(TorusGrid(2, 8), np.zeros((8, 9)))
