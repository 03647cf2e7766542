import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import all_families, general_randers
from finslerlab import metric as M
from finslerlab.errors import DomainError, StrongConvexityError

FAMILIES = all_families()
coord = st.floats(0.0, 1.0)
comp = st.floats(-3.0, 3.0).filter(lambda v: abs(v) > 1e-3)


def test_euclidean_is_norm():
    y = np.array([3.0, 4.0])
    assert M.eval_metric(M.euclidean(2), np.zeros(2), y) == pytest.approx(5.0)


def test_randers_value_matches_definition():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    b = np.array([0.3, -0.2])
    F = M.randers(a, b)
    y = np.array([0.7, -1.1])
    assert M.eval_metric(F, np.zeros(2), y) == pytest.approx(np.sqrt(y @ a @ y) + b @ y, rel=1e-14)


def test_conformal_scales_euclidean():
    F = M.conformal(0.4)
    y = np.array([1.0, 2.0])
    assert M.eval_metric(F, np.zeros(2), y) == pytest.approx(np.exp(0.4) * np.sqrt(5.0))


@pytest.mark.parametrize("name", sorted(FAMILIES))
@settings(max_examples=30, deadline=None)
@given(x1=coord, x2=coord, y1=comp, y2=comp, lam=st.floats(0.01, 50.0))
def test_positive_homogeneity(name, x1, x2, y1, y2, lam):
    F = FAMILIES[name]
    x, y = np.array([x1, x2]), np.array([y1, y2])
    assert M.eval_metric(F, x, lam * y) == pytest.approx(lam * M.eval_metric(F, x, y), rel=1e-12)
    np.testing.assert_allclose(M.fundamental_tensor(F, x, lam * y), M.fundamental_tensor(F, x, y), rtol=1e-9, atol=1e-12)


def test_randers_is_not_reversible():
    F = general_randers()
    x, y = np.array([0.2, 0.3]), np.array([1.0, 0.5])
    assert M.eval_metric(F, x, y) != pytest.approx(M.eval_metric(F, x, -y))


def test_closed_form_legendre_agrees_with_newton(rng):
    F = general_randers()
    X = rng.uniform(0, 1, (200, 2))
    xi = rng.normal(size=(200, 2))
    np.testing.assert_allclose(M.legendre_dual(F, X, xi), M.legendre_dual(F, X, xi, method="newton"), atol=1e-9)


def test_dual_norm_is_support_function(rng):
    # F*(xi) = max of xi(v) over the F-unit circle, sampled by brute force
    F = general_randers()
    x = np.array([0.3, 0.7])
    ang = np.linspace(0, 2 * np.pi, 20001)
    V = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    V = V / M.eval_metric(F, np.tile(x, (len(V), 1)), V)[:, None]
    for xi in rng.normal(size=(5, 2)):
        assert M.dual_norm(F, x, xi) == pytest.approx(np.max(V @ xi), rel=1e-6)


def test_zero_covector_maps_to_zero():
    np.testing.assert_array_equal(M.legendre_dual(general_randers(), np.zeros(2), np.zeros(2)), np.zeros(2))


def test_zero_direction_is_rejected():
    with pytest.raises(DomainError):
        M.fundamental_tensor(M.euclidean(2), np.zeros(2), np.zeros(2))


def test_randers_admissibility():
    M.randers(None, [0.5, 0.0]).check_admissible()
    with pytest.raises(StrongConvexityError):
        M.randers(None, [1.0, 0.0]).check_admissible()


def test_indefinite_riemannian_rejected():
    with pytest.raises(StrongConvexityError):
        M.riemannian(np.array([[1.0, 0.0], [0.0, -1.0]])).check_admissible()
