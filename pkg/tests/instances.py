"""Metric instances shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from finslerlab import metric as M
from finslerlab.fields import AnalyticField, ModeField, StackedField

from oracles import lambdify_field, riemannian_sample_exprs

DRIFT = 0.3


def rotating_randers(amplitude: float = DRIFT):
    """F = |y| + b(y) with b = amplitude * (cos, sin)(2 pi x1), so ||b|| = amplitude everywhere."""
    b = StackedField(
        [ModeField(0.0, [(amplitude, [1, 0], 0.0)]), ModeField(0.0, [(amplitude, [1, 0], -np.pi / 2)])], (2,)
    )
    return M.randers(None, b)


def sample_riemannian():
    G = riemannian_sample_exprs()
    comps = [AnalyticField(lambdify_field(G[i, j])) for i in range(2) for j in range(2)]
    return M.riemannian(StackedField(comps, (2, 2)))


CONFORMAL_MODES = [(0.1, [1, 0], 0.0), (0.05, [0, 1], 0.3)]


def sample_conformal():
    return M.conformal(ModeField(0.0, CONFORMAL_MODES))


def general_randers():
    """Non-identity a and a spatially varying b, for the algebraic tests."""
    a = np.array([[1.5, 0.3], [0.3, 0.8]])
    b = StackedField([ModeField(0.1, [(0.3, [1, 0], 0.0)]), ModeField(0.0, [(0.4, [1, 1], -np.pi / 2)])], (2,))
    return M.randers(a, b)


def all_families():
    return {
        "euclidean": M.euclidean(2),
        "riemannian": sample_riemannian(),
        "randers": general_randers(),
        "conformal": sample_conformal(),
    }
