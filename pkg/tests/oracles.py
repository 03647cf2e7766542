"""Independent reference computations used by the tests (sympy and spectral numpy)."""

from __future__ import annotations

import numpy as np
import sympy as sp

X1, X2 = sp.symbols("x1 x2", real=True)
TWO_PI = 2 * sp.pi


def riemannian_sample_exprs():
    """A non-diagonal, non-constant 2-D metric used across the curvature tests."""
    g11 = 1 + sp.Rational(1, 5) * sp.cos(TWO_PI * X1)
    g12 = sp.Rational(1, 10) * sp.sin(TWO_PI * (X1 + X2))
    g22 = 1 + sp.Rational(1, 5) * sp.sin(TWO_PI * X2)
    return sp.Matrix([[g11, g12], [g12, g22]])


def ricci_oracle(G: sp.Matrix):
    """Christoffel-based Ricci tensor R_ij of a 2-D metric, as a vectorized numpy callable."""
    xs = (X1, X2)
    n = 2
    Ginv = sp.simplify(G.inv())
    gamma = [[[sum(Ginv[k, l] * (sp.diff(G[l, i], xs[j]) + sp.diff(G[l, j], xs[i]) - sp.diff(G[i, j], xs[l]))
                   for l in range(n)) / 2 for j in range(n)] for i in range(n)] for k in range(n)]

    def riemann(a, b, c, d):  # R^a_{bcd}
        expr = sp.diff(gamma[a][b][d], xs[c]) - sp.diff(gamma[a][b][c], xs[d])
        expr += sum(gamma[a][c][e] * gamma[e][b][d] - gamma[a][d][e] * gamma[e][b][c] for e in range(n))
        return expr

    ric = [[sum(riemann(a, i, a, j) for a in range(n)) for j in range(n)] for i in range(n)]
    fns = [[sp.lambdify((X1, X2), ric[i][j], "numpy") for j in range(n)] for i in range(n)]

    def evaluate(X):
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[:-1] + (2, 2))
        for i in range(2):
            for j in range(2):
                out[..., i, j] = np.broadcast_to(fns[i][j](X[..., 0], X[..., 1]), X.shape[:-1])
        return out

    return evaluate


def lambdify_field(expr):
    f = sp.lambdify((X1, X2), expr, "numpy")
    return lambda X: np.broadcast_to(f(np.asarray(X)[..., 0], np.asarray(X)[..., 1]), np.asarray(X).shape[:-1])


def conformal_flow_oracle(phi0: np.ndarray, L: float, T: float, steps: int) -> np.ndarray:
    """Solve d_t phi = e^{-2 phi} Lap phi with a spectral Laplacian and RK4."""
    m = phi0.shape[0]
    k = 2 * np.pi * np.fft.fftfreq(m, d=L / m)
    k2 = k[:, None] ** 2 + k[None, :] ** 2

    def rhs(p):
        lap = np.real(np.fft.ifft2(-k2 * np.fft.fft2(p)))
        return np.exp(-2 * p) * lap

    # RK4 on the stiffest Fourier mode needs |lambda dt| below about 2.7
    lam = float(np.max(k2) * np.max(np.exp(-2 * phi0)))
    steps = max(steps, int(np.ceil(T * lam / 2.0)))
    dt = T / steps
    p = phi0.copy()
    for _ in range(steps):
        a = rhs(p)
        b = rhs(p + 0.5 * dt * a)
        c = rhs(p + 0.5 * dt * b)
        d = rhs(p + dt * c)
        p = p + dt / 6 * (a + 2 * b + 2 * c + d)
    return p


def separable_heat(X, t, L=1.0, c=2.0, a=1.0):
    """u = c + a e^{-4 pi^2 t / L^2} sin(2 pi x1 / L) solves the flat heat equation."""
    return c + a * np.exp(-4 * np.pi**2 * t / L**2) * np.sin(2 * np.pi * X[..., 0] / L)
