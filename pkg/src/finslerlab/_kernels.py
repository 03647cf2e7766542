"""Pointwise jax kernels behind the metric and curvature modules.

y-derivatives are taken by automatic differentiation (exact); x-derivatives
are central differences of step ``h`` over a *patch*: the metric parameters
sampled at ``x + o*h`` for a fixed set of integer offsets ``o``. Patches are
dicts ``name -> array(n_offsets, *param_shape)``; the offset order is given
by :func:`star` (spray) and :func:`block` (curvature).
"""

from __future__ import annotations

from functools import lru_cache

import jax
import jax.numpy as jnp

jax.config.update("jax_enable_x64", True)

FAMILIES = ("euclidean", "riemannian", "randers", "conformal")

# batch sizes are padded to these buckets so each kernel compiles a few times at most
BUCKETS = (256, 2048, 16384)


def _pad(a, size):
    extra = size - a.shape[0]
    if extra == 0:
        return a
    return jnp.concatenate([a, jnp.repeat(a[-1:], extra, axis=0)])


def bucketed(fn, n_batched):
    """Call ``fn`` with its first ``n_batched`` arguments padded to a bucket size.

    Larger inputs are split into chunks of the biggest bucket. Outputs with a
    batch axis are trimmed back; scalar outputs take the max over chunks.
    """

    def call(*args):
        batched, rest = args[:n_batched], args[n_batched:]
        leaves = jax.tree_util.tree_leaves(batched)
        total = leaves[0].shape[0]
        top = BUCKETS[-1]
        pieces = []
        for start in range(0, max(total, 1), top):
            stop = min(start + top, total)
            size = next(b for b in BUCKETS if b >= stop - start)
            chunk = jax.tree_util.tree_map(lambda a: _pad(jnp.asarray(a)[start:stop], size), batched)
            out = fn(*chunk, *rest)
            pieces.append((out, stop - start))
        return _merge(pieces)

    return call


def _merge(pieces):
    def trim(out, k):
        return jax.tree_util.tree_map(lambda a: a[:k] if jnp.ndim(a) else a, out)

    trimmed = [trim(o, k) for o, k in pieces]
    if len(trimmed) == 1:
        return trimmed[0]
    return jax.tree_util.tree_map(
        lambda *xs: jnp.concatenate(xs) if jnp.ndim(xs[0]) else jnp.max(jnp.stack(xs)), *trimmed
    )


def f2(family, p, y):
    """Squared norm F(x, y)^2 from the parameters ``p`` at x."""
    if family == "euclidean":
        return y @ y
    if family == "riemannian":
        return y @ p["g"] @ y
    if family == "randers":
        alpha = jnp.sqrt(y @ p["a"] @ y)
        return (alpha + p["b"] @ y) ** 2
    if family == "conformal":
        return jnp.exp(2.0 * p["phi"]) * (y @ y)
    raise ValueError(f"unknown family {family!r}")


def gtensor(family, p, y):
    return 0.5 * jax.hessian(lambda v: f2(family, p, v))(y)


def inv(A):
    """Adjugate inverse for 2x2 and 3x3 matrices (safe under nested jvp)."""
    n = A.shape[0]
    if n == 2:
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        adj = jnp.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]])
        return adj / det
    c00 = A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1]
    c01 = A[1, 2] * A[2, 0] - A[1, 0] * A[2, 2]
    c02 = A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]
    c10 = A[0, 2] * A[2, 1] - A[0, 1] * A[2, 2]
    c11 = A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
    c12 = A[0, 1] * A[2, 0] - A[0, 0] * A[2, 1]
    c20 = A[0, 1] * A[1, 2] - A[0, 2] * A[1, 1]
    c21 = A[0, 2] * A[1, 0] - A[0, 0] * A[1, 2]
    c22 = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    det = A[0, 0] * c00 + A[0, 1] * c01 + A[0, 2] * c02
    adj = jnp.array([[c00, c10, c20], [c01, c11, c21], [c02, c12, c22]])
    return adj / det


def _unit(n, j, s=1):
    return tuple(s if i == j else 0 for i in range(n))


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


@lru_cache(maxsize=None)
def star(n):
    """Offsets needed by the spray: the center and its 2n axis neighbours."""
    offs = [(0,) * n]
    for j in range(n):
        offs += [_unit(n, j, 1), _unit(n, j, -1)]
    return tuple(offs)


@lru_cache(maxsize=None)
def block(n):
    """Offsets needed by the spray curvature (all o with |o|_1 <= 2)."""
    offs = list(star(n))
    for j in range(n):
        offs += [_unit(n, j, 2), _unit(n, j, -2)]
    for j in range(n):
        for k in range(j + 1, n):
            for sj in (1, -1):
                for sk in (1, -1):
                    offs.append(_add(_unit(n, j, sj), _unit(n, k, sk)))
    return tuple(offs)


def _at(P, index, o):
    return {k: v[index[o]] for k, v in P.items()}


def _dx_f2(family, P, index, c, y, h, n):
    """Central x-differences of F^2 and of its y-gradient at patch center ``c``."""
    dx, mixed = [], []
    grad = jax.grad(lambda q, v: f2(family, q, v), argnums=1)
    for j in range(n):
        fwd = _at(P, index, _add(c, _unit(n, j, 1)))
        bwd = _at(P, index, _add(c, _unit(n, j, -1)))
        dx.append((f2(family, fwd, y) - f2(family, bwd, y)) / (2.0 * h))
        mixed.append((grad(fwd, y) - grad(bwd, y)) / (2.0 * h))
    return jnp.stack(dx), jnp.stack(mixed)


def spray(family, P, index, c, y, h):
    """Spray coefficients G^k(x, y) with x the patch point at offset ``c``.

    G^k = 1/4 g^{kl} (y^j d_{x^j} d_{y^l} F^2 - d_{x^l} F^2).
    """
    n = y.shape[0]
    g = gtensor(family, _at(P, index, c), y)
    dx, mixed = _dx_f2(family, P, index, c, y, h, n)
    return 0.25 * inv(g) @ (mixed.T @ y - dx)


def riemann(family, P, index, y, h):
    """Spray (Berwald) curvature R^i_k(x, y) at the patch center.

    R^i_k = 2 d_k G^i - y^j d_j d_{y^k} G^i + 2 G^j d_{y^j} d_{y^k} G^i
            - d_{y^j} G^i d_{y^k} G^j.
    """
    n = y.shape[0]
    c0 = (0,) * n

    def G(c, v):
        return spray(family, P, index, c, v, h)

    G0 = G(c0, y)
    N = jax.jacfwd(lambda v: G(c0, v))(y)
    H2 = jax.jacfwd(jax.jacfwd(lambda v: G(c0, v)))(y)
    dG, dN = [], []
    for k in range(n):
        fwd, bwd = _unit(n, k, 1), _unit(n, k, -1)
        dG.append((G(fwd, y) - G(bwd, y)) / (2.0 * h))
        dN.append((jax.jacfwd(lambda v: G(fwd, v))(y) - jax.jacfwd(lambda v: G(bwd, v))(y)) / (2.0 * h))
    dG = jnp.stack(dG, axis=1)  # [i, k]
    dN = jnp.stack(dN)  # [j, i, k]
    return 2.0 * dG - jnp.einsum("j,jik->ik", y, dN) + 2.0 * jnp.einsum("j,ijk->ik", G0, H2) - N @ N


def ricci_trace(family, P, index, y, h):
    """F^2 Ric(y): trace of the spray curvature."""
    return jnp.trace(riemann(family, P, index, y, h))


def christoffel_contracted(family, P, index, y, h):
    """Formal Christoffel symbols gamma_{l,ij}(x, y) at fixed y, from central x-differences."""
    n = y.shape[0]
    dg = []
    for i in range(n):
        fwd = gtensor(family, _at(P, index, _unit(n, i, 1)), y)
        bwd = gtensor(family, _at(P, index, _unit(n, i, -1)), y)
        dg.append((fwd - bwd) / (2.0 * h))
    dg = jnp.stack(dg)  # [i, l, j] = d_i g_lj
    return 0.5 * (jnp.transpose(dg, (1, 0, 2)) + jnp.transpose(dg, (1, 2, 0)) - dg)  # [l, i, j]


def hessian_correction(family, P, index, v, h):
    """Chern-connection term v^l Gamma_{l,ij}(x, v) for the reference vector v.

    Equals gamma_{l,ij} v^l + (d g_ij / d y^s) G^s at y = v; subtracting it from
    the coordinate second derivatives gives the Hessian of u when v = grad u.
    """
    n = v.shape[0]
    c0 = (0,) * n
    gam = christoffel_contracted(family, P, index, v, h)
    dgy = jax.jacfwd(lambda w: gtensor(family, _at(P, index, c0), w))(v)  # [i, j, s]
    G = spray(family, P, index, c0, v, h)
    return jnp.einsum("lij,l->ij", gam, v) + jnp.einsum("ijs,s->ij", dgy, G)


# ---------------------------------------------------------------------------
# batched, jitted entry points


@lru_cache(maxsize=None)
def batched_f2(family):
    return bucketed(jax.jit(jax.vmap(lambda p, y: f2(family, p, y))), 2)


@lru_cache(maxsize=None)
def batched_gtensor(family):
    return bucketed(jax.jit(jax.vmap(lambda p, y: gtensor(family, p, y))), 2)


@lru_cache(maxsize=None)
def batched_half_grad(family):
    return bucketed(jax.jit(jax.vmap(lambda p, y: 0.5 * jax.grad(lambda v: f2(family, p, v))(y))), 2)


@lru_cache(maxsize=None)
def batched_dy_gtensor(family):
    return bucketed(jax.jit(jax.vmap(lambda p, y: jax.jacfwd(lambda w: gtensor(family, p, w))(y))), 2)


def _patch_fn(fn, family, offsets):
    index = {o: i for i, o in enumerate(offsets)}
    return bucketed(jax.jit(jax.vmap(lambda P, y, h: fn(family, P, index, y, h), in_axes=(0, 0, None))), 2)


@lru_cache(maxsize=None)
def batched_spray(family, n):
    offsets = star(n)
    index = {o: i for i, o in enumerate(offsets)}
    c0 = (0,) * n
    return bucketed(jax.jit(jax.vmap(lambda P, y, h: spray(family, P, index, c0, y, h), in_axes=(0, 0, None))), 2)


@lru_cache(maxsize=None)
def batched_spray_jacobian(family, n):
    offsets = star(n)
    index = {o: i for i, o in enumerate(offsets)}
    c0 = (0,) * n
    fn = jax.vmap(lambda P, y, h: jax.jacfwd(lambda v: spray(family, P, index, c0, v, h))(y), in_axes=(0, 0, None))
    return bucketed(jax.jit(fn), 2)


@lru_cache(maxsize=None)
def batched_ricci_trace(family, n):
    return _patch_fn(ricci_trace, family, block(n))


# 4th-order second-difference weights at s = -2, -1, 1, 2 (centre weight -30)
_D2 = ((-2, -1.0), (-1, 16.0), (1, 16.0), (2, -1.0))
RIC_TENSOR_STEP = 1e-2


def batched_ricci_tensor(family, n):
    """Ric_ij as half the y-Hessian of the Ricci trace.

    Uses 4th-order second differences along e_i and e_i + e_j of the jitted
    trace, with step ``RIC_TENSOR_STEP * |y|``. Nesting autodiff through the
    curvature kernel is exact too but costs minutes of compile time.
    """
    trace = batched_ricci_trace(family, n)
    pairs = [(i, i) for i in range(n)] + [(i, j) for i in range(n) for j in range(i + 1, n)]

    def call(P, y, h):
        y = jnp.asarray(y)
        B = y.shape[0]
        eps = RIC_TENSOR_STEP * jnp.linalg.norm(y, axis=-1)
        dirs = []
        for i, j in pairs:
            d = jnp.zeros(n).at[i].set(1.0)
            if j != i:
                d = d.at[j].set(1.0)
            dirs.append(d)
        ys = [y] + [y + (s * eps)[:, None] * d for d in dirs for s, _ in _D2]
        reps = len(ys)
        Pr = jax.tree_util.tree_map(lambda a: jnp.tile(a, (reps,) + (1,) * (a.ndim - 1)), P)
        vals = jnp.asarray(trace(Pr, jnp.concatenate(ys), h)).reshape(reps, B)
        f0, rest = vals[0], vals[1:].reshape(len(dirs), len(_D2), B)
        w = jnp.array([c for _, c in _D2])
        d2 = (jnp.einsum("s,dsb->db", w, rest) - 30.0 * f0) / (12.0 * eps**2)
        H = jnp.zeros((B, n, n))
        for k, (i, j) in enumerate(pairs[:n]):
            H = H.at[:, i, i].set(d2[k])
        for k, (i, j) in enumerate(pairs[n:], start=n):
            off = 0.5 * (d2[k] - d2[i] - d2[j])
            H = H.at[:, i, j].set(off).at[:, j, i].set(off)
        return 0.5 * H

    return call


@lru_cache(maxsize=None)
def batched_hessian_correction(family, n):
    return _patch_fn(hessian_correction, family, star(n))


@lru_cache(maxsize=None)
def batched_christoffel(family, n):
    return _patch_fn(christoffel_contracted, family, star(n))


# ---------------------------------------------------------------------------
# Legendre transform: minimise 1/2 F(v)^2 - xi(v) by damped Newton

_STEPS = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125)


def _newton_update(family, p, xi, v):
    half_f2 = lambda w: 0.5 * f2(family, p, w)
    grad = jax.grad(half_f2)(v)
    g = gtensor(family, p, v)
    step = inv(g) @ (grad - xi)
    obj0 = half_f2(v) - xi @ v
    cands = jnp.stack([v - a * step for a in _STEPS])
    objs = jax.vmap(lambda w: half_f2(w) - xi @ w)(cands)
    ok = objs <= obj0
    choice = jnp.where(jnp.any(ok), jnp.argmax(ok), len(_STEPS) - 1)
    return cands[choice]


def _residual(family, p, xi, v):
    grad = 0.5 * jax.grad(lambda w: f2(family, p, w))(v)
    return jnp.linalg.norm(grad - xi)


@lru_cache(maxsize=None)
def batched_legendre(family, tol=1e-10, max_iter=50):
    update = jax.vmap(lambda p, xi, v: _newton_update(family, p, xi, v))
    resid = jax.vmap(lambda p, xi, v: _residual(family, p, xi, v))

    @jax.jit
    def solve(p, xi, active):
        scale = jnp.linalg.norm(xi, axis=-1)
        # inactive (zero) covectors carry a dummy start so F stays smooth
        v0 = jnp.where(active[:, None], xi, jnp.ones_like(xi))
        xi_eff = jnp.where(active[:, None], xi, jnp.ones_like(xi))
        scale = jnp.where(active, scale, jnp.linalg.norm(xi_eff, axis=-1))

        def done(v):
            return resid(p, xi_eff, v) <= tol * scale

        def cond(state):
            it, v, conv = state
            return (it < max_iter) & ~jnp.all(conv)

        def body(state):
            it, v, conv = state
            v_new = update(p, xi_eff, v)
            v = jnp.where(conv[:, None], v, v_new)
            return it + 1, v, done(v)

        it, v, conv = jax.lax.while_loop(cond, body, (0, v0, done(v0)))
        res = resid(p, xi_eff, v) / scale
        v = jnp.where(active[:, None], v, 0.0)
        return v, conv | ~active, res, it

    return bucketed(solve, 3)
