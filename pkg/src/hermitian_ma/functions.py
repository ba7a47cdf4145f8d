"""Analytic real functions on R^{2n} with derivatives up to third order.

Coordinates are ordered (x_1, y_1, ..., x_n, y_n).  Every function evaluates
on arrays of points of shape (..., 2n) and returns value, gradient (..., 2n),
Hessian (..., 2n, 2n) and third-derivative tensor (..., 2n, 2n, 2n).

These serve as exact solutions for manufactured problems, as analytic
subsolutions in configs, and as test functions for the commutation checks.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AnalyticFunction",
    "make_function",
    "FUNCTION_NAMES",
    "complex_derivative_vectors",
    "complex_hessian_from_real",
    "box_bump",
]


@dataclass(frozen=True)
class AnalyticFunction:
    name: str
    n: int
    params: tuple = field(default_factory=tuple)

    def value(self, x):
        return _EVAL[self.name](self, np.asarray(x, dtype=float))[0]

    def grad(self, x):
        return _EVAL[self.name](self, np.asarray(x, dtype=float))[1]

    def hess(self, x):
        return _EVAL[self.name](self, np.asarray(x, dtype=float))[2]

    def third(self, x):
        return _EVAL[self.name](self, np.asarray(x, dtype=float))[3]

    def complex_hessian(self, x):
        """u_{ij̄} = ∂_i ∂̄_j u at each point, shape (..., n, n)."""
        return complex_hessian_from_real(self.hess(x), self.n)


def _zeros(x, n, order):
    shape = x.shape[:-1] + (2 * n,) * order
    return np.zeros(shape)


def _quadratic(f, x):
    # a |z|^2
    (a,) = f.params or (1.0,)
    n = f.n
    v = a * np.sum(x * x, axis=-1)
    g = 2.0 * a * x
    h = _zeros(x, n, 2)
    h[..., range(2 * n), range(2 * n)] = 2.0 * a
    return v, g, h, _zeros(x, n, 3)


def _quadratic_plus_exp(f, x):
    # a |z|^2 + b e^{x_1} cos(y_1); the second term is pluriharmonic
    a, b = f.params or (1.0, 0.1)
    v, g, h, t = _quadratic(AnalyticFunction("quadratic", f.n, (a,)), x)
    ex = np.exp(x[..., 0])
    c, s = np.cos(x[..., 1]), np.sin(x[..., 1])
    v = v + b * ex * c
    g = g.copy()
    g[..., 0] += b * ex * c
    g[..., 1] += -b * ex * s
    h = h.copy()
    h[..., 0, 0] += b * ex * c
    h[..., 0, 1] += -b * ex * s
    h[..., 1, 0] += -b * ex * s
    h[..., 1, 1] += -b * ex * c
    t = t.copy()
    # d^3 of e^x cos y in (x, y): counts of y-derivatives k give e^x * (cos, -sin, -cos, sin)[k]
    pattern = [c, -s, -c, s]
    for i in (0, 1):
        for j in (0, 1):
            for k in (0, 1):
                t[..., i, j, k] += b * ex * pattern[i + j + k]
    return v, g, h, t


def _quadratic_plus_cubic(f, x):
    # a |z|^2 + b (x_1^3 + y_n^3)
    a, b = f.params or (1.0, 0.1)
    n = f.n
    v, g, h, t = _quadratic(AnalyticFunction("quadratic", n, (a,)), x)
    p, q = 0, 2 * n - 1
    v = v + b * (x[..., p] ** 3 + x[..., q] ** 3)
    g = g.copy()
    g[..., p] += 3 * b * x[..., p] ** 2
    g[..., q] += 3 * b * x[..., q] ** 2
    h = h.copy()
    h[..., p, p] += 6 * b * x[..., p]
    h[..., q, q] += 6 * b * x[..., q]
    t = t.copy()
    t[..., p, p, p] += 6 * b
    t[..., q, q, q] += 6 * b
    return v, g, h, t


def _quadratic_plus_exp_sum(f, x):
    # a |z|^2 + b e^{x_1 + y_n}; complex Hessian of the second term is a rank-one
    # positive matrix, so χ_u is anisotropic
    a, b = f.params or (1.0, 0.1)
    n = f.n
    v, g, h, t = _quadratic(AnalyticFunction("quadratic", n, (a,)), x)
    p, q = 0, 2 * n - 1
    e = b * np.exp(x[..., p] + x[..., q])
    v = v + e
    g = g.copy()
    h = h.copy()
    t = t.copy()
    for i in (p, q):
        g[..., i] += e
        for j in (p, q):
            h[..., i, j] += e
            for k in (p, q):
                t[..., i, j, k] += e
    return v, g, h, t


def _bilinear(f, x):
    # x_1 x_2 (real parts of the first two complex coordinates)
    n = f.n
    v = x[..., 0] * x[..., 2]
    g = _zeros(x, n, 1)
    g[..., 0] = x[..., 2]
    g[..., 2] = x[..., 0]
    h = _zeros(x, n, 2)
    h[..., 0, 2] = h[..., 2, 0] = 1.0
    return v, g, h, _zeros(x, n, 3)


def _mixed_trig(f, x):
    # sin(x_1 + 2 y_2) exp(0.5 x_2): generic, non-polynomial, non-separable
    # written as Im(exp(w.x)) with w = i a + e, so every derivative is a
    # product of components of w
    n = f.n
    w = np.zeros(2 * n, dtype=np.complex128)
    w[0], w[3] = 1j, 2j
    w[2] += 0.5
    z = np.exp(x @ w)
    v = np.imag(z)
    g = np.imag(z[..., None] * w)
    h = np.imag(z[..., None, None] * np.einsum("i,j->ij", w, w))
    t = np.imag(z[..., None, None, None] * np.einsum("i,j,k->ijk", w, w, w))
    return v, g, h, t


_EVAL = {
    "quadratic": _quadratic,
    "quadratic-plus-exp": _quadratic_plus_exp,
    "quadratic-plus-cubic": _quadratic_plus_cubic,
    "quadratic-plus-exp-sum": _quadratic_plus_exp_sum,
    "bilinear": _bilinear,
    "mixed-trig": _mixed_trig,
}

FUNCTION_NAMES = tuple(_EVAL)


def make_function(name, params=(), n=2):
    if name not in _EVAL:
        raise ValueError(f"unknown function {name!r}; supported: {', '.join(FUNCTION_NAMES)}")
    if n < 2:
        raise ValueError("complex dimension must be at least 2")
    return AnalyticFunction(name, n, tuple(float(p) for p in params))


def complex_derivative_vectors(n):
    """Rows d[k] with ∂/∂z_k = Σ_a d[k, a] ∂/∂t_a, t = (x_1, y_1, ...)."""
    d = np.zeros((n, 2 * n), dtype=np.complex128)
    for k in range(n):
        d[k, 2 * k] = 0.5
        d[k, 2 * k + 1] = -0.5j
    return d


def complex_hessian_from_real(h, n):
    d = complex_derivative_vectors(n)
    return np.einsum("ia,jb,...ab->...ij", d, np.conj(d), h)


def box_bump(x, lo, hi):
    """Π_a sin(π (x_a - lo_a)/(hi_a - lo_a)): positive inside the box, zero on its faces."""
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    s = np.sin(np.pi * (x - lo) / (hi - lo))
    return np.prod(s, axis=-1)
