"""Hermitian background geometry on a single coordinate chart.

A metric is an analytic recipe: callables returning g_{ij̄}, its first real
coordinate derivatives and its second real coordinate derivatives.  Complex
derivatives follow ∂/∂z_k = ½(∂/∂x_k − i ∂/∂y_k).

Index conventions (all arrays are dense complex numpy arrays):

    g[i, j]             g_{ij̄}
    ginv_conj[l, m]     g^{lm̄}, i.e. Σ_m g^{lm̄} g_{km̄} = δ_{lk}  (this is inv(g.T))
    gamma[l, i, k]      Γ^l_{ik} = g^{lm̄} ∂_i g_{km̄}
    torsion[l, i, k]    T^l_{ik} = Γ^l_{ik} − Γ^l_{ki}
    curvature[i,j,k,l]  R_{ij̄kl̄} = −∂_i∂̄_j g_{kl̄} + g^{pq̄} ∂_i g_{kq̄} ∂̄_j g_{pl̄}
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._validation import check_points
from .functions import complex_derivative_vectors

__all__ = [
    "MetricField",
    "METRIC_NAMES",
    "make_builtin_metric",
    "metric_inverse",
    "chern_connection",
    "torsion",
    "lowered_torsion",
    "curvature",
    "covariant_hessian_derivative",
    "commutation_residual",
    "gradient_commutation_residual",
    "curvature_commutation_residual",
    "CHI_NAMES",
    "ChiForm",
    "make_chi",
]

METRIC_NAMES = ("euclidean", "conformal-exp", "diag-anisotropic")


@dataclass(frozen=True)
class MetricField:
    """Analytic Hermitian metric on a chart of C^n.

    ``g(x)`` has shape (..., n, n); ``dg(x)`` has shape (..., 2n, n, n) with
    the derivative axis in real coordinates (x_1, y_1, ...); ``d2g(x)`` has
    shape (..., 2n, 2n, n, n).
    """

    name: str
    params: tuple
    n: int
    g: Callable
    dg: Callable
    d2g: Callable

    def complex_dg(self, x):
        """(∂_k g, ∂̄_k g) with the complex derivative index first."""
        d = complex_derivative_vectors(self.n)
        dg = self.dg(x)
        return (np.einsum("ka,...aij->...kij", d, dg),
                np.einsum("ka,...aij->...kij", np.conj(d), dg))

    def complex_ddbar_g(self, x):
        """∂_i ∂̄_j g_{kl̄} as array [..., i, j, k, l]."""
        d = complex_derivative_vectors(self.n)
        return np.einsum("ia,jb,...abkl->...ijkl", d, np.conj(d), self.d2g(x))


def _euclidean(n):
    def g(x):
        x = check_points(x, n)
        return np.broadcast_to(np.eye(n, dtype=np.complex128), x.shape[:-1] + (n, n)).copy()

    def dg(x):
        x = check_points(x, n)
        return np.zeros(x.shape[:-1] + (2 * n, n, n), dtype=np.complex128)

    def d2g(x):
        x = check_points(x, n)
        return np.zeros(x.shape[:-1] + (2 * n, 2 * n, n, n), dtype=np.complex128)

    return g, dg, d2g


def _conformal_exp(n, a):
    eye = np.eye(n, dtype=np.complex128)

    def g(x):
        x = check_points(x, n)
        return np.exp(a * x[..., 0])[..., None, None] * eye

    def dg(x):
        x = check_points(x, n)
        out = np.zeros(x.shape[:-1] + (2 * n, n, n), dtype=np.complex128)
        out[..., 0, :, :] = (a * np.exp(a * x[..., 0]))[..., None, None] * eye
        return out

    def d2g(x):
        x = check_points(x, n)
        out = np.zeros(x.shape[:-1] + (2 * n, 2 * n, n, n), dtype=np.complex128)
        out[..., 0, 0, :, :] = (a * a * np.exp(a * x[..., 0]))[..., None, None] * eye
        return out

    return g, dg, d2g


def _diag_anisotropic(n, amps, b):
    # g_{ii} = 1 + a_i sin(b x_{i+1}); each diagonal entry depends on the real
    # part of the *next* complex coordinate, which makes dω ≠ 0.
    src = [2 * ((i + 1) % n) for i in range(n)]

    def g(x):
        x = check_points(x, n)
        out = np.zeros(x.shape[:-1] + (n, n), dtype=np.complex128)
        for i in range(n):
            out[..., i, i] = 1.0 + amps[i] * np.sin(b * x[..., src[i]])
        return out

    def dg(x):
        x = check_points(x, n)
        out = np.zeros(x.shape[:-1] + (2 * n, n, n), dtype=np.complex128)
        for i in range(n):
            out[..., src[i], i, i] = amps[i] * b * np.cos(b * x[..., src[i]])
        return out

    def d2g(x):
        x = check_points(x, n)
        out = np.zeros(x.shape[:-1] + (2 * n, 2 * n, n, n), dtype=np.complex128)
        for i in range(n):
            out[..., src[i], src[i], i, i] = -amps[i] * b * b * np.sin(b * x[..., src[i]])
        return out

    return g, dg, d2g


def make_builtin_metric(name, params=(), n=2):
    """Build one of the built-in metric families.

    euclidean         g = I
    conformal-exp     g = exp(a x_1) I, params [a]; non-Kähler for a ≠ 0
    diag-anisotropic  g_{ii} = 1 + a_i sin(b x_{i+1}), params [a_1..a_n, b]
                      with |a_i| < 1 for positive definiteness
    """
    params = tuple(float(p) for p in params)
    if n not in (2, 3):
        raise ValueError(f"complex dimension must be 2 or 3, got {n}")
    if name == "euclidean":
        if params:
            raise ValueError("euclidean metric takes no parameters")
        fns = _euclidean(n)
    elif name == "conformal-exp":
        if len(params) != 1:
            raise ValueError("conformal-exp expects params [a]")
        if not np.isfinite(params[0]):
            raise ValueError("conformal-exp parameter must be finite")
        fns = _conformal_exp(n, params[0])
    elif name == "diag-anisotropic":
        if len(params) != n + 1:
            raise ValueError(f"diag-anisotropic expects params [a_1..a_{n}, b] ({n + 1} values)")
        amps, b = params[:n], params[n]
        bad = [i + 1 for i, a in enumerate(amps) if not abs(a) < 1.0]
        if bad:
            raise ValueError(
                f"diag-anisotropic loses positive definiteness: need |a_i| < 1, violated for i = {bad}")
        fns = _diag_anisotropic(n, amps, b)
    else:
        raise ValueError(f"unknown metric {name!r}; supported: {', '.join(METRIC_NAMES)}")
    return MetricField(name, params, n, *fns)


def metric_inverse(g):
    """g^{lm̄} as an array indexed [l, m]; raises on a singular or indefinite metric."""
    g = np.asarray(g)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("metric is singular or not positive definite") from None
    return np.linalg.inv(np.swapaxes(g, -1, -2))


def chern_connection(m, x):
    """Γ^l_{ik} at the point(s) x, array [..., l, i, k]."""
    ginv = metric_inverse(m.g(x))
    dg, _ = m.complex_dg(x)
    # Γ^l_{ik} = Σ_m g^{lm̄} ∂_i g_{km̄}
    return np.einsum("...lm,...ikm->...lik", ginv, dg)


def torsion(m, x):
    """T^l_{ik} = Γ^l_{ik} − Γ^l_{ki}; antisymmetric in (i, k) by construction."""
    gamma = chern_connection(m, x)
    return gamma - np.swapaxes(gamma, -1, -2)


def lowered_torsion(m, x):
    """T_{ik m̄} = g_{lm̄} T^l_{ik}, array [..., i, k, m]."""
    return np.einsum("...lm,...lik->...ikm", m.g(x), torsion(m, x))


def curvature(m, x):
    """Chern curvature R_{ij̄kl̄}, array [..., i, j, k, l]."""
    ginv = metric_inverse(m.g(x))
    dg, dbar_g = m.complex_dg(x)
    ddbar = m.complex_ddbar_g(x)
    quad = np.einsum("...pq,...ikq,...jpl->...ijkl", ginv, dg, dbar_g)
    return -ddbar + quad


def _complex_jets(v, n, x):
    """Complex derivatives of v: (∂_k v, ∂_i∂̄_j v, ∂_i∂_k v, ∂_k ∂_i∂̄_j v)."""
    d = complex_derivative_vectors(n)
    db = np.conj(d)
    gr, h, t = v.grad(x), v.hess(x), v.third(x)
    v1 = np.einsum("ka,...a->...k", d, gr)
    v_ijbar = np.einsum("ia,jb,...ab->...ij", d, db, h)
    v_ik = np.einsum("ia,kb,...ab->...ik", d, d, h)
    dv_ijbar_k = np.einsum("ia,jb,kc,...abc->...ijk", d, db, d, t)
    return v1, v_ijbar, v_ik, dv_ijbar_k


def covariant_hessian_derivative(m, v, x):
    """v_{ij̄k} = ∂_k v_{ij̄} − Γ^l_{ki} v_{lj̄}, array [..., i, j, k]."""
    gamma = chern_connection(m, x)
    _, v_ijbar, _, dv = _complex_jets(v, m.n, x)
    return dv - np.einsum("...lki,...lj->...ijk", gamma, v_ijbar)


def commutation_residual(m, v, x):
    """max |v_{ij̄k} − v_{kj̄i} − T^l_{ik} v_{lj̄}| over indices (and points)."""
    tors = torsion(m, x)
    _, v_ijbar, _, _ = _complex_jets(v, m.n, x)
    cov = covariant_hessian_derivative(m, v, x)
    lhs = cov - np.swapaxes(cov, -1, -3)
    rhs = np.einsum("...lik,...lj->...ijk", tors, v_ijbar)
    return float(np.max(np.abs(lhs - rhs)))


def gradient_commutation_residual(m, v, x):
    """max |v_{ik} − v_{ki} − T^l_{ik} v_l| with v_{ik} = ∂_k ∂_i v − Γ^l_{ki} v_l."""
    gamma = chern_connection(m, x)
    tors = gamma - np.swapaxes(gamma, -1, -2)
    v1, _, v_ik, _ = _complex_jets(v, m.n, x)
    cov = v_ik - np.einsum("...lki,...l->...ik", gamma, v1)
    lhs = cov - np.swapaxes(cov, -1, -2)
    rhs = np.einsum("...lik,...l->...ik", tors, v1)
    return float(np.max(np.abs(lhs - rhs)))


def curvature_commutation_residual(m, v, x):
    """max |v_{ij̄k} − v_{ikj̄} + g^{lm̄} R_{kj̄im̄} v_l|.

    v_{ikj̄} = ∂̄_j v_{ik} is assembled from ∂̄_j Γ, obtained by differentiating
    Γ = g^{-T} ∂g directly, so the check is independent of how `curvature`
    assembles R.
    """
    n = m.n
    d = complex_derivative_vectors(n)
    db = np.conj(d)
    g = m.g(x)
    ginv = metric_inverse(g)
    dg, dbar_g = m.complex_dg(x)
    # ∂̄_j ∂_i g_{km̄}
    dbar_d_g = np.einsum("jb,ia,...abkm->...jikm", db, d, m.d2g(x))
    gamma = np.einsum("...lm,...ikm->...lik", ginv, dg)
    # ∂̄_j g^{lm̄} = −g^{lp̄} (∂̄_j g_{qp̄}) g^{qm̄}
    dbar_ginv = -np.einsum("...lp,...jqp,...qm->...jlm", ginv, dbar_g, ginv)
    dbar_gamma = (np.einsum("...jlm,...ikm->...jlik", dbar_ginv, dg)
                  + np.einsum("...lm,...jikm->...jlik", ginv, dbar_d_g))

    gr, h, t = v.grad(x), v.hess(x), v.third(x)
    v1 = np.einsum("ka,...a->...k", d, gr)
    v_ijbar = np.einsum("ia,jb,...ab->...ij", d, db, h)
    d_ikjbar = np.einsum("ia,kb,jc,...abc->...ikj", d, d, db, t)

    # v_{ik} = ∂_k ∂_i v − Γ^l_{ki} v_l ;  v_{ikj̄} = ∂̄_j v_{ik}
    v_ikjbar = (d_ikjbar
                - np.einsum("...jlki,...l->...ikj", dbar_gamma, v1)
                - np.einsum("...lki,...lj->...ikj", gamma, v_ijbar))
    cov = covariant_hessian_derivative(m, v, x)  # [i, j, k]
    lhs = cov - np.swapaxes(v_ikjbar, -1, -2)    # v_{ikj̄} reindexed to [i, j, k]
    r = curvature(m, x)                          # [k, j, i, m]
    rhs = -np.einsum("...lm,...kjim,...l->...ijk", ginv, r, v1)
    return float(np.max(np.abs(lhs - rhs)))


CHI_NAMES = ("zero", "omega", "identity", "scaled-omega")


@dataclass(frozen=True)
class ChiForm:
    """Real (1,1)-form χ sampled as a Hermitian matrix field, shape (..., n, n)."""

    name: str
    params: tuple
    n: int
    metric: MetricField

    def __call__(self, x):
        x = check_points(x, self.n)
        shape = x.shape[:-1] + (self.n, self.n)
        if self.name == "zero":
            return np.zeros(shape, dtype=np.complex128)
        if self.name == "identity":
            return np.broadcast_to(np.eye(self.n, dtype=np.complex128), shape).copy()
        scale = self.params[0] if self.name == "scaled-omega" else 1.0
        return scale * np.asarray(self.metric.g(x), dtype=np.complex128)


def make_chi(name, params=(), metric=None, n=2):
    """χ = 0, χ = ω, χ = I (in coordinates) or χ = c·ω, params [c]."""
    params = tuple(float(p) for p in params)
    if name not in CHI_NAMES:
        raise ValueError(f"unknown chi {name!r}; supported: {', '.join(CHI_NAMES)}")
    expected = 1 if name == "scaled-omega" else 0
    if len(params) != expected:
        raise ValueError(f"chi {name!r} expects {expected} parameter(s), got {len(params)}")
    if metric is None:
        metric = make_builtin_metric("euclidean", (), n)
    return ChiForm(name, params, metric.n, metric)
