"""Post-solve diagnostics: hypothesis verdicts, comparison, strict-concavity
scans, the boundary barrier inequality and the measured estimate ratios.

All checks are empirical.  A ratio that stays bounded under refinement is
evidence for an a priori estimate, not a proof of one.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import ScalarField, complex_hessian, gradient_sup, w_field
from .pointwise import contract, cone_margin_from_eigenvalues
from .solver import Discretization

__all__ = [
    "HypothesisVerdict",
    "ComparisonResult",
    "BarrierResult",
    "EstimateReport",
    "validate_hypotheses",
    "comparison_check",
    "estimate_ratios",
    "strict_concavity_scan",
    "box_distance",
    "barrier_check",
    "barrier_sweep",
    "worst_offenders",
    "COMPARISON_TOL",
    "LEMMA_SCAN_TOL",
]

COMPARISON_TOL = 1e-8
# margins within rounding of zero are not counted as violations
LEMMA_SCAN_TOL = 1e-10


@dataclass
class HypothesisVerdict:
    admissibility_min: float
    subsolution_min: float
    cone_min: float
    epsilon: float
    admissible: bool
    subsolution: bool
    cone: bool

    @property
    def ok(self):
        return self.admissible and self.subsolution and self.cone


@dataclass
class ComparisonResult:
    min_value: float
    interior_min: float
    boundary_min: float
    attained_on_boundary: bool
    passed: bool


@dataclass
class BarrierResult:
    t: float
    T: float
    delta: float
    c0: float
    v_min: float
    collar_size: int

    @property
    def ok(self):
        return self.c0 > 0 and self.v_min >= 0


@dataclass
class EstimateReport:
    grad_interior_sup: float = 0.0
    grad_boundary_sup: float = 0.0
    lap_interior_sup: float = 0.0
    lap_boundary_sup: float = 0.0
    ratio_grad: float = 0.0
    ratio_lap: float = 0.0
    comparison_min: float = float("nan")
    cone_min: float = float("nan")
    subsolution_min: float = float("nan")
    strict_concavity: dict = field(default_factory=dict)
    barrier: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _usub_eigen(problem):
    disc = Discretization(problem)
    return disc, disc.eigen(problem.usub)


def validate_hypotheses(problem):
    """Nodewise minima of the admissibility, subsolution and cone margins of ū, and the pinching ε."""
    disc, lam = _usub_eigen(problem)
    psi = disc.psi_interior(problem.psi.values)
    n = lam.shape[-1]
    adm = float(np.min(lam[:, 0]))
    sub = float(np.min(np.prod(lam, axis=-1) - psi / n * np.sum(lam, axis=-1)))
    cone = float(np.min(cone_margin_from_eigenvalues(lam, psi)))
    if adm > 0:
        eps = float(min(1.0, np.min(lam[:, 0]), 1.0 / np.max(lam[:, -1])))
    else:
        eps = 0.0
    return HypothesisVerdict(adm, sub, cone, eps, bool(adm > 0), bool(sub >= -1e-10), bool(cone > 0))


def comparison_check(u, usub, tol=COMPARISON_TOL):
    """min(u − ū) over all nodes; PASS iff ≥ −tol, with the minimum located on the boundary."""
    if u.spec != usub.spec:
        raise ValueError("u and usub live on different grids")
    spec = u.spec
    diff = u.values - usub.values
    bmask = spec.boundary_mask()
    mismatch = float(np.max(np.abs(diff[bmask])))
    if mismatch > 1e-12:
        raise ValueError(f"boundary values of u and usub differ by {mismatch:.3e}")
    interior_min = float(np.min(diff[~bmask]))
    boundary_min = float(np.min(diff[bmask]))
    total = min(interior_min, boundary_min)
    return ComparisonResult(total, interior_min, boundary_min,
                            bool(interior_min >= boundary_min - tol), bool(total >= -tol))


def estimate_ratios(u, problem):
    """Gradient and W sups over the whole grid and over the boundary, and their ratios."""
    grad_all = gradient_sup(u, "all")
    grad_bdry = gradient_sup(u, "boundary")
    w = np.abs(w_field(u, problem.chi, problem.metric, boundary="one-sided").values)
    spec = u.spec
    lap_int = float(np.max(w[spec.interior_mask()]))
    lap_bdry = float(np.max(w[spec.boundary_mask()]))
    return EstimateReport(grad_interior_sup=grad_all, grad_boundary_sup=grad_bdry,
                          lap_interior_sup=lap_int, lap_boundary_sup=lap_bdry,
                          ratio_grad=grad_all / (1.0 + grad_bdry),
                          ratio_lap=lap_int / (1.0 + lap_bdry))


def _lemma_terms_field(u, usub, problem):
    disc = Discretization(problem)
    f = disc.coefficients(u)
    a = contract(f, complex_hessian(usub) - complex_hessian(u))
    b = contract(f, disc.g)
    w = np.sum(disc.eigen(u), axis=-1)
    return a, b, w


def strict_concavity_scan(u, usub, problem, theta, n_min, tol=LEMMA_SCAN_TOL):
    """Interior nodes with W ≥ n_min where F(ū − u) − θ(1 + F g) < −tol."""
    a, b, w = _lemma_terms_field(u, usub, problem)
    margin = a - theta * (1.0 + b)
    return int(np.count_nonzero((w >= n_min) & (margin < -tol)))


def box_distance(points, lo, hi):
    """σ = distance to the nearest face of the box; zero on the faces."""
    points = np.asarray(points, dtype=float)
    return np.min(np.minimum(points - np.asarray(lo), np.asarray(hi) - points), axis=-1)


def _active_faces(points, lo, hi, tol=1e-12):
    """Boolean (..., 2n) marking the axes whose face attains σ."""
    d = np.minimum(points - np.asarray(lo), np.asarray(hi) - points)
    return d <= np.min(d, axis=-1, keepdims=True) + tol


def barrier_check(u, usub, problem, t, T, delta):
    """Achieved c_0 = min over the collar of −F v_{ij̄} / (1 + F g) for v = (u − ū) + tσ − Tσ².

    The collar holds the interior nodes with σ < delta.  Near a face σ is the
    (linear) distance to that face, so (σ²)_{ij̄} is ½ on the diagonal entry of
    the face's complex coordinate; where several faces tie, the branch with the
    smallest F-contraction is used, which gives the smallest c_0.
    """
    spec = u.spec
    pts = spec.interior_points()
    sigma = box_distance(pts, spec.lo, spec.hi)
    collar = sigma < delta
    if not np.any(collar):
        raise ValueError(f"empty collar: delta = {delta:g} is below the grid spacing")
    disc = Discretization(problem)
    f = disc.coefficients(u)[collar]
    diff = ScalarField(spec, u.values - usub.values)
    a = contract(f, complex_hessian(diff)[collar])
    faces = _active_faces(pts[collar], spec.lo, spec.hi)
    fdiag = np.real(np.diagonal(f, axis1=-2, axis2=-1))
    # F·(σ²)_{ij̄} for the face normal to axis k is F_{k//2, k//2}/2
    branch = np.where(faces, 0.5 * np.repeat(fdiag, 2, axis=-1), np.inf)
    f_sigma2 = np.min(branch, axis=-1)
    fv = a - T * f_sigma2
    fg = contract(f, disc.g[collar])
    c0 = float(np.min(-fv / (1.0 + fg)))
    v = diff.interior()[collar] + t * sigma[collar] - T * sigma[collar] ** 2
    return BarrierResult(float(t), float(T), float(delta), c0, float(np.min(v)), int(collar.sum()))


def barrier_sweep(u, usub, problem, ts=None, Ts=None, deltas=None):
    """Search (t, T, delta) for the largest achieved c_0 with v ≥ 0 on the collar.

    Returns ``(best, results)``; ``best`` is None when no triple qualifies.
    """
    h = float(np.min(u.spec.h))
    half = 0.5 * float(np.min(np.array(u.spec.hi) - np.array(u.spec.lo)))
    ts = (0.01, 0.1, 0.5, 1.0) if ts is None else ts
    Ts = (1.0, 10.0, 100.0, 1000.0) if Ts is None else Ts
    deltas = [k * h for k in (1.5, 2.5, 3.5)] if deltas is None else deltas
    results = []
    for delta in deltas:
        if delta >= half:
            continue
        for t in ts:
            for T in Ts:
                results.append(barrier_check(u, usub, problem, t, T, delta))
    good = [r for r in results if r.ok]
    best = max(good, key=lambda r: r.c0) if good else None
    return best, results


def worst_offenders(values, spec, k=10, mask=None):
    """The k interior nodes with the smallest values, as (index tuple, coordinates, value) rows."""
    vals = np.asarray(values, dtype=float)
    full = np.full(spec.shape, np.inf)
    m = spec.interior_mask() if mask is None else mask
    full[m] = vals if vals.size == int(m.sum()) else vals.reshape(spec.shape)[m]
    order = np.argsort(full, axis=None)[:k]
    pts = spec.points()
    rows = []
    for flat in order:
        idx = np.unravel_index(flat, spec.shape)
        if not np.isfinite(full[idx]):
            break
        rows.append((tuple(int(i) for i in idx), pts[idx].tolist(), float(full[idx])))
    return rows

