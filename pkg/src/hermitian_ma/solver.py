"""Damped Newton with a continuation path in ψ for the discrete Dirichlet problem.

The discrete residual at an interior node is the log form
r = log det(g^{-1}𝔤) − log tr_g 𝔤 − log(ψ/n) with 𝔤 = χ + u_{ij̄} from the
central stencils of :mod:`hermitian_ma.grid`.  The Jacobian is the exact
derivative of that discrete residual: a sparse matrix over interior nodes
whose rows contract F = 𝔤^{-1} − g^{-1}/W against the same stencils.

Continuation runs ψ_t = (1 − t) ψ_0 + t ψ from ψ_0, the right-hand side for
which the subsolution ū is an exact discrete solution.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .functions import box_bump, complex_derivative_vectors
from .grid import GridSpec, ScalarField, apply_dirichlet, complex_hessian, hessian_pairs, stencil
from .pointwise import (
    ADMISSIBILITY_RTOL,
    NotAdmissibleError,
    contract,
    hermitian,
    pencil_decomposition,
    pencil_eigenvalues,
)

__all__ = [
    "ProblemSpec",
    "SolveOptions",
    "SolveState",
    "SolveReport",
    "SolverError",
    "LineSearchError",
    "ContinuationError",
    "Discretization",
    "initial_psi",
    "newton_step",
    "line_search_admissible",
    "solve_continuation",
    "mms_generate",
    "DirichletSolver",
]

logger = logging.getLogger(__name__)

DIRECT_SOLVE_MAX_UNKNOWNS = 5000
LINEAR_RTOL = 1e-12


class SolverError(RuntimeError):
    pass


class LineSearchError(SolverError):
    pass


class ContinuationError(SolverError):
    def __init__(self, message, last_t=None, last_state=None):
        super().__init__(message)
        self.last_t = last_t
        self.last_state = last_state


@dataclass
class ProblemSpec:
    """One Dirichlet instance.

    ``chi`` maps points (..., 2n) to Hermitian matrices; ``phi`` is the
    boundary data (callable on points or a field); ``exact`` optionally holds
    the manufactured solution for error reporting.
    """

    grid: GridSpec
    metric: object
    chi: Callable
    psi: ScalarField
    phi: object
    usub: ScalarField
    exact: object = None
    name: str = ""

    def __post_init__(self):
        if self.metric.n != self.grid.n:
            raise ValueError("metric and grid dimensions differ")
        if np.any(self.psi.values <= 0):
            raise ValueError("psi must be positive at every node (degenerate ψ not supported)")
        if self.usub.spec != self.grid or self.psi.spec != self.grid:
            raise ValueError("psi and usub must live on the problem grid")

    def boundary_values(self):
        return apply_dirichlet(ScalarField(self.grid, np.zeros(self.grid.shape)), self.phi)


@dataclass
class SolveOptions:
    tol_residual: float = 1e-10
    max_newton: int = 50
    damping: float = 0.5
    min_step: float = 2.0 ** -20
    continuation_steps: int = 4
    max_continuation_steps: int = 64

    def __post_init__(self):
        for name in ("tol_residual", "max_newton", "damping", "min_step",
                     "continuation_steps", "max_continuation_steps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")


@dataclass
class SolveState:
    u: ScalarField
    t: float = 0.0
    residual_norm: float = float("inf")
    newton_iters: int = 0
    admissible: bool = True


@dataclass
class SolveReport:
    steps: list = field(default_factory=list)
    newton_total: int = 0
    converged: bool = False
    final_residual: float = float("nan")
    residual_history: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    linear_residuals: list = field(default_factory=list)
    subsolution_deficit: float = 0.0
    seconds: float = 0.0
    message: str = ""

    def to_dict(self):
        return {
            "converged": self.converged,
            "newton_total": self.newton_total,
            "final_residual": self.final_residual,
            "steps": self.steps,
            "residual_history": self.residual_history,
            "step_sizes": self.step_sizes,
            "max_linear_residual": max(self.linear_residuals, default=0.0),
            "subsolution_deficit": self.subsolution_deficit,
            "seconds": self.seconds,
            "message": self.message,
        }


class Discretization:
    """Interior-node data of a problem: sampled g, χ and the stencil layout."""

    def __init__(self, problem):
        grid = problem.grid
        self.problem = problem
        self.grid = grid
        pts = grid.interior_points()
        self.g = hermitian(problem.metric.g(pts))
        self.chi = hermitian(problem.chi(pts))
        self.interior_mask = grid.interior_mask()
        self.n_interior = pts.shape[0]
        # index of every node in the interior numbering (−1 on the boundary)
        self.number = -np.ones(grid.shape, dtype=np.int64)
        self.number[self.interior_mask] = np.arange(self.n_interior)
        self._coupling = None

    def psi_interior(self, psi_values):
        return np.asarray(psi_values).reshape(self.grid.shape)[self.interior_mask]

    def gtilde(self, u):
        return hermitian(self.chi + complex_hessian(u))

    def eigen(self, u):
        return pencil_eigenvalues(self.g, self.gtilde(u))

    def admissible(self, lam):
        return lam[:, 0] > ADMISSIBILITY_RTOL * np.sum(lam, axis=-1) / lam.shape[-1]

    def residual(self, u, psi_int):
        """Discrete log-form residual at interior nodes; raises if any node is inadmissible."""
        lam = self.eigen(u)
        bad = ~self.admissible(lam)
        if np.any(bad):
            k = int(np.argmax(bad))
            node = tuple(int(i) for i in np.argwhere(self.interior_mask)[k])
            raise NotAdmissibleError(f"state is not admissible at node {node} (λ_min = {lam[k, 0]:.3e})")
        n = lam.shape[-1]
        return np.sum(np.log(lam), axis=-1) - np.log(np.sum(lam, axis=-1)) - np.log(psi_int / n)

    def coefficients(self, u):
        """F = 𝔤^{-1} − g^{-1}/W at interior nodes."""
        lam, basis = pencil_decomposition(self.g, self.gtilde(u))
        if not np.all(self.admissible(lam)):
            raise NotAdmissibleError("cannot linearize at an inadmissible state")
        weights = 1.0 / lam - 1.0 / np.sum(lam, axis=-1, keepdims=True)
        return hermitian(np.einsum("...ik,...k,...jk->...ij", basis, weights, np.conj(basis)))

    def _stencil_coupling(self):
        """For each Hessian pair: (row indices, column indices, stencil weights) over interior rows."""
        if self._coupling is not None:
            return self._coupling
        grid = self.grid
        m, dim = grid.m, grid.dim
        rows = np.arange(self.n_interior)
        coupling = []
        for a, b in hessian_pairs(dim, grid.n):
            cols, weights = [], []
            for offset, w in stencil(a, b, grid.h):
                cols.append(self.number[tuple(slice(1 + o, m - 1 + o) for o in offset)].reshape(-1))
                weights.append(w)
            coupling.append(((a, b), rows, cols, weights))
        self._coupling = coupling
        return coupling

    def jacobian(self, u):
        """Sparse interior-by-interior Jacobian of :meth:`residual`."""
        f = self.coefficients(u)
        d = complex_derivative_vectors(self.grid.n)
        # Re tr(F D H D^H) = Σ_ab C_ab H_ab with C = Re(D^H F D)
        c = np.real(np.einsum("ka,...kl,lb->...ab", np.conj(d), f, d))
        c = 0.5 * (c + np.swapaxes(c, -1, -2))
        data, ii, jj = [], [], []
        for (a, b), rows, cols, weights in self._stencil_coupling():
            coef = c[:, a, b] if a == b else 2.0 * c[:, a, b]
            for col, w in zip(cols, weights):
                keep = col >= 0
                ii.append(rows[keep])
                jj.append(col[keep])
                data.append(w * coef[keep])
        n_int = self.n_interior
        return sp.csr_matrix((np.concatenate(data), (np.concatenate(ii), np.concatenate(jj))),
                             shape=(n_int, n_int))

    def apply_jacobian(self, u, v):
        """Matrix-free J v = contraction of F with the stencil Hessian of v (v = 0 on the boundary)."""
        f = self.coefficients(u)
        vv = v.values.copy()
        vv[~self.interior_mask] = 0.0
        return contract(f, complex_hessian(ScalarField(self.grid, vv)))

    def field_from_interior(self, values, base=None):
        out = np.zeros(self.grid.shape) if base is None else base.copy()
        out[self.interior_mask] = values
        return out


def _solve_linear(mat, rhs):
    """Solve to relative residual ≤ 1e-12; direct for small systems, AMG-preconditioned GMRES otherwise."""
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return np.zeros_like(rhs), 0.0
    if mat.shape[0] <= DIRECT_SOLVE_MAX_UNKNOWNS:
        x = spla.spsolve(mat.tocsc(), rhs)
        info = "direct"
    else:
        sym = (0.5 * (mat + mat.T)).tocsr()
        ml = pyamg.smoothed_aggregation_solver(sym, symmetry="symmetric", max_coarse=500)
        prec = ml.aspreconditioner()
        iters = [0]

        def count(_):
            iters[0] += 1

        x, code = spla.gmres(mat, rhs, M=prec, rtol=1e-13, atol=0.0, restart=50, maxiter=40,
                             callback=count, callback_type="pr_norm")
        info = f"gmres code {code}, {iters[0]} inner iterations"
    rel = np.linalg.norm(mat @ x - rhs) / bnorm
    if not np.isfinite(rel) or rel > LINEAR_RTOL:
        raise SolverError(f"linear solve reached relative residual {rel:.3e} > {LINEAR_RTOL:g} ({info})")
    return x, rel


def initial_psi(problem):
    """ψ_0 for which ū solves the discrete equation exactly (as a field; boundary copies ψ)."""
    disc = Discretization(problem)
    lam = disc.eigen(problem.usub)
    bad = ~disc.admissible(lam)
    if np.any(bad):
        k = int(np.argmax(bad))
        node = tuple(int(i) for i in np.argwhere(disc.interior_mask)[k])
        raise NotAdmissibleError(f"subsolution is not admissible at node {node} (λ_min = {lam[k, 0]:.3e})")
    n = lam.shape[-1]
    psi0 = n * np.prod(lam, axis=-1) / np.sum(lam, axis=-1)
    return ScalarField(problem.grid, disc.field_from_interior(psi0, problem.psi.values), "psi0")


def newton_step(state, problem, psi_t, disc=None):
    """Newton direction (zero on the boundary) and the current residual max-norm.

    ``psi_t`` is a field or an array over interior nodes.  Returns
    ``(direction, predicted_decrease, linear_relative_residual)``; for a full
    step the linear model predicts the residual max-norm drops to zero, so the
    predicted decrease equals the current max-norm.
    """
    disc = Discretization(problem) if disc is None else disc
    psi_int = _psi_interior(disc, psi_t)
    r = disc.residual(state.u, psi_int)
    jac = disc.jacobian(state.u)
    delta, rel = _solve_linear(jac, -r)
    direction = ScalarField(problem.grid, disc.field_from_interior(delta), "du")
    return direction, float(np.max(np.abs(r))), rel


def _psi_interior(disc, psi_t):
    if isinstance(psi_t, ScalarField):
        return disc.psi_interior(psi_t.values)
    psi_t = np.asarray(psi_t, dtype=float)
    if psi_t.shape == disc.grid.shape:
        return disc.psi_interior(psi_t)
    return psi_t


def line_search_admissible(state, direction, problem, psi_t, opts=None, disc=None):
    """Backtrack s = 1, ½, … ≥ min_step until the iterate is admissible and the residual drops.

    Returns ``(new_state, s)``; raises :class:`LineSearchError` when no step works.
    """
    opts = SolveOptions() if opts is None else opts
    disc = Discretization(problem) if disc is None else disc
    psi_int = _psi_interior(disc, psi_t)
    if not np.any(direction.values):
        return state, 1.0
    old = np.max(np.abs(disc.residual(state.u, psi_int)))
    s = 1.0
    while s >= opts.min_step:
        trial = ScalarField(problem.grid, state.u.values + s * direction.values, state.u.name)
        lam = disc.eigen(trial)
        if np.all(disc.admissible(lam)):
            new = float(np.max(np.abs(disc.residual(trial, psi_int))))
            # at rounding level the residual can no longer decrease strictly
            if new < old or new <= 1e-14:
                return SolveState(trial, state.t, new, state.newton_iters + 1, True), s
        s *= opts.damping
    raise LineSearchError(f"line search failed: no admissible decreasing step down to {opts.min_step:g}")


def _newton_solve(state, problem, psi_int, opts, disc, report):
    r = float(np.max(np.abs(disc.residual(state.u, psi_int))))
    state = SolveState(state.u, state.t, r, 0, True)
    history = [r]
    while r > opts.tol_residual:
        if state.newton_iters >= opts.max_newton:
            raise SolverError(f"Newton did not converge in {opts.max_newton} iterations (residual {r:.3e})")
        direction, _, rel = newton_step(state, problem, psi_int, disc)
        report.linear_residuals.append(rel)
        state, s = line_search_admissible(state, direction, problem, psi_int, opts, disc)
        report.step_sizes.append(s)
        r = state.residual_norm
        history.append(r)
    return state, history


def solve_continuation(problem, opts=None):
    """Run the ψ-continuation from ū to t = 1; returns (state, report).

    Raises :class:`ContinuationError` (with the last good t and state) when
    the step in t would have to shrink below 1/max_continuation_steps.
    """
    opts = SolveOptions() if opts is None else opts
    start = time.perf_counter()
    report = SolveReport()
    disc = Discretization(problem)
    psi0 = initial_psi(problem)
    psi0_int = disc.psi_interior(psi0.values)
    psi_int = disc.psi_interior(problem.psi.values)
    report.subsolution_deficit = float(max(0.0, np.max(psi_int - psi0_int)))
    if report.subsolution_deficit > 1e-10:
        logger.warning("subsolution condition fails on the grid: ψ exceeds ψ_0 by up to %.3e",
                       report.subsolution_deficit)

    u = apply_dirichlet(problem.usub.copy(name="u"), problem.phi)
    state = SolveState(u, 0.0, 0.0, 0, True)
    t, dt = 0.0, 1.0 / opts.continuation_steps
    min_dt = 1.0 / opts.max_continuation_steps
    while t < 1.0:
        t_next = min(1.0, t + dt)
        psi_t = (1.0 - t_next) * psi0_int + t_next * psi_int
        try:
            new_state, history = _newton_solve(state, problem, psi_t, opts, disc, report)
        except (SolverError, NotAdmissibleError) as exc:
            report.steps.append({"t": t_next, "newton_iters": None, "residual": None, "failed": str(exc)})
            if dt / 2 < min_dt - 1e-15:
                report.seconds = time.perf_counter() - start
                report.message = f"continuation failed at t = {t_next:.6g}: {exc}"
                raise ContinuationError(report.message, last_t=t, last_state=state) from exc
            dt /= 2
            continue
        report.newton_total += new_state.newton_iters
        report.residual_history.extend(history)
        report.steps.append({"t": t_next, "newton_iters": new_state.newton_iters,
                             "residual": new_state.residual_norm})
        state = SolveState(new_state.u, t_next, new_state.residual_norm, report.newton_total, True)
        t = t_next
    report.converged = True
    report.final_residual = state.residual_norm
    report.seconds = time.perf_counter() - start
    return state, report


def mms_generate(metric, chi, u_star, grid, bump=0.0, name="mms"):
    """Manufactured problem with exact solution ``u_star``.

    ψ is computed from the analytic complex Hessian of u_star at every node,
    φ = u_star on the boundary, and ū = u_star − bump·b where b is the product
    of sines vanishing on the faces of the box (bump = 0 gives ū = u_star).
    """
    pts = grid.points()
    gt = hermitian(chi(pts) + u_star.complex_hessian(pts))
    g = hermitian(metric.g(pts))
    lam = pencil_eigenvalues(g, gt)
    bad = ~(lam[..., 0] > ADMISSIBILITY_RTOL * np.sum(lam, axis=-1) / grid.n)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NotAdmissibleError(f"u_star is not admissible at node {node}")
    psi = grid.n * np.prod(lam, axis=-1) / np.sum(lam, axis=-1)
    exact = u_star.value(pts)
    usub = exact - bump * box_bump(pts, grid.lo, grid.hi)
    return ProblemSpec(grid, metric, chi, ScalarField(grid, psi, "psi"), u_star.value,
                       ScalarField(grid, usub, "usub"), exact=u_star, name=name)


class DirichletSolver(BaseEstimator):
    """Estimator-style front end: ``fit(problem)`` solves, ``predict(points)`` interpolates.

    Fitted attributes: ``u_`` (ScalarField), ``report_`` (SolveReport),
    ``state_`` (final SolveState).
    """

    def __init__(self, tol_residual=1e-10, max_newton=50, damping=0.5, min_step=2.0 ** -20,
                 continuation_steps=4, max_continuation_steps=64):
        self.tol_residual = tol_residual
        self.max_newton = max_newton
        self.damping = damping
        self.min_step = min_step
        self.continuation_steps = continuation_steps
        self.max_continuation_steps = max_continuation_steps

    def _options(self):
        return SolveOptions(self.tol_residual, self.max_newton, self.damping, self.min_step,
                            self.continuation_steps, self.max_continuation_steps)

    def fit(self, problem, y=None):
        if not isinstance(problem, ProblemSpec):
            raise TypeError(f"fit expects a ProblemSpec, got {type(problem).__name__}")
        self.state_, self.report_ = solve_continuation(problem, self._options())
        self.u_ = self.state_.u
        self.problem_ = problem
        return self

    def predict(self, points):
        check_is_fitted(self, "u_")
        grid = self.u_.spec
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != grid.dim:
            raise ValueError(f"points must have trailing dimension {grid.dim}")
        interp = RegularGridInterpolator(grid.axes(), self.u_.values, method="linear")
        return interp(points)

    def error(self):
        """Max-norm error against the manufactured solution, if one is attached."""
        check_is_fitted(self, "u_")
        if self.problem_.exact is None:
            raise ValueError("problem has no exact solution")
        exact = self.problem_.exact.value(self.u_.spec.points())
        return float(np.max(np.abs(self.u_.values - exact)))
