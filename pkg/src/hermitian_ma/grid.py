"""Uniform grids on boxes in R^{2n} ≅ C^n and the finite-difference stencils on them.

Axes are ordered (x_1, y_1, ..., x_n, y_n) and field values are stored as a
real array of shape (m,) * 2n in row-major order.  A node is interior when
every index lies in [1, m − 2].
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .functions import complex_hessian_from_real
from .pointwise import hermitian

__all__ = [
    "GridSpec",
    "ScalarField",
    "hessian_pairs",
    "real_hessian",
    "complex_hessian",
    "gradient_sup",
    "w_field",
    "apply_dirichlet",
]


@dataclass(frozen=True)
class GridSpec:
    n: int
    lo: tuple
    hi: tuple
    m: int

    def __post_init__(self):
        lo = tuple(float(v) for v in np.broadcast_to(self.lo, (2 * self.n,)))
        hi = tuple(float(v) for v in np.broadcast_to(self.hi, (2 * self.n,)))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.n < 2:
            raise ValueError("complex dimension must be at least 2")
        if self.m < 5 or self.m % 2 == 0:
            raise ValueError(f"points per axis must be odd and at least 5, got {self.m}")
        if not all(b > a for a, b in zip(lo, hi)):
            raise ValueError("box must satisfy hi > lo componentwise")

    @property
    def dim(self):
        return 2 * self.n

    @property
    def shape(self):
        return (self.m,) * self.dim

    @property
    def size(self):
        return self.m ** self.dim

    @property
    def h(self):
        return (np.array(self.hi) - np.array(self.lo)) / (self.m - 1)

    def axes(self):
        return [np.linspace(a, b, self.m) for a, b in zip(self.lo, self.hi)]

    def points(self):
        """Node coordinates, shape (m,) * 2n + (2n,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def interior_slice(self):
        return (slice(1, self.m - 1),) * self.dim

    def interior_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.interior_slice()] = True
        return mask

    def boundary_mask(self):
        return ~self.interior_mask()

    def interior_points(self):
        """Interior node coordinates, flattened to shape (N_int, 2n) in row-major order."""
        return self.points()[self.interior_slice()].reshape(-1, self.dim)

    def is_interior(self, idx):
        idx = tuple(idx)
        return len(idx) == self.dim and all(1 <= i <= self.m - 2 for i in idx)


@dataclass
class ScalarField:
    spec: GridSpec
    values: np.ndarray
    name: str = field(default="u")

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.spec.shape:
            if values.size != self.spec.size:
                raise ValueError(f"expected {self.spec.size} values, got {values.size}")
            values = values.reshape(self.spec.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"field {self.name!r} has non-finite values")
        self.values = values

    @classmethod
    def from_function(cls, spec, fn, name="u"):
        return cls(spec, fn(spec.points()), name)

    def copy(self, name=None):
        return ScalarField(self.spec, self.values.copy(), self.name if name is None else name)

    def interior(self):
        return self.values[self.spec.interior_slice()].reshape(-1)


def hessian_pairs(dim, n):
    """Axis pairs (a, b), a ≤ b, whose second differences enter the complex Hessian.

    The (x_k, y_k) mixed derivative cancels from u_{ij̄}, so it is skipped.
    """
    pairs = [(a, a) for a in range(dim)]
    pairs += [(a, b) for a, b in combinations(range(dim), 2) if not (a % 2 == 0 and b == a + 1)]
    return pairs


def stencil(a, b, h):
    """Offsets and weights of the second difference ∂_a ∂_b (a ≤ b)."""
    dim = len(h)
    unit = np.eye(dim, dtype=int)
    if a == b:
        w = 1.0 / h[a] ** 2
        return [(unit[a], w), (-unit[a], w), (np.zeros(dim, dtype=int), -2.0 * w)]
    w = 1.0 / (4.0 * h[a] * h[b])
    return [(unit[a] + unit[b], w), (-unit[a] - unit[b], w),
            (unit[a] - unit[b], -w), (unit[b] - unit[a], -w)]


def _shifted(values, offset, m):
    return values[tuple(slice(1 + o, m - 1 + o) for o in offset)]


def real_hessian(f):
    """Central second differences at all interior nodes, shape (N_int, 2n, 2n).

    Entries not in :func:`hessian_pairs` are left at zero.
    """
    spec = f.spec
    dim, m, h = spec.dim, spec.m, spec.h
    out = np.zeros(((m - 2) ** dim, dim, dim))
    for a, b in hessian_pairs(dim, spec.n):
        acc = np.zeros((m - 2,) * dim)
        for offset, w in stencil(a, b, h):
            acc += w * _shifted(f.values, offset, m)
        out[:, a, b] = out[:, b, a] = acc.reshape(-1)
    return out


def complex_hessian(f, idx=None):
    """u_{ij̄} from central differences.

    Without ``idx`` the result covers every interior node in row-major order,
    shape (N_int, n, n); with a multi-index it is the n×n matrix at that node.
    """
    spec = f.spec
    if idx is None:
        return hermitian(complex_hessian_from_real(real_hessian(f), spec.n))
    idx = tuple(int(i) for i in idx)
    if not spec.is_interior(idx):
        raise IndexError(f"node {idx} is not interior")
    dim, h = spec.dim, spec.h
    hr = np.zeros((dim, dim))
    for a, b in hessian_pairs(dim, spec.n):
        hr[a, b] = hr[b, a] = sum(w * f.values[tuple(np.add(idx, offset))]
                                  for offset, w in stencil(a, b, h))
    return hermitian(complex_hessian_from_real(hr, spec.n))


def gradient_sup(f, region="all"):
    """Max Euclidean norm of the real gradient over all nodes or the boundary nodes.

    Central differences inside, second-order one-sided differences on the faces.
    """
    if region not in ("all", "boundary", "interior"):
        raise ValueError(f"region must be 'all', 'interior' or 'boundary', got {region!r}")
    grads = np.gradient(f.values, *f.spec.h, edge_order=2)
    norm = np.sqrt(sum(g * g for g in grads))
    if region == "boundary":
        norm = norm[f.spec.boundary_mask()]
    elif region == "interior":
        norm = norm[f.spec.interior_mask()]
    return float(np.max(norm))


def _boundary_real_hessian(f):
    """Second-order one-sided Hessian on boundary nodes, shape (N_bdry, 2n, 2n)."""
    h = f.spec.h
    mask = f.spec.boundary_mask()
    grads = np.gradient(f.values, *h, edge_order=2)
    dim = f.spec.dim
    out = np.zeros((int(mask.sum()), dim, dim))
    for a in range(dim):
        second = np.gradient(grads[a], *h, edge_order=2)
        for b in range(dim):
            out[:, a, b] = second[b][mask]
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def w_field(f, chi, metric, boundary="one-sided"):
    """W = tr_g(χ + u_{ij̄}) at every node.

    Interior values use the compact central stencils.  On boundary nodes,
    ``boundary="one-sided"`` uses nested second-order one-sided differences
    and ``boundary="mask"`` leaves zeros (callers should then restrict to the
    interior).
    """
    if boundary not in ("one-sided", "mask"):
        raise ValueError(f"boundary must be 'one-sided' or 'mask', got {boundary!r}")
    spec = f.spec
    out = np.zeros(spec.shape)
    pts = spec.interior_points()
    hess = complex_hessian(f)
    out[spec.interior_mask()] = _trace_g(metric.g(pts), chi(pts) + hess)
    if boundary == "one-sided":
        mask = spec.boundary_mask()
        bpts = spec.points()[mask]
        bhess = hermitian(complex_hessian_from_real(_boundary_real_hessian(f), spec.n))
        out[mask] = _trace_g(metric.g(bpts), chi(bpts) + bhess)
    return ScalarField(spec, out, "W")


def _trace_g(g, a):
    # tr_g a = Σ g^{ij̄} a_{ij̄} = tr(g^{-1} a)
    return np.real(np.trace(np.linalg.solve(g, a), axis1=-2, axis2=-1))


def apply_dirichlet(f, phi):
    """Overwrite boundary nodes with ``phi`` (callable on points, array or field)."""
    spec = f.spec
    mask = spec.boundary_mask()
    if callable(phi):
        vals = np.asarray(phi(spec.points()[mask]), dtype=float)
    else:
        src = phi.values if isinstance(phi, ScalarField) else np.asarray(phi, dtype=float)
        vals = np.asarray(src).reshape(spec.shape)[mask]
    out = f.values.copy()
    out[mask] = vals
    return ScalarField(spec, out, f.name)
