"""Input validation helpers shared by the public entry points."""

import numpy as np

__all__ = [
    "check_hermitian",
    "check_positive_definite",
    "check_points",
    "check_same_shape",
]


def check_hermitian(a, name="matrix", rtol=1e-14):
    """Return `a` as a complex array of shape (..., n, n), symmetrized.

    Entries that deviate from their conjugate transpose by more than `rtol`
    relative to the largest entry are rejected rather than silently averaged.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must have shape (..., n, n), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    ah = np.conj(np.swapaxes(a, -1, -2))
    scale = max(float(np.max(np.abs(a), initial=0.0)), 1.0)
    # Hermitian up to rounding of the caller's arithmetic is accepted.
    if np.max(np.abs(a - ah), initial=0.0) > max(rtol, 1e-12) * scale:
        raise ValueError(f"{name} is not Hermitian")
    return 0.5 * (a + ah)


def check_positive_definite(a, name="matrix"):
    """Hermitian check plus a Cholesky attempt; returns the symmetrized array."""
    a = check_hermitian(a, name)
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None
    return a


def check_points(x, n):
    """Coerce real coordinates to shape (..., 2n)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 2 * n:
        raise ValueError(f"points must have trailing dimension {2 * n}, got {x.shape}")
    return x


def check_same_shape(*arrays, names=None):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        label = ", ".join(names) if names else "inputs"
        raise ValueError(f"{label} have mismatched shapes {sorted(shapes)}")
