"""Finite-state hidden Markov model with white-noise observations.

The hidden signal is a continuous-time Markov chain on S = {1, ..., d} with
transition-rate matrix A (nonnegative off-diagonal, zero row sums).  The
observation is the m-dimensional process

    dZ_t = h(X_t) dt + r dW_t,

where h(x) is row x of the observation matrix H and W is a standard Brownian
motion independent of X.  Internally the model stores the rescaled observation
function H/r so that downstream code always works in the unit-noise form.

This module holds the model container, its validation, and the structural
quantities attached to the pair (A, H): the carre du champ operator, the
invariant measure, ergodicity and observability of the pair, and the closed
form decay-rate bounds computable from A and H alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeOffDiagonal,
    NonPositiveNoise,
    NonUniqueInvariantMeasure,
    RowSumNonZero,
)

__all__ = [
    "HmmModel",
    "SubspaceBasis",
    "validate_model",
    "as_simplex",
    "carre_du_champ",
    "invariant_measure",
    "is_ergodic",
    "observable_space",
    "rate_bounds",
    "nonergodic_limit_bounds",
    "save_model",
    "load_model",
]

# Row sums larger than this reject the generator outright; accepted rows are
# re-canonicalized so the stored diagonal makes every row sum exactly zero.
ROW_SUM_TOL = 1e-9
SIMPLEX_TOL = 1e-10
SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class HmmModel:
    """Validated model container.

    Attributes
    ----------
    A : (d, d) transition-rate matrix, canonical diagonal.
    H : (d, m) observation matrix, row x is h(x).
    r : observation noise amplitude (noise variance r**2 per unit time).
    h_unit : (d, m) rescaled observation H/r; equals H when noiseless.
    noiseless : True only for r == 0 models built with allow_noiseless.
    """

    A: np.ndarray
    H: np.ndarray
    r: float
    h_unit: np.ndarray = field(repr=False)
    noiseless: bool = False

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of a subspace of functions on S.

    vectors has shape (dim, d); rows are orthonormal in the Euclidean inner
    product.  dim is between 1 and d.
    """

    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def contains(self, f: np.ndarray, tol: float = 1e-9) -> bool:
        """True when f lies in the span within tol (relative residual)."""
        f = np.asarray(f, dtype=float)
        proj = self.vectors.T @ (self.vectors @ f)
        scale = max(float(np.linalg.norm(f)), 1.0)
        return float(np.linalg.norm(f - proj)) <= tol * scale


def _as_rate_matrix(A) -> np.ndarray:
    """Validate a transition-rate matrix and canonicalize its diagonal."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"rate matrix must be square, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DimensionMismatch("rate matrix contains non-finite entries")
    d = A.shape[0]
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0.0):
        x, y = np.argwhere(off < 0.0)[0]
        raise NegativeOffDiagonal(f"A[{x},{y}] = {A[x, y]} < 0")
    row_sums = A.sum(axis=1)
    if np.max(np.abs(row_sums)) > ROW_SUM_TOL:
        x = int(np.argmax(np.abs(row_sums)))
        raise RowSumNonZero(f"row {x} sums to {row_sums[x]}")
    # Canonical diagonal: rows sum to zero exactly up to rounding.
    np.fill_diagonal(off, -off.sum(axis=1))
    return off


def validate_model(A, H, r: float, allow_noiseless: bool = False) -> HmmModel:
    """Validate (A, H, r) and return the immutable model container.

    Raises NegativeOffDiagonal / RowSumNonZero / DimensionMismatch on a bad
    generator or shape, and NonPositiveNoise when r <= 0.  The only way to
    build an r == 0 model is allow_noiseless=True; such a model is usable
    with the exact noiseless filter only.
    """
    A = _as_rate_matrix(A)
    H = np.array(H, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    if H.ndim != 2 or H.shape[0] != A.shape[0]:
        raise DimensionMismatch(
            f"H must have shape ({A.shape[0]}, m), got {H.shape}"
        )
    if not np.all(np.isfinite(H)):
        raise DimensionMismatch("H contains non-finite entries")
    r = float(r)
    if not math.isfinite(r):
        raise NonPositiveNoise(f"noise amplitude r = {r} is not finite")
    if r <= 0.0:
        if not (allow_noiseless and r == 0.0):
            raise NonPositiveNoise(
                f"noise amplitude r = {r} <= 0; pass allow_noiseless=True "
                "for an exact noiseless model"
            )
        return HmmModel(A=A, H=H, r=0.0, h_unit=H.copy(), noiseless=True)
    return HmmModel(A=A, H=H, r=r, h_unit=H / r, noiseless=False)


def as_simplex(p, d: int | None = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a probability vector: entries >= -tol, sum within tol of 1.

    Tiny negative entries from floating-point clipping are zeroed and the
    vector is renormalized, so the result is an exact simplex point.
    """
    p = np.array(p, dtype=float)
    if p.ndim != 1:
        raise DimensionMismatch(f"probability vector must be 1-D, got {p.shape}")
    if d is not None and p.shape[0] != d:
        raise DimensionMismatch(f"expected length {d}, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise DimensionMismatch("probability vector has non-finite entries")
    if np.any(p < -tol):
        raise DimensionMismatch(f"negative probability {p.min()}")
    if abs(p.sum() - 1.0) > tol:
        raise DimensionMismatch(f"probabilities sum to {p.sum()}, not 1")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def carre_du_champ(A, f) -> np.ndarray:
    """Pointwise energy (Gamma f)(x) = sum_y A(x, y) (f(x) - f(y))**2.

    Entrywise nonnegative, zero on constants, and invariant under adding a
    constant to f.  Only off-diagonal rates contribute.
    """
    A = _as_rate_matrix(A)
    f = np.asarray(f, dtype=float)
    if f.shape != (A.shape[0],):
        raise DimensionMismatch(f"f must have shape ({A.shape[0]},), got {f.shape}")
    diff = f[:, None] - f[None, :]
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    return (off * diff**2).sum(axis=1)


def invariant_measure(A, allow_nonunique: bool = False) -> np.ndarray:
    """Invariant probability vector mu with mu^T A = 0.

    Solves the least-squares system [A^T; 1^T] mu = [0; 1].  When the
    nullspace of A^T has dimension > 1 the measure is not unique and
    NonUniqueInvariantMeasure is raised, unless allow_nonunique=True in
    which case one nonnegative element is returned (a nonnegative
    least-squares solution of the same system).
    """
    A = _as_rate_matrix(A)
    d = A.shape[0]
    sv = np.linalg.svd(A.T, compute_uv=False)
    scale = sv[0] if sv[0] > 0 else 1.0
    null_dim = int(np.sum(sv <= 1e-9 * scale))
    if null_dim > 1 and not allow_nonunique:
        raise NonUniqueInvariantMeasure(
            f"nullspace of A^T has dimension {null_dim}"
        )
    stacked = np.vstack([A.T, np.ones((1, d))])
    rhs = np.zeros(d + 1)
    rhs[-1] = 1.0
    if null_dim > 1:
        from scipy.optimize import nnls

        mu, _ = nnls(stacked, rhs)
    else:
        mu, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
    mu = np.clip(mu, 0.0, None)
    total = mu.sum()
    if total <= 0.0:
        raise NonUniqueInvariantMeasure("no nonnegative invariant vector found")
    return mu / total


def is_ergodic(A) -> bool:
    """True when constants are the only functions with Gamma f identically 0.

    Gamma f vanishes everywhere iff f(x) = f(y) whenever A(x, y) > 0, i.e.
    iff f is constant on each connected component of the undirected graph
    with an edge {x, y} whenever A(x, y) > 0 or A(y, x) > 0.  So the model
    is ergodic in this sense iff that graph is connected.  A single state
    is trivially ergodic; a zero generator on d >= 2 states is not.
    """
    A = _as_rate_matrix(A)
    d = A.shape[0]
    adj = (A > 0.0) | (A.T > 0.0)
    seen = np.zeros(d, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        x = stack.pop()
        for y in np.flatnonzero(adj[x]):
            if not seen[y]:
                seen[y] = True
                stack.append(int(y))
    return bool(seen.all())


def observable_space(A, H) -> SubspaceBasis:
    """Smallest subspace containing constants, closed under g -> Ag and
    g -> g * h_j (entrywise, each observation column).

    The pair (A, H) is observable iff the returned dimension equals d.
    Closure is computed by alternating the two maps on an orthonormal
    basis until the dimension is stable; rank decisions use tolerance
    1e-9 on singular values relative to the largest.
    """
    A = _as_rate_matrix(A)
    H = np.array(H, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    if H.shape[0] != A.shape[0]:
        raise DimensionMismatch(
            f"H must have shape ({A.shape[0]}, m), got {H.shape}"
        )
    d = A.shape[0]

    def orthonormalize(rows: np.ndarray) -> np.ndarray:
        u, s, vt = np.linalg.svd(rows, full_matrices=False)
        keep = s > 1e-9 * (s[0] if s.size and s[0] > 0 else 1.0)
        return vt[keep]

    basis = np.ones((1, d)) / math.sqrt(d)
    while True:
        candidates = [basis, basis @ A.T]
        for j in range(H.shape[1]):
            candidates.append(basis * H[:, j][None, :])
        new_basis = orthonormalize(np.vstack(candidates))
        if new_basis.shape[0] == basis.shape[0]:
            return SubspaceBasis(vectors=new_basis)
        basis = new_basis
        if basis.shape[0] == d:
            return SubspaceBasis(vectors=basis)


def rate_bounds(A, mu_bar) -> tuple[float, float, float]:
    """Classical decay-rate lower bounds computable from A and mu alone.

    Returns the triple
        b1 = min_{x != y} sqrt(A(x, y) A(y, x)),
        b2 = sum_x mu(x) min_{y != x} A(x, y),
        b3 = sum_y min_{x != y} A(x, y).
    Each is nonnegative; b1 and b2 vanish whenever some off-diagonal rate
    does, so all three are zero for any chain with a one-way edge pair.
    """
    A = _as_rate_matrix(A)
    mu = as_simplex(mu_bar, d=A.shape[0])
    d = A.shape[0]
    off_mask = ~np.eye(d, dtype=bool)
    geo = np.sqrt(A * A.T)
    b1 = float(geo[off_mask].min()) if d > 1 else 0.0
    row_min = np.array([A[x][np.arange(d) != x].min() for x in range(d)])
    b2 = float(mu @ row_min) if d > 1 else 0.0
    col_min = np.array([A[:, y][np.arange(d) != y].min() for y in range(d)])
    b3 = float(col_min.sum()) if d > 1 else 0.0
    return b1, b2, b3


def nonergodic_limit_bounds(A, H, mu_bar) -> tuple[float, float]:
    """Small-noise limit bounds on the decay rate, from the observation gaps.

    Returns
        u1 = 0.5 * sum_x mu(x) min_{y != x} |h(x) - h(y)|**2,
        u2 = 0.5 * sum_{x, y} mu(x) |h(x) - h(y)|**2.
    u1 <= u2 always; u1 = 0 whenever two states share an observation row.
    """
    A = _as_rate_matrix(A)
    H = np.array(H, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    d = A.shape[0]
    if H.shape[0] != d:
        raise DimensionMismatch(f"H must have {d} rows, got {H.shape[0]}")
    mu = as_simplex(mu_bar, d=d)
    gap2 = ((H[:, None, :] - H[None, :, :]) ** 2).sum(axis=2)
    if d == 1:
        return 0.0, 0.0
    off = ~np.eye(d, dtype=bool)
    min_gap = np.array([gap2[x][off[x]].min() for x in range(d)])
    u1 = 0.5 * float(mu @ min_gap)
    u2 = 0.5 * float(mu @ gap2.sum(axis=1))
    return u1, u2


def save_model(model: HmmModel, path: str) -> None:
    """Write the model as JSON with row-major flat A and H."""
    payload = {
        "d": model.d,
        "m": model.m,
        "A": [float(v) for v in model.A.reshape(-1)],
        "H": [float(v) for v in model.H.reshape(-1)],
        "r": float(model.r),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_model(path: str, allow_noiseless: bool = False) -> HmmModel:
    """Read a model JSON written by save_model; rejects NaN/Inf values."""

    def _reject(token: str):
        raise DimensionMismatch(f"non-finite value {token!r} in model file")

    with open(path) as fh:
        payload = json.load(fh, parse_constant=_reject)
    try:
        d = int(payload["d"])
        m = int(payload["m"])
        A = np.array(payload["A"], dtype=float).reshape(d, d)
        H = np.array(payload["H"], dtype=float).reshape(d, m)
        r = float(payload["r"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DimensionMismatch(f"malformed model file: {exc}") from exc
    return validate_model(A, H, r, allow_noiseless=allow_noiseless)
