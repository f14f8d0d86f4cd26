"""Conditional-law evolution given the observation record.

The conditional distribution pi_t of the hidden state solves a d-dimensional
stochastic differential equation driven by the observation.  In unit-noise
form (observation function hu = H/r) the Euler scheme per grid step is

    pi' = pi + dt * A^T pi + G(pi) (dZ/r - pi(hu) dt),
    G(pi)(x) = pi(x) (hu(x) - pi(hu))^T,

followed by clipping negative entries at zero and renormalizing.  The gain
rows sum to zero, which preserves total mass exactly; clipping therefore
never empties the simplex unless the inputs are already non-finite, but the
guard stays in place because a failure there is unrecoverable.

All stepping routines broadcast over arbitrary leading axes, so one pass can
evolve several priors on one observation path, or a whole ensemble of paths,
at identical per-path results.

For exactly noiseless observations (r = 0) the conditional law is computed by
a different, exact mechanism: forward evolution conditioned on the observed
level set of h, with mass transferred along the generator's cross-level flux
at observed level changes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMass, DimensionMismatch, EmptyLevelSet, GridMismatch, NonPositiveNoise
from .model import HmmModel, as_simplex
from .sim import ObservationPath, StatePath

__all__ = [
    "FilterTrajectory",
    "ConditionalMoments",
    "wonham_step",
    "run_filter",
    "evolve_ensemble",
    "run_exact_noiseless_filter",
    "conditional_moments",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

GAIN_TOL = 1e-12


@dataclass(frozen=True)
class FilterTrajectory:
    """Filter states on the uniform grid: pis[k] is the law at time k * dt."""

    dt: float
    pis: np.ndarray
    label: str = ""

    @property
    def n_steps(self) -> int:
        return self.pis.shape[0] - 1

    @property
    def d(self) -> int:
        return self.pis.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.pis.shape[0]) * self.dt


@dataclass(frozen=True)
class ConditionalMoments:
    """First and second conditional moments of f (and optionally g) under pi."""

    mean: float
    variance: float
    covariance: float | np.ndarray | None = None


def _degenerate(mass: np.ndarray) -> bool:
    return bool(np.any(~np.isfinite(mass)) or np.any(mass <= 0.0))


def wonham_step(
    pi: np.ndarray,
    dz: np.ndarray,
    dt: float,
    model: HmmModel,
    check_gain: bool = True,
) -> np.ndarray:
    """One Euler step of the conditional law, broadcast over leading axes.

    pi has shape (..., d) on the simplex, dz shape (..., m) in raw
    observation units.  Raises DegenerateMass if the clipped update has no
    mass left (dt too large relative to |h|/r) and NonPositiveNoise on a
    noiseless model, which must use run_exact_noiseless_filter instead.
    """
    if model.noiseless:
        raise NonPositiveNoise("noiseless model: use run_exact_noiseless_filter")
    pi = np.asarray(pi, dtype=float)
    dz = np.asarray(dz, dtype=float)
    hu = model.h_unit
    if pi.shape[-1] != model.d or dz.shape[-1] != model.m:
        raise DimensionMismatch(
            f"pi (..., {model.d}) and dz (..., {model.m}) required, "
            f"got {pi.shape} and {dz.shape}"
        )
    pih = pi @ hu
    if check_gain:
        gain_sums = (pi[..., None] * (hu - pih[..., None, :])).sum(axis=-2)
        worst = float(np.max(np.abs(gain_sums))) if gain_sums.size else 0.0
        if worst > GAIN_TOL:
            raise DegenerateMass(f"gain rows sum to {worst:.3e} > {GAIN_TOL}")
    innov = dz / model.r - pih * dt
    signal = innov @ hu.T - (pih * innov).sum(axis=-1)[..., None]
    new = pi + dt * (pi @ model.A) + pi * signal
    new = np.clip(new, 0.0, None)
    mass = new.sum(axis=-1)
    if _degenerate(mass):
        raise DegenerateMass("filter mass vanished; reduce dt or check inputs")
    return new / mass[..., None]


def run_filter(
    prior,
    obs: ObservationPath,
    model: HmmModel,
    label: str = "",
    check_gain: bool = True,
):
    """Evolve one or several priors through one observation path.

    A single prior (d,) returns one FilterTrajectory; a stack (k, d) returns
    a list of k trajectories computed in one pass on shared innovations.
    DegenerateMass failures are re-raised with the failing step index.
    """
    prior = np.asarray(prior, dtype=float)
    single = prior.ndim == 1
    priors = prior[None, :] if single else prior
    priors = np.stack([as_simplex(p, d=model.d) for p in priors])
    if obs.m != model.m:
        raise DimensionMismatch(f"obs has m = {obs.m}, model has m = {model.m}")
    k = priors.shape[0]
    pis = np.empty((obs.n_steps + 1, k, model.d))
    pis[0] = priors
    cur = priors
    for step in range(obs.n_steps):
        try:
            cur = wonham_step(
                cur, obs.increments[step][None, :], obs.dt, model, check_gain
            )
        except DegenerateMass as exc:
            raise DegenerateMass(f"step {step}: {exc}") from exc
        pis[step + 1] = cur
    trajs = [
        FilterTrajectory(dt=obs.dt, pis=pis[:, i, :].copy(), label=label)
        for i in range(k)
    ]
    return trajs[0] if single else trajs


def evolve_ensemble(
    priors: np.ndarray,
    increments: np.ndarray,
    dt: float,
    model: HmmModel,
    observer=None,
    check_gain: bool = True,
) -> np.ndarray:
    """Evolve k priors through P observation paths in lockstep.

    priors is (k, d), increments (P, n_steps, m); the filter state array has
    shape (P, k, d) throughout.  observer(step, t, pis) is called once with
    step = 0 at t = 0 and then after every update; it must not mutate pis.
    Returns the terminal state array.
    """
    priors = np.stack([as_simplex(p, d=model.d) for p in np.asarray(priors, float)])
    if increments.ndim != 3 or increments.shape[2] != model.m:
        raise DimensionMismatch(
            f"increments must be (P, n_steps, {model.m}), got {increments.shape}"
        )
    n_paths, n_steps, _ = increments.shape
    pis = np.broadcast_to(priors[None, :, :], (n_paths,) + priors.shape).copy()
    if observer is not None:
        observer(0, 0.0, pis)
    for step in range(n_steps):
        try:
            pis = wonham_step(
                pis, increments[:, step, :][:, None, :], dt, model, check_gain
            )
        except DegenerateMass as exc:
            raise DegenerateMass(f"step {step}: {exc}") from exc
        if observer is not None:
            observer(step + 1, (step + 1) * dt, pis)
    return pis


def _restrict(p: np.ndarray, mask: np.ndarray, context: str) -> np.ndarray:
    kept = np.where(mask, np.clip(p, 0.0, None), 0.0)
    total = kept.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise EmptyLevelSet(f"{context}: no mass on the observed level")
    return kept / total


def run_exact_noiseless_filter(
    prior, state_path: StatePath, model: HmmModel, dt: float = 1e-3, label: str = ""
) -> FilterTrajectory:
    """Exact conditional law for noiseless observation Y_t = h(X_t).

    Between observed level changes the law evolves by the forward equation
    conditioned on the current level set at every substep; at an observed
    level change mass moves along the generator flux into the new level:
    pi+(y) propto sum_x pi(x) A(x, y) over y in the new level.  pis[0] is
    the prior conditioned on the initial observed level, since Y_0 = h(X_0)
    is part of the data.  A jump landing exactly on a grid point belongs to
    the earlier step.  Raises EmptyLevelSet when conditioning annihilates
    all mass (the model cannot produce the observed level).
    """
    A = model.A
    H = model.H
    d = model.d
    pi = as_simplex(prior, d=d)
    n_float = state_path.T / dt
    n_steps = int(round(n_float))
    if n_steps < 1 or abs(n_float - n_steps) > 1e-9:
        raise GridMismatch(f"dt = {dt} does not divide T = {state_path.T}")

    def level_mask(x: int) -> np.ndarray:
        return np.all(H == H[x][None, :], axis=1)

    jump_times = state_path.jump_times
    states = state_path.states
    cur_state = int(states[0])
    mask = level_mask(cur_state)
    pi = _restrict(pi, mask, "t = 0")
    pis = np.empty((n_steps + 1, d))
    pis[0] = pi
    next_jump = 1
    t_cur = 0.0
    for step in range(n_steps):
        t_end = (step + 1) * dt
        while next_jump < len(jump_times) and jump_times[next_jump] <= t_end:
            tau = float(jump_times[next_jump])
            delta = tau - t_cur
            if delta > 0.0:
                pi = _restrict(pi + delta * (pi @ A), mask, f"t = {tau}")
            new_state = int(states[next_jump])
            new_mask = level_mask(new_state)
            if not np.array_equal(new_mask, mask):
                pi = _restrict(pi @ A, new_mask, f"level jump at t = {tau}")
                mask = new_mask
            cur_state = new_state
            t_cur = tau
            next_jump += 1
        delta = t_end - t_cur
        if delta > 0.0:
            pi = _restrict(pi + delta * (pi @ A), mask, f"t = {t_end}")
            t_cur = t_end
        pis[step + 1] = pi
    return FilterTrajectory(dt=float(dt), pis=pis, label=label)


def conditional_moments(pi, f, g=None) -> ConditionalMoments:
    """Mean and variance of f, and covariance with g, under the law pi.

    f is (d,); g may be (d,) or (d, m), in which case the covariance is the
    m-vector of componentwise covariances.  Variance is clipped at zero to
    absorb rounding."""
    pi = as_simplex(pi)
    f = np.asarray(f, dtype=float)
    if f.shape != pi.shape:
        raise DimensionMismatch(f"f must have shape {pi.shape}, got {f.shape}")
    mean = float(pi @ f)
    variance = max(float(pi @ f**2) - mean**2, 0.0)
    covariance = None
    if g is not None:
        g = np.asarray(g, dtype=float)
        if g.ndim == 1:
            if g.shape != pi.shape:
                raise DimensionMismatch(f"g must have shape {pi.shape}, got {g.shape}")
            covariance = float(pi @ (f * g)) - mean * float(pi @ g)
        else:
            if g.shape[0] != pi.shape[0]:
                raise DimensionMismatch(f"g must have {pi.shape[0]} rows, got {g.shape}")
            covariance = (pi @ (f[:, None] * g)) - mean * (pi @ g)
    return ConditionalMoments(mean=mean, variance=variance, covariance=covariance)


def write_trajectory_csv(path: str, traj: FilterTrajectory) -> None:
    """Dump a trajectory as CSV rows (t, pi_1, ..., pi_d); floats use repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"pi{x + 1}" for x in range(traj.d)])
        times = traj.times
        for k in range(traj.pis.shape[0]):
            writer.writerow([repr(float(times[k]))] + [repr(float(v)) for v in traj.pis[k]])


def read_trajectory_csv(path: str, label: str = "") -> FilterTrajectory:
    """Inverse of write_trajectory_csv (exact round trip)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    if len(rows) < 2:
        raise GridMismatch("trajectory dump needs at least two rows")
    times = np.array([float(r[0]) for r in rows])
    pis = np.array([[float(v) for v in r[1:]] for r in rows])
    return FilterTrajectory(dt=float(times[1] - times[0]), pis=pis, label=label)
