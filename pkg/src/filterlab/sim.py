"""Exact signal simulation and observation integration.

Hidden paths are sampled by the exact jump construction: exponential holding
times with rate -A(x, x), next state proportional to the off-diagonal row.
Observation increments over a uniform grid integrate the drift exactly across
jump times, so the only discretization in the pipeline is the filter's.

Randomness comes from counter-based streams: spawn_rng(master_seed, stream_id)
keys an independent Philox generator, so any path can be regenerated in
isolation and results never depend on how paths are split across workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, GridMismatch
from .model import HmmModel, as_simplex

__all__ = [
    "RngStream",
    "spawn_rng",
    "StatePath",
    "ObservationPath",
    "sample_ctmc_path",
    "sample_initial_state",
    "integrate_observation",
    "write_observation_csv",
    "read_observation_csv",
    "write_state_path_csv",
    "read_state_path_csv",
]


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream (master_seed, stream_id).

    generator() returns a fresh numpy Generator positioned at the start of
    the stream, so repeated calls replay identical draws.  Distinct ids on
    the same master seed give statistically independent, non-overlapping
    streams by the counter-based construction.
    """

    master_seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed % (1 << 64), self.stream_id % (1 << 64)],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))


def spawn_rng(master_seed: int, stream_id: int) -> RngStream:
    """Stream for one unit of work (one path, one sweep point, ...)."""
    return RngStream(master_seed=int(master_seed), stream_id=int(stream_id))


@dataclass(frozen=True)
class StatePath:
    """Piecewise-constant trajectory on [0, T], right-continuous.

    states[i] holds on [jump_times[i], jump_times[i+1]), with
    jump_times[0] == 0.0 and an implicit final knot at T.
    """

    jump_times: np.ndarray
    states: np.ndarray
    T: float

    def state_at(self, t: float) -> int:
        """State at time t (right-continuous; t in [0, T])."""
        if t < 0.0 or t > self.T:
            raise GridMismatch(f"t = {t} outside [0, {self.T}]")
        i = int(np.searchsorted(self.jump_times, t, side="right")) - 1
        return int(self.states[i])

    def states_on_grid(self, n_steps: int) -> np.ndarray:
        """States at the grid times k * (T / n_steps), k = 0..n_steps."""
        times = np.arange(n_steps + 1) * (self.T / n_steps)
        idx = np.searchsorted(self.jump_times, times, side="right") - 1
        return self.states[idx]

    def occupation_fractions(self, d: int) -> np.ndarray:
        """Fraction of [0, T] spent in each state."""
        knots = np.append(self.jump_times, self.T)
        lengths = np.diff(knots)
        occ = np.zeros(d)
        np.add.at(occ, self.states, lengths)
        return occ / self.T


@dataclass(frozen=True)
class ObservationPath:
    """Observation increments over the uniform grid with step dt.

    increments[k] approximates Z_{(k+1)dt} - Z_{k dt}; the drift part is
    integrated exactly across jump times, the noise part is r * sqrt(dt)
    times an i.i.d. standard normal vector.
    """

    dt: float
    increments: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def m(self) -> int:
        return self.increments.shape[1]

    @property
    def T(self) -> float:
        return self.n_steps * self.dt


def sample_initial_state(prior, rng: np.random.Generator, d: int) -> int:
    """Draw X_0 from a prior on {0, ..., d-1} by inverse CDF."""
    p = as_simplex(prior, d=d)
    u = rng.random()
    return int(np.searchsorted(np.cumsum(p), u, side="right").clip(0, d - 1))


def sample_ctmc_path(A, x0: int, T: float, rng: np.random.Generator) -> StatePath:
    """Exact jump-by-jump sample of the chain started at x0 on [0, T].

    Holding times use inverse-CDF exponentials so a stream replays the same
    path bit for bit; a state with zero exit rate is absorbing.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    if not 0 <= x0 < d:
        raise DimensionMismatch(f"x0 = {x0} outside state space of size {d}")
    if T <= 0.0:
        raise GridMismatch(f"horizon T = {T} must be positive")
    jump_times = [0.0]
    states = [int(x0)]
    t = 0.0
    x = int(x0)
    while True:
        rates = A[x].copy()
        rates[x] = 0.0
        total = rates.sum()
        if total <= 0.0:
            break
        t += float(rng.standard_exponential(method="inv")) / total
        if t >= T:
            break
        x = int(np.searchsorted(np.cumsum(rates / total), rng.random(), side="right"))
        x = min(x, d - 1)
        jump_times.append(t)
        states.append(x)
    return StatePath(
        jump_times=np.array(jump_times, dtype=float),
        states=np.array(states, dtype=np.int64),
        T=float(T),
    )


def _drift_at_grid(path: StatePath, H: np.ndarray, n_steps: int, dt: float) -> np.ndarray:
    """Exact cumulative drift D(t_k) = int_0^{t_k} h(X_s) ds, k = 0..n_steps.

    D is piecewise linear with knots at the jump times; grid values come
    from linear interpolation of the exact knot values, so increments
    telescope to D(T) at machine precision.
    """
    knots = np.append(path.jump_times, path.T)
    seg = np.diff(knots)
    hvals = H[path.states]
    cum = np.vstack([np.zeros(H.shape[1]), np.cumsum(hvals * seg[:, None], axis=0)])
    times = np.arange(n_steps + 1) * dt
    out = np.empty((n_steps + 1, H.shape[1]))
    for j in range(H.shape[1]):
        out[:, j] = np.interp(times, knots, cum[:, j])
    return out


def integrate_observation(
    path: StatePath, model: HmmModel, dt: float, rng: np.random.Generator
) -> ObservationPath:
    """Observation increments for one hidden path on the grid with step dt.

    increment_k = int_{t_k}^{t_{k+1}} h(X_s) ds + r sqrt(dt) xi_k with
    xi_k i.i.d. standard normal (m,).  dt must divide path.T within 1e-9.
    """
    if dt <= 0.0:
        raise GridMismatch(f"dt = {dt} must be positive")
    n_float = path.T / dt
    n_steps = int(round(n_float))
    if n_steps < 1 or abs(n_float - n_steps) > 1e-9:
        raise GridMismatch(f"dt = {dt} does not divide T = {path.T}")
    drift = np.diff(_drift_at_grid(path, model.H, n_steps, dt), axis=0)
    if model.r > 0.0:
        noise = model.r * np.sqrt(dt) * rng.standard_normal((n_steps, model.m))
    else:
        noise = np.zeros((n_steps, model.m))
    return ObservationPath(dt=float(dt), increments=drift + noise)


def write_observation_csv(path: str, obs: ObservationPath) -> None:
    """Dump increments as CSV rows (t_k, dZ_k[1..m]); floats use repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"dZ{j + 1}" for j in range(obs.m)])
        for k in range(obs.n_steps):
            writer.writerow(
                [repr(k * obs.dt)] + [repr(float(v)) for v in obs.increments[k]]
            )


def read_observation_csv(path: str) -> ObservationPath:
    """Inverse of write_observation_csv (exact round trip)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(body) < 2:
        raise GridMismatch("observation dump needs at least two rows")
    times = np.array([float(r[0]) for r in body])
    increments = np.array([[float(v) for v in r[1:]] for r in body])
    if len(header) != increments.shape[1] + 1:
        raise DimensionMismatch("observation dump header/body width mismatch")
    dt = float(times[1] - times[0])
    return ObservationPath(dt=dt, increments=increments)


def write_state_path_csv(path: str, sp: StatePath) -> None:
    """Sidecar dump of jump times and states, plus the horizon."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["jump_time", "state", "T"])
        for i in range(len(sp.states)):
            writer.writerow(
                [repr(float(sp.jump_times[i])), int(sp.states[i]), repr(float(sp.T))]
            )


def read_state_path_csv(path: str) -> StatePath:
    """Inverse of write_state_path_csv (exact round trip)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    if not rows:
        raise GridMismatch("state path dump is empty")
    jump_times = np.array([float(r[0]) for r in rows])
    states = np.array([int(r[1]) for r in rows], dtype=np.int64)
    return StatePath(jump_times=jump_times, states=states, T=float(rows[0][2]))
