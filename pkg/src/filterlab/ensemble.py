"""Reproducible Monte Carlo ensembles of signal paths and filter statistics.

Every path owns the random stream (master_seed, stream_offset + path_index),
so its draws never depend on how paths are divided among workers.  Workers
write per-path results into disjoint slices of preallocated arrays, and all
ensemble reductions happen once, in path-index order, after the pool joins.
Reports built on top of these arrays are therefore bit-identical for any
worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .divergence import (
    DivergenceSeries,
    _chi2_batch,
    _kl_batch,
    _tv_batch,
    chi2_drift_batch,
    density_ratio,
)
from .errors import DimensionMismatch, NonPositiveNoise
from .filtering import evolve_ensemble, run_exact_noiseless_filter
from .model import HmmModel, as_simplex
from .sim import (
    StatePath,
    integrate_observation,
    sample_ctmc_path,
    sample_initial_state,
    spawn_rng,
)

__all__ = [
    "PathBatch",
    "sample_path_batch",
    "EnsembleDivergence",
    "run_divergence_ensemble",
    "terminal_filter_states",
]


@dataclass(frozen=True)
class PathBatch:
    """A block of independent signal paths with their observation increments.

    increments has shape (n_paths, n_steps, m); state_paths[i] generated the
    i-th row.  stream_ids records which random stream produced each path.
    """

    state_paths: tuple[StatePath, ...]
    increments: np.ndarray
    dt: float
    stream_ids: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def terminal_states(self) -> np.ndarray:
        return np.array([sp.states[-1] for sp in self.state_paths], dtype=int)

    @property
    def initial_states(self) -> np.ndarray:
        return np.array([sp.states[0] for sp in self.state_paths], dtype=int)


def _block_ranges(n: int, workers: int) -> list[range]:
    workers = max(1, min(int(workers), n)) if n else 1
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [range(bounds[i], bounds[i + 1]) for i in range(workers) if bounds[i] < bounds[i + 1]]


def sample_path_batch(
    model: HmmModel,
    n_paths: int,
    T: float,
    dt: float,
    master_seed: int,
    initial_law=None,
    initial_state: int | None = None,
    stream_offset: int = 0,
    workers: int = 1,
) -> PathBatch:
    """Sample n_paths signal paths and observation paths with owned streams.

    Path i uses the stream (master_seed, stream_offset + i) for its initial
    state (from initial_law, unless initial_state pins it), its jump
    skeleton, and its observation noise.  Either initial_law or
    initial_state must be given.
    """
    if (initial_law is None) == (initial_state is None):
        raise DimensionMismatch("give exactly one of initial_law, initial_state")
    law = None if initial_law is None else as_simplex(initial_law, d=model.d)
    n_steps = int(round(T / dt))
    paths: list[StatePath | None] = [None] * n_paths
    increments = np.empty((n_paths, n_steps, model.m))

    def fill(indices: range) -> None:
        for i in indices:
            rng = spawn_rng(master_seed, stream_offset + i).generator()
            x0 = initial_state if law is None else sample_initial_state(law, rng, model.d)
            sp = sample_ctmc_path(model.A, int(x0), T, rng)
            obs = integrate_observation(sp, model, dt, rng)
            paths[i] = sp
            increments[i] = obs.increments

    blocks = _block_ranges(n_paths, workers)
    if len(blocks) <= 1:
        for block in blocks:
            fill(block)
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            list(pool.map(fill, blocks))
    return PathBatch(
        state_paths=tuple(paths),
        increments=increments,
        dt=float(dt),
        stream_ids=np.arange(stream_offset, stream_offset + n_paths, dtype=np.int64),
    )


@dataclass(frozen=True)
class EnsembleDivergence:
    """Divergence series between two filters over a path ensemble.

    series holds per-path chi2/kl/tv with the sampling weights attached.
    signal_integral[i, k] is the running integral of
    |pi_s^mu(h/r) - pi_s^nu(h/r)|^2 up to time t_k along path i (the
    quantity in the pathwise relative-entropy identity); drift_integral is
    the integrated chi-square drift, present only when recorded.
    terminal_pis stacks the final filter states as (n_paths, 2, d) in the
    order (from_mu, from_nu).
    """

    series: DivergenceSeries
    signal_integral: np.ndarray | None
    drift_integral: np.ndarray | None
    terminal_pis: np.ndarray | None
    initial_states: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.series.weights

    def weighted_mean_se(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Ensemble mean and standard error of per-path values (paths first)."""
        return self.series._mean_se(values)


def _noiseless_divergence(
    model: HmmModel,
    mu: np.ndarray,
    nu: np.ndarray,
    batch: PathBatch,
    weights: np.ndarray,
    n_steps: int,
) -> EnsembleDivergence:
    n_paths = batch.n_paths
    chi2_v = np.empty((n_paths, n_steps + 1))
    kl_v = np.empty((n_paths, n_steps + 1))
    tv_v = np.empty((n_paths, n_steps + 1))
    terminal = np.empty((n_paths, 2, model.d))
    for i, sp in enumerate(batch.state_paths):
        traj_mu = run_exact_noiseless_filter(mu, sp, model, batch.dt)
        traj_nu = run_exact_noiseless_filter(nu, sp, model, batch.dt)
        chi2_v[i] = _chi2_batch(traj_mu.pis, traj_nu.pis)
        kl_v[i] = _kl_batch(traj_mu.pis, traj_nu.pis)
        tv_v[i] = _tv_batch(traj_mu.pis, traj_nu.pis)
        terminal[i, 0] = traj_mu.pis[-1]
        terminal[i, 1] = traj_nu.pis[-1]
    times = np.arange(n_steps + 1) * batch.dt
    series = DivergenceSeries(times=times, chi2=chi2_v, kl=kl_v, tv=tv_v, weights=weights)
    return EnsembleDivergence(
        series=series,
        signal_integral=None,
        drift_integral=None,
        terminal_pis=terminal,
        initial_states=batch.initial_states,
    )


def run_divergence_ensemble(
    model: HmmModel,
    mu,
    nu,
    n_paths: int,
    T: float,
    dt: float,
    master_seed: int,
    sample_under: str = "mu",
    record_drift: bool = False,
    stream_offset: int = 0,
    workers: int = 1,
) -> EnsembleDivergence:
    """Divergence series between the filters started from mu and nu.

    Signal paths are sampled under the prior named by sample_under; with
    sample_under="nu-reweighted" they are sampled under nu and carry the
    importance weight gamma_0(X_0) = mu(X_0)/nu(X_0), so weighted means
    estimate expectations under the mu path law.  A noiseless model routes
    every path through the exact level-set filter (drift recording is not
    defined there).
    """
    mu = as_simplex(mu, d=model.d)
    nu = as_simplex(nu, d=model.d)
    if sample_under not in ("mu", "nu-reweighted"):
        raise DimensionMismatch(f"unknown sampling mode {sample_under!r}")
    law = mu if sample_under == "mu" else nu
    n_steps = int(round(T / dt))
    batch = sample_path_batch(
        model,
        n_paths,
        T,
        dt,
        master_seed,
        initial_law=law,
        stream_offset=stream_offset,
        workers=workers,
    )
    x0 = batch.initial_states
    if sample_under == "mu":
        weights = np.ones(n_paths)
    else:
        weights = density_ratio(mu, nu)[x0]
    if model.noiseless:
        if record_drift:
            raise NonPositiveNoise("drift recording needs a noisy observation model")
        return _noiseless_divergence(model, mu, nu, batch, weights, n_steps)

    chi2_v = np.empty((n_paths, n_steps + 1))
    kl_v = np.empty((n_paths, n_steps + 1))
    tv_v = np.empty((n_paths, n_steps + 1))
    signal = np.empty((n_paths, n_steps + 1))
    drift = np.empty((n_paths, n_steps + 1)) if record_drift else None
    signal_acc = np.zeros(n_paths)
    drift_acc = np.zeros(n_paths)
    hu = model.h_unit

    def observer(step: int, t: float, pis: np.ndarray) -> None:
        p, q = pis[:, 0, :], pis[:, 1, :]
        chi2_v[:, step] = _chi2_batch(p, q)
        kl_v[:, step] = _kl_batch(p, q)
        tv_v[:, step] = _tv_batch(p, q)
        signal[:, step] = signal_acc
        if drift is not None:
            drift[:, step] = drift_acc
        if step < n_steps:
            gap = (p - q) @ hu
            signal_acc[:] += (gap**2).sum(axis=1) * dt
            if drift is not None:
                drift_acc[:] += chi2_drift_batch(p, q, model) * dt

    terminal = np.empty((n_paths, 2, model.d))
    blocks = _block_ranges(n_paths, workers)
    if len(blocks) <= 1:
        terminal[:] = evolve_ensemble(
            np.stack([mu, nu]), batch.increments, dt, model, observer=observer
        )
    else:
        results: list[np.ndarray | None] = [None] * len(blocks)

        def run_block(idx: int) -> None:
            block = blocks[idx]
            local_chi2 = np.empty((len(block), n_steps + 1))
            local_kl = np.empty_like(local_chi2)
            local_tv = np.empty_like(local_chi2)
            local_signal = np.empty_like(local_chi2)
            local_drift = np.empty_like(local_chi2) if record_drift else None
            sig_acc = np.zeros(len(block))
            dr_acc = np.zeros(len(block))

            def local_observer(step: int, t: float, pis: np.ndarray) -> None:
                p, q = pis[:, 0, :], pis[:, 1, :]
                local_chi2[:, step] = _chi2_batch(p, q)
                local_kl[:, step] = _kl_batch(p, q)
                local_tv[:, step] = _tv_batch(p, q)
                local_signal[:, step] = sig_acc
                if local_drift is not None:
                    local_drift[:, step] = dr_acc
                if step < n_steps:
                    gap = (p - q) @ hu
                    sig_acc[:] += (gap**2).sum(axis=1) * dt
                    if local_drift is not None:
                        dr_acc[:] += chi2_drift_batch(p, q, model) * dt

            results[idx] = evolve_ensemble(
                np.stack([mu, nu]),
                batch.increments[block.start : block.stop],
                dt,
                model,
                observer=local_observer,
            )
            sl = slice(block.start, block.stop)
            chi2_v[sl] = local_chi2
            kl_v[sl] = local_kl
            tv_v[sl] = local_tv
            signal[sl] = local_signal
            if drift is not None:
                drift[sl] = local_drift

        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            list(pool.map(run_block, range(len(blocks))))
        for block, res in zip(blocks, results):
            terminal[block.start : block.stop] = res

    times = np.arange(n_steps + 1) * dt
    series = DivergenceSeries(times=times, chi2=chi2_v, kl=kl_v, tv=tv_v, weights=weights)
    return EnsembleDivergence(
        series=series,
        signal_integral=signal,
        drift_integral=drift,
        terminal_pis=terminal,
        initial_states=x0,
    )


def terminal_filter_states(
    model: HmmModel,
    priors: np.ndarray,
    batch: PathBatch,
    workers: int = 1,
) -> np.ndarray:
    """Terminal filter states (n_paths, k, d) for k priors on a shared batch."""
    priors = np.stack([as_simplex(p, d=model.d) for p in np.asarray(priors, float)])
    n_paths = batch.n_paths
    out = np.empty((n_paths, priors.shape[0], model.d))
    blocks = _block_ranges(n_paths, workers)
    if len(blocks) <= 1:
        out[:] = evolve_ensemble(priors, batch.increments, batch.dt, model)
        return out

    def run_block(block: range) -> None:
        out[block.start : block.stop] = evolve_ensemble(
            priors, batch.increments[block.start : block.stop], batch.dt, model
        )

    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        list(pool.map(run_block, blocks))
    return out
