"""Online particle smoother for the EM sufficient statistics.

Alongside the bootstrap filter, each particle carries a running estimate of
the additive smoothing functional: first-period moments (the E blocks) plus
accumulated increment moments (the S blocks).  At every period each particle
averages the statistics of a few backward-sampled ancestors, drawn from the
previous cloud reweighted by the transition density, so no genealogies are
stored and memory stays O(N) in the number of particles.

Backward indices are drawn either by direct categorical sampling (default,
O(N) per draw) or by an accept-reject scheme that proposes from the filter
weights and accepts with the transition-density ratio, which avoids forming
the N x N weight table and is much faster for large N.  Both target exactly
the same distribution.  A third mode replaces sampling with the full
backward expectation, giving the forward-filtering backward-smoothing
estimator; it is quadratic in N and intended for cross-checks.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from . import rng
from .basis import check_rank
from .errors import FilterDegeneracyError
from .filtering import forward_pass
from .latent import step_logdensity
from .observation import make_slices

BACKWARD_METHODS = ("categorical", "reject", "exact")
_REJECT_MAX_ROUNDS = 75


@dataclass(frozen=True)
class SmoothedStats:
    """Smoothed moments of the latent path given all observations.

    s_mat/s_vec hold increment moments summed over transitions 2..n;
    e_mat/e_vec hold first-period moments.  Together they determine the
    closed-form M step.
    """

    s_mat: np.ndarray  # (p, p): Σ_t E[Δ_t Δ_tᵀ | data]
    s_vec: np.ndarray  # (p,):   Σ_t E[Δ_t | data]
    e_mat: np.ndarray  # (p, p): E[ν₁ ν₁ᵀ | data]
    e_vec: np.ndarray  # (p,):   E[ν₁ | data]
    n: int
    num_particles: int
    num_backward: int

    @property
    def p(self):
        return self.s_vec.shape[0]


def stats_to_json(stats):
    doc = {
        "S_ij": stats.s_mat.tolist(),
        "S_i": stats.s_vec.tolist(),
        "E_ij": stats.e_mat.tolist(),
        "E_i": stats.e_vec.tolist(),
        "n": stats.n,
        "N": stats.num_particles,
        "Ntilde": stats.num_backward,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def stats_from_json(text):
    doc = json.loads(text)
    return SmoothedStats(
        s_mat=np.asarray(doc["S_ij"], dtype=float),
        s_vec=np.asarray(doc["S_i"], dtype=float),
        e_mat=np.asarray(doc["E_ij"], dtype=float),
        e_vec=np.asarray(doc["E_i"], dtype=float),
        n=int(doc["n"]),
        num_particles=int(doc["N"]),
        num_backward=int(doc["Ntilde"]),
    )


def backward_categorical(theta, prev_cloud, target):
    """Backward-kernel probabilities over the previous cloud for one target."""
    deltas = np.asarray(target, dtype=float)[None, :] - prev_cloud.particles
    logb = prev_cloud.log_weights + step_logdensity(theta, deltas)
    norm = logsumexp(logb)
    if not np.isfinite(norm):
        raise FilterDegeneracyError(period=prev_cloud.period + 1)
    return np.exp(logb - norm)


def _whitened(theta, prev_particles, particles):
    """Map both clouds through A⁻¹ so pairwise Mahalanobis terms are cheap.

    With a = A⁻¹(z_t − μ) and b = A⁻¹ z_{t−1}, the transition exponent for
    the pair (j, i) is −½‖a_i − b_j‖².
    """
    a = solve_triangular(theta.chol, (particles - theta.mu).T, lower=True).T
    b = solve_triangular(theta.chol, prev_particles.T, lower=True).T
    return a, b


def _backward_logtable(prev_logw, a, b):
    qa = np.einsum("ip,ip->i", a, a)
    qb = np.einsum("jp,jp->j", b, b)
    quad = qa[:, None] + qb[None, :] - 2.0 * (a @ b.T)
    return prev_logw[None, :] - 0.5 * quad


def _rowwise_categorical(logtable, draws, period):
    """Sample one index per (row, draw) from each row's categorical."""
    rowmax = logtable.max(axis=1)
    bad = np.flatnonzero(~np.isfinite(rowmax))
    if bad.size:
        raise FilterDegeneracyError(period=period, particle=int(bad[0]))
    table = np.exp(logtable - rowmax[:, None])
    cum = np.cumsum(table, axis=1)
    idx = np.empty(draws.shape, dtype=np.intp)
    for i in range(logtable.shape[0]):
        u = draws[i] * cum[i, -1]
        idx[i] = np.searchsorted(cum[i], u, side="right")
    return np.minimum(idx, logtable.shape[1] - 1)


def _sample_backward_categorical(prev_logw, a, b, num_backward, gen, period):
    logtable = _backward_logtable(prev_logw, a, b)
    draws = gen.random((a.shape[0], num_backward))
    return _rowwise_categorical(logtable, draws, period)


def _sample_backward_reject(prev_logw, a, b, num_backward, gen, period):
    """Accept-reject backward sampling without the N x N table.

    Proposes ancestors from the filter weights and accepts with probability
    exp(−½‖a_i − b_j‖²), the transition density over its global bound, so
    accepted indices follow the exact backward categorical.  Rows that keep
    rejecting (far-off particles) fall back to direct sampling.
    """
    num = a.shape[0]
    qa = np.einsum("ip,ip->i", a, a)
    qb = np.einsum("jp,jp->j", b, b)
    cumw = np.cumsum(np.exp(prev_logw))
    cumw[-1] = 1.0
    idx = np.full(num * num_backward, -1, dtype=np.intp)
    alive = np.arange(num * num_backward)
    for _ in range(_REJECT_MAX_ROUNDS):
        rows = alive // num_backward
        prop = np.searchsorted(cumw, gen.random(alive.size), side="right")
        quad = qa[rows] + qb[prop] - 2.0 * np.einsum("kp,kp->k", a[rows], b[prop])
        accept = gen.random(alive.size) < np.exp(-0.5 * quad)
        idx[alive[accept]] = prop[accept]
        alive = alive[~accept]
        if alive.size == 0:
            break
    if alive.size:
        rows = np.unique(alive // num_backward)
        logtable = _backward_logtable(prev_logw, a[rows], b)
        draws = gen.random((rows.size, num_backward))
        exact = _rowwise_categorical(logtable, draws, period)
        full = idx.reshape(num, num_backward)
        for r, row in enumerate(rows):
            missing = full[row] < 0
            full[row, missing] = exact[r, missing]
        return full
    return idx.reshape(num, num_backward)


def _normalized_backward_table(prev_logw, a, b, period):
    logtable = _backward_logtable(prev_logw, a, b)
    norms = logsumexp(logtable, axis=1)
    bad = np.flatnonzero(~np.isfinite(norms))
    if bad.size:
        raise FilterDegeneracyError(period=period, particle=int(bad[0]))
    return np.exp(logtable - norms[:, None])


def smooth_slices(slices, theta, num_particles, num_backward, seed, *,
                  backward="categorical", resampling="multinomial", path=()):
    """PaRIS pass over precomputed period slices; see paris_smooth."""
    if backward not in BACKWARD_METHODS:
        raise ValueError(f"unknown backward method {backward!r}")
    if backward != "exact":
        if num_backward < 2:
            raise ValueError("need at least 2 backward draws per particle")
        if num_particles < num_backward:
            raise ValueError("particle count must be at least the backward draw count")
    p = theta.p
    sq = p * p
    sl_smat = slice(0, sq)
    sl_svec = slice(sq, sq + p)
    sl_emat = slice(sq + p, 2 * sq + p)
    sl_evec = slice(2 * sq + p, 2 * sq + 2 * p)
    tau = None
    prev_particles = None
    prev_logw = None
    log_weights = None
    n = len(slices)
    for t, particles, log_weights, _, _ in forward_pass(
        slices, theta, num_particles, seed, resampling=resampling, path=path
    ):
        if t == 1:
            tau = np.zeros((num_particles, 2 * sq + 2 * p))
            tau[:, sl_emat] = np.einsum(
                "ki,kj->kij", particles, particles
            ).reshape(num_particles, sq)
            tau[:, sl_evec] = particles
        else:
            a, b = _whitened(theta, prev_particles, particles)
            if backward == "exact":
                table = _normalized_backward_table(prev_logw, a, b, t)
                tau_new = table @ tau
                zb = table @ prev_particles
                zzb = table @ np.einsum(
                    "ki,kj->kij", prev_particles, prev_particles
                ).reshape(num_particles, sq)
                hmat = (
                    np.einsum("ki,kj->kij", particles, particles)
                    - np.einsum("ki,kj->kij", particles, zb)
                    - np.einsum("ki,kj->kij", zb, particles)
                    + zzb.reshape(num_particles, p, p)
                )
                tau_new[:, sl_smat] += hmat.reshape(num_particles, sq)
                tau_new[:, sl_svec] += particles - zb
            else:
                gen = rng.substream(seed, *path, rng.BACKWARD, t)
                if backward == "categorical":
                    idx = _sample_backward_categorical(
                        prev_logw, a, b, num_backward, gen, t
                    )
                else:
                    idx = _sample_backward_reject(
                        prev_logw, a, b, num_backward, gen, t
                    )
                deltas = particles[:, None, :] - prev_particles[idx]  # (N, Ñ, p)
                tau_new = tau[idx].mean(axis=1)
                tau_new[:, sl_smat] += np.einsum(
                    "kui,kuj->kij", deltas, deltas
                ).reshape(num_particles, sq) / num_backward
                tau_new[:, sl_svec] += deltas.mean(axis=1)
            tau = tau_new
        prev_particles, prev_logw = particles, log_weights
    flat = np.exp(log_weights) @ tau
    s_mat = flat[sl_smat].reshape(p, p)
    e_mat = flat[sl_emat].reshape(p, p)
    return SmoothedStats(
        s_mat=0.5 * (s_mat + s_mat.T),
        s_vec=flat[sl_svec].copy(),
        e_mat=0.5 * (e_mat + e_mat.T),
        e_vec=flat[sl_evec].copy(),
        n=n,
        num_particles=num_particles,
        num_backward=(num_particles if backward == "exact" else num_backward),
    )


def paris_smooth(panel, basis, theta, num_particles, num_backward, seed, *,
                 backward="categorical", resampling="multinomial", path=()):
    """Estimate the smoothed sufficient statistics for one panel."""
    if not check_rank(basis, panel.cells):
        raise ValueError("design matrix is rank deficient over the panel cells")
    slices = make_slices(panel, basis)
    return smooth_slices(
        slices, theta, num_particles, num_backward, seed,
        backward=backward, resampling=resampling, path=path,
    )
