"""Bootstrap particle filter for the latent random walk.

Particles are propagated through the state transition, weighted by the
period likelihood, and multinomially resampled.  Clouds are stored after
weighting and before resampling, which is what the filter-mean, quantile,
and smoothing consumers want.  All randomness comes from counter-based
substreams keyed by (seed, stream tag, period), so a run is reproducible
bit-for-bit whatever the worker count.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import rng
from .basis import check_rank
from .errors import FilterDegeneracyError
from .observation import loglik_many, make_slices


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted particle approximation of one filter distribution."""

    particles: np.ndarray  # (N, p)
    log_weights: np.ndarray  # (N,), normalized: logsumexp == 0
    period: int

    @property
    def size(self):
        return self.particles.shape[0]

    @property
    def weights(self):
        return np.exp(self.log_weights)


@dataclass(frozen=True)
class FilterOutput:
    clouds: list  # ParticleCloud per period, post-weighting pre-resampling
    ancestors: np.ndarray  # (n-1, N) resampled indices feeding periods 2..n
    loglik_estimate: float
    ess: np.ndarray  # (n,)

    @property
    def n(self):
        return len(self.clouds)

    def filter_means(self):
        return np.array([filter_mean(c) for c in self.clouds])


def filter_mean(cloud):
    """Weighted particle average, componentwise."""
    return cloud.weights @ cloud.particles


def filter_quantiles(cloud, probs):
    """Weighted empirical quantiles, (len(probs), p).

    Left-continuous inverse of the weighted ECDF: the smallest particle
    value whose cumulative weight reaches the requested level.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or np.any(probs <= 0.0) or np.any(probs >= 1.0):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    w = cloud.weights
    out = np.empty((probs.size, cloud.particles.shape[1]))
    for i in range(cloud.particles.shape[1]):
        order = np.argsort(cloud.particles[:, i], kind="stable")
        values = cloud.particles[order, i]
        cumw = np.cumsum(w[order])
        cumw[-1] = 1.0
        idx = np.searchsorted(cumw, probs, side="left")
        out[:, i] = values[idx]
    return out


def ess(cloud):
    """Effective sample size 1/Σw²; N for uniform weights, 1 for one-hot."""
    w = cloud.weights
    return 1.0 / float(w @ w)


def _resample_indices(weights, size, gen, method):
    cumw = np.cumsum(weights)
    cumw[-1] = 1.0
    if method == "multinomial":
        u = gen.random(size)
    elif method == "systematic":
        u = (gen.random() + np.arange(size)) / size
    else:
        raise ValueError(f"unknown resampling method {method!r}")
    return np.searchsorted(cumw, u, side="right")


def forward_pass(slices, theta, num_particles, seed, *, resampling="multinomial", path=()):
    """Generator over filter periods.

    Yields (t, particles, normalized log-weights, ancestors, loglik_so_far)
    with particles post-weighting, pre-resampling; ancestors is None at t=1.
    The smoother consumes this directly so that filter and smoother clouds
    coincide for a given seed.
    """
    n = len(slices)
    mu, chol, nu0 = theta.mu, theta.chol, theta.nu0
    p = theta.p
    loglik_total = 0.0
    particles = None
    log_weights = None
    for t in range(1, n + 1):
        if t == 1:
            gen = rng.substream(seed, *path, rng.INIT)
            particles = nu0 + mu + gen.standard_normal((num_particles, p)) @ chol.T
            ancestors = None
        else:
            rgen = rng.substream(seed, *path, rng.RESAMPLE, t)
            ancestors = _resample_indices(
                np.exp(log_weights), num_particles, rgen, resampling
            )
            pgen = rng.substream(seed, *path, rng.PROPAGATE, t)
            noise = pgen.standard_normal((num_particles, p))
            particles = particles[ancestors] + mu + noise @ chol.T
        logw = loglik_many(particles, slices[t - 1])
        norm = logsumexp(logw)
        if not np.isfinite(norm):
            raise FilterDegeneracyError(period=t)
        loglik_total += norm - np.log(num_particles)
        log_weights = logw - norm
        yield t, particles, log_weights, ancestors, loglik_total


def bootstrap_filter(panel, basis, theta, num_particles, seed, *,
                     resampling="multinomial", path=()):
    """Run the filter over a panel; returns a FilterOutput."""
    if num_particles < 1:
        raise ValueError("need at least one particle")
    if not check_rank(basis, panel.cells):
        raise ValueError("design matrix is rank deficient over the panel cells")
    slices = make_slices(panel, basis)
    clouds = []
    ancestor_rows = []
    ess_values = []
    loglik_total = 0.0
    for t, particles, log_weights, ancestors, loglik_total in forward_pass(
        slices, theta, num_particles, seed, resampling=resampling, path=path
    ):
        cloud = ParticleCloud(
            particles=particles.copy(), log_weights=log_weights.copy(), period=t
        )
        clouds.append(cloud)
        ess_values.append(ess(cloud))
        if ancestors is not None:
            ancestor_rows.append(ancestors)
    ancestors_arr = (
        np.array(ancestor_rows)
        if ancestor_rows
        else np.empty((0, num_particles), dtype=np.intp)
    )
    return FilterOutput(
        clouds=clouds,
        ancestors=ancestors_arr,
        loglik_estimate=float(loglik_total),
        ess=np.array(ess_values),
    )


def filter_to_csv(output, probs=(0.05, 0.5, 0.95)):
    """Long-format per-period summary: mean, quantiles and ESS."""
    labels = [f"q{int(round(100 * q)):02d}" for q in probs]
    if len(set(labels)) != len(labels):
        raise ValueError("quantile levels collide after rounding to percent labels")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["period", "component", "mean"] + labels + ["ess"])
    for cloud in output.clouds:
        mean = filter_mean(cloud)
        quants = filter_quantiles(cloud, probs)
        size = ess(cloud)
        for i in range(cloud.particles.shape[1]):
            row = [cloud.period, i + 1, repr(float(mean[i]))]
            row += [repr(float(q)) for q in quants[:, i]]
            row.append(repr(float(size)))
            writer.writerow(row)
    return out.getvalue()
