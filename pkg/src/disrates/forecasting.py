"""Forecast simulation from the fitted latent law.

Future paths start from the terminal filter cloud (so parameter-filtering
uncertainty at the horizon start is carried forward, not collapsed to a
point) and evolve by the fitted transition.  Rate fans come from latent
quantiles mapped through the logistic, which makes probability-space
quantiles exact images of latent-space ones.
"""

import csv
import io

import numpy as np

from . import rng
from .basis import design_matrix
from .filtering import filter_mean
from .latent import require_valid
from .observation import logistic


def simulate_future(theta, terminal, horizon, num_paths, seed, *,
                    from_mean=False, path=()):
    """Sample future latent paths; returns (horizon, num_paths, p).

    `terminal` is the last filter cloud.  With from_mean=True every path
    starts at the filter mean instead of a drawn particle, which understates
    spread and exists for comparison.
    """
    require_valid(theta)
    if horizon < 1 or num_paths < 1:
        raise ValueError("horizon and path count must be positive")
    if from_mean:
        current = np.tile(filter_mean(terminal), (num_paths, 1))
    else:
        gen = rng.substream(seed, *path, rng.FORECAST, 0)
        cumw = np.cumsum(terminal.weights)
        cumw[-1] = 1.0
        picks = np.searchsorted(cumw, gen.random(num_paths), side="right")
        current = terminal.particles[picks].copy()
    out = np.empty((horizon, num_paths, theta.p))
    for h in range(1, horizon + 1):
        gen = rng.substream(seed, *path, rng.FORECAST, h)
        noise = gen.standard_normal((num_paths, theta.p))
        current = current + theta.mu + noise @ theta.chol.T
        out[h - 1] = current
    return out


def _path_quantiles(values, probs):
    """Left-continuous empirical quantiles along the last axis."""
    ordered = np.sort(values, axis=-1)
    count = values.shape[-1]
    idx = np.searchsorted(np.arange(1, count + 1) / count, probs, side="left")
    return ordered[..., np.minimum(idx, count - 1)]


def rate_surface(paths, basis, cells, probs):
    """Quantile fans of per-cell event probabilities, (cells, horizon, probs).

    Quantiles are taken on the linear predictor and mapped through the
    logistic, so each output level is exactly the logistic image of the
    matching latent quantile.
    """
    probs = np.asarray(probs, dtype=float)
    if np.any(probs <= 0.0) or np.any(probs >= 1.0):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    design = design_matrix(basis, cells)  # (C, p)
    logits = np.einsum("cp,hmp->chm", design, paths)
    return logistic(_path_quantiles(logits, probs))


def forecast_to_csv(surface, cells, probs):
    """Long-format export: horizon,cell_id,prob,quantile_level,value."""
    labels = [f"q{int(round(100 * q)):02d}" for q in probs]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["horizon", "cell_id", "prob", "quantile_level", "value"])
    for c, cell in enumerate(cells):
        for h in range(surface.shape[1]):
            for q, (prob, label) in enumerate(zip(probs, labels)):
                writer.writerow(
                    [h + 1, cell.label, repr(float(prob)), label,
                     repr(float(surface[c, h, q]))]
                )
    return out.getvalue()
