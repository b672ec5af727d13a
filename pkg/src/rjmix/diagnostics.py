"""Posterior summaries of sampler output: k, credible intervals, predictive density, DIC.

Every function that combines components first puts each record into the
canonical order (mu, then w, then sigma2), so results do not depend on how a
record happens to label its components.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .chain import Chain
from .errors import InvalidInputError
from .model import Dataset, MixtureState, _frozen, enforce_ordering

PARAMETERS = ("w", "mu", "sigma2")


def parameter_names(k: int) -> list[str]:
    """Row labels used in summaries and metrics tables: w_1..w_k, mu_1.., sigma2_1.., beta."""
    return [f"{p}_{j}" for p in PARAMETERS for j in range(1, k + 1)] + ["beta"]


def k_posterior(chain: Chain) -> tuple[dict[int, float], int]:
    """Relative frequency of each visited k and the modal k (ties go to the smaller k)."""
    if len(chain) == 0:
        raise InvalidInputError("chain has no records")
    values, counts = np.unique(chain.ks, return_counts=True)
    pmf = {int(k): c / len(chain) for k, c in zip(values, counts)}
    # np.unique sorts ascending and argmax returns the first maximum
    return pmf, int(values[np.argmax(counts)])


def condition_on_modal_k(chain: Chain) -> Chain:
    """Records whose k equals the modal k, in their original order."""
    _, mode = k_posterior(chain)
    ks = chain.ks
    if np.all(ks == mode):
        return chain
    return chain.subset(ks == mode)


def _canonical(state: MixtureState) -> MixtureState:
    return enforce_ordering(state)[0]


def _canonical_arrays(chain: Chain):
    """(M, k) arrays of w, mu, sigma2 in canonical component order, plus beta."""
    if not chain.is_fixed_dimension():
        raise InvalidInputError("chain mixes dimensions; condition on a single k first")
    w, mu, s2 = (chain.stacked(p) for p in PARAMETERS)
    order = np.lexsort((np.broadcast_to(np.arange(w.shape[1]), w.shape), s2, w, mu), axis=1)
    take = lambda a: np.take_along_axis(a, order, axis=1)
    return take(w), take(mu), take(s2), chain.stacked("beta")


def _shifted_mean(draws: np.ndarray) -> np.ndarray:
    # centring on the first record keeps constant columns exact and reduces rounding
    return draws[0] + (draws - draws[0]).mean(axis=0)


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean and central credible interval for every parameter."""

    k: int
    level: float
    names: tuple[str, ...]
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def row(self, name: str) -> tuple[float, float, float]:
        i = self.names.index(name)
        return float(self.mean[i]), float(self.lower[i]), float(self.upper[i])

    def to_dict(self) -> dict:
        pct = round(100 * self.level)
        return {
            name: {"mean": float(m), f"lo{pct}": float(lo), f"hi{pct}": float(hi)}
            for name, m, lo, hi in zip(self.names, self.mean, self.lower, self.upper)
        }


def posterior_summary(chain: Chain, level: float = 0.95) -> PosteriorSummary:
    """Means and linear-interpolation quantile intervals of a fixed-dimension chain."""
    if len(chain) == 0:
        raise InvalidInputError("chain has no records")
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"level must lie in (0, 1), got {level}")
    w, mu, s2, beta = _canonical_arrays(chain)
    draws = np.hstack([w, mu, s2, beta[:, None]])
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(draws, [tail, 1.0 - tail], axis=0, method="linear")
    return PosteriorSummary(
        k=w.shape[1],
        level=level,
        names=tuple(parameter_names(w.shape[1])),
        mean=_frozen(_shifted_mean(draws)),
        lower=_frozen(lower),
        upper=_frozen(np.maximum(upper, lower)),
    )


def _record_densities(w, mu, s2, grid) -> np.ndarray:
    # (M, G) mixture densities for records sharing one k, components in canonical order
    terms = np.log(w)[:, None, :] - 0.5 * (K.LOG_2PI + np.log(s2))[:, None, :] \
        - 0.5 * (grid[None, :, None] - mu[:, None, :]) ** 2 / s2[:, None, :]
    return np.exp(logsumexp(terms, axis=2))


def predictive_density(chain: Chain, grid, *, allow_mixed_k: bool = False) -> np.ndarray:
    """Posterior predictive density averaged over the records at each grid point.

    A chain that visits several values of k must be conditioned first unless
    ``allow_mixed_k`` is set, in which case every record contributes.
    """
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        return np.empty(0)
    if not np.all(np.isfinite(grid)):
        raise InvalidInputError("grid points must be finite")
    if len(chain) == 0:
        raise InvalidInputError("chain has no records")
    ks = chain.ks
    if not chain.is_fixed_dimension() and not allow_mixed_k:
        raise InvalidInputError("chain mixes dimensions; condition on modal k or pass allow_mixed_k")
    dens = np.empty((len(chain), grid.size))
    for k in np.unique(ks):
        idx = np.flatnonzero(ks == k)
        w, mu, s2, _ = _canonical_arrays(chain.subset(ks == k))
        # chunk the records to bound memory at roughly 16 MB per block
        step = max(1, (1 << 21) // (grid.size * k))
        for start in range(0, idx.size, step):
            sl = slice(start, start + step)
            dens[idx[sl]] = _record_densities(w[sl], mu[sl], s2[sl], grid)
    return dens.mean(axis=0)


def default_grid(data: Dataset, points: int = 512, margin: float = 0.5) -> np.ndarray:
    """``points`` equally spaced values over the data range widened by margin * R on each side."""
    if data.n == 0:
        raise InvalidInputError("a default grid needs data")
    r = data.data_range if data.data_range > 0 else 1.0
    return np.linspace(data.range_min - margin * r, data.range_max + margin * r, points)


@dataclass(frozen=True)
class DicResult:
    d_bar: float
    p_d: float
    dic: float

    def to_dict(self) -> dict:
        return {"d_bar": self.d_bar, "p_d": self.p_d, "dic": self.dic}


def plug_in_state(chain: Chain) -> MixtureState:
    """Componentwise posterior means: w renormalized, then components re-sorted by mean."""
    w, mu, s2, beta = _canonical_arrays(chain)
    w_bar = _shifted_mean(w)
    state = MixtureState(
        _frozen(w_bar / w_bar.sum()), _frozen(_shifted_mean(mu)), _frozen(_shifted_mean(s2)), float(_shifted_mean(beta))
    )
    return _canonical(state)


def _deviance(y, w, mu, s2) -> float:
    return -2.0 * K.marginal_loglik(y, w, mu, s2)


def dic(chain: Chain, data: Dataset) -> DicResult:
    """Deviance information criterion D_bar + p_D with the plug-in state of :func:`plug_in_state`."""
    if len(chain) == 0:
        raise InvalidInputError("chain has no records")
    w, mu, s2, _ = _canonical_arrays(chain)
    y = np.ascontiguousarray(data.values)
    deviances = np.array([_deviance(y, w[m], mu[m], s2[m]) for m in range(w.shape[0])])
    d_bar = deviances[0] + math.fsum(deviances - deviances[0]) / deviances.size
    bar = plug_in_state(chain)
    d_hat = _deviance(y, np.array(bar.w), np.array(bar.mu), np.array(bar.sigma2))
    p_d = d_bar - d_hat
    return DicResult(d_bar, p_d, d_bar + p_d)


# ---------------------------------------------------------------------------
# output files


def summarize_chain(chain: Chain, data: Dataset, level: float = 0.95) -> dict:
    """JSON-ready summary: k posterior, modal k, parameter summaries and DIC.

    Chains that visit several k are conditioned on the modal k first.
    """
    pmf, mode = k_posterior(chain)
    conditioned = condition_on_modal_k(chain)
    return {
        "k_pmf": {str(k): p for k, p in pmf.items()},
        "modal_k": mode,
        "n_records": len(chain),
        "n_conditioned": len(conditioned),
        "parameters": posterior_summary(conditioned, level).to_dict(),
        "dic": dic(conditioned, data).to_dict(),
        "move_stats": chain.move_stats.to_dict(),
    }


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_predictive_csv(path, grid, density) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("y,density\n")
        for y, d in zip(grid, density):
            fh.write(f"{format(float(y), '.17g')},{format(float(d), '.17g')}\n")


def read_predictive_csv(path) -> tuple[np.ndarray, np.ndarray]:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return table[:, 0], table[:, 1]
