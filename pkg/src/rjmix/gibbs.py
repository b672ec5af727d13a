"""Fixed-k Gibbs sampler with conjugate full conditionals.

Each sweep updates, in order, the allocations z, the weights w, the means mu
(drawn independently, then relabelled so they increase), the precisions
1/sigma2 and the hyperparameter beta.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from .chain import Chain, MoveStats
from .errors import InvalidInputError, NumericFailureError
from .model import Dataset, MixtureState, PriorSpec, _frozen, log_normal_pdf


@dataclass(frozen=True)
class McmcConfig:
    n_sweeps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise InvalidInputError("; ".join(errors))

    def validation_errors(self) -> list[str]:
        errors = []
        if self.n_sweeps < 1:
            errors.append(f"n_sweeps must be positive, got {self.n_sweeps}")
        if self.burn_in < 0 or self.burn_in >= max(self.n_sweeps, 1):
            errors.append(f"burn_in must satisfy 0 <= burn_in < n_sweeps, got {self.burn_in}")
        if self.thin < 1:
            errors.append(f"thin must be positive, got {self.thin}")
        if not errors and self.n_retained < 1:
            errors.append("(n_sweeps - burn_in) / thin must retain at least one state")
        return errors

    @property
    def n_retained(self) -> int:
        return (self.n_sweeps - self.burn_in) // self.thin

    def is_recorded(self, sweep: int) -> bool:
        """Sweeps are 1-based; recorded when past burn-in on the thinning grid."""
        return sweep > self.burn_in and (sweep - self.burn_in) % self.thin == 0

    def to_dict(self) -> dict:
        return asdict(self)


def _arrays(state: MixtureState):
    # kernels need writable, contiguous inputs
    z = np.empty(0, np.int64) if state.z is None else np.array(state.z, dtype=np.int64)
    return np.array(state.w), np.array(state.mu), np.array(state.sigma2), float(state.beta), z


def _state(w, mu, s2, beta, z) -> MixtureState:
    return MixtureState(_frozen(w), _frozen(mu), _frozen(s2), float(beta), _frozen(z))


def _require_z(state: MixtureState, data: Dataset) -> None:
    if state.z is None or state.z.size != data.n:
        raise InvalidInputError("allocations must be assigned for every observation")


def _params(prior: PriorSpec) -> np.ndarray:
    from .rjmcmc import DEFAULT_MOVES

    return K.pack_params(prior, DEFAULT_MOVES)


# ---------------------------------------------------------------------------
# full conditionals


def allocation_log_probabilities(state: MixtureState, data: Dataset) -> np.ndarray:
    """Normalized log P(z_i = j | y_i, w, mu, sigma2), shape (n, k)."""
    logp = np.log(state.w) + log_normal_pdf(data.values[:, None], state.mu, state.sigma2)
    logp -= logp.max(axis=1, keepdims=True)
    logp -= np.log(np.exp(logp).sum(axis=1, keepdims=True))
    return logp


def update_allocations(state: MixtureState, data: Dataset, rng: np.random.Generator) -> MixtureState:
    w, mu, s2, beta, _ = _arrays(state)
    return _state(w, mu, s2, beta, K.draw_allocations(rng, data.values, w, mu, s2))


def update_weights(state: MixtureState, prior: PriorSpec, rng: np.random.Generator) -> MixtureState:
    """Draw w from Dirichlet(gamma + n_1, ..., gamma + n_k) via normalized gammas."""
    w, mu, s2, beta, z = _arrays(state)
    return _state(K.draw_weights(rng, K.counts_of(z, state.k), prior.gamma), mu, s2, beta, z)


def mean_conditional(state: MixtureState, data: Dataset, prior: PriorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the normal full conditional of each mu_j."""
    _require_z(state, data)
    w, mu, s2, beta, z = _arrays(state)
    return K.mean_conditional(data.values, z, state.k, s2, prior.mu_a, prior.sigma_a2)


def update_means(state: MixtureState, data: Dataset, prior: PriorSpec, rng: np.random.Generator) -> MixtureState:
    """Draw every mu_j from its conditional, then sort components by mean."""
    mean, var = mean_conditional(state, data, prior)
    w, _, s2, beta, z = _arrays(state)
    mu = K.draw_normals(rng, mean, var)
    order = K.ordering(w, mu, s2)
    if not K.is_identity(order):
        w, mu, s2, z = K.apply_order(order, w, mu, s2, z)
    return _state(w, mu, s2, beta, z)


def precision_conditional(state: MixtureState, data: Dataset, prior: PriorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Shape and rate of the gamma full conditional of each 1/sigma2_j."""
    _require_z(state, data)
    w, mu, s2, beta, z = _arrays(state)
    return K.precision_conditional(data.values, z, state.k, mu, prior.alpha, beta)


def update_variances(state: MixtureState, data: Dataset, prior: PriorSpec, rng: np.random.Generator) -> MixtureState:
    shape, rate = precision_conditional(state, data, prior)
    w, mu, _, beta, z = _arrays(state)
    return _state(w, mu, K.draw_variances(rng, shape, rate), beta, z)


def beta_conditional(state: MixtureState, prior: PriorSpec) -> tuple[float, float]:
    """Shape and rate of the gamma full conditional of beta."""
    return K.beta_conditional(np.array(state.sigma2), prior.g, prior.h, prior.alpha)


def update_beta(state: MixtureState, prior: PriorSpec, rng: np.random.Generator) -> MixtureState:
    shape, rate = beta_conditional(state, prior)
    w, mu, s2, _, z = _arrays(state)
    return _state(w, mu, s2, rng.standard_gamma(shape) / rate, z)


def gibbs_sweep(state: MixtureState, data: Dataset, prior: PriorSpec, rng: np.random.Generator) -> MixtureState:
    """One systematic scan in the order z, w, mu, 1/sigma2, beta."""
    return _state(*K.gibbs_sweep(rng, data.values, *_arrays(state), _params(prior)))


# ---------------------------------------------------------------------------
# driver


def initial_state(data: Dataset, prior: PriorSpec, k: int, rng: np.random.Generator | None = None) -> MixtureState:
    """Starting point for a chain with ``k`` components.

    With data: split the sorted sample into k contiguous groups and use group
    proportions, means and variances (floored at 1e-4 R^2); beta starts at its
    prior mean g / h.  Without data the parameters are drawn from the prior.
    """
    if not 1 <= k <= prior.k_max:
        raise InvalidInputError(f"k must lie in 1..{prior.k_max}, got {k}")
    if data.n == 0:
        if rng is None:
            raise InvalidInputError("an empty dataset needs an rng to draw the initial state")
        w = rng.dirichlet(np.full(k, prior.gamma))
        mu = np.sort(rng.normal(prior.mu_a, math.sqrt(prior.sigma_a2), size=k))
        beta = prior.g / prior.h
        sigma2 = beta / rng.standard_gamma(prior.alpha, size=k)
        return MixtureState.create(w, mu, sigma2, beta, np.empty(0, dtype=np.int64), k_max=prior.k_max)

    y = np.sort(data.values)
    spread = data.data_range if data.data_range > 0 else 1.0
    floor = 1e-4 * spread * spread
    groups = np.array_split(np.arange(data.n), k)
    sizes = np.array([g.size for g in groups], dtype=float)
    mu = np.empty(k)
    sigma2 = np.empty(k)
    for j, idx in enumerate(groups):
        if idx.size:
            mu[j] = y[idx].mean()
            sigma2[j] = max(y[idx].var(), floor)
        else:
            mu[j] = np.quantile(y, (j + 0.5) / k)
            sigma2[j] = floor
    # duplicated values can make group means tie; nudge to keep them strictly increasing
    step = 1e-6 * spread
    for j in range(1, k):
        if mu[j] <= mu[j - 1]:
            mu[j] = mu[j - 1] + step
    # empty groups (n < k) get add-one smoothing so every weight stays positive
    w = sizes / sizes.sum() if sizes.min() > 0 else (sizes + 1.0) / (sizes.sum() + k)
    labels = np.empty(data.n, dtype=np.int64)
    labels[np.argsort(data.values, kind="stable")] = np.repeat(np.arange(k), sizes.astype(int))
    return MixtureState.create(w, mu, sigma2, prior.g / prior.h, labels, k_max=prior.k_max)


def run_chain(
    data: Dataset,
    prior: PriorSpec,
    start: MixtureState,
    cfg: McmcConfig,
    rng: np.random.Generator,
    params: np.ndarray,
    mode: str,
) -> Chain:
    """Run the compiled sampler loop from ``start`` and package the records."""
    ks, ws, mus, s2s, betas, lls, sweeps, stats, failed = K.run_chain(
        rng, data.values, *_arrays(start), params,
        cfg.n_sweeps, cfg.burn_in, cfg.thin, mode == "rj",
    )
    if failed:
        raise NumericFailureError("sampler produced a non-finite or degenerate state", int(failed))
    records = tuple(
        MixtureState(_frozen(ws[m, :k].copy()), _frozen(mus[m, :k].copy()), _frozen(s2s[m, :k].copy()), float(betas[m]))
        for m, k in enumerate(ks)
    )
    move_stats = MoveStats(*(int(c) for c in stats)) if mode == "rj" else MoveStats()
    return Chain(records, _frozen(lls), _frozen(sweeps), cfg, move_stats, mode)


def run_fixed_k(data: Dataset, prior: PriorSpec, k: int, cfg: McmcConfig) -> Chain:
    """Gibbs sampler for a mixture with a known number of components."""
    if not 1 <= k <= prior.k_max:
        raise InvalidInputError(f"k must lie in 1..{prior.k_max}, got {k}")
    rng = np.random.default_rng(cfg.seed)
    start = initial_state(data, prior, k, rng)
    return run_chain(data, prior, start, cfg, rng, _params(prior), "fixed")
