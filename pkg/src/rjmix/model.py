"""Univariate normal mixture model: data, priors, states and densities.

Component labels are 0-based throughout the Python API.  Files written by the
command-line tools use 1-based component indices.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError

LOG_2PI = math.log(2.0 * math.pi)


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """An observed univariate sample.

    An empty dataset is permitted only through :meth:`empty`; it is used to run
    the samplers against the prior alone.
    """

    values: np.ndarray

    def __post_init__(self):
        values = _as_vector(self.values, "values")
        if values.size and not np.all(np.isfinite(values)):
            raise InvalidInputError("dataset contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values) -> "Dataset":
        data = cls(values)
        if data.n < 1:
            raise InvalidInputError("dataset must contain at least one observation")
        return data

    @classmethod
    def empty(cls) -> "Dataset":
        return cls(np.empty(0))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def range_min(self) -> float:
        return float(self.values.min()) if self.n else math.nan

    @property
    def range_max(self) -> float:
        return float(self.values.max()) if self.n else math.nan

    @property
    def data_range(self) -> float:
        return self.range_max - self.range_min


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the hierarchical prior.

    w ~ Dirichlet(gamma), mu_j ~ N(mu_a, sigma_a2), 1/sigma2_j ~ Gamma(alpha, beta),
    beta ~ Gamma(g, h) (shape/rate), k ~ Uniform{1..k_max}.
    """

    gamma: float
    mu_a: float
    sigma_a2: float
    alpha: float
    g: float
    h: float
    k_max: int

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise InvalidInputError("; ".join(errors))

    def validation_errors(self) -> list[str]:
        errors = []
        for name in ("gamma", "sigma_a2", "alpha", "g", "h"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                errors.append(f"{name} must be a positive finite number, got {value!r}")
        if not math.isfinite(self.mu_a):
            errors.append(f"mu_a must be finite, got {self.mu_a!r}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            errors.append(f"k_max must be a positive integer, got {self.k_max!r}")
        return errors


PRIOR_FIELDS = ("gamma", "mu_a", "sigma_a2", "alpha", "g", "h", "k_max")


def default_prior(data: Dataset, **overrides) -> PriorSpec:
    """Weakly informative data-dependent prior.

    With R the data range and xi its midpoint: mu_a = xi, sigma_a2 = R**2,
    alpha = 2, g = 0.2, h = 10 / R**2, k_max = 10, gamma = 1.  Any field can be
    overridden by keyword.
    """
    unknown = set(overrides) - set(PRIOR_FIELDS)
    if unknown:
        raise InvalidInputError(f"unknown prior fields: {sorted(unknown)}")
    data_dependent = {"mu_a", "sigma_a2", "h"} - set(overrides)
    values = {"gamma": 1.0, "alpha": 2.0, "g": 0.2, "k_max": 10}
    if data_dependent:
        if data.n == 0 or not data.data_range > 0:
            raise InvalidInputError(
                "default prior needs data with a positive range; "
                f"override {sorted(data_dependent)} explicitly"
            )
        r = data.data_range
        values.update(
            mu_a=0.5 * (data.range_min + data.range_max),
            sigma_a2=r * r,
            h=10.0 / (r * r),
        )
    values.update(overrides)
    values["k_max"] = int(values["k_max"])
    return PriorSpec(**{name: values[name] for name in PRIOR_FIELDS})


@dataclass(frozen=True)
class MixtureState:
    """One point of the variable-dimension parameter space.

    ``z`` holds 0-based allocations and may be ``None`` for states stored in a
    chain, where only the parameters are kept.
    """

    w: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    beta: float
    z: np.ndarray | None = None

    @property
    def k(self) -> int:
        return int(self.w.size)

    @classmethod
    def create(cls, w, mu, sigma2, beta, z=None, *, k_max: int | None = None) -> "MixtureState":
        """Build a state from array-likes and check every invariant."""
        z_arr = None if z is None else _frozen_int(z)
        state = cls(_as_vector(w, "w"), _as_vector(mu, "mu"), _as_vector(sigma2, "sigma2"), float(beta), z_arr)
        state.check(k_max=k_max)
        return state

    def check(self, *, k_max: int | None = None, ordered: bool = True) -> None:
        """Raise :class:`InvalidInputError` if any invariant is violated."""
        k = self.k
        if k < 1 or self.mu.size != k or self.sigma2.size != k:
            raise InvalidInputError("w, mu and sigma2 must be non-empty vectors of equal length")
        if k_max is not None and k > k_max:
            raise InvalidInputError(f"k={k} exceeds k_max={k_max}")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.sigma2))):
            raise InvalidInputError("state parameters must be finite")
        if np.any(self.w <= 0) or np.any(self.w > 1) or abs(math.fsum(self.w) - 1.0) > 1e-12:
            raise InvalidInputError("weights must lie in (0, 1] and sum to one")
        if np.any(self.sigma2 <= 0):
            raise InvalidInputError("variances must be positive")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise InvalidInputError("beta must be positive")
        if ordered and k > 1 and not np.all(np.diff(self.mu) > 0):
            raise InvalidInputError("means must be strictly increasing")
        if self.z is not None and self.z.size and (self.z.min() < 0 or self.z.max() >= k):
            raise InvalidInputError("allocation label out of range")

    def with_z(self, z) -> "MixtureState":
        return MixtureState(self.w, self.mu, self.sigma2, self.beta, None if z is None else _frozen_int(z))

    def counts(self) -> np.ndarray:
        if self.z is None:
            raise InvalidInputError("state has no allocations")
        return np.bincount(self.z, minlength=self.k)


def _frozen_int(values) -> np.ndarray:
    arr = np.array(values, dtype=np.int64).reshape(-1)
    arr.setflags(write=False)
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Scenario:
    """Ground truth for simulated data."""

    true_w: np.ndarray
    true_mu: np.ndarray
    true_sigma2: np.ndarray
    n: int
    label: str = "custom"

    def __post_init__(self):
        for name in ("true_w", "true_mu", "true_sigma2"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), name))
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError("scenario sample size must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        self.as_state()  # validates simplex, ordering and positivity

    @property
    def true_k(self) -> int:
        return int(self.true_w.size)

    def as_state(self) -> MixtureState:
        return MixtureState.create(self.true_w, self.true_mu, self.true_sigma2, 1.0)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "true_k": self.true_k,
            "true_w": self.true_w.tolist(),
            "true_mu": self.true_mu.tolist(),
            "true_sigma2": self.true_sigma2.tolist(),
        }


# ---------------------------------------------------------------------------
# densities


def log_normal_pdf(y, mean, var):
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (y - mean) ** 2 / var


def _component_log_terms(y: np.ndarray, state: MixtureState) -> np.ndarray:
    # shape (len(y), k): log w_j + log N(y; mu_j, sigma2_j)
    return np.log(state.w) + log_normal_pdf(y[:, None], state.mu, state.sigma2)


def log_mixture_density(y, state: MixtureState):
    """log sum_j w_j N(y; mu_j, sigma2_j) for a scalar or an array of points."""
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("evaluation points must be finite")
    out = logsumexp(_component_log_terms(arr.reshape(-1), state), axis=1)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def log_likelihood(data: Dataset, state: MixtureState) -> float:
    """Marginal log-likelihood with the allocations integrated out."""
    if data.n == 0:
        return 0.0
    return float(np.sum(logsumexp(_component_log_terms(data.values, state), axis=1)))


def complete_data_log_likelihood(data: Dataset, state: MixtureState) -> float:
    """sum_i log w_{z_i} + log N(y_i; mu_{z_i}, sigma2_{z_i})."""
    z = state.z
    if z is None or z.size != data.n:
        raise InvalidInputError("allocations must be assigned for every observation")
    if data.n == 0:
        return 0.0
    if z.min() < 0 or z.max() >= state.k:
        raise InvalidInputError("allocation label out of range")
    terms = np.log(state.w[z]) + log_normal_pdf(data.values, state.mu[z], state.sigma2[z])
    return float(np.sum(terms))


def log_gamma_pdf(x, shape, rate):
    """Gamma density with mean shape / rate."""
    return shape * np.log(rate) - math.lgamma(shape) + (shape - 1.0) * np.log(x) - rate * x


def log_dirichlet_pdf(w: np.ndarray, gamma: float) -> float:
    k = w.size
    return math.lgamma(k * gamma) - k * math.lgamma(gamma) + (gamma - 1.0) * float(np.sum(np.log(w)))


def log_prior_density(state: MixtureState, prior: PriorSpec, *, wrt: str = "precision") -> float:
    """Joint log prior density on the ordered region mu_1 < ... < mu_k.

    Includes the k! factor from restricting the exchangeable prior to the
    ordered region.  ``wrt="precision"`` gives the density with respect to the
    precisions 1/sigma2_j; ``wrt="variance"`` gives it with respect to the
    variances, which is the parametrization used by the trans-dimensional
    moves.
    """
    k = state.k
    if k > prior.k_max:
        raise InvalidInputError(f"k={k} exceeds k_max={prior.k_max}")
    if k > 1 and not np.all(np.diff(state.mu) > 0):
        raise InvalidInputError("prior density is only defined on the ordered region")
    if wrt not in ("precision", "variance"):
        raise InvalidInputError(f"unknown parametrization {wrt!r}")
    precision = 1.0 / state.sigma2
    total = math.lgamma(k + 1)
    total += log_dirichlet_pdf(state.w, prior.gamma)
    total += float(np.sum(log_normal_pdf(state.mu, prior.mu_a, prior.sigma_a2)))
    total += float(np.sum(log_gamma_pdf(precision, prior.alpha, state.beta)))
    total += float(log_gamma_pdf(state.beta, prior.g, prior.h))
    total -= math.log(prior.k_max)
    if wrt == "variance":
        total -= 2.0 * float(np.sum(np.log(state.sigma2)))
    return total


# ---------------------------------------------------------------------------
# simulation and ordering


def simulate_dataset(scenario: Scenario, seed: int) -> tuple[Dataset, np.ndarray]:
    """Draw ``scenario.n`` observations and their true 0-based labels."""
    rng = np.random.default_rng(seed)
    z = rng.choice(scenario.true_k, size=scenario.n, p=scenario.true_w)
    y = rng.normal(scenario.true_mu[z], np.sqrt(scenario.true_sigma2[z]))
    return Dataset.from_values(y), _frozen_int(z)


def ordering_permutation(state: MixtureState) -> np.ndarray:
    """Indices that sort components by mu, then w, then sigma2, then index."""
    k = state.k
    return np.lexsort((np.arange(k), state.sigma2, state.w, state.mu))


def permute_components(state: MixtureState, order) -> MixtureState:
    """Return the state whose new component ``i`` is old component ``order[i]``."""
    order = np.asarray(order, dtype=np.int64)
    z = None
    if state.z is not None:
        relabel = np.empty_like(order)
        relabel[order] = np.arange(order.size)
        z = _frozen(relabel[state.z])
    return MixtureState(
        _frozen(state.w[order]), _frozen(state.mu[order]), _frozen(state.sigma2[order]), state.beta, z
    )


def enforce_ordering(state: MixtureState) -> tuple[MixtureState, np.ndarray]:
    """Relabel components so that the means increase.

    Returns the reordered state and ``perm`` with ``perm[old_label] = new_label``.
    Ties in mu are broken by ascending w, then sigma2, then original index.
    """
    order = ordering_permutation(state)
    perm = np.empty_like(order)
    perm[order] = np.arange(order.size)
    if np.array_equal(order, np.arange(order.size)):
        return state, perm
    return permute_components(state, order), perm


# ---------------------------------------------------------------------------
# data files


def read_dataset_csv(path) -> Dataset:
    """Read a single-column CSV of numbers with an optional header line."""
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            token = row[0].strip()
            try:
                value = float(token)
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise InvalidInputError(f"{path}: line {lineno}: cannot parse {token!r} as a number") from None
            if not math.isfinite(value):
                raise InvalidInputError(f"{path}: line {lineno}: non-finite value {token!r}")
            values.append(value)
    if not values:
        raise InvalidInputError(f"{path}: no observations found")
    return Dataset.from_values(values)


def write_dataset_csv(path, data: Dataset, header: str = "y") -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for value in data.values:
            fh.write(format(float(value), ".17g") + "\n")
