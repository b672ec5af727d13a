"""Reversible-jump moves and the unknown-k sampler.

Split/combine moves replace one component by two adjacent ones (and back)
while preserving the zeroth, first and second weighted moments.  Birth/death
moves insert a prior-drawn empty component or delete an empty one.  All
acceptance ratios are evaluated in log space against the prior density with
respect to (w, mu, sigma2), the parametrization of the split Jacobian, and
only the terms that change under a move are computed.

The numerics live in compiled kernels; the functions here expose them on
``MixtureState`` objects so each move can be tested in isolation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .chain import Chain, MoveStats
from .errors import InvalidInputError
from .gibbs import McmcConfig, _arrays, _require_z, _state, gibbs_sweep, initial_state, run_chain
from .model import Dataset, MixtureState, PriorSpec, _frozen

__all__ = [
    "MoveProbabilities",
    "MoveStats",
    "SplitRandoms",
    "birth_death_step",
    "delete_component",
    "insert_component",
    "log_birth_ratio",
    "log_combine_ratio",
    "log_death_ratio",
    "log_split_ratio",
    "merge_components",
    "propose_combine",
    "propose_split",
    "rj_sweep",
    "run_rj",
    "split_combine_step",
    "split_component",
]

_MOVE_NAMES = {K.SPLIT: "split", K.COMBINE: "combine", K.BIRTH: "birth", K.DEATH: "death"}


@dataclass(frozen=True)
class SplitRandoms:
    u1: float
    u2: float
    u3: float

    def __post_init__(self):
        for name in ("u1", "u2", "u3"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise InvalidInputError(f"{name} must lie strictly inside (0, 1), got {value!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.u1, self.u2, self.u3)


@dataclass(frozen=True)
class MoveProbabilities:
    """Probability of proposing the dimension-increasing move of a pair.

    ``p_up`` is used for 1 < k < k_max; at k = 1 the increasing move is always
    chosen and at k = k_max the decreasing one.  The same rule governs both
    the split/combine and the birth/death pair.  The split auxiliaries are
    u1, u2 ~ Beta(split_a, split_a) and u3 ~ Beta(split_c, split_c).
    """

    p_up: float = 0.5
    split_a: float = 2.0
    split_c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p_up < 1.0:
            raise InvalidInputError(f"p_up must lie strictly inside (0, 1), got {self.p_up!r}")
        if not (self.split_a > 0 and self.split_c > 0):
            raise InvalidInputError("split auxiliary Beta parameters must be positive")

    def up(self, k: int, k_max: int) -> float:
        return K.up_prob(k, k_max, self.p_up)

    def down(self, k: int, k_max: int) -> float:
        return K.down_prob(k, k_max, self.p_up)

    def log_u_density(self, u: SplitRandoms) -> float:
        return K.log_u_density(*u.as_tuple(), K.pack_params(_UNIT_PRIOR, self))

    def draw_u(self, rng: np.random.Generator) -> SplitRandoms:
        return SplitRandoms(*K.draw_split_randoms(rng, K.pack_params(_UNIT_PRIOR, self)))


DEFAULT_MOVES = MoveProbabilities()


@dataclass(frozen=True)
class _UnitPrior:
    # placeholder prior for kernels that only read the move settings
    gamma: float = 1.0
    mu_a: float = 0.0
    sigma_a2: float = 1.0
    alpha: float = 1.0
    g: float = 1.0
    h: float = 1.0
    k_max: int = 2


_UNIT_PRIOR = _UnitPrior()


def _stats(code: int, accepted: bool) -> MoveStats:
    if code == K.NO_MOVE:
        return MoveStats()
    return MoveStats.single(_MOVE_NAMES[code], accepted)


# ---------------------------------------------------------------------------
# split / combine


def split_component(w: float, mu: float, sigma2: float, u: SplitRandoms):
    """Moment-matching split of one component.

    Returns ``((w1, mu1, s1), (w2, mu2, s2), log_jacobian)``.
    """
    w1, mu1, s1, w2, mu2, s2, log_jac = K.split_component(float(w), float(mu), float(sigma2), *u.as_tuple())
    return (w1, mu1, s1), (w2, mu2, s2), log_jac


def merge_components(first, second):
    """Inverse of :func:`split_component`.

    ``first`` and ``second`` are ``(w, mu, sigma2)`` triples.  Returns
    ``((w, mu, sigma2), u, log_jacobian)`` where ``log_jacobian`` belongs to
    the reverse split.  ``u`` is None when the pair lies on the boundary of
    the split's range (equal means, for instance), which no split reaches.
    """
    w, mu, s2, u1, u2, u3, log_jac = K.merge_components(*map(float, first), *map(float, second))
    inside = all(0.0 < v < 1.0 for v in (u1, u2, u3))
    return (w, mu, s2), (SplitRandoms(u1, u2, u3) if inside else None), log_jac


def propose_split(state: MixtureState, j: int, u: SplitRandoms, k_max: int | None = None):
    """Split component ``j`` into two adjacent components.

    Returns ``(candidate, log_jacobian, valid)``.  ``valid`` is False when the
    new means would break the ordering, so the proposal must be rejected.
    Candidate allocations shift labels above ``j`` up by one; points of ``j``
    keep label ``j`` until the caller reallocates them.
    """
    k = state.k
    if k_max is not None and k >= k_max:
        raise InvalidInputError("split is unavailable at k = k_max")
    if not 0 <= j < k:
        raise InvalidInputError(f"component index {j} outside 0..{k - 1}")
    w, mu, s2, beta, z = _arrays(state)
    w1, mu1, v1, w2, mu2, v2, log_jac = K.split_component(w[j], mu[j], s2[j], *u.as_tuple())
    valid = bool(K.split_is_ordered(mu, j, mu1, mu2))
    candidate = MixtureState(
        _frozen(K.insert_pair(w, j, w1, w2)),
        _frozen(K.insert_pair(mu, j, mu1, mu2)),
        _frozen(K.insert_pair(s2, j, v1, v2)),
        beta,
        None if state.z is None else _frozen(np.where(z > j, z + 1, z)),
    )
    return candidate, log_jac, valid


def propose_combine(state: MixtureState, j1: int, j2: int):
    """Merge adjacent components ``j1`` and ``j2 = j1 + 1``.

    Returns ``(candidate, u, log_jacobian)`` where ``u`` reproduces the pair
    from the merged component and ``log_jacobian`` is that of the reverse split.
    """
    k = state.k
    if k < 2:
        raise InvalidInputError("combine needs at least two components")
    if j2 != j1 + 1 or not 0 <= j1 < k - 1:
        raise InvalidInputError(f"components {j1} and {j2} are not adjacent")
    w, mu, s2, beta, z = _arrays(state)
    wm, mum, s2m, u1, u2, u3, log_jac = K.merge_components(w[j1], mu[j1], s2[j1], w[j2], mu[j2], s2[j2])
    candidate = MixtureState(
        _frozen(K.merge_pair(w, j1, wm)),
        _frozen(K.merge_pair(mu, j1, mum)),
        _frozen(K.merge_pair(s2, j1, s2m)),
        beta,
        None if state.z is None else _frozen(np.where(z > j1, z - 1, z)),
    )
    return candidate, SplitRandoms(u1, u2, u3), log_jac


def _split_terms(merged, split, j, u, data, prior, moves):
    _require_z(split, data)
    if split.k != merged.k + 1:
        raise InvalidInputError("the split state must have exactly one more component")
    ws, mus, s2s, beta, zs = _arrays(split)
    return K.split_terms(
        data.values, zs, j, merged.w[j], merged.mu[j], merged.sigma2[j], merged.k,
        ws, mus, s2s, beta, *u.as_tuple(), K.pack_params(prior, moves),
    )


def log_split_ratio(merged, split, j, u, log_jac, data, prior, moves=DEFAULT_MOVES) -> float:
    """log acceptance ratio for splitting component ``j`` of ``merged`` into ``split``.

    ``split`` must carry allocations for every observation; those of the new
    pair are scored under the split allocation proposal.
    """
    target, fwd, rev = _split_terms(merged, split, j, u, data, prior, moves)
    return target + rev - fwd + log_jac


def log_combine_ratio(split, merged, j, u, log_jac, data, prior, moves=DEFAULT_MOVES) -> float:
    """log acceptance ratio for merging components ``j, j + 1`` of ``split`` into ``merged``."""
    target, fwd, rev = _split_terms(merged, split, j, u, data, prior, moves)
    return -target + fwd - rev - log_jac


def _move(kernel, state, data, prior, rng, moves):
    _require_z(state, data)
    if state.k > prior.k_max:
        raise InvalidInputError(f"state has {state.k} components, above k_max = {prior.k_max}")
    w, mu, s2, beta, z = _arrays(state)
    nw, nmu, ns2, nz, code, accepted = kernel(rng, data.values, w, mu, s2, beta, z, K.pack_params(prior, moves))
    return _state(nw, nmu, ns2, beta, nz), _stats(code, accepted)


def split_combine_step(state, data, prior, rng, moves=DEFAULT_MOVES) -> tuple[MixtureState, MoveStats]:
    """Propose a split (probability b_k) or a combine and accept by Metropolis-Hastings."""
    return _move(K.split_combine, state, data, prior, rng, moves)


# ---------------------------------------------------------------------------
# birth / death


def _birth_terms(small, big, position, data, prior, moves):
    _require_z(big, data)
    if big.k != small.k + 1:
        raise InvalidInputError("the birth state must have exactly one more component")
    n_empty = int(np.count_nonzero(big.counts() == 0))
    if big.counts()[position] != 0:
        raise InvalidInputError("birth/death only involves empty components")
    return K.birth_terms(
        data.n, small.k, n_empty, big.w[position], big.mu[position], big.sigma2[position],
        small.beta, K.pack_params(prior, moves),
    )


def log_birth_ratio(small, big, position, data, prior, moves=DEFAULT_MOVES) -> float:
    """log acceptance ratio for adding the empty component ``position`` of ``big``."""
    target, fwd, rev, log_jac = _birth_terms(small, big, position, data, prior, moves)
    return target + rev - fwd + log_jac


def log_death_ratio(big, small, position, data, prior, moves=DEFAULT_MOVES) -> float:
    """log acceptance ratio for deleting the empty component ``position`` of ``big``."""
    target, fwd, rev, log_jac = _birth_terms(small, big, position, data, prior, moves)
    return -target + fwd - rev - log_jac


def insert_component(state: MixtureState, w_new: float, mu_new: float, s2_new: float) -> tuple[MixtureState, int]:
    """Add an empty component at its place in the mean order.

    Existing weights are scaled by (1 - w_new).  Returns the new state and the
    index of the inserted component.
    """
    w, mu, s2, beta, z = _arrays(state)
    nw, nmu, ns2, nz, pos = K.insert_component(w, mu, s2, z, float(w_new), float(mu_new), float(s2_new))
    big = MixtureState(_frozen(nw), _frozen(nmu), _frozen(ns2), beta, None if state.z is None else _frozen(nz))
    return big, int(pos)


def delete_component(state: MixtureState, position: int) -> MixtureState:
    """Remove an empty component and rescale the remaining weights to sum to one."""
    if not 0 <= position < state.k or state.k < 2:
        raise InvalidInputError(f"cannot delete component {position} of a {state.k}-component state")
    if state.z is not None and np.any(state.z == position):
        raise InvalidInputError("only empty components can be deleted")
    w, mu, s2, beta, z = _arrays(state)
    nw, nmu, ns2, nz = K.delete_component(w, mu, s2, z, position)
    return MixtureState(_frozen(nw), _frozen(nmu), _frozen(ns2), beta, None if state.z is None else _frozen(nz))


def birth_death_step(state, data, prior, rng, moves=DEFAULT_MOVES) -> tuple[MixtureState, MoveStats]:
    """Propose a birth of an empty component or the death of an empty one.

    A death proposed when no component is empty counts as attempted and
    rejected.
    """
    return _move(K.birth_death, state, data, prior, rng, moves)


# ---------------------------------------------------------------------------
# driver


def rj_sweep(state, data, prior, rng, moves=DEFAULT_MOVES) -> tuple[MixtureState, MoveStats]:
    """Gibbs sweep at the current k, then one split/combine and one birth/death proposal."""
    state = gibbs_sweep(state, data, prior, rng)
    state, first = split_combine_step(state, data, prior, rng, moves)
    state, second = birth_death_step(state, data, prior, rng, moves)
    return state, first + second


def run_rj(
    data: Dataset,
    prior: PriorSpec,
    cfg: McmcConfig,
    moves: MoveProbabilities = DEFAULT_MOVES,
) -> Chain:
    """Sampler over an unknown number of components.

    Each sweep is :func:`rj_sweep`.  The initial k is drawn uniformly from
    1..k_max; an empty dataset samples the prior.
    """
    rng = np.random.default_rng(cfg.seed)
    k0 = int(rng.integers(1, prior.k_max + 1))
    start = initial_state(data, prior, k0, rng)
    return run_chain(data, prior, start, cfg, rng, K.pack_params(prior, moves), "rj")
