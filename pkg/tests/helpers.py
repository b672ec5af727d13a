"""Small builders shared by several test modules."""
import numpy as np

from rjmix import Chain, Dataset, MixtureState, log_likelihood
from rjmix.model import _frozen


def state(w, mu, sigma2, beta=1.0):
    # unchecked, so tests can build relabeled records
    arr = lambda v: _frozen(np.asarray(v, dtype=float))
    return MixtureState(arr(w), arr(mu), arr(sigma2), float(beta))


def make_chain(records, data: Dataset | None = None) -> Chain:
    records = tuple(records)
    ll = [log_likelihood(data, s) if data is not None else 0.0 for s in records]
    sweeps = np.arange(1, len(records) + 1, dtype=np.int64)
    return Chain(records, _frozen(np.array(ll)), _frozen(sweeps))


def permute_record(s: MixtureState, order) -> MixtureState:
    order = list(order)
    return state(s.w[order], s.mu[order], s.sigma2[order], s.beta)
