"""Compiled numeric kernels shared by the Gibbs and reversible-jump samplers.

Kernels work on plain arrays; ``gibbs`` and ``rjmcmc`` wrap them into the
state-based API.  Prior and move settings travel as one packed float vector
(see ``pack_params``).  Labels are 0-based.
"""
import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
LOG_CLAMP = 700.0

# layout of the packed parameter vector
GAMMA, MU_A, SIGMA_A2, ALPHA, G, H, K_MAX, P_UP, SPLIT_A, SPLIT_C = range(10)

# move codes; MoveStats counters are laid out as [attempted, accepted] per code
SPLIT, COMBINE, BIRTH, DEATH = 0, 1, 2, 3
NO_MOVE = -1


def pack_params(prior, moves) -> np.ndarray:
    return np.array(
        [
            prior.gamma, prior.mu_a, prior.sigma_a2, prior.alpha, prior.g, prior.h,
            float(prior.k_max), moves.p_up, moves.split_a, moves.split_c,
        ],
        dtype=np.float64,
    )


@njit(cache=True)
def log_npdf(y, mean, var):
    d = y - mean
    return -0.5 * (LOG_2PI + math.log(var)) - 0.5 * d * d / var


@njit(cache=True)
def log_beta_pdf(x, a, b):
    return (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)
    )


@njit(cache=True)
def up_prob(k, k_max, p_up):
    if k_max == 1:
        return 0.0
    if k <= 1:
        return 1.0
    if k >= k_max:
        return 0.0
    return p_up


@njit(cache=True)
def down_prob(k, k_max, p_up):
    if k <= 1:
        return 0.0
    return 1.0 - up_prob(k, k_max, p_up)


@njit(cache=True)
def accept(log_ratio, rng):
    if log_ratio != log_ratio:
        return False
    lr = min(max(log_ratio, -LOG_CLAMP), LOG_CLAMP)
    if lr >= 0.0:
        return True
    return math.log(rng.random()) < lr


@njit(cache=True)
def counts_of(z, k):
    counts = np.zeros(k, np.int64)
    for i in range(z.size):
        counts[z[i]] += 1
    return counts


@njit(cache=True)
def marginal_loglik(y, w, mu, s2):
    k = w.size
    c = np.empty(k)
    for j in range(k):
        c[j] = math.log(w[j]) - 0.5 * (LOG_2PI + math.log(s2[j]))
    terms = np.empty(k)
    total = 0.0
    for i in range(y.size):
        mx = -np.inf
        for j in range(k):
            d = y[i] - mu[j]
            terms[j] = c[j] - 0.5 * d * d / s2[j]
            if terms[j] > mx:
                mx = terms[j]
        acc = 0.0
        for j in range(k):
            acc += math.exp(terms[j] - mx)
        total += mx + math.log(acc)
    return total


# ---------------------------------------------------------------------------
# Gibbs full conditionals


@njit(cache=True)
def draw_allocations(rng, y, w, mu, s2):
    n, k = y.size, w.size
    c = np.empty(k)
    for j in range(k):
        c[j] = math.log(w[j]) - 0.5 * (LOG_2PI + math.log(s2[j]))
    p = np.empty(k)
    z = np.empty(n, np.int64)
    for i in range(n):
        mx = -np.inf
        for j in range(k):
            d = y[i] - mu[j]
            p[j] = c[j] - 0.5 * d * d / s2[j]
            if p[j] > mx:
                mx = p[j]
        total = 0.0
        for j in range(k):
            p[j] = math.exp(p[j] - mx)
            total += p[j]
        u = rng.random() * total
        label = k - 1
        acc = 0.0
        for j in range(k):
            acc += p[j]
            if u < acc:
                label = j
                break
        z[i] = label
    return z


@njit(cache=True)
def draw_weights(rng, counts, gamma):
    k = counts.size
    g = np.empty(k)
    total = 0.0
    for j in range(k):
        g[j] = rng.standard_gamma(gamma + counts[j])
        total += g[j]
    return g / total


@njit(cache=True)
def mean_conditional(y, z, k, s2, mu_a, sigma_a2):
    counts = np.zeros(k)
    sums = np.zeros(k)
    for i in range(y.size):
        counts[z[i]] += 1.0
        sums[z[i]] += y[i]
    mean = np.empty(k)
    var = np.empty(k)
    for j in range(k):
        prec = 1.0 / s2[j]
        var[j] = 1.0 / (1.0 / sigma_a2 + counts[j] * prec)
        mean[j] = var[j] * (mu_a / sigma_a2 + prec * sums[j])
    return mean, var


@njit(cache=True)
def draw_normals(rng, mean, var):
    out = np.empty(mean.size)
    for j in range(mean.size):
        out[j] = mean[j] + math.sqrt(var[j]) * rng.standard_normal()
    return out


@njit(cache=True)
def _precedes(a, b, w, mu, s2):
    if mu[a] != mu[b]:
        return mu[a] < mu[b]
    if w[a] != w[b]:
        return w[a] < w[b]
    if s2[a] != s2[b]:
        return s2[a] < s2[b]
    return a < b


@njit(cache=True)
def ordering(w, mu, s2):
    """Indices sorting components by (mu, w, s2, index)."""
    k = mu.size
    order = np.arange(k)
    for i in range(1, k):
        cur = order[i]
        pos = i
        while pos > 0 and _precedes(cur, order[pos - 1], w, mu, s2):
            order[pos] = order[pos - 1]
            pos -= 1
        order[pos] = cur
    return order


@njit(cache=True)
def is_identity(order):
    for i in range(order.size):
        if order[i] != i:
            return False
    return True


@njit(cache=True)
def apply_order(order, w, mu, s2, z):
    k = order.size
    relabel = np.empty(k, np.int64)
    nw = np.empty(k)
    nmu = np.empty(k)
    ns2 = np.empty(k)
    for new in range(k):
        old = order[new]
        relabel[old] = new
        nw[new] = w[old]
        nmu[new] = mu[old]
        ns2[new] = s2[old]
    nz = np.empty(z.size, np.int64)
    for i in range(z.size):
        nz[i] = relabel[z[i]]
    return nw, nmu, ns2, nz


@njit(cache=True)
def precision_conditional(y, z, k, mu, alpha, beta):
    counts = np.zeros(k)
    sse = np.zeros(k)
    for i in range(y.size):
        d = y[i] - mu[z[i]]
        counts[z[i]] += 1.0
        sse[z[i]] += d * d
    shape = np.empty(k)
    rate = np.empty(k)
    for j in range(k):
        shape[j] = alpha + 0.5 * counts[j]
        rate[j] = beta + 0.5 * sse[j]
    return shape, rate


@njit(cache=True)
def draw_variances(rng, shape, rate):
    out = np.empty(shape.size)
    for j in range(shape.size):
        out[j] = rate[j] / rng.standard_gamma(shape[j])
    return out


@njit(cache=True)
def beta_conditional(s2, g, h, alpha):
    total = 0.0
    for j in range(s2.size):
        total += 1.0 / s2[j]
    return g + s2.size * alpha, h + total


@njit(cache=True)
def gibbs_sweep(rng, y, w, mu, s2, beta, z, pp):
    k = w.size
    z = draw_allocations(rng, y, w, mu, s2)
    w = draw_weights(rng, counts_of(z, k), pp[GAMMA])
    mean, var = mean_conditional(y, z, k, s2, pp[MU_A], pp[SIGMA_A2])
    mu = draw_normals(rng, mean, var)
    order = ordering(w, mu, s2)
    if not is_identity(order):
        w, mu, s2, z = apply_order(order, w, mu, s2, z)
    shape, rate = precision_conditional(y, z, k, mu, pp[ALPHA], beta)
    s2 = draw_variances(rng, shape, rate)
    shape_b, rate_b = beta_conditional(s2, pp[G], pp[H], pp[ALPHA])
    beta = rng.standard_gamma(shape_b) / rate_b
    return w, mu, s2, beta, z


# ---------------------------------------------------------------------------
# split / combine


@njit(cache=True)
def log_jacobian(w, mu1, mu2, s1, s2, u2, u3, sigma2):
    gap = abs(mu2 - mu1)
    if gap == 0.0:
        return -np.inf
    return (
        math.log(w) + math.log(gap) + math.log(s1) + math.log(s2)
        - math.log(u2) - math.log1p(-u2 * u2) - math.log(u3) - math.log1p(-u3) - math.log(sigma2)
    )


@njit(cache=True)
def split_component(w, mu, sigma2, u1, u2, u3):
    w1 = w * u1
    w2 = w * (1.0 - u1)
    sd = math.sqrt(sigma2)
    mu1 = mu - u2 * sd * math.sqrt(w2 / w1)
    mu2 = mu + u2 * sd * math.sqrt(w1 / w2)
    shrink = (1.0 - u2 * u2) * sigma2 * w
    s1 = u3 * shrink / w1
    s2 = (1.0 - u3) * shrink / w2
    return w1, mu1, s1, w2, mu2, s2, log_jacobian(w, mu1, mu2, s1, s2, u2, u3, sigma2)


@njit(cache=True)
def merge_components(w1, mu1, s1, w2, mu2, s2):
    w = w1 + w2
    mu = (w1 * mu1 + w2 * mu2) / w
    # equals (w1 (mu1^2 + s1) + w2 (mu2^2 + s2)) / w - mu^2 without the cancellation
    sigma2 = (w1 * s1 + w2 * s2) / w + w1 * w2 * (mu2 - mu1) ** 2 / (w * w)
    u1 = w1 / w
    u2 = (mu - mu1) / math.sqrt(sigma2 * w2 / w1)
    u3 = w1 * s1 / (w1 * s1 + w2 * s2)
    return w, mu, sigma2, u1, u2, u3, log_jacobian(w, mu1, mu2, s1, s2, u2, u3, sigma2)


@njit(cache=True)
def log_component_prior(mu, s2, beta, pp):
    # N(mu; mu_a, sigma_a2) times the inverse-gamma(alpha, beta) density of s2
    alpha = pp[ALPHA]
    return (
        log_npdf(mu, pp[MU_A], pp[SIGMA_A2])
        + alpha * math.log(beta) - math.lgamma(alpha) - (alpha + 1.0) * math.log(s2) - beta / s2
    )


@njit(cache=True)
def log_dimension_step(k, gamma):
    # k! ordering factor and Dirichlet normalizer going from k to k + 1 components
    return math.log(k + 1.0) + math.lgamma((k + 1.0) * gamma) - math.lgamma(k * gamma) - math.lgamma(gamma)


@njit(cache=True)
def log_u_density(u1, u2, u3, pp):
    a, c = pp[SPLIT_A], pp[SPLIT_C]
    return log_beta_pdf(u1, a, a) + log_beta_pdf(u2, a, a) + log_beta_pdf(u3, c, c)


@njit(cache=True)
def split_terms(y, zs, j, wm, mum, s2m, k, ws, mus, s2s, beta, u1, u2, u3, pp):
    """Pieces of the split/combine acceptance ratio.

    (wm, mum, s2m) is the merged component ``j`` of a k-component state;
    ``ws, mus, s2s`` are the k + 1 split-state vectors and ``zs`` the split
    state's allocations.  Returns (log target ratio split/merged,
    log split proposal, log combine proposal).
    """
    w1, w2 = ws[j], ws[j + 1]
    lw1, lw2 = math.log(w1), math.log(w2)
    log_lik = 0.0
    log_alloc = 0.0
    n_pair = 0
    for i in range(y.size):
        if zs[i] != j and zs[i] != j + 1:
            continue
        n_pair += 1
        a = lw1 + log_npdf(y[i], mus[j], s2s[j])
        b = lw2 + log_npdf(y[i], mus[j + 1], s2s[j + 1])
        hi = max(a, b)
        norm = hi + math.log(math.exp(a - hi) + math.exp(b - hi))
        own = a if zs[i] == j else b
        log_alloc += own - norm
        log_lik += own - math.log(wm) - log_npdf(y[i], mum, s2m)
    log_prior = (
        log_dimension_step(k, pp[GAMMA])
        + (pp[GAMMA] - 1.0) * (lw1 + lw2 - math.log(wm))
        + log_component_prior(mus[j], s2s[j], beta, pp)
        + log_component_prior(mus[j + 1], s2s[j + 1], beta, pp)
        - log_component_prior(mum, s2m, beta, pp)
    )
    k_max = int(pp[K_MAX])
    # split: choose the move (b_k), one of k components, allocations and u;
    # combine: choose the move (d_{k+1}) and one of the k adjacent pairs
    log_split = math.log(up_prob(k, k_max, pp[P_UP])) - math.log(k) + log_alloc + log_u_density(u1, u2, u3, pp)
    log_combine = math.log(down_prob(k + 1, k_max, pp[P_UP])) - math.log(k)
    return log_lik + log_prior, log_split, log_combine


@njit(cache=True)
def insert_pair(arr, j, a, b):
    k = arr.size
    out = np.empty(k + 1)
    out[:j] = arr[:j]
    out[j] = a
    out[j + 1] = b
    out[j + 2:] = arr[j + 1:]
    return out


@njit(cache=True)
def merge_pair(arr, j, value):
    k = arr.size
    out = np.empty(k - 1)
    out[:j] = arr[:j]
    out[j] = value
    out[j + 1:] = arr[j + 2:]
    return out


@njit(cache=True)
def draw_split_randoms(rng, pp):
    a, c = pp[SPLIT_A], pp[SPLIT_C]
    while True:
        u1 = rng.beta(a, a)
        u2 = rng.beta(a, a)
        u3 = rng.beta(c, c)
        # endpoints have probability zero but can appear through rounding
        if 0.0 < u1 < 1.0 and 0.0 < u2 < 1.0 and 0.0 < u3 < 1.0:
            return u1, u2, u3


@njit(cache=True)
def split_is_ordered(mu, j, mu1, mu2):
    k = mu.size
    return mu1 < mu2 and (j == 0 or mu[j - 1] < mu1) and (j == k - 1 or mu2 < mu[j + 1])


@njit(cache=True)
def allocate_split(rng, y, z, j, ws, mus, s2s):
    """Relabel z for a split of component j: labels > j shift up, points of j
    go to j or j + 1 with probability proportional to w N(y; mu, sigma2)."""
    nz = np.empty(z.size, np.int64)
    lw1, lw2 = math.log(ws[j]), math.log(ws[j + 1])
    for i in range(z.size):
        if z[i] < j:
            nz[i] = z[i]
        elif z[i] > j:
            nz[i] = z[i] + 1
        else:
            a = lw1 + log_npdf(y[i], mus[j], s2s[j])
            b = lw2 + log_npdf(y[i], mus[j + 1], s2s[j + 1])
            p_first = 1.0 / (1.0 + math.exp(b - a)) if b - a < LOG_CLAMP else 0.0
            nz[i] = j if rng.random() < p_first else j + 1
    return nz


@njit(cache=True)
def split_combine(rng, y, w, mu, s2, beta, z, pp):
    """One split-or-combine proposal.  Returns the new arrays, the move code
    and whether it was accepted."""
    k = w.size
    k_max = int(pp[K_MAX])
    if k_max == 1:
        return w, mu, s2, z, NO_MOVE, False
    if rng.random() < up_prob(k, k_max, pp[P_UP]):
        j = min(int(rng.random() * k), k - 1)
        u1, u2, u3 = draw_split_randoms(rng, pp)
        w1, mu1, v1, w2, mu2, v2, log_jac = split_component(w[j], mu[j], s2[j], u1, u2, u3)
        if not split_is_ordered(mu, j, mu1, mu2):
            return w, mu, s2, z, SPLIT, False
        ws = insert_pair(w, j, w1, w2)
        mus = insert_pair(mu, j, mu1, mu2)
        s2s = insert_pair(s2, j, v1, v2)
        zs = allocate_split(rng, y, z, j, ws, mus, s2s)
        target, fwd, rev = split_terms(y, zs, j, w[j], mu[j], s2[j], k, ws, mus, s2s, beta, u1, u2, u3, pp)
        if accept(target + rev - fwd + log_jac, rng):
            return ws, mus, s2s, zs, SPLIT, True
        return w, mu, s2, z, SPLIT, False

    j = min(int(rng.random() * (k - 1)), k - 2)
    wm, mum, s2m, u1, u2, u3, log_jac = merge_components(w[j], mu[j], s2[j], w[j + 1], mu[j + 1], s2[j + 1])
    target, split_prop, combine_prop = split_terms(y, z, j, wm, mum, s2m, k - 1, w, mu, s2, beta, u1, u2, u3, pp)
    if accept(-target + split_prop - combine_prop - log_jac, rng):
        zm = np.empty(z.size, np.int64)
        for i in range(z.size):
            zm[i] = z[i] - 1 if z[i] > j else z[i]
        return merge_pair(w, j, wm), merge_pair(mu, j, mum), merge_pair(s2, j, s2m), zm, COMBINE, True
    return w, mu, s2, z, COMBINE, False


# ---------------------------------------------------------------------------
# birth / death


@njit(cache=True)
def birth_terms(n, k, n_empty, w_new, mu_new, s2_new, beta, pp):
    """Pieces of the birth/death acceptance ratio between k and k + 1
    components, where the k + 1 state has ``n_empty`` empty components."""
    log_rescale = math.log1p(-w_new)
    component = log_component_prior(mu_new, s2_new, beta, pp)
    # every observation sits in an old component whose weight shrank by (1 - w_new)
    target = (
        n * log_rescale
        + log_dimension_step(k, pp[GAMMA])
        + (pp[GAMMA] - 1.0) * (math.log(w_new) + k * log_rescale)
        + component
    )
    k_max = int(pp[K_MAX])
    # birth: choose the move, w_new ~ Beta(1, k), (mu, sigma2) from the prior;
    # death: choose the move and one of the empty components
    log_birth = math.log(up_prob(k, k_max, pp[P_UP])) + math.log(k) + (k - 1.0) * log_rescale + component
    log_death = math.log(down_prob(k + 1, k_max, pp[P_UP])) - math.log(n_empty)
    # Jacobian of rescaling the k old weights on the (k - 1)-dimensional simplex
    log_jac = (k - 1.0) * log_rescale
    return target, log_birth, log_death, log_jac


@njit(cache=True)
def insert_component(w, mu, s2, z, w_new, mu_new, s2_new):
    k = w.size
    pos = 0
    while pos < k and mu[pos] < mu_new:
        pos += 1
    nw = np.empty(k + 1)
    nmu = np.empty(k + 1)
    ns2 = np.empty(k + 1)
    for j in range(k + 1):
        if j < pos:
            nw[j], nmu[j], ns2[j] = w[j] * (1.0 - w_new), mu[j], s2[j]
        elif j == pos:
            nw[j], nmu[j], ns2[j] = w_new, mu_new, s2_new
        else:
            nw[j], nmu[j], ns2[j] = w[j - 1] * (1.0 - w_new), mu[j - 1], s2[j - 1]
    nw /= nw.sum()
    nz = np.empty(z.size, np.int64)
    for i in range(z.size):
        nz[i] = z[i] + 1 if z[i] >= pos else z[i]
    return nw, nmu, ns2, nz, pos


@njit(cache=True)
def delete_component(w, mu, s2, z, pos):
    k = w.size
    scale = 1.0 - w[pos]
    nw = np.empty(k - 1)
    nmu = np.empty(k - 1)
    ns2 = np.empty(k - 1)
    for j in range(k - 1):
        src = j if j < pos else j + 1
        nw[j], nmu[j], ns2[j] = w[src] / scale, mu[src], s2[src]
    nw /= nw.sum()
    nz = np.empty(z.size, np.int64)
    for i in range(z.size):
        nz[i] = z[i] - 1 if z[i] > pos else z[i]
    return nw, nmu, ns2, nz


@njit(cache=True)
def count_empty(counts):
    total = 0
    for j in range(counts.size):
        if counts[j] == 0:
            total += 1
    return total


@njit(cache=True)
def birth_death(rng, y, w, mu, s2, beta, z, pp):
    """One birth-or-death proposal.  Returns the new arrays, the move code and
    whether it was accepted."""
    k = w.size
    k_max = int(pp[K_MAX])
    if k_max == 1:
        return w, mu, s2, z, NO_MOVE, False
    if rng.random() < up_prob(k, k_max, pp[P_UP]):
        w_new = rng.beta(1.0, float(k))
        mu_new = pp[MU_A] + math.sqrt(pp[SIGMA_A2]) * rng.standard_normal()
        s2_new = beta / rng.standard_gamma(pp[ALPHA])
        if not (0.0 < w_new < 1.0 and s2_new > 0.0 and s2_new < np.inf):
            return w, mu, s2, z, BIRTH, False
        for j in range(k):
            if mu[j] == mu_new:
                return w, mu, s2, z, BIRTH, False
        nw, nmu, ns2, nz, pos = insert_component(w, mu, s2, z, w_new, mu_new, s2_new)
        n_empty = count_empty(counts_of(nz, k + 1))
        target, fwd, rev, log_jac = birth_terms(y.size, k, n_empty, nw[pos], mu_new, s2_new, beta, pp)
        if accept(target + rev - fwd + log_jac, rng):
            return nw, nmu, ns2, nz, BIRTH, True
        return w, mu, s2, z, BIRTH, False

    counts = counts_of(z, k)
    n_empty = count_empty(counts)
    if n_empty == 0:
        return w, mu, s2, z, DEATH, False
    pick = min(int(rng.random() * n_empty), n_empty - 1)
    pos = -1
    for j in range(k):
        if counts[j] == 0:
            if pick == 0:
                pos = j
                break
            pick -= 1
    target, birth, death, log_jac = birth_terms(y.size, k - 1, n_empty, w[pos], mu[pos], s2[pos], beta, pp)
    if accept(-target + birth - death - log_jac, rng):
        nw, nmu, ns2, nz = delete_component(w, mu, s2, z, pos)
        return nw, nmu, ns2, nz, DEATH, True
    return w, mu, s2, z, DEATH, False


# ---------------------------------------------------------------------------
# run loop


@njit(cache=True)
def _is_sane(w, mu, s2, beta):
    if not (beta > 0.0 and beta < np.inf):
        return False
    for j in range(w.size):
        if not (w[j] > 0.0 and s2[j] > 0.0 and s2[j] < np.inf and abs(mu[j]) < np.inf):
            return False
    return True


@njit(cache=True)
def run_chain(rng, y, w, mu, s2, beta, z, pp, n_sweeps, burn_in, thin, trans_dimensional):
    """Run the sampler from the given state.

    Returns per-record arrays (k, weights, means, variances padded with NaN to
    k_max columns, beta, marginal log-likelihood, sweep index), the move
    counters and the 1-based sweep of a numeric failure (0 if none).
    """
    k_max = int(pp[K_MAX])
    n_rec = (n_sweeps - burn_in) // thin
    ks = np.zeros(n_rec, np.int64)
    ws = np.full((n_rec, k_max), np.nan)
    mus = np.full((n_rec, k_max), np.nan)
    s2s = np.full((n_rec, k_max), np.nan)
    betas = np.zeros(n_rec)
    lls = np.zeros(n_rec)
    sweeps = np.zeros(n_rec, np.int64)
    stats = np.zeros(8, np.int64)
    m = 0
    for sweep in range(1, n_sweeps + 1):
        w, mu, s2, beta, z = gibbs_sweep(rng, y, w, mu, s2, beta, z, pp)
        if trans_dimensional:
            w, mu, s2, z, move, ok = split_combine(rng, y, w, mu, s2, beta, z, pp)
            if move >= 0:
                stats[2 * move] += 1
                stats[2 * move + 1] += ok
            w, mu, s2, z, move, ok = birth_death(rng, y, w, mu, s2, beta, z, pp)
            if move >= 0:
                stats[2 * move] += 1
                stats[2 * move + 1] += ok
        if not _is_sane(w, mu, s2, beta):
            return ks[:m], ws[:m], mus[:m], s2s[:m], betas[:m], lls[:m], sweeps[:m], stats, sweep
        if sweep > burn_in and (sweep - burn_in) % thin == 0 and m < n_rec:
            k = w.size
            ks[m] = k
            ws[m, :k] = w
            mus[m, :k] = mu
            s2s[m, :k] = s2
            betas[m] = beta
            lls[m] = marginal_loglik(y, w, mu, s2)
            sweeps[m] = sweep
            m += 1
    return ks, ws, mus, s2s, betas, lls, sweeps, stats, 0
