"""Evolutionary stochastic search: tempered chains with within-chain
Metropolis-within-Gibbs sweeps plus exchange and crossover moves between
chains.

Chain slot 0 is the main chain (temperature 1) and is the only one recorded.
All other slots share one temperature, adapted during burn-in.
"""

from __future__ import annotations

import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, ModelSpec, gamma_init_mle, rng_stream, validate_spec
from .graphs import DecomposableGraph, propose_edge_flip
from .likelihoods import (CovarianceState, CovarianceStructure, draw_sigma_rho,
                          gaussian_collapse, hrr_log_predictive, hrr_sample_beta, nig_from_gram,
                          node_posteriors, residual_precision, sur_log_likelihood,
                          sur_pointwise_loglik, update_tau)
from .priors import (AdaptiveScale, MrfPrior, SelectionState, column_flip_deltas, log_invgamma,
                     log_prior_gamma, log_prior_graph, update_eta, update_hierarchical_omega,
                     update_hotspot, update_w)

INITIAL_TEMPERATURE = 2.0
ADAPT_WINDOW = 50
LOW_RATE, HIGH_RATE = 0.20, 0.35
CROSSOVER_PROB = 0.1
RANDOM_INIT_PROB = 0.1


class Problem:
    """Data-derived quantities shared (read-only) by every chain."""

    def __init__(self, spec: ModelSpec, data: Dataset):
        self.spec = spec
        self.hyper = spec.hyperparameters
        self.data = data
        self.n, self.s, self.p, self.p0 = data.n, data.s, data.p, data.p0
        self.Z = np.ascontiguousarray(np.hstack([data.X0, data.X]))
        self.ZT = np.ascontiguousarray(self.Z.T)
        self.Y = np.asarray(data.Y)
        self.ZtZ = self.Z.T @ self.Z
        self.ZtY = self.Z.T @ self.Y
        self.yty = np.einsum("ij,ij->j", self.Y, self.Y)
        self.mandatory = np.arange(self.p0)
        self.kind = {"IG": "HRR", "IW": "dSUR", "HIW": "SSUR"}[spec.covariance_prior]
        self.mrf = MrfPrior.from_spec(spec, self.p, self.s) if spec.gamma_prior == "MRF" else None
        self.dense = (CovarianceStructure.dense_structure(self.s, self.hyper.nu)
                      if self.kind == "dSUR" else None)
        self._structures: dict = {}

    def active(self, gamma_col: np.ndarray) -> np.ndarray:
        sel = np.flatnonzero(gamma_col) + self.p0
        return np.concatenate([self.mandatory, sel]) if self.p0 else sel

    def structure_for(self, graph: DecomposableGraph | None) -> CovarianceStructure:
        if graph is None:
            return self.dense
        st = self._structures.get(graph.masks)
        if st is None:
            st = CovarianceStructure.from_graph(graph, self.hyper.nu)
            if len(self._structures) > 50_000:
                self._structures.clear()
            self._structures[graph.masks] = st
        return st

    def hrr_posterior(self, k: int, active: np.ndarray, w: float, temperature: float = 1.0):
        return nig_from_gram(self.ZtZ[active[:, None], active], self.ZtY[active, k],
                             float(self.yty[k]), self.n, 1.0 / w, self.hyper.a_sigma,
                             self.hyper.b_sigma, temperature)

    def hrr_log_ml(self, k: int, gamma_col: np.ndarray, w: float) -> float:
        return self.hrr_posterior(k, self.active(gamma_col), w).log_marginal


@dataclass
class ChainState:
    """Full parameter state of one chain (moves between slots on exchange)."""

    selection: SelectionState
    B: np.ndarray  # (p0 + p) x s, mandatory rows first
    w: float
    cov: CovarianceState | None = None
    graph: DecomposableGraph | None = None
    eta: float | None = None
    sigma2_hrr: np.ndarray | None = None
    # caches
    U: np.ndarray | None = None
    Omega: np.ndarray | None = None
    UOmega: np.ndarray | None = None
    log_ml: np.ndarray | None = None
    loglik: float = 0.0
    logprior_gamma: float = 0.0

    @property
    def gamma(self) -> np.ndarray:
        return self.selection.gamma

    def copy(self) -> "ChainState":
        cp = lambda a: None if a is None else a.copy()
        return ChainState(self.selection.copy(), self.B.copy(), float(self.w),
                          None if self.cov is None else self.cov.copy(), self.graph, self.eta,
                          cp(self.sigma2_hrr), cp(self.U), cp(self.Omega), cp(self.UOmega),
                          cp(self.log_ml), self.loglik, self.logprior_gamma)


@dataclass
class BanditStats:
    """Per-coordinate Beta pseudo-counts of past flip acceptances."""

    alpha: np.ndarray
    beta: np.ndarray

    @classmethod
    def uniform(cls, p: int, s: int) -> "BanditStats":
        return cls(np.full((p, s), 0.5), np.full((p, s), 0.5))


@dataclass
class Chain:
    """A sampler slot: the state plus everything that stays with the slot."""

    state: ChainState
    temperature: float
    rng: np.random.Generator
    bandit: BanditStats | None = None
    scales: dict = field(default_factory=dict)
    gamma_accepted: int = 0
    gamma_attempted: int = 0


# ----------------------------------------------------------------------------
# caches
# ----------------------------------------------------------------------------

def refresh_caches(problem: Problem, state: ChainState) -> ChainState:
    """Recompute every cached quantity from the primary parameters."""
    st = state
    if problem.kind == "HRR":
        st.log_ml = np.array([problem.hrr_log_ml(k, st.gamma[:, k], st.w)
                              for k in range(problem.s)])
        st.loglik = float(st.log_ml.sum())
    else:
        st.U = problem.Y - problem.Z @ st.B
        st.Omega = residual_precision(st.cov)
        st.UOmega = st.U @ st.Omega
        st.loglik = sur_log_likelihood(st.U, st.cov)
    st.logprior_gamma = log_prior_gamma(st.selection, problem.spec, problem.mrf)
    return st


def log_target(problem: Problem, state: ChainState, temperature: float) -> float:
    """Tempered log posterior up to terms that no move between chains changes
    (likelihood / t + indicator prior + coefficient slab prior)."""
    out = state.loglik / temperature + state.logprior_gamma
    if problem.kind != "HRR":
        nz = np.concatenate([state.B[:problem.p0].ravel(),
                             state.B[problem.p0:][state.gamma]])
        out += float(-0.5 * nz.size * np.log(2 * np.pi * state.w) - 0.5 * nz @ nz / state.w)
    return float(out)


# ----------------------------------------------------------------------------
# initialisation
# ----------------------------------------------------------------------------

def initial_state(problem: Problem, rng: np.random.Generator) -> ChainState:
    spec, h = problem.spec, problem.hyper
    p, s = problem.p, problem.s
    if spec.gamma_init == "zeros":
        gamma = np.zeros((p, s), dtype=bool)
    elif spec.gamma_init == "ones":
        gamma = np.ones((p, s), dtype=bool)
    elif spec.gamma_init == "mle":
        gamma = gamma_init_mle(problem.data)
    else:
        gamma = rng.random((p, s)) < RANDOM_INIT_PROB
    gamma = np.asfortranarray(gamma)
    if spec.gamma_prior == "hierarchical":
        sel = SelectionState("hierarchical", gamma, omega=np.full(p, h.a_omega / (h.a_omega + h.b_omega)))
    elif spec.gamma_prior == "hotspot":
        sel = SelectionState("hotspot", gamma, o=np.full(s, h.a_o / (h.a_o + h.b_o)),
                             pi=np.full(p, h.a_pi / h.b_pi))
    else:
        sel = SelectionState("MRF", gamma)
    sel.gamma = np.asfortranarray(sel.gamma)
    st = ChainState(sel, np.zeros((problem.p0 + p, s)), w=h.b_w / (h.a_w + 1.0))
    if problem.kind != "HRR":
        var = np.maximum(problem.yty / max(problem.n, 1), 1e-8)
        st.cov = CovarianceState(var.copy(), np.zeros((s, s)), 1.0)
        if problem.kind == "SSUR":
            st.graph = DecomposableGraph.empty(s)
            st.eta = h.a_eta / (h.a_eta + h.b_eta)
    else:
        st.sigma2_hrr = np.ones(s)
    return refresh_caches(problem, st)


def new_chain(problem: Problem, slot: int, temperature: float) -> Chain:
    rng = rng_stream(problem.spec.seed, slot)
    chain = Chain(initial_state(problem, rng), temperature, rng)
    if problem.spec.gamma_sampler == "bandit":
        chain.bandit = BanditStats.uniform(problem.p, problem.s)
    for name in ("o", "pi", "tau", "w"):
        chain.scales[name] = AdaptiveScale()
    return chain


# ----------------------------------------------------------------------------
# indicator moves
# ----------------------------------------------------------------------------

def _menu_size(n1: int, n0: int) -> int:
    return int(n0 > 0) + int(n1 > 0) + int(n0 > 0 and n1 > 0)


def mc3_proposal(col: np.ndarray, rng: np.random.Generator):
    """Add / delete / swap proposal on one indicator column.

    Returns ``(flips, log_q_ratio)`` with log q(old | new) - log q(new | old),
    or ``(None, 0)`` when the column is empty of predictors.
    """
    ones = np.flatnonzero(col)
    zeros = np.flatnonzero(~col)
    n1, n0 = ones.size, zeros.size
    moves = []
    if n0:
        moves.append("add")
    if n1:
        moves.append("delete")
    if n0 and n1:
        moves.append("swap")
    if not moves:
        return None, 0.0
    move = moves[rng.integers(len(moves))]
    m = len(moves)
    if move == "add":
        j = int(zeros[rng.integers(n0)])
        return [j], np.log(m * n0) - np.log(_menu_size(n1 + 1, n0 - 1) * (n1 + 1))
    if move == "delete":
        j = int(ones[rng.integers(n1)])
        return [j], np.log(m * n1) - np.log(_menu_size(n1 - 1, n0 + 1) * (n0 + 1))
    j_out = int(ones[rng.integers(n1)])
    j_in = int(zeros[rng.integers(n0)])
    return [j_out, j_in], 0.0


def _prior_delta(problem: Problem, state: ChainState, k: int, flips) -> float:
    """Change in log indicator prior from toggling ``flips`` in column k."""
    gamma = state.gamma
    if problem.mrf is not None:
        total = 0.0
        done = []
        for j in flips:
            total += problem.mrf.flip_delta(gamma, j, k)
            gamma[j, k] = not gamma[j, k]
            done.append(j)
        for j in done:
            gamma[j, k] = not gamma[j, k]
        return total
    logodds = column_flip_deltas(state.selection, k)
    return float(sum(-logodds[j] if gamma[j, k] else logodds[j] for j in flips))


def _attempt_flips(problem: Problem, chain: Chain, k: int, flips, log_q: float,
                   rng: np.random.Generator) -> bool:
    """MH on gamma[:, k] toggled at ``flips``; for the SUR models the
    coefficient block beta_k is integrated out in the ratio and then redrawn
    from its full conditional."""
    st = chain.state
    t = chain.temperature
    col = st.gamma[:, k]
    new_col = col.copy()
    new_col[flips] = ~new_col[flips]
    d_prior = _prior_delta(problem, st, k, flips)

    if problem.kind == "HRR":
        new_ml = problem.hrr_log_ml(k, new_col, st.w)
        log_acc = (new_ml - st.log_ml[k]) / t + d_prior + log_q
        accept = np.log(rng.random()) < log_acc
        if accept:
            st.gamma[:, k] = new_col
            st.loglik += new_ml - st.log_ml[k]
            st.log_ml[k] = new_ml
            st.logprior_gamma += d_prior
        return bool(accept)

    okk = st.Omega[k, k]
    r = st.UOmega[:, k] + okk * (problem.Y[:, k] - st.U[:, k])
    zr = problem.ZT @ r
    cur_a = problem.active(col)
    new_a = problem.active(new_col)
    cur = _beta_collapse(problem, cur_a, zr, okk, st.w, t)
    new = _beta_collapse(problem, new_a, zr, okk, st.w, t)
    log_acc = new.log_value - cur.log_value + d_prior + log_q
    accept = np.log(rng.random()) < log_acc
    if accept:
        st.gamma[:, k] = new_col
        st.logprior_gamma += d_prior
        _set_beta(problem, st, k, new_a, new.sample(rng))
    else:
        _set_beta(problem, st, k, cur_a, cur.sample(rng))
    return bool(accept)


def _beta_collapse(problem, active, zr, okk, w, t):
    scale = okk / t
    gram = problem.ZtZ[active[:, None], active]
    gram *= scale
    return gaussian_collapse(gram, zr[active] / t, 1.0 / w)


def _set_beta(problem: Problem, st: ChainState, k: int, active, beta) -> None:
    st.B[:, k] = 0.0
    st.B[active, k] = beta
    u_new = problem.Y[:, k] - problem.Z[:, active] @ beta
    du = u_new - st.U[:, k]
    st.U[:, k] = u_new
    st.UOmega += np.outer(du, st.Omega[k])


def gibbs_beta(problem: Problem, chain: Chain, k: int) -> None:
    """Draw beta_k from its full conditional given gamma_k (SUR models)."""
    st = chain.state
    okk = st.Omega[k, k]
    r = st.UOmega[:, k] + okk * (problem.Y[:, k] - st.U[:, k])
    act = problem.active(st.gamma[:, k])
    col = _beta_collapse(problem, act, problem.ZT @ r, okk, st.w, chain.temperature)
    _set_beta(problem, st, k, act, col.sample(chain.rng))


def gamma_move_mc3(chain: Chain, k: int, problem: Problem, rng: np.random.Generator | None = None) -> bool:
    """One MC3 (add/delete/swap) Metropolis-Hastings step on column k."""
    rng = chain.rng if rng is None else rng
    flips, log_q = mc3_proposal(chain.state.gamma[:, k], rng)
    if flips is None:
        if problem.kind != "HRR":
            gibbs_beta(problem, chain, k)
        return False
    accepted = _attempt_flips(problem, chain, k, flips, log_q, rng)
    chain.gamma_attempted += 1
    chain.gamma_accepted += accepted
    return accepted


def bandit_proposal(stats: BanditStats, k: int, rng: np.random.Generator) -> int:
    """Pick a coordinate of column k with probability proportional to a
    Thompson draw from its acceptance Beta posterior."""
    theta = rng.beta(stats.alpha[:, k], stats.beta[:, k])
    total = theta.sum()
    if not total > 0:
        return int(rng.integers(theta.size))
    return int(min(np.searchsorted(np.cumsum(theta), rng.random() * total, side="right"),
                   theta.size - 1))


def gamma_move_bandit(chain: Chain, k: int, problem: Problem, rng: np.random.Generator | None = None,
                      adapt: bool = True) -> bool:
    """Single-flip MH step on column k with a Thompson-sampled coordinate.

    The coordinate weights do not depend on the indicator state, so the
    proposal is symmetric and the target is unchanged.  Statistics adapt only
    while ``adapt`` is set (burn-in).
    """
    rng = chain.rng if rng is None else rng
    stats = chain.bandit
    if problem.p == 0:
        if problem.kind != "HRR":
            gibbs_beta(problem, chain, k)
        return False
    j = bandit_proposal(stats, k, rng)
    accepted = _attempt_flips(problem, chain, k, [j], 0.0, rng)
    if adapt:
        if accepted:
            stats.alpha[j, k] += 1.0
        else:
            stats.beta[j, k] += 1.0
    chain.gamma_attempted += 1
    chain.gamma_accepted += accepted
    return accepted


# ----------------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------------

def sweep(chain: Chain, problem: Problem, adapt: bool = False) -> Chain:
    """One full Metropolis-within-Gibbs sweep at the chain's temperature.

    Order: indicator/coefficient block per response; (sigma2, rho); response
    graph; tau; eta; selection-prior parameters; w.
    """
    st = chain.state
    rng = chain.rng
    t = chain.temperature
    h = problem.hyper
    spec = problem.spec

    for k in range(problem.s):
        if spec.gamma_sampler == "bandit":
            gamma_move_bandit(chain, k, problem, rng, adapt=adapt)
        else:
            gamma_move_mc3(chain, k, problem, rng)

    if problem.kind != "HRR":
        structure = problem.structure_for(st.graph)
        S = st.U.T @ st.U
        posts = node_posteriors(S, problem.n, structure, st.cov.tau, t)
        st.cov = draw_sigma_rho(posts, structure, st.cov.tau, rng)
        if problem.kind == "SSUR":
            _graph_move(problem, chain, structure, S, posts)
            structure = problem.structure_for(st.graph)
        scale = chain.scales["tau"]
        tau, acc = update_tau(st.cov, structure, h, rng, scale.scale)
        scale.record(acc, 1, adapt)
        st.cov.tau = tau
        if problem.kind == "SSUR":
            st.eta = update_eta(st.graph, h, rng)
        st.Omega = residual_precision(st.cov)
        st.UOmega = st.U @ st.Omega

    sel = st.selection
    if sel.kind == "hierarchical":
        sel.omega = update_hierarchical_omega(sel.gamma, h, rng)
    elif sel.kind == "hotspot":
        sel.o, sel.pi = update_hotspot(sel.o, sel.pi, sel.gamma, h, rng,
                                       chain.scales["o"], chain.scales["pi"], adapt)

    if problem.kind == "HRR":
        _hrr_w_move(problem, chain, adapt)
    else:
        nz = np.concatenate([st.B[:problem.p0].ravel(), st.B[problem.p0:][st.gamma]])
        st.w = update_w(nz, h, rng)
        st.loglik = sur_log_likelihood(st.U, st.cov)
    if sel.kind != "MRF":
        st.logprior_gamma = log_prior_gamma(sel, spec, problem.mrf)
    return chain


def _graph_move(problem: Problem, chain: Chain, structure: CovarianceStructure,
                S: np.ndarray, posts) -> bool:
    """Single-edge flip of the response graph with (sigma2, rho) integrated
    out in the ratio and redrawn from the new conditional on acceptance.

    ``posts`` are the node posteriors under the current graph for the
    residual cross-product ``S``."""
    st = chain.state
    rng = chain.rng
    if problem.s < 2:
        return False
    g_new, edge, log_q = propose_edge_flip(st.graph, rng)
    new_structure = problem.structure_for(g_new)
    new_posts = node_posteriors(S, problem.n, new_structure, st.cov.tau, chain.temperature,
                                reuse=(structure, posts))
    log_acc = (sum(p.log_marginal for p in new_posts) - sum(p.log_marginal for p in posts)
               + log_prior_graph(g_new, st.eta) - log_prior_graph(st.graph, st.eta) + log_q)
    if np.log(rng.random()) < log_acc:
        st.graph = g_new
        st.cov = draw_sigma_rho(new_posts, new_structure, st.cov.tau, rng)
        return True
    return False


def _hrr_w_move(problem: Problem, chain: Chain, adapt: bool) -> bool:
    """Random-walk MH on log w against the product of the response marginals."""
    st = chain.state
    rng = chain.rng
    h = problem.hyper
    scale = chain.scales["w"]
    w_new = st.w * np.exp(scale.scale * rng.standard_normal())
    new_ml = np.array([problem.hrr_log_ml(k, st.gamma[:, k], w_new) for k in range(problem.s)])
    log_acc = ((new_ml.sum() - st.log_ml.sum()) / chain.temperature
               + log_invgamma(w_new, h.a_w, h.b_w) - log_invgamma(st.w, h.a_w, h.b_w)
               + np.log(w_new) - np.log(st.w))
    accept = bool(np.log(rng.random()) < log_acc)
    if accept:
        st.w = float(w_new)
        st.log_ml = new_ml
        st.loglik = float(new_ml.sum())
    scale.record(accept, 1, adapt)
    return accept


def refresh_hrr_coefficients(problem: Problem, state: ChainState, rng: np.random.Generator) -> np.ndarray:
    """Draw (B, sigma2) given the indicators from the HRR conditional posterior;
    returns the n x s pointwise log predictive densities under the same
    per-response posteriors."""
    logf = np.empty((problem.n, problem.s))
    state.B[:] = 0.0
    for k in range(problem.s):
        act = problem.active(state.gamma[:, k])
        post = problem.hrr_posterior(k, act, state.w)
        beta, sig = hrr_sample_beta(post, rng)
        state.B[act, k] = beta
        state.sigma2_hrr[k] = sig
        logf[:, k] = hrr_log_predictive(problem.Y[:, k], problem.Z[:, act], post)
    return logf


# ----------------------------------------------------------------------------
# between-chain moves
# ----------------------------------------------------------------------------

def exchange_move(chain_a: Chain, chain_b: Chain, rng: np.random.Generator) -> bool:
    """Swap the states of two slots with probability
    min(1, exp[(1/t_a - 1/t_b)(logL_b - logL_a)])."""
    la, lb = chain_a.state.loglik, chain_b.state.loglik
    log_acc = (1.0 / chain_a.temperature - 1.0 / chain_b.temperature) * (lb - la)
    if log_acc >= 0 or np.log(rng.random()) < log_acc:
        chain_a.state, chain_b.state = chain_b.state, chain_a.state
        return True
    return False


def crossover_move(chain_a: Chain, chain_b: Chain, problem: Problem,
                   rng: np.random.Generator, columns=None) -> bool:
    """Swap the (gamma_k, beta_k) blocks of a uniformly random subset of
    responses between two chains; accepted by the tempered joint ratio."""
    if columns is None:
        columns = np.flatnonzero(rng.random(problem.s) < 0.5)
    columns = np.asarray(columns, dtype=int)
    if columns.size == 0:
        return True
    sa, sb = chain_a.state, chain_b.state
    ta, tb = chain_a.temperature, chain_b.temperature
    old = log_target(problem, sa, ta) + log_target(problem, sb, tb)
    na, nb = sa.copy(), sb.copy()
    na.selection.gamma[:, columns] = sb.gamma[:, columns]
    nb.selection.gamma[:, columns] = sa.gamma[:, columns]
    na.B[:, columns] = sb.B[:, columns]
    nb.B[:, columns] = sa.B[:, columns]
    refresh_caches(problem, na)
    refresh_caches(problem, nb)
    new = log_target(problem, na, ta) + log_target(problem, nb, tb)
    if np.log(rng.random()) < new - old:
        chain_a.state, chain_b.state = na, nb
        return True
    return False


def adapt_temperature(history, t: float) -> float:
    """Burn-in temperature rule from a window of exchange outcomes."""
    history = list(history)
    if len(history) < ADAPT_WINDOW:
        return t
    rate = float(np.mean(history))
    if rate < LOW_RATE:
        return max(1.0, t * 0.9)
    if rate > HIGH_RATE:
        return t * 1.1
    return t


def _choose_pair(n_chains: int, rng: np.random.Generator) -> tuple[int, int]:
    if n_chains == 2 or rng.random() < 0.5:
        return 0, int(rng.integers(1, n_chains))
    a, b = rng.choice(np.arange(1, n_chains), size=2, replace=False)
    return int(min(a, b)), int(max(a, b))


# ----------------------------------------------------------------------------
# output
# ----------------------------------------------------------------------------

class PointwiseAccumulator:
    """Streaming per-observation statistics of log f(y_i | theta^t).

    Keeps log-sum-exp of +l and of -m*l (m = 1..4) plus a Welford mean and
    variance, which is enough for lpd, importance-sampled LOO, WAIC, CPO and
    the importance-weight kurtosis.
    """

    def __init__(self, shape):
        self.count = 0
        self.lse_pos = np.full(shape, -np.inf)
        self.lse_neg = np.full((4,) + tuple(shape), -np.inf)
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def update(self, logf: np.ndarray) -> None:
        self.count += 1
        np.logaddexp(self.lse_pos, logf, out=self.lse_pos)
        for m in range(4):
            np.logaddexp(self.lse_neg[m], -(m + 1) * logf, out=self.lse_neg[m])
        delta = logf - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (logf - self.mean)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return self.m2 / (self.count - 1)


@dataclass
class McmcOutput:
    """Post-burn-in summaries of the main chain plus full-length traces."""

    spec: ModelSpec
    kind: str
    n: int
    p: int
    s: int
    p0: int
    n_kept: int
    B_sum: np.ndarray
    B0_sum: np.ndarray
    gamma_sum: np.ndarray
    G_sum: np.ndarray
    log_posterior: np.ndarray
    model_size: np.ndarray
    log_likelihood: np.ndarray
    temperature: np.ndarray
    pointwise: PointwiseAccumulator
    exchange_attempts: int = 0
    exchange_accepts: int = 0
    crossover_attempts: int = 0
    crossover_accepts: int = 0
    gamma_acceptance: float = float("nan")
    runtime_seconds: float = 0.0
    gamma_draws: list | None = None
    B_draws: list | None = None
    loglik_draws: list | None = None

    @property
    def B_hat(self) -> np.ndarray:
        return self.B_sum / self.n_kept

    @property
    def B0_hat(self) -> np.ndarray:
        return self.B0_sum / self.n_kept

    @property
    def Gamma_hat(self) -> np.ndarray:
        return self.gamma_sum / self.n_kept

    @property
    def G_hat(self) -> np.ndarray:
        return self.G_sum / self.n_kept

    @property
    def B_hat_conditional(self) -> np.ndarray:
        """Mean of beta_jk over the draws with gamma_jk = 1 (0 if never selected);
        B is exactly zero whenever gamma is, so this is B_sum / gamma_sum."""
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(self.gamma_sum > 0, self.B_sum / np.maximum(self.gamma_sum, 1), 0.0)
        return out


def _implied_graph(problem: Problem, state: ChainState) -> np.ndarray:
    s = problem.s
    if problem.kind == "SSUR":
        return state.graph.adjacency.astype(float)
    if problem.kind == "dSUR":
        return np.ones((s, s)) - np.eye(s)
    return np.zeros((s, s))


def run(spec: ModelSpec, data: Dataset, *, progress_every: int = 0, store_draws: bool = False,
        stream=None) -> McmcOutput:
    """Run the sampler and return post-burn-in summaries of the main chain."""
    spec = validate_spec(spec, data)
    problem = Problem(spec, data)
    stream = sys.stderr if stream is None else stream
    n_chains = spec.n_chains
    temp = INITIAL_TEMPERATURE
    chains = [new_chain(problem, i, 1.0 if i == 0 else temp) for i in range(n_chains)]
    master = rng_stream(spec.seed, n_chains)
    s, p = problem.s, problem.p
    out = McmcOutput(
        spec=spec, kind=problem.kind, n=problem.n, p=p, s=s, p0=problem.p0, n_kept=0,
        B_sum=np.zeros((p, s)), B0_sum=np.zeros((problem.p0, s)), gamma_sum=np.zeros((p, s)),
        G_sum=np.zeros((s, s)), log_posterior=np.empty(spec.n_iter),
        model_size=np.empty(spec.n_iter, dtype=int), log_likelihood=np.empty(spec.n_iter),
        temperature=np.empty(spec.n_iter), pointwise=PointwiseAccumulator((problem.n, s)),
        gamma_draws=[] if store_draws else None, B_draws=[] if store_draws else None,
        loglik_draws=[] if store_draws else None)
    window: list[bool] = []
    pool = ThreadPoolExecutor(spec.max_threads) if spec.max_threads > 1 and n_chains > 1 else None
    start = time.perf_counter()
    try:
        for it in range(spec.n_iter):
            adapt = it < spec.burnin
            if pool is None:
                for ch in chains:
                    sweep(ch, problem, adapt)
            else:
                list(pool.map(lambda ch: sweep(ch, problem, adapt), chains))

            if n_chains > 1:
                a, b = _choose_pair(n_chains, master)
                accepted = exchange_move(chains[a], chains[b], master)
                if a == 0:
                    out.exchange_attempts += 1
                    out.exchange_accepts += accepted
                    if adapt:
                        window.append(accepted)
                        if len(window) >= ADAPT_WINDOW:
                            temp = adapt_temperature(window, temp)
                            window = []
                            for ch in chains[1:]:
                                ch.temperature = temp
                if master.random() < CROSSOVER_PROB:
                    a, b = _choose_pair(n_chains, master)
                    out.crossover_attempts += 1
                    out.crossover_accepts += crossover_move(chains[a], chains[b], problem, master)

            main = chains[0]
            st = main.state
            out.log_posterior[it] = st.loglik + st.logprior_gamma
            out.model_size[it] = int(st.gamma.sum())
            out.log_likelihood[it] = st.loglik
            out.temperature[it] = temp
            if not adapt:
                _record(problem, main, out, store_draws)
            if progress_every and (it + 1) % progress_every == 0:
                rate = out.exchange_accepts / out.exchange_attempts if out.exchange_attempts else float("nan")
                print(f"iter {it + 1}/{spec.n_iter}  logP {out.log_posterior[it]:.4f}  "
                      f"size {out.model_size[it]}  temp {temp:.4f}  exchange {rate:.3f}",
                      file=stream, flush=True)
    finally:
        if pool is not None:
            pool.shutdown()
    main = chains[0]
    out.gamma_acceptance = (main.gamma_accepted / main.gamma_attempted
                            if main.gamma_attempted else float("nan"))
    out.runtime_seconds = time.perf_counter() - start
    return out


def _record(problem: Problem, main: Chain, out: McmcOutput, store_draws: bool) -> None:
    st = main.state
    p0 = problem.p0
    if problem.kind == "HRR":
        logf = refresh_hrr_coefficients(problem, st, main.rng)
    else:
        logf = sur_pointwise_loglik(st.U, st.cov)
    out.n_kept += 1
    out.B_sum += st.B[p0:]
    out.B0_sum += st.B[:p0]
    out.gamma_sum += st.gamma
    out.G_sum += _implied_graph(problem, st)
    out.pointwise.update(logf)
    if store_draws:
        out.gamma_draws.append(st.gamma.copy())
        out.B_draws.append(st.B[p0:].copy())
        out.loglik_draws.append(logf)
