"""Selection, graph and shrinkage priors: log densities and conditional updates.

Indicator matrices are p x s; the MRF prior addresses them through
vec(Gamma), i.e. flat index ``k * p + j`` for predictor j and response k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import expit, gammaln, logit

from .core import Hyperparameters, ModelSpec
from .graphs import DecomposableGraph, edge_count

HOTSPOT_EPS = 1e-10
TARGET_ACCEPTANCE = 0.44


@dataclass
class SelectionState:
    """Indicators plus the parameters of the active selection prior.

    hierarchical: ``omega`` (p,); hotspot: ``o`` (s,) and ``pi`` (p,);
    MRF: nothing beyond ``gamma`` (d and e are fixed).
    """

    kind: str
    gamma: np.ndarray
    omega: np.ndarray | None = None
    o: np.ndarray | None = None
    pi: np.ndarray | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=bool)
        wanted = {"hierarchical": ("omega",), "hotspot": ("o", "pi"), "MRF": ()}[self.kind]
        for name in ("omega", "o", "pi"):
            present = getattr(self, name) is not None
            if present != (name in wanted):
                raise ValueError(f"{self.kind} prior {'needs' if not present else 'does not use'} {name}")

    def copy(self) -> "SelectionState":
        cp = lambda a: None if a is None else a.copy()
        return SelectionState(self.kind, self.gamma.copy(), cp(self.omega), cp(self.o), cp(self.pi))

    def inclusion_probabilities(self) -> np.ndarray:
        """Per-entry prior inclusion probabilities (not defined for MRF)."""
        p, s = self.gamma.shape
        if self.kind == "hierarchical":
            return np.broadcast_to(self.omega[:, None], (p, s))
        if self.kind == "hotspot":
            return hotspot_omega(self.o, self.pi)
        raise ValueError("MRF prior has no per-entry inclusion probability")


def hotspot_omega(o, pi) -> np.ndarray:
    """omega_jk = min(o_k * pi_j, 1 - eps)."""
    return np.minimum(np.outer(pi, o), 1.0 - HOTSPOT_EPS)


class MrfPrior:
    """MRF prior exp(d * sum(gamma) + e * sum_{edges} w_ab gamma_a gamma_b).

    Each undirected edge of the stored list counts once.
    """

    def __init__(self, edges, p: int, s: int, d: float, e: float):
        self.p, self.s, self.d, self.e = p, s, float(d), float(e)
        edges = np.asarray(edges if edges is not None else np.zeros((0, 3)), float).reshape(-1, 3)
        m = p * s
        i = edges[:, 0].astype(int)
        j = edges[:, 1].astype(int)
        wt = edges[:, 2]
        self.upper = sparse.csr_matrix((wt, (i, j)), shape=(m, m))
        self.sym = (self.upper + self.upper.T).tocsr()
        self._indptr = self.sym.indptr
        self._indices = self.sym.indices
        self._data = self.sym.data

    @classmethod
    def from_spec(cls, spec: ModelSpec, p: int, s: int) -> "MrfPrior":
        h = spec.hyperparameters
        return cls(spec.mrf_edges, p, s, h.mrf_d, h.mrf_e)

    def log_density(self, gamma) -> float:
        g = np.asarray(gamma, dtype=float).reshape(-1, order="F")
        return float(self.d * g.sum() + self.e * (g @ (self.upper @ g)))

    def flip_delta(self, gamma, j: int, k: int) -> float:
        """Change in log density when gamma[j, k] is toggled."""
        idx = k * self.p + j
        lo, hi = self._indptr[idx], self._indptr[idx + 1]
        nb = self._indices[lo:hi]
        field_ = self.d
        if hi > lo:
            g = gamma.reshape(-1, order="F") if gamma.flags.f_contiguous else np.ravel(gamma, order="F")
            field_ += self.e * float(self._data[lo:hi] @ g[nb])
        return -field_ if gamma[j, k] else field_


def log_prior_gamma(state: SelectionState, spec: ModelSpec, mrf: MrfPrior | None = None) -> float:
    """Unnormalised log prior of the indicator matrix under the active prior."""
    if state.kind != spec.gamma_prior:
        raise ValueError(f"state is {state.kind!r} but spec uses {spec.gamma_prior!r}")
    g = state.gamma
    if state.kind == "MRF":
        if mrf is None:
            mrf = MrfPrior.from_spec(spec, *g.shape)
        return mrf.log_density(g)
    omega = state.inclusion_probabilities()
    return float(np.sum(np.where(g, np.log(omega), np.log1p(-omega))))


def log_prior_gamma_delta(state: SelectionState, spec: ModelSpec, flip: tuple[int, int],
                          mrf: MrfPrior | None = None) -> float:
    """log prior after toggling ``flip = (j, k)`` minus log prior before."""
    j, k = flip
    g = state.gamma
    if state.kind == "MRF":
        if mrf is None:
            mrf = MrfPrior.from_spec(spec, *g.shape)
        return mrf.flip_delta(g, j, k)
    if state.kind == "hierarchical":
        w = state.omega[j]
    else:
        w = min(state.o[k] * state.pi[j], 1.0 - HOTSPOT_EPS)
    delta = np.log(w) - np.log1p(-w)
    return float(-delta if g[j, k] else delta)


def column_flip_deltas(state: SelectionState, k: int, mrf: MrfPrior | None = None) -> np.ndarray:
    """Prior log-odds of switching each gamma[:, k] on (for independent priors)."""
    if state.kind == "hierarchical":
        w = state.omega
    elif state.kind == "hotspot":
        w = np.minimum(state.o[k] * state.pi, 1.0 - HOTSPOT_EPS)
    else:
        raise ValueError("column log-odds are only defined for independent priors")
    return np.log(w) - np.log1p(-w)


def update_hierarchical_omega(gamma, hyper: Hyperparameters, rng: np.random.Generator):
    """Conjugate Beta draw of omega_j for each row of ``gamma``.

    Accepts a single row (returns a scalar) or a p x s matrix (returns p draws).
    """
    g = np.asarray(gamma, dtype=bool)
    single = g.ndim == 1
    g = np.atleast_2d(g)
    ones = g.sum(axis=1)
    s = g.shape[1]
    draw = rng.beta(hyper.a_omega + ones, hyper.b_omega + s - ones)
    return float(draw[0]) if single else draw


def omega_posterior_parameters(gamma, hyper: Hyperparameters) -> tuple[np.ndarray, np.ndarray]:
    g = np.atleast_2d(np.asarray(gamma, dtype=bool))
    ones = g.sum(axis=1)
    return hyper.a_omega + ones, hyper.b_omega + g.shape[1] - ones


def _bernoulli_loglik(gamma, omega):
    return np.where(gamma, np.log(omega), np.log1p(-omega))


def hotspot_o_logdensity(o, pi, gamma, hyper: Hyperparameters) -> np.ndarray:
    """Unnormalised log conditional of each o_k (vector over k)."""
    omega = hotspot_omega(o, pi)
    return ((hyper.a_o - 1) * np.log(o) + (hyper.b_o - 1) * np.log1p(-o)
            + _bernoulli_loglik(gamma, omega).sum(axis=0))


def hotspot_pi_logdensity(o, pi, gamma, hyper: Hyperparameters) -> np.ndarray:
    """Unnormalised log conditional of each pi_j (vector over j)."""
    omega = hotspot_omega(o, pi)
    return ((hyper.a_pi - 1) * np.log(pi) - hyper.b_pi * pi
            + _bernoulli_loglik(gamma, omega).sum(axis=1))


@dataclass
class AdaptiveScale:
    """Random-walk scale tuned toward a target acceptance rate during burn-in."""

    scale: float = 0.5
    target: float = TARGET_ACCEPTANCE
    accepted: int = 0
    attempted: int = 0
    _n_adapt: int = field(default=0, repr=False)

    def record(self, accepted: int, attempted: int, adapt: bool) -> None:
        self.accepted += int(accepted)
        self.attempted += int(attempted)
        if adapt and attempted:
            self._n_adapt += 1
            rate = accepted / attempted
            step = min(0.5, 10.0 / (self._n_adapt + 10.0) ** 0.6)
            self.scale = float(np.clip(self.scale * np.exp(step * (rate - self.target)), 1e-3, 50.0))

    @property
    def rate(self) -> float:
        return self.accepted / self.attempted if self.attempted else float("nan")


def update_hotspot(o, pi, gamma, hyper: Hyperparameters, rng: np.random.Generator,
                   o_scale: AdaptiveScale | float = 0.5, pi_scale: AdaptiveScale | float = 0.5,
                   adapt: bool = False):
    """One random-walk MH step for every o_k (logit scale) and pi_j (log scale).

    Given pi the o_k are conditionally independent (and vice versa), so each
    block is proposed and accepted elementwise.  Returns ``(o, pi)``.
    """
    o = np.asarray(o, dtype=float).copy()
    pi = np.asarray(pi, dtype=float).copy()
    gamma = np.asarray(gamma, dtype=bool)

    sc = o_scale.scale if isinstance(o_scale, AdaptiveScale) else float(o_scale)
    z = logit(o)
    z_new = z + sc * rng.standard_normal(o.shape)
    o_new = expit(z_new)
    ok = (o_new > 0) & (o_new < 1)
    o_new = np.where(ok, o_new, o)
    # Jacobian of the logit transform: o (1 - o)
    cur = hotspot_o_logdensity(o, pi, gamma, hyper) + np.log(o) + np.log1p(-o)
    new = hotspot_o_logdensity(o_new, pi, gamma, hyper) + np.log(o_new) + np.log1p(-o_new)
    accept = ok & (np.log(rng.random(o.shape)) < new - cur)
    o = np.where(accept, o_new, o)
    if isinstance(o_scale, AdaptiveScale):
        o_scale.record(accept.sum(), accept.size, adapt)

    sc = pi_scale.scale if isinstance(pi_scale, AdaptiveScale) else float(pi_scale)
    pi_new = pi * np.exp(sc * rng.standard_normal(pi.shape))
    ok = pi_new > 0
    pi_new = np.where(ok, pi_new, pi)
    cur = hotspot_pi_logdensity(o, pi, gamma, hyper) + np.log(pi)
    new = hotspot_pi_logdensity(o, pi_new, gamma, hyper) + np.log(pi_new)
    accept = ok & (np.log(rng.random(pi.shape)) < new - cur)
    pi = np.where(accept, pi_new, pi)
    if isinstance(pi_scale, AdaptiveScale):
        pi_scale.record(accept.sum(), accept.size, adapt)
    return o, pi


def log_prior_graph(g: DecomposableGraph, eta: float) -> float:
    """Independent Bernoulli(eta) edges: |E| log eta + (s(s-1)/2 - |E|) log(1 - eta)."""
    m = edge_count(g)
    total = g.s * (g.s - 1) // 2
    return float(m * np.log(eta) + (total - m) * np.log1p(-eta))


def eta_posterior_parameters(g: DecomposableGraph, hyper: Hyperparameters) -> tuple[float, float]:
    m = edge_count(g)
    total = g.s * (g.s - 1) // 2
    return hyper.a_eta + m, hyper.b_eta + total - m


def update_eta(g: DecomposableGraph, hyper: Hyperparameters, rng: np.random.Generator) -> float:
    a, b = eta_posterior_parameters(g, hyper)
    return float(rng.beta(a, b))


def w_posterior_parameters(beta_selected, hyper: Hyperparameters) -> tuple[float, float]:
    beta = np.asarray(beta_selected, dtype=float).ravel()
    return hyper.a_w + 0.5 * beta.size, hyper.b_w + 0.5 * float(beta @ beta)


def update_w(beta_selected, hyper: Hyperparameters, rng: np.random.Generator) -> float:
    """InverseGamma(a_w + n/2, b_w + sum(beta^2)/2) draw of the slab variance."""
    a, b = w_posterior_parameters(beta_selected, hyper)
    return float(b / rng.gamma(a))


def log_invgamma(x, a, b):
    """Log density of InverseGamma(shape a, scale b)."""
    x = np.asarray(x, dtype=float)
    return a * np.log(b) - gammaln(a) - (a + 1) * np.log(x) - b / x


def log_gamma_density(x, a, b):
    """Log density of Gamma(shape a, rate b)."""
    x = np.asarray(x, dtype=float)
    return a * np.log(b) - gammaln(a) + (a - 1) * np.log(x) - b * x
