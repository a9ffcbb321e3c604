"""Likelihood algebra for the three covariance families.

HRR integrates coefficients and residual variances out analytically
(Normal-Inverse-Gamma conjugacy).  dSUR and SSUR write the correlated
residuals as a chain of regressions,

    u_k = sum_{l in pa(k)} rho_kl u_l + eps_k,   eps_k ~ N(0, sigma2_k I),

where ``pa(k)`` is every earlier response (dense) or the earlier neighbours
of k under the graph's perfect sequence (sparse).  Each of those regressions
is itself a Normal-Inverse-Gamma model in (rho_k, sigma2_k).

A temperature ``t`` raises the likelihood to 1/t throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs
from scipy.special import gammaln

from .core import Hyperparameters, NumericalError
from .graphs import DecomposableGraph
from .priors import log_gamma_density, log_invgamma

LOG_2PI = float(np.log(2.0 * np.pi))
_JITTERS = (1e-10, 1e-8, 1e-6)
_EMPTY = np.zeros((0, 0))

_potrf, _trtrs = get_lapack_funcs(("potrf", "trtrs"), (np.zeros(1),))


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying with escalating diagonal jitter."""
    L, info = _potrf(A, lower=1, clean=1)
    if info == 0:
        return L
    scale = float(np.mean(np.abs(np.diag(A)))) or 1.0
    eye = np.eye(A.shape[0])
    for jitter in _JITTERS:
        L, info = _potrf(A + jitter * scale * eye, lower=1, clean=1)
        if info == 0:
            return L
    raise NumericalError(f"matrix of size {A.shape[0]} is not positive definite after jitter")


def solve_lower(L, b):
    x, info = _trtrs(L, b, lower=1)
    return x


def solve_upper_t(L, b):
    """Solve L^T x = b for lower-triangular L."""
    x, info = _trtrs(L, b, lower=1, trans=1)
    return x


@dataclass
class GaussianCollapse:
    """exp(-b'Pb/2 + h'b) integrated against a N(0, I/prior_prec) prior.

    ``log_value`` is log of that integral; ``chol``/``mean`` describe the
    resulting Gaussian conditional N(P^{-1} h, P^{-1}).
    """

    log_value: float
    chol: np.ndarray
    white: np.ndarray  # L^{-1} h

    @property
    def mean(self) -> np.ndarray:
        return solve_upper_t(self.chol, self.white) if self.white.size else self.white

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        if not self.white.size:
            return self.white.copy()
        z = self.white + np.sqrt(scale) * rng.standard_normal(self.white.size)
        return solve_upper_t(self.chol, z)


def gaussian_collapse(gram: np.ndarray, h: np.ndarray, prior_prec: float) -> GaussianCollapse:
    q = h.size
    if q == 0:
        return GaussianCollapse(0.0, np.zeros((0, 0)), np.zeros(0))
    P = np.array(gram, dtype=float)
    P.flat[:: q + 1] += prior_prec
    L = cholesky(P)
    v = solve_lower(L, h)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    value = 0.5 * float(v @ v) - 0.5 * logdet + 0.5 * q * np.log(prior_prec)
    return GaussianCollapse(value, L, v)


@dataclass
class NigPosterior:
    """Posterior NIG(mu_star, V_star, a_star, b_star) of (beta, sigma2).

    beta | sigma2 ~ N(mu_star, sigma2 V_star), sigma2 ~ InverseGamma(a_star, b_star).
    """

    mu_star: np.ndarray
    chol_prec: np.ndarray  # lower Cholesky factor of V_star^{-1}
    a_star: float
    b_star: float
    log_marginal: float

    @property
    def V_star(self) -> np.ndarray:
        q = self.mu_star.size
        if q == 0:
            return np.zeros((0, 0))
        Linv = solve_lower(self.chol_prec, np.eye(q))
        return Linv.T @ Linv


def nig_from_gram(gram, xty, yty: float, n: float, prior_prec: float, a0: float, b0: float,
                  temperature: float = 1.0) -> NigPosterior:
    """NIG regression from sufficient statistics.

    Model: y ~ N(X b, s2 I)^(1/t), b | s2 ~ N(0, s2/prior_prec I), s2 ~ IG(a0, b0).
    ``log_marginal`` is log of the (tempered) likelihood integrated over the prior.
    """
    t = float(temperature)
    xty = np.asarray(xty, dtype=float)
    col = gaussian_collapse(np.asarray(gram) / t, xty / t, prior_prec)
    quad = float(col.white @ col.white)
    a_star = a0 + 0.5 * n / t
    b_star = b0 + 0.5 * (yty / t - quad)
    if b_star <= 0:
        # can only happen through rounding when the fit is exact
        b_star = b0 * 1e-12 + abs(b_star)
    logdet_term = col.log_value - 0.5 * quad
    log_m = (-0.5 * n / t * LOG_2PI + logdet_term + a0 * np.log(b0) - a_star * np.log(b_star)
             + gammaln(a_star) - gammaln(a0))
    return NigPosterior(col.mean, col.chol, a_star, b_star, float(log_m))


def nig_posterior(y, Xg, w: float, a_sigma: float, b_sigma: float) -> NigPosterior:
    """Conjugate posterior for one HRR response given the selected design ``Xg``.

    Prior beta | sigma2 ~ N(0, sigma2 w I), sigma2 ~ IG(a_sigma, b_sigma).
    """
    y = np.asarray(y, dtype=float).ravel()
    Xg = np.asarray(Xg, dtype=float)
    if Xg.ndim != 2:
        Xg = Xg.reshape(y.size, -1)
    return nig_from_gram(Xg.T @ Xg, Xg.T @ y, float(y @ y), y.size, 1.0 / w, a_sigma, b_sigma)


def hrr_log_marginal(y, Xg, w: float, a_sigma: float, b_sigma: float) -> float:
    """log p(y | selected design, w) with beta and sigma2 integrated out."""
    return nig_posterior(y, Xg, w, a_sigma, b_sigma).log_marginal


def hrr_sample_beta(posterior: NigPosterior, rng: np.random.Generator):
    """Draw (beta, sigma2) from the NIG posterior."""
    sigma2 = posterior.b_star / rng.gamma(posterior.a_star)
    q = posterior.mu_star.size
    if q == 0:
        return np.zeros(0), float(sigma2)
    z = rng.standard_normal(q)
    beta = posterior.mu_star + np.sqrt(sigma2) * solve_upper_t(posterior.chol_prec, z)
    return beta, float(sigma2)


def hrr_log_predictive(y, Xg, posterior: NigPosterior) -> np.ndarray:
    """Pointwise log posterior predictive density: a Student-t with 2 a* degrees
    of freedom, location x_i mu*, squared scale (b*/a*)(1 + x_i V* x_i')."""
    from scipy.stats import t as student_t

    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    Xg = np.asarray(Xg, dtype=float).reshape(n, -1)
    a, b = posterior.a_star, posterior.b_star
    if Xg.shape[1]:
        loc = Xg @ posterior.mu_star
        W = solve_lower(posterior.chol_prec, np.ascontiguousarray(Xg.T))
        lev = np.einsum("ij,ij->j", W, W)
    else:
        loc = np.zeros(n)
        lev = np.zeros(n)
    scale = np.sqrt(b / a * (1.0 + lev))
    return student_t.logpdf(y, df=2.0 * a, loc=loc, scale=scale)


# ----------------------------------------------------------------------------
# SUR families
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceStructure:
    """Which rho_kl exist and the prior shape of every sigma2_k.

    ``parents[k]`` lists the responses regressed on in the equation of
    response k; ``order`` is the sequence in which equations are chained.
    """

    s: int
    dense: bool
    order: tuple
    parents: tuple
    shapes: np.ndarray
    mask: np.ndarray

    @classmethod
    def dense_structure(cls, s: int, nu: float) -> "CovarianceStructure":
        parents = tuple(tuple(range(k)) for k in range(s))
        # sigma2_k ~ IG((nu - s + 2k - 1)/2, tau/2) with 1-based k
        shapes = np.array([(nu - s + 2 * (k + 1) - 1) / 2.0 for k in range(s)])
        return cls._build(s, True, tuple(range(s)), parents, shapes)

    @classmethod
    def from_graph(cls, g: DecomposableGraph, nu: float) -> "CovarianceStructure":
        s = g.s
        # node at position t of residual R_q has |S_q| + t - 1 parents, and
        # sigma2 ~ IG((nu - s + t + |S_q|)/2, tau/2)
        shapes = np.array([(nu - s + 1 + len(g.parents[k])) / 2.0 for k in range(s)])
        return cls._build(s, False, tuple(g.order), tuple(g.parents), shapes)

    @classmethod
    def independent(cls, s: int, nu: float) -> "CovarianceStructure":
        return cls.from_graph(DecomposableGraph.empty(s), nu)

    @classmethod
    def _build(cls, s, dense, order, parents, shapes):
        mask = np.zeros((s, s), dtype=bool)
        for k, pa in enumerate(parents):
            mask[k, list(pa)] = True
        mask.setflags(write=False)
        shapes = np.asarray(shapes, dtype=float)
        shapes.setflags(write=False)
        return cls(s, dense, tuple(order), tuple(tuple(p) for p in parents), shapes, mask)

    @property
    def n_parents(self) -> np.ndarray:
        return np.array([len(p) for p in self.parents])


@dataclass
class CovarianceState:
    sigma2: np.ndarray
    rho: np.ndarray  # rho[k, l]: coefficient of u_l in the equation of u_k
    tau: float

    def copy(self) -> "CovarianceState":
        return CovarianceState(self.sigma2.copy(), self.rho.copy(), float(self.tau))


def check_pattern(cov: CovarianceState, structure: CovarianceStructure) -> None:
    if np.any((cov.rho != 0) & ~structure.mask):
        raise ValueError("rho has entries outside the permitted parent pattern")


def innovations(U: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """eps = U - U rho' : the residual of every response's chained regression."""
    return U - U @ rho.T


def sur_pointwise_loglik(U: np.ndarray, cov: CovarianceState) -> np.ndarray:
    """n x s matrix of log N(eps_ik; 0, sigma2_k)."""
    E = innovations(U, cov.rho)
    return -0.5 * (LOG_2PI + np.log(cov.sigma2)) - 0.5 * E * E / cov.sigma2


def sur_log_likelihood(U: np.ndarray, cov: CovarianceState,
                       structure: CovarianceStructure | None = None) -> float:
    """Factorised log likelihood sum_k log N(u_k - U rho_k'; 0, sigma2_k I).

    ``U = Y - X B`` are the regression residuals.  When ``structure`` is given
    the rho pattern is checked against it.
    """
    if structure is not None:
        check_pattern(cov, structure)
    E = innovations(U, cov.rho)
    n = U.shape[0]
    ss = np.einsum("ij,ij->j", E, E)
    return float(np.sum(-0.5 * n * (LOG_2PI + np.log(cov.sigma2)) - 0.5 * ss / cov.sigma2))


def residual_precision(cov: CovarianceState) -> np.ndarray:
    """Precision of one residual row implied by (sigma2, rho): M D^{-1} M'."""
    M = np.eye(cov.sigma2.size) - cov.rho.T
    return (M / cov.sigma2) @ M.T


def residual_covariance(cov: CovarianceState) -> np.ndarray:
    M = np.eye(cov.sigma2.size) - cov.rho.T
    Minv = np.linalg.inv(M)
    return Minv.T @ np.diag(cov.sigma2) @ Minv


def node_posterior(S: np.ndarray, n: int, structure: CovarianceStructure, k: int, tau: float,
                   temperature: float = 1.0) -> NigPosterior:
    """NIG posterior of (rho_k, sigma2_k) from the residual cross-product ``S = U'U``."""
    pa = list(structure.parents[k])
    return nig_from_gram(S[np.ix_(pa, pa)] if pa else _EMPTY, S[pa, k], S[k, k], n, tau,
                         structure.shapes[k], 0.5 * tau, temperature)


def node_posteriors(S: np.ndarray, n: int, structure: CovarianceStructure, tau: float,
                    temperature: float = 1.0, reuse=None) -> list[NigPosterior]:
    """Per-response NIG posteriors of (rho_k, sigma2_k).

    ``reuse = (other_structure, other_posteriors)`` computed from the same S,
    tau and temperature lets nodes with unchanged parents be copied over.
    """
    out = []
    for k in range(structure.s):
        if reuse is not None and reuse[0].parents[k] == structure.parents[k]:
            out.append(reuse[1][k])
        else:
            out.append(node_posterior(S, n, structure, k, tau, temperature))
    return out


def draw_sigma_rho(posteriors, structure: CovarianceStructure, tau: float,
                   rng: np.random.Generator) -> CovarianceState:
    """Draw every (sigma2_k, rho_k) from its NIG posterior."""
    s = structure.s
    sigma2 = np.empty(s)
    rho = np.zeros((s, s))
    for k, post in enumerate(posteriors):
        draw, sig = hrr_sample_beta(post, rng)
        sigma2[k] = sig
        if draw.size:
            rho[k, list(structure.parents[k])] = draw
    return CovarianceState(sigma2, rho, tau)


def node_log_marginals(U: np.ndarray, structure: CovarianceStructure, tau: float,
                       temperature: float = 1.0) -> np.ndarray:
    """log of each chained regression's likelihood with (rho_k, sigma2_k) integrated out."""
    S = U.T @ U
    return np.array([post.log_marginal for post in
                     node_posteriors(S, U.shape[0], structure, tau, temperature)])


def update_sigma_rho(U: np.ndarray, cov: CovarianceState, structure: CovarianceStructure,
                     hyper: Hyperparameters, rng: np.random.Generator,
                     temperature: float = 1.0) -> CovarianceState:
    """Gibbs draw of every (sigma2_k, rho_k) from its NIG full conditional.

    Prior: sigma2_k ~ IG(shape_k, tau/2), rho_k | sigma2_k ~ N(0, sigma2_k/tau I).
    """
    posts = node_posteriors(U.T @ U, U.shape[0], structure, cov.tau, temperature)
    return draw_sigma_rho(posts, structure, cov.tau, rng)


def covariance_log_prior(cov: CovarianceState, structure: CovarianceStructure,
                         tau: float | None = None) -> float:
    """log p(sigma2, rho | tau) under the chained-regression priors."""
    tau = cov.tau if tau is None else tau
    m = structure.n_parents
    quad = np.einsum("kl,kl->k", cov.rho, cov.rho)
    lp = log_invgamma(cov.sigma2, structure.shapes, 0.5 * tau)
    lp = lp - 0.5 * m * (LOG_2PI + np.log(cov.sigma2) - np.log(tau)) - 0.5 * tau * quad / cov.sigma2
    return float(np.sum(lp))


def tau_log_conditional(tau: float, cov: CovarianceState, structure: CovarianceStructure,
                        hyper: Hyperparameters) -> float:
    """Unnormalised log p(tau | sigma2, rho): Gamma(a_tau, b_tau) prior times
    the covariance-parameter priors."""
    if tau <= 0:
        return -np.inf
    return float(log_gamma_density(tau, hyper.a_tau, hyper.b_tau)
                 + covariance_log_prior(cov, structure, tau))


def tau_conditional_parameters(cov: CovarianceState, structure: CovarianceStructure,
                               hyper: Hyperparameters) -> tuple[float, float]:
    """The tau conditional is Gamma(shape, rate); used as a check on the MH step."""
    m = structure.n_parents
    quad = np.einsum("kl,kl->k", cov.rho, cov.rho)
    shape = hyper.a_tau + float(np.sum(structure.shapes + 0.5 * m))
    rate = hyper.b_tau + float(np.sum(0.5 * (1.0 + quad) / cov.sigma2))
    return shape, rate


def update_tau(cov: CovarianceState, structure: CovarianceStructure, hyper: Hyperparameters,
               rng: np.random.Generator, scale: float = 0.5) -> tuple[float, bool]:
    """Random-walk MH on log tau.  Returns (tau, accepted)."""
    tau = cov.tau
    proposal = tau * np.exp(scale * rng.standard_normal())
    log_ratio = (tau_log_conditional(proposal, cov, structure, hyper) + np.log(proposal)
                 - tau_log_conditional(tau, cov, structure, hyper) - np.log(tau))
    if np.log(rng.random()) < log_ratio:
        return float(proposal), True
    return float(tau), False
