"""Data generators: the small quick-start example, eQTL-style studies with
SNP predictors and G-Wishart correlated noise, and the MRF graph builder."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations

import numpy as np
from scipy.stats import invwishart

from .core import Dataset, canonical_edges, read_matrix
from .graphs import DecomposableGraph

QUICKSTART_SUPPORT = ((0, 2), (1, 0), (1, 1), (2, 0), (2, 1), (3, 2))


def simulate_quickstart(seed: int) -> tuple[Dataset, np.ndarray]:
    """n=10, p=15, s=3 example with X ~ N(2, 1), unit coefficients on six
    positions and N(0, 0.2^2) noise.  Returns ``(data, B_true)``."""
    rng = np.random.default_rng(seed)
    n, s, p = 10, 3, 15
    X = rng.normal(2.0, 1.0, size=(n, p))
    B = np.zeros((p, s))
    for j, k in QUICKSTART_SUPPORT:
        B[j, k] = 1.0
    E = rng.normal(0.0, 0.2, size=(n, s))
    return Dataset(X @ B + E, X), B


@dataclass
class SimulationRecipe:
    """Settings of an eQTL-style simulation.

    ``gamma_true`` is the p x s association pattern, ``graph_true`` the
    decomposable graph of the noise precision.  When ``target_snr`` is set the
    noise of each draw is rescaled by one common factor so that the empirical
    signal-to-noise ratio equals it; ``None`` keeps the raw noise.
    """

    n: int
    gamma_true: np.ndarray
    graph_true: DecomposableGraph
    coef_scale: float = 1.0
    noise_scale: float = 0.5
    delta: float = 2.0
    m_offdiag: float = 0.9
    maf_low: float = 0.05
    maf_high: float = 0.5
    target_snr: float | None = 25.0
    seed: int = 0

    def __post_init__(self):
        self.gamma_true = np.asarray(self.gamma_true, dtype=bool)
        if self.gamma_true.ndim != 2:
            raise ValueError("gamma_true must be a p x s matrix")
        if not isinstance(self.graph_true, DecomposableGraph):
            # raises ValueError when not decomposable
            self.graph_true = DecomposableGraph(self.graph_true)
        if self.graph_true.s != self.gamma_true.shape[1]:
            raise ValueError("graph_true and gamma_true disagree on the number of responses")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def p(self) -> int:
        return self.gamma_true.shape[0]

    @property
    def s(self) -> int:
        return self.gamma_true.shape[1]


@dataclass
class EqtlTruth:
    B: np.ndarray
    gamma: np.ndarray
    graph: DecomposableGraph
    precision: np.ndarray
    snr: float
    extra: dict = field(default_factory=dict)


def _fixture(name: str) -> np.ndarray:
    with resources.as_file(resources.files("suress") / "data" / name) as path:
        return read_matrix(path)[1]


def default_recipe(scale: str = "desk", seed: int = 0, n: int = 100) -> SimulationRecipe:
    """Stored truth patterns: ``"paper"`` (p=150, s=10) or ``"desk"`` (p=50, s=5)."""
    if scale not in ("paper", "desk"):
        raise ValueError(f"unknown recipe scale {scale!r}")
    gamma = _fixture(f"eqtl_{scale}_gamma.csv").astype(bool)
    edges = _fixture(f"eqtl_{scale}_graph.csv").astype(int)
    graph = DecomposableGraph.from_edges(gamma.shape[1], edges)
    return SimulationRecipe(n=n, gamma_true=gamma, graph_true=graph, seed=seed)


def simulate_snps(n: int, p: int, rng: np.random.Generator, low: float = 0.05,
                  high: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Genotypes coded 0/1/2: column j ~ Binomial(2, f_j), f_j ~ U(low, high)."""
    freq = rng.uniform(low, high, size=p)
    X = rng.binomial(2, freq, size=(n, p)).astype(float)
    return X, freq


def _iw_dawid(delta: float, D: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse Wishart in Dawid's parametrisation: IW(delta, D) has
    delta + dim - 1 degrees of freedom in the usual one."""
    d = D.shape[0]
    draw = invwishart.rvs(df=delta + d - 1, scale=D, random_state=rng)
    return np.atleast_2d(draw).reshape(d, d)


def sample_gwishart_decomposable(graph: DecomposableGraph, delta: float, M: np.ndarray,
                                 rng: np.random.Generator) -> np.ndarray:
    """Precision K ~ W_G(delta, M), density proportional to
    |K|^((delta - 2)/2) exp(-tr(K M)/2) on the cone of graph-restricted SPD
    matrices.  On a complete graph this is Wishart(delta + s - 1, M^{-1}).

    Sampled through the covariance: Sigma = K^{-1} is hyper inverse Wishart,
    drawn clique by clique along the perfect ordering.
    """
    if not isinstance(graph, DecomposableGraph):
        graph = DecomposableGraph(graph)
    M = np.asarray(M, dtype=float)
    s = graph.s
    if M.shape != (s, s):
        raise ValueError("M must be s x s")
    Sigma = np.zeros((s, s))
    for clique, sep in zip(graph.cliques, graph.separators):
        C = list(clique)
        S = list(sep)
        R = [v for v in C if v not in sep]
        if not S:
            Sigma[np.ix_(C, C)] = _iw_dawid(delta, M[np.ix_(C, C)], rng)
            continue
        M_SS_inv = np.linalg.inv(M[np.ix_(S, S)])
        M_RS = M[np.ix_(R, S)]
        D_cond = M[np.ix_(R, R)] - M_RS @ M_SS_inv @ M_RS.T
        Sig_cond = _iw_dawid(delta + len(S), D_cond, rng)
        # A = Sigma_RS Sigma_SS^{-1} ~ MN(M_RS M_SS^{-1}, Sig_cond, M_SS^{-1})
        Z = rng.standard_normal((len(R), len(S)))
        A = M_RS @ M_SS_inv + np.linalg.cholesky(Sig_cond) @ Z @ np.linalg.cholesky(M_SS_inv).T
        Sig_SS = Sigma[np.ix_(S, S)]
        Sigma[np.ix_(R, S)] = A @ Sig_SS
        Sigma[np.ix_(S, R)] = (A @ Sig_SS).T
        Sigma[np.ix_(R, R)] = Sig_cond + A @ Sig_SS @ A.T
    K = np.zeros((s, s))
    for clique in graph.cliques:
        C = list(clique)
        K[np.ix_(C, C)] += np.linalg.inv(Sigma[np.ix_(C, C)])
    for sep in graph.separators:
        if sep:
            S = list(sep)
            K[np.ix_(S, S)] -= np.linalg.inv(Sigma[np.ix_(S, S)])
    K[~graph.adjacency & ~np.eye(s, dtype=bool)] = 0.0
    return 0.5 * (K + K.T)


def empirical_snr(XB: np.ndarray, U: np.ndarray) -> float:
    """mean_k Var(X beta_k) / Var(u_k)."""
    return float(np.mean(np.var(XB, axis=0, ddof=1) / np.var(U, axis=0, ddof=1)))


def simulate_eqtl(recipe: SimulationRecipe, seed: int | None = None) -> tuple[Dataset, EqtlTruth]:
    """eQTL-style data: SNP design, N(0, coef_scale^2) effects on the true
    support and noise U = U~ chol(P^{-1}) with P ~ G-Wishart on the true graph."""
    rng = np.random.default_rng(recipe.seed if seed is None else seed)
    n, p, s = recipe.n, recipe.p, recipe.s
    X, freq = simulate_snps(n, p, rng, recipe.maf_low, recipe.maf_high)
    B = rng.normal(0.0, recipe.coef_scale, size=(p, s)) * recipe.gamma_true
    U_tilde = rng.normal(0.0, recipe.noise_scale, size=(n, s))
    M = np.full((s, s), recipe.m_offdiag)
    np.fill_diagonal(M, 1.0)
    P = sample_gwishart_decomposable(recipe.graph_true, recipe.delta, M, rng)
    # upper factor R with R'R = P^{-1}, so rows of U have covariance noise^2 P^{-1}
    R = np.linalg.cholesky(np.linalg.inv(P)).T
    U = U_tilde @ R
    XB = X @ B
    raw_snr = empirical_snr(XB, U)
    if recipe.target_snr is not None and raw_snr > 0:
        U = U * np.sqrt(raw_snr / recipe.target_snr)
    Y = XB + U
    x_names = [f"snp{j + 1}" for j in range(p)]
    y_names = [f"gex{k + 1}" for k in range(s)]
    data = Dataset(Y, X, y_names=y_names, x_names=x_names)
    truth = EqtlTruth(B, recipe.gamma_true.copy(), recipe.graph_true, P,
                      empirical_snr(XB, U), {"allele_freq": freq, "raw_snr": raw_snr})
    return data, truth


def build_mrf_graph(pairs, p: int, s: int) -> np.ndarray:
    """Edges joining every pair of indicators within each (predictors x
    responses) block; nodes are the column-major flat indices k * p + j.

    Returns a (m, 3) array of (i, j, weight) rows with i < j, duplicates merged.
    """
    rows = []
    for predictors, responses in pairs:
        predictors = [int(j) for j in predictors]
        responses = [int(k) for k in responses]
        if any(j < 0 or j >= p for j in predictors) or any(k < 0 or k >= s for k in responses):
            raise ValueError("MRF block index out of range")
        nodes = sorted({k * p + j for j in predictors for k in responses})
        rows.extend((a, b, 1.0) for a, b in combinations(nodes, 2))
    if not rows:
        return np.zeros((0, 3))
    return canonical_edges(np.array(rows, dtype=float))
