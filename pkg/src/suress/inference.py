"""Posterior summaries, predictions and predictive-accuracy estimates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .core import Dataset, format_float, write_matrix
from .sampler import McmcOutput, PointwiseAccumulator

KURTOSIS_LIMIT = 10.0


class ElpdEstimate(NamedTuple):
    elpd_loo: float
    elpd_waic: float
    lpd: float
    p_waic: float
    unstable: bool


@dataclass
class PosteriorSummary:
    """Point estimates from one run.

    ``B_hat`` is the posterior mean of the coefficients, ``B_hat_conditional``
    the mean over draws that include each coefficient; ``beta_type`` selects
    which of the two :attr:`B` returns.
    """

    B_hat: np.ndarray
    B_hat_conditional: np.ndarray
    B0_hat: np.ndarray
    Gamma_hat: np.ndarray
    G_hat: np.ndarray
    elpd: ElpdEstimate
    log_cpo: np.ndarray
    threshold: float = 0.5
    beta_type: str = "marginal"
    model: str = ""

    @property
    def elpd_loo(self) -> float:
        return self.elpd.elpd_loo

    @property
    def elpd_waic(self) -> float:
        return self.elpd.elpd_waic

    @property
    def cpo(self) -> np.ndarray:
        return np.exp(self.log_cpo)

    @property
    def selected(self) -> np.ndarray:
        return self.Gamma_hat > self.threshold

    @property
    def B(self) -> np.ndarray:
        return self.B_hat_conditional if self.beta_type == "conditional" else self.B_hat

    @property
    def graph_selected(self) -> np.ndarray:
        return self.G_hat > self.threshold


# ----------------------------------------------------------------------------
# estimators from per-draw records
# ----------------------------------------------------------------------------

def _weight_kurtosis(lse_neg: np.ndarray, count: int) -> np.ndarray:
    """Kurtosis of importance weights 1/f from log-sum-exps of -m log f, m=1..4."""
    log_t = np.log(count)
    log_mean = lse_neg[0] - log_t
    # moments of w / mean(w)
    mu2 = np.exp(lse_neg[1] - log_t - 2 * log_mean)
    mu3 = np.exp(lse_neg[2] - log_t - 3 * log_mean)
    mu4 = np.exp(lse_neg[3] - log_t - 4 * log_mean)
    var = mu2 - 1.0
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        kurt = (mu4 - 4 * mu3 + 6 * mu2 - 3.0) / (var * var)
    return np.where(var > 1e-12, kurt, np.nan)


def elpd_from_accumulator(acc: PointwiseAccumulator) -> ElpdEstimate:
    if acc.count < 1:
        raise ValueError("no recorded draws")
    log_t = np.log(acc.count)
    lpd = float(np.sum(acc.lse_pos - log_t))
    p_waic = float(np.sum(acc.variance))
    loo = float(np.sum(log_t - acc.lse_neg[0]))
    kurt = _weight_kurtosis(acc.lse_neg, acc.count)
    unstable = bool(np.any(np.nan_to_num(kurt, nan=0.0) > KURTOSIS_LIMIT))
    return ElpdEstimate(loo, lpd - p_waic, lpd, p_waic, unstable)


def is_elpd(records) -> ElpdEstimate:
    """Importance-sampled LOO and WAIC from a (T, ...) array of log f(y_i | theta^t).

    elpd_loo = sum_i log[T / sum_t 1/f], elpd_waic = sum_i [log mean_t f - Var_t log f].
    """
    L = np.asarray(records, dtype=float)
    if L.ndim < 1 or L.shape[0] < 1:
        raise ValueError("need at least one recorded draw")
    acc = PointwiseAccumulator(L.shape[1:])
    for row in L:
        acc.update(row)
    return elpd_from_accumulator(acc)


def log_cpo(records) -> np.ndarray:
    """log CPO: log of the harmonic mean over draws of f(y_i | theta^t)."""
    L = np.asarray(records, dtype=float)
    return np.log(L.shape[0]) - logsumexp(-L, axis=0)


def cpo(records) -> np.ndarray:
    return np.exp(log_cpo(records))


def hrr_elpd(data: Dataset, output: McmcOutput) -> tuple[float, float]:
    """(lpd, WAIC) of an HRR fit from the per-draw Student-t predictive
    densities recorded during sampling."""
    if output.kind != "HRR":
        raise ValueError("hrr_elpd needs an HRR (covariancePrior = IG) fit")
    if (data.n, data.s) != output.pointwise.mean.shape:
        raise ValueError("data do not match the fitted run")
    est = elpd_from_accumulator(output.pointwise)
    return est.lpd, est.elpd_waic


# ----------------------------------------------------------------------------
# summaries
# ----------------------------------------------------------------------------

def summarize(output: McmcOutput, threshold: float = 0.5, beta_type: str = "marginal") -> PosteriorSummary:
    if output.n_kept < 1:
        raise ValueError("no post-burn-in draws to summarise")
    if beta_type not in ("marginal", "conditional"):
        raise ValueError(f"beta_type must be 'marginal' or 'conditional', got {beta_type!r}")
    est = elpd_from_accumulator(output.pointwise)
    if output.kind == "HRR":
        # the closed-form predictive already integrates the parameters; its
        # log pointwise density is the reported elpd
        est = est._replace(elpd_loo=est.lpd)
    acc = output.pointwise
    lcpo = np.log(acc.count) - acc.lse_neg[0]
    if est.unstable:
        warnings.warn("importance weights have very heavy tails (kurtosis > 10); "
                      "elpd_loo and CPO may be unreliable", RuntimeWarning, stacklevel=2)
    return PosteriorSummary(output.B_hat, output.B_hat_conditional, output.B0_hat,
                            output.Gamma_hat, output.G_hat, est, lcpo, threshold, beta_type,
                            output.spec.model_name)


def predict(summary: PosteriorSummary, X_new=None, X0_new=None, mode: str = "response"):
    """Predictions from the posterior mean coefficients.

    ``mode``: "response" gives X0_new B0 + X_new B; "coefficients" gives B;
    "nonzero-indices" gives the (j, k) positions with mPIP above the threshold.
    """
    if mode == "coefficients":
        return summary.B.copy()
    if mode == "nonzero-indices":
        return [(int(j), int(k)) for j, k in zip(*np.nonzero(summary.selected))]
    if mode != "response":
        raise ValueError(f"unknown prediction mode {mode!r}")
    p, s = summary.B.shape
    p0 = summary.B0_hat.shape[0]
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != p:
        raise ValueError(f"X_new must have {p} columns")
    out = X_new @ summary.B
    if p0:
        if X0_new is None:
            raise ValueError(f"X0_new with {p0} columns is required")
        X0_new = np.asarray(X0_new, dtype=float)
        if X0_new.shape != (X_new.shape[0], p0):
            raise ValueError(f"X0_new must be {X_new.shape[0]} x {p0}")
        out = out + X0_new @ summary.B0_hat
    elif X0_new is not None and np.asarray(X0_new).size:
        raise ValueError("the fit has no mandatory predictors")
    return out


def fitted(summary: PosteriorSummary, data: Dataset) -> np.ndarray:
    return predict(summary, data.X, data.X0 if data.p0 else None)


# ----------------------------------------------------------------------------
# output files
# ----------------------------------------------------------------------------

def write_summary(summary: PosteriorSummary, output: McmcOutput, data: Dataset, out_dir) -> list[str]:
    """Write the estimator and trace files; returns their names."""
    out = Path(out_dir)
    files = []

    def put(name, matrix, header):
        write_matrix(out / name, matrix, header)
        files.append(name)

    y_names = list(data.y_names)
    put("gamma_hat.csv", summary.Gamma_hat, y_names)
    put("beta_hat.csv", summary.B_hat, y_names)
    put("beta_hat_conditional.csv", summary.B_hat_conditional, y_names)
    if data.p0:
        put("beta0_hat.csv", summary.B0_hat, y_names)
    put("G_hat.csv", summary.G_hat, y_names)
    put("cpo.csv", summary.cpo, y_names)
    # per-observation aggregate over responses: sum of log CPO
    put("cpo_row.csv", summary.log_cpo.sum(axis=1)[:, None], ["log_cpo"])
    put("logP.csv", output.log_posterior[:, None], ["logP"])
    put("model_size.csv", output.model_size[:, None], ["model_size"])
    with open(out / "elpd.txt", "w") as fh:
        fh.write(f"elpd.LOO {format_float(summary.elpd_loo)}\n")
        fh.write(f"elpd.WAIC {format_float(summary.elpd_waic)}\n")
    files.append("elpd.txt")
    return files


# ----------------------------------------------------------------------------
# recovery of simulated truths
# ----------------------------------------------------------------------------

def auc(scores, labels) -> float:
    """Area under the ROC curve (Mann-Whitney statistic, ties counted half)."""
    from scipy.stats import rankdata

    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    n1 = int(labels.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def recovery_metrics(gamma_hat, gamma_true, G_hat=None, G_true=None, B_hat=None, B_true=None,
                     threshold: float = 0.5) -> dict:
    """AUC, TPR/FPR at the threshold, graph edge accuracy and coefficient RMSE."""
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    gamma_true = np.asarray(gamma_true, dtype=bool)
    if gamma_hat.shape != gamma_true.shape:
        raise ValueError(f"Gamma shapes differ: {gamma_hat.shape} vs {gamma_true.shape}")
    sel = gamma_hat > threshold
    pos, neg = gamma_true.sum(), (~gamma_true).sum()
    out = {
        "auc": auc(gamma_hat, gamma_true),
        "tpr": float((sel & gamma_true).sum() / pos) if pos else float("nan"),
        "fpr": float((sel & ~gamma_true).sum() / neg) if neg else float("nan"),
        "n_selected": int(sel.sum()),
    }
    if G_hat is not None and G_true is not None:
        G_hat = np.asarray(G_hat, dtype=float)
        G_true = np.asarray(G_true, dtype=bool)
        if G_hat.shape != G_true.shape:
            raise ValueError(f"graph shapes differ: {G_hat.shape} vs {G_true.shape}")
        iu = np.triu_indices(G_true.shape[0], 1)
        truth, est = G_true[iu], G_hat[iu] > threshold
        n_edge, n_non = truth.sum(), (~truth).sum()
        out["edge_accuracy"] = float((est & truth).sum() / n_edge) if n_edge else float("nan")
        out["non_edge_accuracy"] = float((~est & ~truth).sum() / n_non) if n_non else float("nan")
    if B_hat is not None and B_true is not None:
        B_hat = np.asarray(B_hat, dtype=float)
        B_true = np.asarray(B_true, dtype=float)
        if B_hat.shape != B_true.shape:
            raise ValueError(f"coefficient shapes differ: {B_hat.shape} vs {B_true.shape}")
        support = gamma_true
        out["rmse"] = (float(np.sqrt(np.mean((B_hat[support] - B_true[support]) ** 2)))
                       if support.any() else float("nan"))
    return out
