"""Detection metrics and paired statistical significance tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import ANOMALOUS, HEALTHY

_IRLS_TOL = 1e-10
_IRLS_MAX_ITER = 100


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(y_true, y_pred) -> ConfusionCounts:
    """Standard binary confusion counts with Anomalous as the positive class."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("length mismatch")
    pos = y_true == ANOMALOUS
    pred_pos = y_pred == ANOMALOUS
    return ConfusionCounts(
        tp=int(np.sum(pos & pred_pos)),
        fp=int(np.sum(~pos & pred_pos)),
        tn=int(np.sum(~pos & ~pred_pos)),
        fn=int(np.sum(pos & ~pred_pos)),
    )


def tpr(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0:
        raise ValueError("no positive samples")
    return c.tp / (c.tp + c.fn)


def fpr(c: ConfusionCounts) -> float:
    if c.fp + c.tn == 0:
        raise ValueError("no negative samples")
    return c.fp / (c.fp + c.tn)


def balanced_accuracy(c: ConfusionCounts) -> float:
    """(TPR + TNR) / 2."""
    return 0.5 * (tpr(c) + (1.0 - fpr(c)))


# ---------------------------------------------------------------------------
# McNemar's test


@dataclass(frozen=True)
class PairedOutcomes:
    """Per-sample success indicators of two models evaluated on identical samples."""

    success_a: np.ndarray
    success_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.success_a, dtype=bool)
        b = np.asarray(self.success_b, dtype=bool)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("outcome vectors must be 1-D and equally long")
        object.__setattr__(self, "success_a", a)
        object.__setattr__(self, "success_b", b)

    @property
    def b_count(self) -> int:
        """A right, B wrong."""
        return int(np.sum(self.success_a & ~self.success_b))

    @property
    def c_count(self) -> int:
        """A wrong, B right."""
        return int(np.sum(~self.success_a & self.success_b))

    @classmethod
    def from_predictions(cls, y_true, pred_a, pred_b) -> "PairedOutcomes":
        y_true = np.asarray(y_true)
        return cls(np.asarray(pred_a) == y_true, np.asarray(pred_b) == y_true)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: int
    flags: tuple = ()


def mcnemar(pairs: PairedOutcomes, mode: str = "exact") -> TestResult:
    """Paired test on discordant outcomes; ``mode`` is 'exact' or 'chi2cc'."""
    b, c = pairs.b_count, pairs.c_count
    n_disc = b + c
    if n_disc == 0:
        return TestResult(statistic=0.0, p_value=1.0, n=pairs.success_a.size, flags=("no_discordant_pairs",))
    if mode == "exact":
        # two-sided exact binomial on the smaller discordant count
        k = min(b, c)
        p = min(1.0, 2.0 * float(stats.binom.cdf(k, n_disc, 0.5)))
        return TestResult(statistic=float(k), p_value=p, n=pairs.success_a.size)
    if mode == "chi2cc":
        statistic = (abs(b - c) - 1) ** 2 / n_disc
        p = float(stats.chi2.sf(statistic, df=1))
        return TestResult(statistic=float(statistic), p_value=p, n=pairs.success_a.size)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# GLM logistic regression with model as categorical factor


def _bernoulli_loglik(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(np.sum(y * np.log(p) + (1 - y) * np.log1p(-p)))


def _irls_logistic(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Plain IRLS for logistic regression; raises on non-convergence."""
    beta = np.zeros(X.shape[1])
    for _ in range(_IRLS_MAX_ITER):
        eta = X @ beta
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -500, 500)))
        w = p * (1 - p)
        w = np.maximum(w, 1e-12)
        z = eta + (y - p) / w
        wx = X * w[:, None]
        beta_new = np.linalg.solve(X.T @ wx, wx.T @ z)
        if np.max(np.abs(beta_new - beta)) < _IRLS_TOL:
            return beta_new
        beta = beta_new
    raise RuntimeError("IRLS did not converge")


def glm_model_factor(successes: list[np.ndarray]) -> TestResult:
    """Likelihood-ratio test of the categorical 'model' factor in a logistic GLM.

    ``successes`` holds one binary outcome vector per model. The null model is
    intercept-only; the alternative adds one dummy per extra model.
    """
    if len(successes) < 2:
        raise ValueError("need at least 2 models")
    groups = [np.asarray(s, dtype=np.float64).ravel() for s in successes]
    if any(g.size == 0 for g in groups):
        raise ValueError("each model needs at least 1 outcome")
    y = np.concatenate(groups)
    n = y.size
    k = len(groups)
    flags = []

    rates = [float(g.mean()) for g in groups]
    separated = any(r in (0.0, 1.0) for r in rates)

    # null: intercept only (closed form)
    p0 = y.mean()
    if p0 in (0.0, 1.0):
        ll_null = 0.0
    else:
        ll_null = _bernoulli_loglik(y, np.full(n, p0))

    if separated:
        # group rate at the boundary: the MLE is the group mean in the limit
        flags.append("separation")
        ll_full = sum(_group_loglik(g) for g in groups)
    else:
        dummies = []
        start = groups[0].size
        for g in groups[1:]:
            col = np.zeros(n)
            col[start : start + g.size] = 1.0
            dummies.append(col)
            start += g.size
        X = np.column_stack([np.ones(n)] + dummies)
        try:
            beta = _irls_logistic(X, y)
            p_hat = 1.0 / (1.0 + np.exp(-(X @ beta)))
            ll_full = _bernoulli_loglik(y, p_hat)
        except RuntimeError:
            flags.append("non_convergence")
            ll_full = sum(_group_loglik(g) for g in groups)

    statistic = max(0.0, 2.0 * (ll_full - ll_null))
    p_value = float(stats.chi2.sf(statistic, df=k - 1))
    return TestResult(statistic=statistic, p_value=p_value, n=n, flags=tuple(flags))


def _group_loglik(g: np.ndarray) -> float:
    r = float(g.mean())
    if r in (0.0, 1.0):
        return 0.0
    m = g.size
    s = g.sum()
    return float(s * np.log(r) + (m - s) * np.log(1 - r))
