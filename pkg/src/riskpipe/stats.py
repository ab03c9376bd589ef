"""Two-sample tests and ROC analysis for the validation study.

Hand-rolled rather than pulled from scipy because the pipeline fixes
specific conventions the tests depend on: normal-approximation p for the
Welch statistic, asymptotic Kolmogorov series p for KS, the add-one
permutation p estimate, Bessel-pooled Cohen's d, and midrank tie
handling for AUC (the only convention with an exact pair-counting
identity). Each function is small enough to verify against a brute-force
oracle, and the test suite does exactly that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError


def _sample(name: str, values: Sequence[float], min_size: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"sample {name} must be 1-D")
    if arr.size < min_size:
        raise DataError(f"sample {name} needs at least {min_size} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"sample {name} contains non-finite values")
    return arr


def welch_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch's unequal-variance t statistic with a two-sided p.

    p uses the standard normal limit of the t distribution; at the
    sample sizes this pipeline produces (thousands of pairs) the
    difference from the exact t CDF is negligible, and it keeps the
    implementation dependency-free. Identical samples give t = 0, p = 1.
    """
    x = _sample("a", a, 2)
    y = _sample("b", b, 2)
    var_x = float(np.var(x, ddof=1))
    var_y = float(np.var(y, ddof=1))
    se_sq = var_x / x.size + var_y / y.size
    if se_sq == 0.0:
        raise DataError("degenerate samples: both variances are zero")
    t = float((np.mean(x) - np.mean(y)) / math.sqrt(se_sq))
    p = math.erfc(abs(t) / math.sqrt(2.0))
    return t, p


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov D with an asymptotic p.

    D is the sup distance between the empirical CDFs. p comes from the
    Kolmogorov series with the small-sample correction factor
    (en + 0.12 + 0.11/en); it is asymptotic, not exact.
    """
    x = np.sort(_sample("a", a, 1))
    y = np.sort(_sample("b", b, 1))
    everything = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, everything, side="right") / x.size
    cdf_y = np.searchsorted(y, everything, side="right") / y.size
    d = float(np.max(np.abs(cdf_x - cdf_y)))
    if d == 0.0:
        return 0.0, 1.0
    en = math.sqrt(x.size * y.size / (x.size + y.size))
    arg = (en + 0.12 + 0.11 / en) * d
    # Q_KS(arg) = 2 * sum_{j>=1} (-1)^{j-1} exp(-2 j^2 arg^2)
    total = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1.0) ** (j - 1) * math.exp(-2.0 * j * j * arg * arg)
        total += term
        if abs(term) < 1e-12:
            break
    p = min(1.0, max(0.0, total))
    return d, p


def permutation_test(
    a: Sequence[float],
    b: Sequence[float],
    iterations: int = 10000,
    seed: int = 0,
) -> float:
    """Two-sided permutation test on the difference of means.

    p = (1 + #{permutations with |mean diff| >= observed}) / (iterations + 1),
    the add-one estimate, so p is never 0 and never exceeds 1. One
    rng.permutation call per iteration, so a fixed seed fixes p exactly.
    """
    if iterations < 1:
        raise DataError("permutation test needs at least one iteration")
    x = _sample("a", a, 1)
    y = _sample("b", b, 1)
    observed = abs(float(np.mean(x)) - float(np.mean(y)))
    pooled = np.concatenate([x, y])
    na = x.size
    rng = np.random.default_rng(seed)
    count = 0
    for _ in range(iterations):
        perm = rng.permutation(pooled)
        diff = abs(float(np.mean(perm[:na])) - float(np.mean(perm[na:])))
        if diff >= observed:
            count += 1
    return (1 + count) / (iterations + 1)


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Standardized mean difference with Bessel-corrected pooled sd."""
    x = _sample("a", a, 2)
    y = _sample("b", b, 2)
    var_x = float(np.var(x, ddof=1))
    var_y = float(np.var(y, ddof=1))
    pooled_var = ((x.size - 1) * var_x + (y.size - 1) * var_y) / (x.size + y.size - 2)
    if pooled_var == 0.0:
        raise DataError("degenerate samples: pooled variance is zero")
    return float((np.mean(x) - np.mean(y)) / math.sqrt(pooled_var))


@dataclass(frozen=True)
class RocResult:
    auc: float
    curve: tuple[tuple[float, float], ...]  # (fpr, tpr) from (0,0) to (1,1)


def _midranks(values: np.ndarray) -> np.ndarray:
    # midrank of a tie group spanning sorted positions s+1..s+c is s+(c+1)/2
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    group_midranks = starts + (counts + 1) / 2.0
    return group_midranks[inverse]


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> RocResult:
    """AUC via rank sums (midrank ties) plus the threshold-swept curve.

    AUC equals the probability that a random positive outranks a random
    negative, ties counted one half; midranks make the rank-sum formula
    agree with brute-force pair counting exactly, not just in the limit.
    """
    s = _sample("scores", scores, 1)
    lab = np.asarray(labels)
    if lab.shape != s.shape:
        raise DataError("scores and labels must have equal length")
    lab = lab.astype(np.int64)
    if not np.all((lab == 0) | (lab == 1)):
        raise DataError("labels must be binary 0/1")
    n_pos = int(lab.sum())
    n_neg = int(lab.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc needs both classes present")

    ranks = _midranks(s)
    rank_sum_pos = float(ranks[lab == 1].sum())
    auc = (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-s, kind="mergesort")
    sorted_scores = s[order]
    sorted_labels = lab[order]
    tps = np.cumsum(sorted_labels)
    fps = np.cumsum(1 - sorted_labels)
    boundaries = np.concatenate(
        [np.where(np.diff(sorted_scores) != 0)[0], [s.size - 1]]
    )
    curve = [(0.0, 0.0)]
    for i in boundaries:
        curve.append((float(fps[i]) / n_neg, float(tps[i]) / n_pos))
    return RocResult(auc=float(auc), curve=tuple(curve))


def brute_force_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """O(n^2) pair-counting oracle: wins + half-ties over all (pos, neg)."""
    s = list(map(float, scores))
    lab = list(map(int, labels))
    pos = [s[i] for i in range(len(s)) if lab[i] == 1]
    neg = [s[i] for i in range(len(s)) if lab[i] == 0]
    if not pos or not neg:
        raise DataError("brute_force_auc needs both classes present")
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))
