"""
Wilcoxon signed-rank and rank-sum tests, one-way ANOVA and Tukey HSD.

Exact Wilcoxon p-values come from the integer count of every sign (or
group) assignment that reaches the observed statistic, built up rank by
rank; with no ties this is the full enumeration of 2^n (or C(N, n1))
assignments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..errors import DegenerateError, ParameterError
from .distributions import f_sf, normal_cdf, normal_sf, studentized_range_quantile, studentized_range_sf

ALTERNATIVES = ("two_sided", "greater", "less")
MODES = ("auto", "exact", "approx")
SIGNED_RANK_EXACT_MAX_N = 25
RANK_SUM_EXACT_MAX_N = 24


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str            # exact | normal_approx | normal_approx_cc
    n: int | tuple[int, int]
    alternative: str = "two_sided"
    zeros_dropped: int = 0
    z: float | None = None

    __test__ = False  # keep pytest from collecting this class

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "n": list(self.n) if isinstance(self.n, tuple) else self.n,
            "alternative": self.alternative,
            "zeros_dropped": self.zeros_dropped,
            "z": self.z,
        }


@dataclass(frozen=True)
class AnovaTable:
    ss_between: float
    ss_within: float
    df_between: int
    df_within: int
    f: float
    p: float
    group_means: tuple[float, ...] = ()
    group_sizes: tuple[int, ...] = ()

    @property
    def ms_within(self) -> float:
        return self.ss_within / self.df_within

    def as_dict(self) -> dict:
        return {
            "ss_between": self.ss_between, "ss_within": self.ss_within,
            "df_between": self.df_between, "df_within": self.df_within,
            "f": self.f, "p": self.p,
        }


@dataclass(frozen=True)
class TukeyPair:
    group_i: object
    group_j: object
    mean_diff: float   # mean_j − mean_i
    q_stat: float
    p_adj: float
    significant: bool


@dataclass(frozen=True)
class TukeyResult:
    pairs: tuple[TukeyPair, ...]
    alpha: float
    q_crit: float
    k: int
    df_within: int
    labels: tuple = field(default=())
    means: tuple[float, ...] = field(default=())

    def is_significant(self, a, b) -> bool:
        for p in self.pairs:
            if {p.group_i, p.group_j} == {a, b}:
                return p.significant
        raise KeyError((a, b))


def _check_alternative(alternative: str, mode: str):
    if alternative not in ALTERNATIVES:
        raise ParameterError(f"alternative must be one of {ALTERNATIVES}")
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")


def rankdata(values) -> np.ndarray:
    """Average ranks (1-based), ties sharing their mean rank."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(len(v), dtype=float)
    i = 0
    n = len(v)
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_sizes(values) -> np.ndarray:
    _, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    return counts[counts > 1]


def exact_p_from_counts(counts: Sequence[int], statistic: int, alternative: str) -> float:
    """p-value from the null count of each integer statistic value.

    ``counts[s]`` is the number of equally likely assignments yielding s.
    The two-sided p doubles the smaller tail and is capped at 1.
    """
    total = sum(counts)
    le = sum(counts[: statistic + 1])
    ge = sum(counts[statistic:])
    if alternative == "greater":
        return float(Fraction(ge, total))
    if alternative == "less":
        return float(Fraction(le, total))
    return float(min(Fraction(1), Fraction(2 * min(le, ge), total)))


def signed_rank_counts(n: int) -> list[int]:
    """Null counts of W+ over all 2^n sign assignments of ranks 1..n."""
    counts = [1]
    for r in range(1, n + 1):
        nxt = counts + [0] * r
        for s, c in enumerate(counts):
            nxt[s + r] += c
        counts = nxt
    return counts


def rank_sum_counts(n1: int, n2: int) -> list[int]:
    """Null counts of the rank sum of n1 items drawn from ranks 1..n1+n2."""
    N = n1 + n2
    max_sum = sum(range(N - n1 + 1, N + 1))
    # table[j][s] = number of j-subsets of ranks seen so far with sum s
    table = [[0] * (max_sum + 1) for _ in range(n1 + 1)]
    table[0][0] = 1
    for r in range(1, N + 1):
        for j in range(min(r, n1), 0, -1):
            row, prev = table[j], table[j - 1]
            for s in range(max_sum, r - 1, -1):
                if prev[s - r]:
                    row[s] += prev[s - r]
    return table[n1]


def _normal_p(z: float, alternative: str) -> float:
    if alternative == "greater":
        return normal_sf(z)
    if alternative == "less":
        return normal_cdf(z)
    return min(1.0, 2.0 * normal_sf(abs(z)))


def _cc_z(diff: float, sd: float, alternative: str) -> float:
    # continuity correction shrinks the deviation toward the tested direction
    if alternative == "greater":
        diff -= 0.5
    elif alternative == "less":
        diff += 0.5
    else:
        diff = math.copysign(max(abs(diff) - 0.5, 0.0), diff)
    return diff / sd


def wilcoxon_signed_rank(
    pairs,
    alternative: str = "two_sided",
    mode: str = "auto",
    continuity: bool = False,
) -> TestResult:
    """Paired Wilcoxon signed-rank test on differences x − y.

    ``pairs`` is a sequence of (x, y) tuples or an (n, 2) array. W is the
    sum of ranks of positive differences; zero differences are dropped.
    """
    _check_alternative(alternative, mode)
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    d = arr[:, 0] - arr[:, 1]
    nonzero = d != 0
    zeros = int(len(d) - nonzero.sum())
    d = d[nonzero]
    n = len(d)
    if n == 0:
        raise DegenerateError("all differences are zero")
    ranks = rankdata(np.abs(d))
    w = float(ranks[d > 0].sum())
    ties = _tie_sizes(np.abs(d))

    use_exact = mode == "exact" or (mode == "auto" and n <= SIGNED_RANK_EXACT_MAX_N and len(ties) == 0)
    if use_exact:
        if len(ties):
            raise ParameterError("exact signed-rank test requires tie-free differences")
        p = exact_p_from_counts(signed_rank_counts(n), int(round(w)), alternative)
        return TestResult(w, p, "exact", n, alternative, zeros)

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties ** 3 - ties)) / 48.0
    if var <= 0:
        return TestResult(w, 1.0, "normal_approx_cc" if continuity else "normal_approx", n, alternative, zeros, 0.0)
    sd = math.sqrt(var)
    z = _cc_z(w - mean, sd, alternative) if continuity else (w - mean) / sd
    return TestResult(w, _normal_p(z, alternative), "normal_approx_cc" if continuity else "normal_approx",
                      n, alternative, zeros, z)


def wilcoxon_rank_sum(
    a,
    b,
    alternative: str = "two_sided",
    mode: str = "auto",
    continuity: bool = False,
) -> TestResult:
    """Wilcoxon rank-sum test; W is the rank sum of ``a`` in the pooled ranking."""
    _check_alternative(alternative, mode)
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ParameterError("both groups need at least one value")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    w = float(ranks[:n1].sum())
    ties = _tie_sizes(pooled)
    N = n1 + n2

    use_exact = mode == "exact" or (mode == "auto" and N <= RANK_SUM_EXACT_MAX_N and len(ties) == 0)
    if use_exact:
        if len(ties):
            raise ParameterError("exact rank-sum test requires tie-free data")
        p = exact_p_from_counts(rank_sum_counts(n1, n2), int(round(w)), alternative)
        return TestResult(w, p, "exact", (n1, n2), alternative)

    mean = n1 * (N + 1) / 2.0
    tie_term = float(np.sum(ties ** 3 - ties)) / (N * (N - 1)) if N > 1 else 0.0
    var = n1 * n2 / 12.0 * ((N + 1) - tie_term)
    method = "normal_approx_cc" if continuity else "normal_approx"
    if var <= 0:
        return TestResult(w, 1.0, method, (n1, n2), alternative, 0, 0.0)
    sd = math.sqrt(var)
    z = _cc_z(w - mean, sd, alternative) if continuity else (w - mean) / sd
    return TestResult(w, _normal_p(z, alternative), method, (n1, n2), alternative, 0, z)


def mann_whitney_u(a, b) -> float:
    """U statistic of ``a``: number of (a_i, b_j) pairs with a_i > b_j, ties counting ½."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.sum(a[:, None] > b[None, :]) + 0.5 * np.sum(a[:, None] == b[None, :]))


def _groups_as_arrays(groups) -> tuple[list, list[np.ndarray]]:
    if isinstance(groups, dict):
        labels = list(groups.keys())
        arrays = [np.asarray(groups[k], dtype=float).ravel() for k in labels]
    else:
        arrays = [np.asarray(g, dtype=float).ravel() for g in groups]
        labels = list(range(len(arrays)))
    return labels, arrays


def one_way_anova(groups) -> AnovaTable:
    """One-way ANOVA over k groups (a sequence of sequences or a label→values dict)."""
    _, arrays = _groups_as_arrays(groups)
    k = len(arrays)
    if k < 2:
        raise ParameterError("ANOVA needs at least two groups")
    if any(len(g) < 2 for g in arrays):
        raise ParameterError("every group needs at least two values")
    sizes = np.array([len(g) for g in arrays])
    means = np.array([g.mean() for g in arrays])
    N = int(sizes.sum())
    grand = float(np.concatenate(arrays).mean())
    ss_between = float(np.sum(sizes * (means - grand) ** 2))
    ss_within = float(sum(np.sum((g - m) ** 2) for g, m in zip(arrays, means)))
    df_b, df_w = k - 1, N - k
    scale = max(1.0, float(np.max(np.abs(np.concatenate(arrays)))))
    if ss_within <= (1e-13 * scale) ** 2 * N:
        raise DegenerateError("zero within-group variance; F is undefined")
    f = (ss_between / df_b) / (ss_within / df_w)
    return AnovaTable(ss_between, ss_within, df_b, df_w, f, f_sf(f, df_b, df_w),
                      tuple(float(m) for m in means), tuple(int(s) for s in sizes))


def tukey_hsd(groups, alpha: float = 0.05) -> TukeyResult:
    """All-pairs Tukey HSD (Tukey-Kramer for unequal group sizes)."""
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    labels, arrays = _groups_as_arrays(groups)
    table = one_way_anova(arrays)
    k = len(arrays)
    msw = table.ms_within
    q_crit = studentized_range_quantile(1.0 - alpha, k, table.df_within)
    pairs = []
    for i in range(k):
        for j in range(i + 1, k):
            ni, nj = table.group_sizes[i], table.group_sizes[j]
            diff = table.group_means[j] - table.group_means[i]
            se = math.sqrt(msw / 2.0 * (1.0 / ni + 1.0 / nj))
            q = abs(diff) / se
            p_adj = min(1.0, max(0.0, studentized_range_sf(q, k, table.df_within)))
            pairs.append(TukeyPair(labels[i], labels[j], diff, q, p_adj, q > q_crit))
    return TukeyResult(tuple(pairs), alpha, q_crit, k, table.df_within,
                       tuple(labels), table.group_means)
