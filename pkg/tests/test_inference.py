import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from actirhythm.errors import DegenerateError, ParameterError
from actirhythm.stats import (
    mann_whitney_u,
    normal_sf,
    one_way_anova,
    rankdata,
    tukey_hsd,
    wilcoxon_rank_sum,
    wilcoxon_signed_rank,
)
from actirhythm.stats.inference import exact_p_from_counts, rank_sum_counts, signed_rank_counts


def _two_sided(le, ge, total):
    return float(min(Fraction(1), Fraction(2 * min(le, ge), total)))


def brute_signed_rank_p(d):
    ranks = sps.rankdata(np.abs(d))
    w = sum(r for r, x in zip(ranks, d) if x > 0)
    stats = [sum(r for r, s in zip(ranks, signs) if s)
             for signs in itertools.product((0, 1), repeat=len(d))]
    le = sum(s <= w for s in stats)
    ge = sum(s >= w for s in stats)
    return w, _two_sided(le, ge, len(stats))


def brute_rank_sum_p(a, b):
    n1 = len(a)
    ranks = list(range(1, n1 + len(b) + 1))
    w = sps.rankdata(np.concatenate([a, b]))[:n1].sum()
    stats = [sum(c) for c in itertools.combinations(ranks, n1)]
    le = sum(s <= w for s in stats)
    ge = sum(s >= w for s in stats)
    return w, _two_sided(le, ge, len(stats))


def test_all_positive_twelve_pairs():
    pairs = [(85.0 + i, 15.0 - i * 0.3) for i in range(12)]
    res = wilcoxon_signed_rank(pairs)
    assert res.statistic == 78
    assert res.method == "exact"
    assert res.p_value == pytest.approx(2 / 4096, abs=0)


def test_three_positive_differences():
    res = wilcoxon_signed_rank([(1, 0), (2, 0), (3, 0)])
    assert res.statistic == 6
    assert res.p_value == 0.25


def test_symmetric_differences():
    res = wilcoxon_signed_rank([(1, 0), (0, 1)], mode="approx")
    assert res.p_value == 1.0
    res = wilcoxon_signed_rank([(1, 0), (0, 2)])
    assert res.p_value == 1.0


def test_zero_differences_dropped():
    res = wilcoxon_signed_rank([(1, 1), (2, 0), (3, 0), (4, 0), (5, 5)])
    assert res.zeros_dropped == 2 and res.n == 3 and res.statistic == 6
    with pytest.raises(DegenerateError):
        wilcoxon_signed_rank([(1, 1), (2, 2)])


def test_fully_separated_twelve_vs_twelve():
    day = np.linspace(55, 75, 12)
    night = np.linspace(25, 45, 12)
    res = wilcoxon_rank_sum(day, night)
    assert res.statistic == 222
    assert res.method == "exact"
    assert res.p_value == pytest.approx(2 / math.comb(24, 12), rel=1e-15)


def test_rank_sum_small_example():
    res = wilcoxon_rank_sum([3, 4], [1, 2])
    assert res.statistic == 7
    assert res.p_value == pytest.approx(1 / 3, abs=1e-15)


def test_rank_sum_identical_multisets():
    res = wilcoxon_rank_sum([1, 2, 3], [3, 2, 1])
    assert res.method.startswith("normal_approx")
    assert res.p_value == 1.0


def test_rank_sum_empty_group():
    with pytest.raises(ParameterError):
        wilcoxon_rank_sum([], [1, 2])


def test_exact_requires_tie_free():
    with pytest.raises(ParameterError):
        wilcoxon_signed_rank([(2, 0), (0, 2), (3, 0)], mode="exact")
    with pytest.raises(ParameterError):
        wilcoxon_rank_sum([1, 2], [2, 3], mode="exact")


def test_invalid_alternative():
    with pytest.raises(ParameterError):
        wilcoxon_signed_rank([(1, 0)], alternative="bigger")


def test_signed_rank_matches_enumeration_bitwise():
    rng = np.random.default_rng(21)
    for _ in range(100):
        n = int(rng.integers(1, 11))
        d = rng.permutation(np.arange(1, n + 1)) * rng.choice([-1, 1], n) + rng.uniform(0, 0.5, n)
        w, p = brute_signed_rank_p(d)
        res = wilcoxon_signed_rank(np.column_stack([d, np.zeros(n)]), mode="exact")
        assert res.statistic == w
        assert res.p_value == p


def test_rank_sum_matches_enumeration_bitwise():
    rng = np.random.default_rng(22)
    for _ in range(100):
        n1 = int(rng.integers(1, 6))
        n2 = int(rng.integers(1, 6))
        pooled = rng.permutation(n1 + n2) + rng.uniform(0, 0.1)
        a, b = pooled[:n1], pooled[n1:]
        w, p = brute_rank_sum_p(a, b)
        res = wilcoxon_rank_sum(a, b, mode="exact")
        assert res.statistic == w
        assert res.p_value == p


def test_one_sided_tails():
    res = wilcoxon_signed_rank([(1, 0), (2, 0), (3, 0)], alternative="greater")
    assert res.p_value == 0.125
    res = wilcoxon_signed_rank([(1, 0), (2, 0), (3, 0)], alternative="less")
    assert res.p_value == 1.0


def test_tie_correction_matches_scipy():
    d = np.array([1, 1, 2, 2, 2, -3, 4, 5, -5, 6, 7, 7, 8, 9, 10, 11])
    res = wilcoxon_signed_rank(np.column_stack([d, np.zeros_like(d)]))
    ref = sps.wilcoxon(d, method="approx", correction=False)
    assert res.method == "normal_approx"
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)
    res_cc = wilcoxon_signed_rank(np.column_stack([d, np.zeros_like(d)]), continuity=True)
    ref_cc = sps.wilcoxon(d, method="approx", correction=True)
    assert res_cc.method == "normal_approx_cc"
    assert res_cc.p_value == pytest.approx(ref_cc.pvalue, rel=1e-9)


def test_rank_sum_approx_matches_scipy():
    a = [1.5, 2.0, 2.0, 3.1, 4.4, 5.0, 6.2, 7.0, 7.0, 8.8, 9.1, 10.0, 11.5]
    b = [0.5, 1.0, 2.0, 2.2, 3.1, 3.3, 4.0, 4.1, 5.0, 5.5, 6.0, 6.1, 6.3]
    res = wilcoxon_rank_sum(a, b, continuity=True)
    ref = sps.mannwhitneyu(a, b, method="asymptotic", use_continuity=True)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def _worst_gap(counts, mean, var):
    # largest |exact − approx| over every attainable statistic value
    sd = math.sqrt(var)
    worst = 0.0
    for w in range(len(counts)):
        if counts[w] == 0:
            continue
        exact = exact_p_from_counts(counts, w, "two_sided")
        diff = math.copysign(max(abs(w - mean) - 0.5, 0.0), w - mean)
        approx = min(1.0, 2.0 * normal_sf(abs(diff) / sd))
        worst = max(worst, abs(exact - approx))
    return worst


@pytest.mark.parametrize("n", [17, 20, 25, 30])
def test_signed_rank_exact_and_approx_converge(n):
    var = n * (n + 1) * (2 * n + 1) / 24
    assert _worst_gap(signed_rank_counts(n), n * (n + 1) / 4, var) < 0.01


@pytest.mark.parametrize("n", [15, 16])
def test_signed_rank_gap_just_above_bound_at_small_n(n):
    # the continuity-corrected normal tail overshoots the lattice by ~0.011 here
    var = n * (n + 1) * (2 * n + 1) / 24
    assert _worst_gap(signed_rank_counts(n), n * (n + 1) / 4, var) < 0.012


@pytest.mark.parametrize("n", [15, 20])
def test_rank_sum_exact_and_approx_converge(n):
    N = 2 * n
    assert _worst_gap(rank_sum_counts(n, n), n * (N + 1) / 2, n * n * (N + 1) / 12) < 0.01


def test_library_approx_matches_worst_gap_helper():
    rng = np.random.default_rng(15)
    for _ in range(30):
        d = rng.permutation(np.arange(1, 18)) * rng.choice([-1, 1], 17) + 0.25
        pairs = np.column_stack([d, np.zeros(17)])
        ex = wilcoxon_signed_rank(pairs, mode="exact").p_value
        ap = wilcoxon_signed_rank(pairs, mode="approx", continuity=True).p_value
        assert abs(ex - ap) < 0.01
        pooled = rng.permutation(30) + 0.5
        ex = wilcoxon_rank_sum(pooled[:15], pooled[15:], mode="exact").p_value
        ap = wilcoxon_rank_sum(pooled[:15], pooled[15:], mode="approx", continuity=True).p_value
        assert abs(ex - ap) < 0.01


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=12),
       st.lists(st.floats(-100, 100), min_size=1, max_size=12))
def test_rank_sum_mann_whitney_identity(a, b):
    n1 = len(a)
    res = wilcoxon_rank_sum(a, b, mode="approx")
    assert res.statistic == pytest.approx(mann_whitney_u(a, b) + n1 * (n1 + 1) / 2, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=3, max_size=15),
       st.lists(st.integers(-50, 50), min_size=3, max_size=15),
       st.integers(-1000, 1000), st.sampled_from([0.25, 0.5, 2.0, 8.0]))
def test_shift_and_scale_invariance(a, b, shift, scale):
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    base = wilcoxon_rank_sum(a, b, mode="approx")
    moved = wilcoxon_rank_sum(a * scale + shift, b * scale + shift, mode="approx")
    assert moved.statistic == base.statistic
    assert moved.p_value == pytest.approx(base.p_value, abs=1e-12)
    m = min(len(a), len(b))
    pairs = np.column_stack([a[:m], b[:m]])
    if np.any(pairs[:, 0] != pairs[:, 1]):
        sr = wilcoxon_signed_rank(pairs)
        sr2 = wilcoxon_signed_rank(pairs * scale + shift)
        assert sr2.statistic == sr.statistic
        assert sr2.p_value == pytest.approx(sr.p_value, abs=1e-12)


def test_rankdata_midranks():
    assert list(rankdata([10, 20, 20, 30])) == [1.0, 2.5, 2.5, 4.0]


def test_anova_hand_example():
    table = one_way_anova([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    assert table.ss_between == pytest.approx(6.0, abs=1e-12)
    assert table.ss_within == pytest.approx(6.0, abs=1e-12)
    assert (table.df_between, table.df_within) == (2, 6)
    assert abs(table.f - 3.0) < 1e-9
    assert table.p == pytest.approx(sps.f.sf(3.0, 2, 6), rel=1e-10)


def test_anova_zero_within_variance():
    with pytest.raises(DegenerateError):
        one_way_anova([[1, 1, 1], [2, 2, 2], [5, 5, 5]])


def test_anova_preconditions():
    with pytest.raises(ParameterError):
        one_way_anova([[1, 2, 3]])
    with pytest.raises(ParameterError):
        one_way_anova([[1, 2], [3]])


def pooled_t(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    na, nb = len(a), len(b)
    sp2 = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / (na + nb - 2)
    return (a.mean() - b.mean()) / math.sqrt(sp2 * (1 / na + 1 / nb))


def test_two_group_anova_equals_t_squared():
    rng = np.random.default_rng(31)
    for _ in range(20):
        a = rng.normal(0, 1, int(rng.integers(2, 15)))
        b = rng.normal(0.5, 2, int(rng.integers(2, 15)))
        table = one_way_anova([a, b])
        assert abs(table.f - pooled_t(a, b) ** 2) < 1e-9 * max(1.0, table.f)
        assert table.p == pytest.approx(sps.ttest_ind(a, b).pvalue, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.integers(0, 100), min_size=2, max_size=8), min_size=2, max_size=5),
       st.floats(-1e3, 1e3), st.floats(0.1, 10))
def test_anova_shift_scale_invariance(groups, shift, scale):
    try:
        base = one_way_anova(groups)
    except DegenerateError:
        return
    moved = one_way_anova([[v * scale + shift for v in g] for g in groups])
    assert moved.f == pytest.approx(base.f, rel=1e-9, abs=1e-9)
    assert moved.p == pytest.approx(base.p, rel=1e-7, abs=1e-12)


def test_anova_matches_scipy():
    rng = np.random.default_rng(32)
    groups = [rng.normal(m, 1, n) for m, n in ((0, 5), (1, 7), (0.3, 4), (2, 9))]
    table = one_way_anova(groups)
    ref = sps.f_oneway(*groups)
    assert table.f == pytest.approx(ref.statistic, rel=1e-10)
    assert table.p == pytest.approx(ref.pvalue, rel=1e-8)


def test_tukey_identical_means():
    res = tukey_hsd([[1, 2, 3], [3, 2, 1], [2, 1, 3]])
    assert not any(p.significant for p in res.pairs)
    assert all(p.mean_diff == 0 for p in res.pairs)


def test_tukey_critical_value():
    res = tukey_hsd([[1, 2, 3, 4, 5], [2, 3, 4, 5, 6], [3, 4, 5, 6, 7.5]])
    assert res.df_within == 12 and res.k == 3
    assert res.q_crit == pytest.approx(sps.studentized_range.ppf(0.95, 3, 12), abs=1e-3)


def test_tukey_symmetry_and_scipy_agreement():
    rng = np.random.default_rng(33)
    groups = {"a": rng.normal(0, 1, 8), "b": rng.normal(2.5, 1, 8), "c": rng.normal(0.2, 1, 6)}
    res = tukey_hsd(groups)
    for a, b in itertools.permutations("abc", 2):
        assert res.is_significant(a, b) == res.is_significant(b, a)
    ref = sps.tukey_hsd(*groups.values())
    idx = {"a": 0, "b": 1, "c": 2}
    for p in res.pairs:
        assert p.p_adj == pytest.approx(ref.pvalue[idx[p.group_i], idx[p.group_j]], abs=1e-3)
        assert p.mean_diff == pytest.approx(groups[p.group_j].mean() - groups[p.group_i].mean())
    assert res.is_significant("a", "b") and not res.is_significant("a", "c")


def test_tukey_alpha_validation():
    with pytest.raises(ParameterError):
        tukey_hsd([[1, 2], [3, 4]], alpha=1.5)
