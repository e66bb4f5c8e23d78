"""Statistical tests and distribution functions."""
from .distributions import (
    betainc,
    f_cdf,
    f_sf,
    normal_cdf,
    normal_sf,
    student_t_cdf,
    student_t_sf,
    studentized_range_cdf,
    studentized_range_quantile,
    studentized_range_sf,
)
from .inference import (
    AnovaTable,
    TestResult,
    TukeyPair,
    TukeyResult,
    mann_whitney_u,
    one_way_anova,
    rankdata,
    tukey_hsd,
    wilcoxon_rank_sum,
    wilcoxon_signed_rank,
)

__all__ = [
    "AnovaTable", "TestResult", "TukeyPair", "TukeyResult",
    "betainc", "f_cdf", "f_sf", "normal_cdf", "normal_sf", "student_t_cdf", "student_t_sf",
    "studentized_range_cdf", "studentized_range_quantile", "studentized_range_sf",
    "mann_whitney_u", "one_way_anova", "rankdata", "tukey_hsd",
    "wilcoxon_rank_sum", "wilcoxon_signed_rank",
]
