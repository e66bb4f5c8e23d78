"""
Cohort analysis: per-cat rhythm metrics, cohort summaries, the statistical
comparisons, and report/plot-data serialization.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Sequence

import numpy as np

from .ephemeris import DayContext, local_day_index
from .errors import ActirhythmError
from .ingest import SampleSeries, assemble_sessions
from .rhythm import (
    HOURS,
    CohortSummary,
    DayNightSplit,
    HourlyProfile,
    TimeBudget,
    cohort_aggregate,
    daynight_split,
    hourly_profile,
    time_budget,
)
from .signal import ActivityLevelSeries, estimate_activity
from .stats import one_way_anova, tukey_hsd, wilcoxon_rank_sum, wilcoxon_signed_rank

TUKEY_MARK_RULE = "hour significantly greater than at least half of the other hours"


@dataclass(frozen=True)
class CatResult:
    cat_id: str
    n_samples: int
    skipped: int
    sessions: int
    budget: TimeBudget
    split: DayNightSplit
    profile: HourlyProfile


@dataclass
class CohortResult:
    cats: list[CatResult]
    errors: dict[str, str] = field(default_factory=dict)
    summaries: dict[str, CohortSummary] = field(default_factory=dict)
    tests: dict = field(default_factory=dict)


def levels_date_span(levels: Sequence[ActivityLevelSeries]) -> tuple[date, date]:
    lo = min(int(local_day_index(lv.start_ms[:1], lv.tz_offset)[0]) for lv in levels if len(lv))
    hi = max(int(local_day_index(lv.start_ms[-1:], lv.tz_offset)[0]) for lv in levels if len(lv))
    epoch = date(1970, 1, 1)
    return epoch + timedelta(days=lo), epoch + timedelta(days=hi)


def analyze_cat(series: SampleSeries, levels: ActivityLevelSeries, contexts: Sequence[DayContext],
                gap_threshold: float = 15.0) -> CatResult:
    return CatResult(
        cat_id=series.cat_id,
        n_samples=len(series),
        skipped=series.skipped_count,
        sessions=len(assemble_sessions(series, gap_threshold)),
        budget=time_budget(levels),
        split=daynight_split(levels, contexts),
        profile=hourly_profile(levels),
    )


def cohort_statistics(cats: Sequence[CatResult], wilcoxon_mode: str = "auto", alpha: float = 0.05) -> tuple[dict, dict]:
    """Cohort summaries and the three comparisons; empty when fewer than two cats."""
    if len(cats) < 2:
        return {}, {}
    summaries = {
        "active_fraction": cohort_aggregate({c.cat_id: c.budget.active_fraction for c in cats}, "active_fraction"),
        "inactive_fraction": cohort_aggregate({c.cat_id: c.budget.inactive_fraction for c in cats}, "inactive_fraction"),
    }
    shared = [c for c in cats if c.split.day_share is not None]
    if len(shared) >= 2:
        summaries["day_share"] = cohort_aggregate({c.cat_id: c.split.day_share for c in shared}, "day_share")
        summaries["night_share"] = cohort_aggregate({c.cat_id: c.split.night_share for c in shared}, "night_share")
    summaries["day_rate"] = cohort_aggregate({c.cat_id: c.split.day_rate for c in cats}, "day_rate")
    summaries["night_rate"] = cohort_aggregate({c.cat_id: c.split.night_rate for c in cats}, "night_rate")

    tests: dict = {}
    try:
        tests["inactive_vs_active"] = wilcoxon_signed_rank(
            [(c.budget.inactive_fraction, c.budget.active_fraction) for c in cats], mode=wilcoxon_mode
        ).as_dict()
    except ActirhythmError as exc:
        tests["inactive_vs_active"] = {"error": str(exc)}
    if len(shared) >= 1:
        tests["day_vs_night"] = wilcoxon_rank_sum(
            [c.split.day_share for c in shared], [c.split.night_share for c in shared], mode=wilcoxon_mode
        ).as_dict()

    groups = {}
    for h in range(HOURS):
        vals = [float(c.profile.bins[h]) for c in cats if not math.isnan(c.profile.bins[h])]
        groups[h] = vals
    usable = {h: v for h, v in groups.items() if len(v) >= 2}
    try:
        table = one_way_anova(usable)
        tukey = tukey_hsd(usable, alpha)
        marked = []
        for h in usable:
            wins = sum(1 for p in tukey.pairs if p.significant and (
                (p.group_i == h and p.mean_diff < 0) or (p.group_j == h and p.mean_diff > 0)))
            if wins >= (len(usable) - 1) / 2.0:
                marked.append(h)
        tests["hourly_anova"] = table.as_dict()
        tests["hourly_tukey"] = {
            "alpha": tukey.alpha,
            "q_crit": tukey.q_crit,
            "k": tukey.k,
            "df_within": tukey.df_within,
            "marked_hours": marked,
            "pairs": [
                {"hour_i": p.group_i, "hour_j": p.group_j, "mean_diff": p.mean_diff, "q": p.q_stat,
                 "p_adj": p.p_adj, "significant": p.significant}
                for p in tukey.pairs
            ],
        }
    except ActirhythmError as exc:
        tests["hourly_anova"] = {"error": str(exc)}
    return summaries, tests


def run_cohort(
    series_list: Sequence[SampleSeries],
    threshold: float,
    contexts: Sequence[DayContext],
    gap_threshold: float = 15.0,
    wilcoxon_mode: str = "auto",
    alpha: float = 0.05,
) -> CohortResult:
    cats = []
    errors = {}
    for s in sorted(series_list, key=lambda s: s.cat_id):
        try:
            levels = estimate_activity(s, threshold, gap_threshold)
            cats.append(analyze_cat(s, levels, contexts, gap_threshold))
        except ActirhythmError as exc:
            errors[s.cat_id] = f"{type(exc).__name__}: {exc}"
    summaries, tests = cohort_statistics(cats, wilcoxon_mode, alpha)
    return CohortResult(cats, errors, summaries, tests)


# ------------------------------------------------------------ serialization


def _num(x):
    if x is None:
        return None
    if isinstance(x, (np.floating, float)):
        return None if math.isnan(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def cat_dict(c: CatResult) -> dict:
    return {
        "n_samples": c.n_samples,
        "skipped_rows": c.skipped,
        "sessions": c.sessions,
        "epochs": c.budget.epochs_counted,
        "active_epochs": c.budget.active_epochs,
        "active_fraction": c.budget.active_fraction,
        "inactive_fraction": c.budget.inactive_fraction,
        "day_share": c.split.day_share,
        "night_share": c.split.night_share,
        "day_rate": c.split.day_rate,
        "night_rate": c.split.night_rate,
        "day_epochs": c.split.day_epochs,
        "night_epochs": c.split.night_epochs,
        "share_undefined": c.split.undefined,
        "hourly": [_num(v) for v in c.profile.bins],
        "days_observed": len(c.profile.days),
    }


def summary_dict(s: CohortSummary) -> dict:
    return {"n": s.n, "mean": s.mean, "std": s.std, "ddof": s.ddof, "outliers": list(s.outliers)}


def result_document(result: CohortResult, metadata: dict) -> dict:
    return {
        "metadata": metadata,
        "per_cat": {c.cat_id: cat_dict(c) for c in result.cats},
        "cohort": {k: summary_dict(v) for k, v in result.summaries.items()} or None,
        "tests": result.tests or None,
        "errors": dict(sorted(result.errors.items())),
    }


def _csv(rows: list[list], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _marker(p) -> str:
    if p is None:
        return ""
    return "**" if p < 0.01 else "*" if p < 0.05 else "ns"


def result_files(result: CohortResult, metadata: dict) -> dict[str, str]:
    """All report artifacts as {relative filename: text}."""
    files = {"analysis.json": json.dumps(result_document(result, metadata), indent=2, sort_keys=True) + "\n"}
    files["per_cat.csv"] = _csv(
        [[c.cat_id, c.budget.epochs_counted, c.budget.active_fraction, c.budget.inactive_fraction,
          c.split.day_share, c.split.night_share, c.split.day_rate, c.split.night_rate] for c in result.cats],
        ["cat_id", "epochs", "active_fraction", "inactive_fraction", "day_share", "night_share",
         "day_rate", "night_rate"],
    )
    files["hourly.csv"] = _csv(
        [[c.cat_id] + [float(v) for v in c.profile.bins] for c in result.cats],
        ["cat_id"] + [f"h{h:02d}" for h in range(HOURS)],
    )
    if result.summaries:
        files["cohort.csv"] = _csv(
            [[k, s.n, s.mean, s.std, ";".join(s.outliers)] for k, s in result.summaries.items()],
            ["metric", "n", "mean", "std", "outliers"],
        )
        t = result.tests
        act = result.summaries["active_fraction"]
        inact = result.summaries["inactive_fraction"]
        p_ai = t.get("inactive_vs_active", {}).get("p_value")
        files["plot_time_budget.csv"] = _csv(
            [["inactive", inact.mean, inact.std, _marker(p_ai)], ["active", act.mean, act.std, _marker(p_ai)]],
            ["state", "mean", "std", "marker"],
        )
        if "day_share" in result.summaries:
            d, n = result.summaries["day_share"], result.summaries["night_share"]
            p_dn = t.get("day_vs_night", {}).get("p_value")
            files["plot_daynight.csv"] = _csv(
                [["photophase", d.mean, d.std, _marker(p_dn)], ["scotophase", n.mean, n.std, _marker(p_dn)]],
                ["phase", "mean", "std", "marker"],
            )
        marked = set(t.get("hourly_tukey", {}).get("marked_hours", []))
        rows = []
        for h in range(HOURS):
            vals = np.array([c.profile.bins[h] for c in result.cats], dtype=float)
            vals = vals[~np.isnan(vals)]
            mean = float(vals.mean()) if len(vals) else None
            std = float(vals.std(ddof=1)) if len(vals) > 1 else None
            rows.append([h, mean, std, "m" if h in marked else ""])
        files["plot_hourly.csv"] = _csv(rows, ["hour", "mean", "std", "marker"])
        if "hourly_tukey" in t:
            files["tukey.csv"] = _csv(
                [[p["hour_i"], p["hour_j"], p["mean_diff"], p["q"], p["p_adj"], int(p["significant"])]
                 for p in t["hourly_tukey"]["pairs"]],
                ["hour_i", "hour_j", "mean_diff", "q", "p_adj", "significant"],
            )
    return files


def render_summary(doc: dict) -> str:
    """Plain-text digest of an analysis document."""
    meta = doc.get("metadata", {})
    lines = [f"actirhythm {meta.get('tool_version', '?')} analysis",
             f"threshold: {meta.get('threshold')} ({meta.get('threshold_source')})", ""]
    lines.append(f"{'cat':<12}{'active %':>10}{'day %':>9}{'night %':>9}{'peak h':>8}")
    for cat, c in doc.get("per_cat", {}).items():
        hourly = [v for v in c["hourly"] if v is not None]
        peak = c["hourly"].index(max(hourly)) if hourly else None
        day = "" if c["day_share"] is None else f"{c['day_share']:.2f}"
        night = "" if c["night_share"] is None else f"{c['night_share']:.2f}"
        lines.append(f"{cat:<12}{c['active_fraction']:>10.2f}{day:>9}{night:>9}{'' if peak is None else peak:>8}")
    cohort = doc.get("cohort")
    if cohort:
        lines.append("")
        for k, s in cohort.items():
            out = f" outliers: {', '.join(s['outliers'])}" if s["outliers"] else ""
            lines.append(f"{k}: mean {s['mean']:.3f}, std {s['std']:.3f} (n={s['n']}){out}")
    tests = doc.get("tests")
    if tests:
        lines.append("")
        for name in ("inactive_vs_active", "day_vs_night"):
            r = tests.get(name)
            if r and "statistic" in r:
                lines.append(f"{name}: W = {r['statistic']:g}, p = {r['p_value']:.3g} ({r['method']})")
        a = tests.get("hourly_anova")
        if a and "f" in a:
            lines.append(f"hourly ANOVA: F({a['df_between']}, {a['df_within']}) = {a['f']:.3f}, p = {a['p']:.3g}")
        tk = tests.get("hourly_tukey")
        if tk:
            lines.append(f"Tukey marked hours: {', '.join(str(h) for h in tk['marked_hours']) or 'none'}")
    if doc.get("errors"):
        lines.append("")
        for cat, msg in doc["errors"].items():
            lines.append(f"error {cat}: {msg}")
    return "\n".join(lines) + "\n"
