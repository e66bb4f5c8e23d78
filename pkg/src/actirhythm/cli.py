"""Command-line entry point: ``actirhythm {synth,calibrate,analyze,report}``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import date, timedelta
from pathlib import Path

from . import __version__
from .analysis import TUKEY_MARK_RULE, levels_date_span, render_summary, result_files, run_cohort
from .calibrate import calibrate_many, report_json, roc_csv
from .ephemeris import (
    SITE_PRESETS,
    GeoSite,
    build_day_contexts,
    format_sun_table,
    local_day_index,
    read_sun_table,
)
from .errors import ActirhythmError
from .ingest import format_label_csv, parse_label_log, parse_timestamp, read_imu_file, write_samples_csv
from .signal import estimate_activity
from .synthkit import (
    ActivitySchedule,
    NoiseModel,
    SynthCat,
    cohort_preset,
    generate_trace,
    schedule_label_events,
    truth_json,
)

log = logging.getLogger("actirhythm")

CONFIG_ENV = "ACTIRHYTHM_CONFIG"
EXIT_OK, EXIT_PARTIAL, EXIT_UNUSABLE = 0, 1, 2


@dataclass
class RunConfig:
    samples: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    units: str = "m_per_s2"
    tz_offset: int | None = None
    threshold: float | str = 0.025
    gap_threshold: float = 15.0
    window: float = 5.0
    ratio: float = 0.2
    intensity_window: float = 60.0
    align_tolerance: float = 1.0
    roc_steps: int = 512
    criterion: str = "youden"
    site: str | None = "ava"
    sun_table: str | None = None
    fixed_times: list[str] | None = None
    wilcoxon_mode: str = "auto"
    alpha: float = 0.05
    out: str = "out"
    seed: int = 2020
    jobs: int = 1
    cats: int = 12
    days: int = 21
    start: str = "2020-09-21"
    schedule: str | None = None

    def validate(self):
        if not isinstance(self.threshold, str) and self.threshold < 0:
            raise ActirhythmError("threshold must be non-negative")
        if isinstance(self.threshold, str) and self.threshold != "calibrate":
            raise ActirhythmError("threshold must be a number or 'calibrate'")
        if self.gap_threshold <= 0:
            raise ActirhythmError("gap_threshold must be positive")

    def resolve_site(self) -> GeoSite | None:
        if self.site is None:
            return None
        if self.site in SITE_PRESETS:
            site = SITE_PRESETS[self.site]
        else:
            parts = [float(p) for p in self.site.split(",")]
            if len(parts) not in (2, 3):
                raise ActirhythmError(f"site must be a preset or 'lat,lon[,tz_minutes]': {self.site!r}")
            site = GeoSite(parts[0], parts[1], int(parts[2]) if len(parts) == 3 else 0)
        if self.tz_offset is not None:
            site = GeoSite(site.latitude, site.longitude, self.tz_offset, site.name)
        return site

    def effective_tz(self) -> int:
        if self.tz_offset is not None:
            return self.tz_offset
        site = self.resolve_site()
        return site.tz_offset if site else 0

    def digest(self) -> str:
        # where results go and how many workers parse them do not change them
        doc = {k: v for k, v in asdict(self).items() if k not in ("out", "jobs")}
        blob = json.dumps(doc, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_config(args: argparse.Namespace) -> RunConfig:
    """File values first (``--config`` or $ACTIRHYTHM_CONFIG), then flags on top."""
    values: dict = {}
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        doc = json.loads(Path(path).read_text())
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ActirhythmError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and flag != []:
            values[key] = flag
    if isinstance(values.get("threshold"), str) and values["threshold"] != "calibrate":
        values["threshold"] = float(values["threshold"])
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _expand(paths: list[str]) -> list[Path]:
    out = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(path.glob("*.csv")))
        else:
            out.append(path)
    return out


def _write_tree(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        target = out / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)


def _metadata(cfg: RunConfig, **extra) -> dict:
    meta = {
        "tool_version": __version__,
        "config_hash": cfg.digest(),
        "methods": {
            "std_denominator": "n-1",
            "wilcoxon_mode": cfg.wilcoxon_mode,
            "inactive_vs_active_test": "signed_rank (paired by cat)",
            "day_vs_night_test": "rank_sum (unpaired)",
            "roc_criterion": cfg.criterion,
            "roc_grid": f"uniform 0..max(dA), {cfg.roc_steps} steps",
            "hourly_averaging": "per-day proportion, then mean over covered days",
            "epoch_time_reference": "interval start",
            "daynight_source": ("sun_table" if cfg.sun_table else
                                "fixed_times" if cfg.fixed_times else f"solar:{cfg.site}"),
            "tukey_marker_rule": TUKEY_MARK_RULE,
            "classification": "dA > threshold (strict)",
        },
    }
    meta.update(extra)
    return meta


def _calibration_inputs(cfg: RunConfig):
    samples = _expand(cfg.samples)
    labels = _expand(cfg.labels)
    if not labels:
        raise FileNotFoundError("no label files supplied")
    if len(labels) != len(samples):
        raise ActirhythmError(f"{len(samples)} sample files but {len(labels)} label files")
    recs = []
    for s, l in zip(samples, labels):
        track = parse_label_log(Path(l).read_text())
        if len(track) == 0:
            raise ActirhythmError(f"label file {l} has no events")
        recs.append((read_imu_file(s, units=cfg.units, tz_offset=cfg.effective_tz()), track))
    return recs


def _calibrate(cfg: RunConfig):
    return calibrate_many(
        _calibration_inputs(cfg), criterion=cfg.criterion, steps=cfg.roc_steps,
        gap_threshold=cfg.gap_threshold, window=cfg.window, ratio=cfg.ratio,
        tolerance=cfg.align_tolerance, intensity_window=cfg.intensity_window,
    )


def cmd_calibrate(cfg: RunConfig) -> int:
    try:
        report = _calibrate(cfg)
    except (ActirhythmError, OSError, ValueError) as exc:
        log.error("calibration input unusable: %s", exc)
        return EXIT_UNUSABLE
    out = Path(cfg.out)
    _write_tree(out, {
        "roc.csv": roc_csv(report.curve),
        "calibration.json": report_json(report, _metadata(cfg)) + "\n",
        "threshold.txt": f"{report.selected.threshold!r}\n",
    })
    log.info("selected threshold %.6g (AUC %s)", report.selected.threshold, report.curve.auc)
    return EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    paths = _expand(cfg.samples)
    if not paths:
        log.error("no sample files supplied")
        return EXIT_UNUSABLE
    tz = cfg.effective_tz()

    calibration = None
    if cfg.threshold == "calibrate":
        try:
            calibration = _calibrate(cfg)
        except (ActirhythmError, OSError, ValueError) as exc:
            log.error("calibration failed: %s", exc)
            return EXIT_UNUSABLE
        threshold = calibration.selected.threshold
    else:
        threshold = float(cfg.threshold)

    def load(path: Path):
        try:
            return read_imu_file(path, units=cfg.units, tz_offset=tz)
        except (ActirhythmError, OSError, ValueError) as exc:
            return f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        loaded = list(pool.map(load, paths))
    series, errors = [], {}
    for path, item in zip(paths, loaded):
        if isinstance(item, str):
            errors[path.stem] = item
        else:
            series.append(item)
    if not series:
        for cat, msg in errors.items():
            log.error("%s: %s", cat, msg)
        return EXIT_UNUSABLE

    try:
        levels = [estimate_activity(s, threshold, cfg.gap_threshold) for s in series]
        first, last = levels_date_span([lv for lv in levels if len(lv)])
        table = read_sun_table(Path(cfg.sun_table).read_text(), tz) if cfg.sun_table else None
        contexts = build_day_contexts(first, last, site=cfg.resolve_site(), table=table,
                                      fixed_times=tuple(cfg.fixed_times) if cfg.fixed_times else None,
                                      tz_offset=tz)
    except (ActirhythmError, OSError, ValueError) as exc:
        log.error("cannot build day contexts: %s", exc)
        return EXIT_UNUSABLE

    result = run_cohort(series, threshold, contexts, cfg.gap_threshold, cfg.wilcoxon_mode, cfg.alpha)
    result.errors.update(errors)
    extra = {
        "threshold": threshold,
        "threshold_source": "calibrated" if calibration else "fixed",
        "gap_threshold": cfg.gap_threshold,
        "tz_offset": tz,
        "date_span": [first.isoformat(), last.isoformat()],
        "mean_daylight_hours": sum(c.daylight.total_seconds() for c in contexts) / len(contexts) / 3600.0,
    }
    if calibration:
        extra["calibration"] = calibration.as_dict()
    files = result_files(result, _metadata(cfg, **extra))
    files["summary.txt"] = render_summary(json.loads(files["analysis.json"]))
    _write_tree(Path(cfg.out), files)
    if not result.cats:
        return EXIT_UNUSABLE
    return EXIT_PARTIAL if result.errors else EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    path = Path(cfg.out) / "analysis.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        log.error("cannot read %s: %s", path, exc)
        return EXIT_UNUSABLE
    text = render_summary(doc)
    (Path(cfg.out) / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _load_schedule(path: str) -> ActivitySchedule:
    doc = json.loads(Path(path).read_text())
    rows = doc["intervals"] if isinstance(doc, dict) else doc
    return ActivitySchedule.from_intervals(
        [(parse_timestamp(r["start"]), parse_timestamp(r["end"]), r["state"]) for r in rows]
    )


def cmd_synth(cfg: RunConfig) -> int:
    tz = cfg.effective_tz()
    try:
        start = date.fromisoformat(cfg.start)
        if cfg.schedule:
            sched = _load_schedule(cfg.schedule)
            cats = [SynthCat("cat01", sched, (), NoiseModel(seed=cfg.seed), 1.0, tz)]
        else:
            cats = cohort_preset(n_cats=cfg.cats, days=cfg.days, start=start, tz_offset=tz, seed=cfg.seed)
    except (ActirhythmError, KeyError, ValueError, OSError) as exc:
        log.error("invalid schedule: %s", exc)
        return EXIT_UNUSABLE

    epoch = date(1970, 1, 1)
    lo = min(int(local_day_index([c.schedule.span[0]], tz)[0]) for c in cats)
    hi = max(int(local_day_index([c.schedule.span[1] - 1], tz)[0]) for c in cats)
    first, last = epoch + timedelta(days=lo), epoch + timedelta(days=hi)
    site = cfg.resolve_site()
    if site is not None:
        contexts = build_day_contexts(first, last, site=site)
    else:
        contexts = build_day_contexts(first, last, fixed_times=("07:00", "19:00"), tz_offset=tz)

    out = Path(cfg.out)
    for sub in ("samples", "truth", "labels"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for cat in cats:
        series, _ = generate_trace(cat.schedule, cat.noise, gaps=cat.gaps, cat_id=cat.cat_id, tz_offset=tz)
        write_samples_csv(series, out / "samples" / f"{cat.cat_id}.csv")
        (out / "truth" / f"{cat.cat_id}.json").write_text(truth_json(cat, contexts) + "\n")
        (out / "labels" / f"{cat.cat_id}.csv").write_text(format_label_csv(schedule_label_events(cat.schedule)))
    (out / "sun_table.csv").write_text(format_sun_table(contexts))
    log.info("wrote %d synthetic cats to %s", len(cats), out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actirhythm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--site", help="preset name (e.g. 'ava') or 'lat,lon[,tz_minutes]'")
    common.add_argument("--sun-table", dest="sun_table", help="CSV of date,sunrise_local,sunset_local")
    common.add_argument("--tz-offset", dest="tz_offset", type=int, help="local offset from UTC, minutes")
    common.add_argument("--threshold", help="classification threshold or 'calibrate'")
    common.add_argument("--gap-threshold", dest="gap_threshold", type=float, help="session gap, seconds")
    common.add_argument("--samples", nargs="*", default=[], help="sample CSV files or directories")
    common.add_argument("--labels", nargs="*", default=[], help="label CSV files, paired with --samples")
    common.add_argument("--units", choices=("milli_g", "m_per_s2"))
    common.add_argument("--criterion", choices=("youden", "closest_to_corner"))
    common.add_argument("--steps", dest="roc_steps", type=int, help="ROC grid steps")
    common.add_argument("--fixed-times", dest="fixed_times", nargs=2, metavar=("SUNRISE", "SUNSET"),
                        help="use fixed clock times instead of solar events")
    common.add_argument("--wilcoxon-mode", dest="wilcoxon_mode", choices=("auto", "exact", "approx"))
    common.add_argument("--jobs", type=int, help="parallel file parsers")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="ROC threshold calibration from labeled data")
    sub.add_parser("analyze", parents=[common], help="time budget, day/night and hourly analysis")
    sub.add_parser("report", parents=[common], help="print the summary of an analysis directory")
    synth = sub.add_parser("synth", parents=[common], help="write synthetic fixtures")
    synth.add_argument("--cats", type=int)
    synth.add_argument("--days", type=int)
    synth.add_argument("--start", help="first local date, YYYY-MM-DD")
    synth.add_argument("--schedule", help="JSON list of {start, end, state} intervals")
    return parser


COMMANDS = {"calibrate": cmd_calibrate, "analyze": cmd_analyze, "report": cmd_report, "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
    except (ActirhythmError, OSError, ValueError, TypeError) as exc:
        log.error("bad configuration: %s", exc)
        return EXIT_UNUSABLE
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
