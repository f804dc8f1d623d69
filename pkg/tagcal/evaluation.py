"""Leave-one-session-out evaluation, the KS test and report assembly."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Final, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from rich import box
from rich.console import Console
from rich.table import Table
from scipy.special import kolmogorov

from .calibration import CalibModel, TrainConfig, TrainingError, calibrate_session, train_records
from .core import (
    DEFAULT_SMOOTHING_WINDOW,
    Scenario,
    Session,
    Technology,
    euclidean_errors,
    moving_average,
)
from .formatting import fmt_measurement, fmt_metres, fmt_percent

logger = logging.getLogger(__name__)

COMBINED: Final[str] = "combined"
CDF_POINTS: Final[int] = 201
FOLDS_HEADER: Final[Tuple[str, ...]] = (
    "scenario",
    "fold",
    "baseline_mean_m",
    "icon_mean_m",
    "ks_D",
    "ks_p",
)
CDF_HEADER: Final[Tuple[str, ...]] = ("error_m", "baseline_cdf", "icon_cdf")
ERRORS_HEADER: Final[Tuple[str, ...]] = (
    "scenario",
    "fold",
    "baseline_error_m",
    "icon_error_m",
)


class EvaluationError(ValueError):
    """Raised when an evaluation precondition does not hold."""


@dataclass(frozen=True)
class FoldResult:
    held_out: str
    scenario: str
    baseline_errors: np.ndarray
    icon_errors: np.ndarray
    train_ids: Tuple[str, ...] = ()
    failed: bool = False
    error: Optional[str] = None
    model: Optional[CalibModel] = None

    def __post_init__(self) -> None:
        if len(self.baseline_errors) != len(self.icon_errors):
            raise EvaluationError(f"Fold {self.held_out}: error series differ in length")
        if np.any(self.baseline_errors < 0) or np.any(self.icon_errors < 0):
            raise EvaluationError(f"Fold {self.held_out}: errors must be >= 0")


@dataclass(frozen=True, slots=True)
class EvaluationConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    workers: int = 1

    def __post_init__(self) -> None:
        if self.smoothing_window < 1:
            raise EvaluationError("smoothing_window must be >= 1")
        if self.workers < 1:
            raise EvaluationError("workers must be >= 1")


def loso_split(sessions: Sequence[Session]) -> list[Tuple[Tuple[Session, ...], Session]]:
    if len(sessions) < 2:
        raise EvaluationError(
            f"Leave-one-session-out needs at least 2 sessions, got {len(sessions)}"
        )
    return [
        (tuple(s for j, s in enumerate(sessions) if j != i), held_out)
        for i, held_out in enumerate(sessions)
    ]


def _run_fold(
    train_set: Tuple[Session, ...], test: Session, cfg: EvaluationConfig
) -> FoldResult:
    train_ids = tuple(s.id for s in train_set)
    truths = test.truths()
    baseline = moving_average(test.baselines(), cfg.smoothing_window)
    baseline_errors = euclidean_errors(baseline, truths)
    records = [record for session in train_set for record in session.records]
    try:
        model = train_records(records, cfg.train).model
        calibrated = calibrate_session(model, test, cfg.smoothing_window)
    except (TrainingError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("Fold %s failed: %s", test.id, exc)
        return FoldResult(
            held_out=test.id,
            scenario=test.scenario.value,
            baseline_errors=baseline_errors,
            icon_errors=np.zeros_like(baseline_errors),
            train_ids=train_ids,
            failed=True,
            error=str(exc),
        )
    icon_errors = euclidean_errors(calibrated, truths)
    logger.debug(
        "Fold %s: baseline %.4f m, calibrated %.4f m",
        test.id,
        float(baseline_errors.mean()) if len(baseline_errors) else 0.0,
        float(icon_errors.mean()) if len(icon_errors) else 0.0,
    )
    return FoldResult(
        held_out=test.id,
        scenario=test.scenario.value,
        baseline_errors=baseline_errors,
        icon_errors=icon_errors,
        train_ids=train_ids,
        model=model,
    )


def run_cv(
    sessions: Sequence[Session],
    tech: Technology,
    cfg: Optional[EvaluationConfig] = None,
) -> list[FoldResult]:
    """One fold per session; folds may run on a thread pool (``cfg.workers``)."""

    cfg = cfg or EvaluationConfig()
    tech = Technology(tech)
    mixed = [s.id for s in sessions if s.technology not in (tech, None)]
    if mixed:
        raise EvaluationError(f"Sessions are not {tech.value}: {', '.join(mixed)}")
    folds = loso_split(sessions)
    logger.info("Running %d %s folds", len(folds), tech.value)
    if cfg.workers == 1:
        return [_run_fold(train_set, test, cfg) for train_set, test in folds]
    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        futures = [executor.submit(_run_fold, train_set, test, cfg) for train_set, test in folds]
        return [future.result() for future in futures]


def run_cv_per_scenario(
    sessions: Sequence[Session],
    tech: Technology,
    cfg: Optional[EvaluationConfig] = None,
) -> list[FoldResult]:
    """Separate leave-one-session-out runs within each scenario."""

    by_scenario: dict[Scenario, list[Session]] = defaultdict(list)
    for session in sessions:
        by_scenario[session.scenario].append(session)
    results: list[FoldResult] = []
    for scenario in sorted(by_scenario, key=lambda s: s.value):
        logger.info("Evaluating %s sessions separately", scenario.value)
        results.extend(run_cv(by_scenario[scenario], tech, cfg))
    return results


@dataclass(frozen=True, slots=True)
class KsResult:
    statistic: float
    pvalue: float


def ks_two_sample(a: Iterable[float], b: Iterable[float]) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value."""

    x = np.sort(np.asarray(list(a), dtype=float))
    y = np.sort(np.asarray(list(b), dtype=float))
    if len(x) == 0 or len(y) == 0:
        raise EvaluationError("KS test needs two non-empty samples")
    support = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, support, side="right") / len(x)
    cdf_y = np.searchsorted(y, support, side="right") / len(y)
    d = float(np.max(np.abs(cdf_x - cdf_y)))
    effective = len(x) * len(y) / (len(x) + len(y))
    p = float(np.clip(kolmogorov(math.sqrt(effective) * d), 0.0, 1.0))
    return KsResult(statistic=d, pvalue=p)


def ecdf(sample: np.ndarray, grid: np.ndarray) -> np.ndarray:
    ordered = np.sort(sample)
    return np.searchsorted(ordered, grid, side="right") / max(len(ordered), 1)


@dataclass(frozen=True, slots=True)
class ScenarioSummary:
    scenario: str
    baseline_mean: float
    icon_mean: float
    baseline_median: float = math.nan
    icon_median: float = math.nan
    samples: int = 0

    @property
    def reduction(self) -> Optional[float]:
        if self.baseline_mean <= 0:
            return None
        return 1.0 - self.icon_mean / self.baseline_mean

    @classmethod
    def from_errors(
        cls, scenario: str, baseline: np.ndarray, icon: np.ndarray
    ) -> "ScenarioSummary":
        return cls(
            scenario=scenario,
            baseline_mean=float(np.mean(baseline)),
            icon_mean=float(np.mean(icon)),
            baseline_median=float(np.median(baseline)),
            icon_median=float(np.median(icon)),
            samples=len(baseline),
        )


@dataclass(frozen=True, slots=True)
class FoldRow:
    scenario: str
    fold: str
    baseline_mean: float
    icon_mean: float
    ks: KsResult


@dataclass
class EvalReport:
    scenarios: list[ScenarioSummary]
    combined: ScenarioSummary
    ks: KsResult
    folds: list[FoldRow]
    failed: list[Tuple[str, str]]
    cdf_grid: np.ndarray
    baseline_cdf: np.ndarray
    icon_cdf: np.ndarray
    errors: list[Tuple[str, str, np.ndarray, np.ndarray]] = field(default_factory=list)
    technology: Optional[Technology] = None

    @property
    def ok(self) -> bool:
        return not self.failed


def make_report(
    folds: Sequence[FoldResult],
    scenarios: Optional[Mapping[str, str]] = None,
    technology: Optional[Technology] = None,
) -> EvalReport:
    """Aggregate successful folds; ``scenarios`` maps held-out id -> label."""

    labels = dict(scenarios or {})
    ordered = sorted(folds, key=lambda f: (labels.get(f.held_out, f.scenario), f.held_out))
    good = [f for f in ordered if not f.failed]
    if not good:
        raise EvaluationError("No successful folds to report")
    failed = [(f.held_out, f.error or "unknown error") for f in ordered if f.failed]
    if failed:
        logger.warning("%d fold(s) failed and are excluded from the report", len(failed))

    by_label: dict[str, list[FoldResult]] = defaultdict(list)
    rows: list[FoldRow] = []
    errors = []
    for fold in good:
        label = labels.get(fold.held_out, fold.scenario)
        by_label[label].append(fold)
        errors.append((label, fold.held_out, fold.baseline_errors, fold.icon_errors))
        if len(fold.baseline_errors):
            rows.append(
                FoldRow(
                    scenario=label,
                    fold=fold.held_out,
                    baseline_mean=float(fold.baseline_errors.mean()),
                    icon_mean=float(fold.icon_errors.mean()),
                    ks=ks_two_sample(fold.baseline_errors, fold.icon_errors),
                )
            )

    summaries = []
    for label in sorted(by_label):
        baseline = np.concatenate([f.baseline_errors for f in by_label[label]])
        icon = np.concatenate([f.icon_errors for f in by_label[label]])
        if len(baseline):
            summaries.append(ScenarioSummary.from_errors(label, baseline, icon))

    all_baseline = np.concatenate([f.baseline_errors for f in good])
    all_icon = np.concatenate([f.icon_errors for f in good])
    if len(all_baseline) == 0:
        raise EvaluationError("Successful folds contain no records")
    top = float(max(all_baseline.max(), all_icon.max()))
    grid = np.linspace(0.0, top if top > 0 else 1.0, CDF_POINTS)
    return EvalReport(
        scenarios=summaries,
        combined=ScenarioSummary.from_errors(COMBINED, all_baseline, all_icon),
        ks=ks_two_sample(all_baseline, all_icon),
        folds=rows,
        failed=failed,
        cdf_grid=grid,
        baseline_cdf=ecdf(all_baseline, grid),
        icon_cdf=ecdf(all_icon, grid),
        errors=errors,
        technology=technology,
    )


def report_from_errors(
    rows: Sequence[Tuple[str, str, float, float]],
    technology: Optional[Technology] = None,
) -> EvalReport:
    """Rebuild a report from per-record ``(scenario, fold, baseline, icon)`` rows."""

    grouped: dict[Tuple[str, str], list[Tuple[float, float]]] = defaultdict(list)
    for scenario, fold, baseline, icon in rows:
        grouped[(scenario, fold)].append((baseline, icon))
    folds = [
        FoldResult(
            held_out=fold,
            scenario=scenario,
            baseline_errors=np.array([b for b, _ in values]),
            icon_errors=np.array([i for _, i in values]),
        )
        for (scenario, fold), values in grouped.items()
    ]
    return make_report(folds, technology=technology)


# -- rendering ---------------------------------------------------------------


def _render(renderables: Iterable[object], width: int = 100) -> str:
    buffer = io.StringIO()
    console = Console(file=buffer, width=width, color_system=None, force_terminal=False)
    for item in renderables:
        console.print(item)
    return buffer.getvalue()


def summary_table(
    summaries: Sequence[ScenarioSummary], title: str = "Mean error (m)", medians: bool = True
) -> Table:
    table = Table(title=title, box=box.SIMPLE_HEAVY)
    table.add_column("Scenario")
    table.add_column("Baseline", justify="right")
    table.add_column("Calibrated", justify="right")
    table.add_column("Reduction", justify="right")
    if medians:
        table.add_column("Baseline median", justify="right")
        table.add_column("Calibrated median", justify="right")
    for summary in summaries:
        cells = [
            summary.scenario.capitalize(),
            fmt_metres(summary.baseline_mean),
            fmt_metres(summary.icon_mean),
            fmt_percent(summary.reduction),
        ]
        if medians:
            cells += [
                fmt_metres(summary.baseline_median)
                if math.isfinite(summary.baseline_median)
                else "n/a",
                fmt_metres(summary.icon_median) if math.isfinite(summary.icon_median) else "n/a",
            ]
        table.add_row(*cells)
    return table


def render_table(summaries: Sequence[ScenarioSummary], medians: bool = False) -> str:
    return _render([summary_table(summaries, medians=medians)])


def _heading(technology: Optional[Technology]) -> str:
    heading = "Evaluation report"
    if technology is not None:
        heading += f" ({technology.value.upper()})"
    return heading


def render_failures(
    folds: Sequence[FoldResult], technology: Optional[Technology] = None
) -> str:
    """Report text for a run in which no fold could be scored."""

    failed = sorted((f.held_out, f.error or "unknown error") for f in folds if f.failed)
    parts: list[object] = [
        _heading(technology),
        "No fold produced errors; there are no statistics to report.",
        f"FAILED FOLDS ({len(failed)}):",
    ]
    parts.extend(f"  {fold}: {message}" for fold, message in failed)
    return _render(parts)


def render_report(report: EvalReport) -> str:
    heading = _heading(report.technology)
    folds = Table(title="Per-fold results", box=box.SIMPLE)
    for column in ("Scenario", "Fold", "Baseline (m)", "Calibrated (m)", "KS D", "KS p"):
        folds.add_column(column, justify="left" if column in ("Scenario", "Fold") else "right")
    for row in report.folds:
        folds.add_row(
            row.scenario,
            row.fold,
            fmt_metres(row.baseline_mean),
            fmt_metres(row.icon_mean),
            f"{row.ks.statistic:.4f}",
            f"{row.ks.pvalue:.3g}",
        )
    verdict = "significant" if report.ks.pvalue < 0.05 else "not significant"
    parts: list[object] = [
        heading,
        summary_table([*report.scenarios, report.combined]),
        f"Two-sample KS (baseline vs calibrated): D = {report.ks.statistic:.4f}, "
        f"p = {report.ks.pvalue:.3g} ({verdict} at 0.05)",
        folds,
    ]
    if report.failed:
        parts.append(f"FAILED FOLDS ({len(report.failed)}), excluded from the statistics:")
        parts.extend(f"  {fold}: {message}" for fold, message in report.failed)
    return _render(parts)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def folds_csv(report: EvalReport) -> str:
    return _csv_text(
        FOLDS_HEADER,
        (
            (
                row.scenario,
                row.fold,
                fmt_measurement(row.baseline_mean),
                fmt_measurement(row.icon_mean),
                fmt_measurement(row.ks.statistic),
                fmt_measurement(row.ks.pvalue),
            )
            for row in report.folds
        ),
    )


def cdf_csv(report: EvalReport) -> str:
    return _csv_text(
        CDF_HEADER,
        (
            (fmt_measurement(e), fmt_measurement(b), fmt_measurement(i))
            for e, b, i in zip(report.cdf_grid, report.baseline_cdf, report.icon_cdf)
        ),
    )


def errors_csv(report: EvalReport) -> str:
    return _csv_text(
        ERRORS_HEADER,
        (
            (scenario, fold, fmt_measurement(b), fmt_measurement(i))
            for scenario, fold, baseline, icon in report.errors
            for b, i in zip(baseline, icon)
        ),
    )


def parse_errors_csv(text: str, source: str = "errors.csv") -> list[Tuple[str, str, float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != ERRORS_HEADER:
        raise EvaluationError(f"{source}:1: expected header {','.join(ERRORS_HEADER)}")
    rows = []
    for line, row in enumerate(reader, start=2):
        if len(row) != len(ERRORS_HEADER):
            raise EvaluationError(f"{source}:{line}: expected {len(ERRORS_HEADER)} columns")
        try:
            rows.append((row[0], row[1], float(row[2]), float(row[3])))
        except ValueError as exc:
            raise EvaluationError(f"{source}:{line}: {exc}") from None
    return rows
