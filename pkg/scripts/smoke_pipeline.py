r"""Smoke runner for full-scale simulate -> evaluate runs.

Checks the headline numbers of a default-config run for each technology:
the calibrated mean error against the baseline, the KS p-value, the
walking-vs-trolley baseline ordering and the wall-clock time of each run.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from tagcal import config
from tagcal.commands.evaluate import write_report
from tagcal.core import Technology
from tagcal.evaluation import EvalReport, make_report, render_report, run_cv
from tagcal.services import OutputManager
from tagcal.simulator import gen_dataset

# calibrated mean must be at most this fraction of the baseline mean
RATIO_LIMITS = {Technology.UWB: 0.7, Technology.BLE: 0.6}
# wall-clock seconds for simulate + evaluate with default settings
RUNTIME_BUDGETS = {Technology.UWB: 300.0, Technology.BLE: 900.0}


def main() -> int:
    parser = argparse.ArgumentParser(
        description="Smoke test: simulate default datasets and evaluate them end to end",
    )
    parser.add_argument(
        "--tech",
        choices=[t.value for t in Technology] + ["both"],
        default="both",
        help="Technology to run (default: both)",
    )
    parser.add_argument(
        "-o",
        "--output-dir",
        default="output/smoke",
        help="Directory for datasets and reports",
    )
    parser.add_argument("--seed", type=int, default=0, help="Root seed")
    parser.add_argument("--workers", type=int, default=1, help="Folds evaluated in parallel")
    args = parser.parse_args()

    technologies = (
        list(Technology) if args.tech == "both" else [Technology(args.tech)]
    )
    base = Path(args.output_dir).expanduser().resolve()
    reports: dict[Technology, EvalReport] = {}
    status = 0
    for technology in technologies:
        report, elapsed = _run(technology, base / technology.value, args.seed, args.workers)
        reports[technology] = report
        status = max(status, _check(technology, report, elapsed))

    if len(reports) == 2:
        gaps = {t: _walking_gap(r) for t, r in reports.items()}
        if None not in gaps.values():
            ok = gaps[Technology.UWB] > gaps[Technology.BLE]  # type: ignore[operator]
            print(
                f"Relative walking/trolley baseline gap: UWB {gaps[Technology.UWB]:.3f}, "
                f"BLE {gaps[Technology.BLE]:.3f} -> {'ok' if ok else 'FAIL'}"
            )
            status = status if ok else 1

    print("Smoke pipeline complete." if status == 0 else "Smoke pipeline FAILED.")
    return status


def _run(
    technology: Technology, out_dir: Path, seed: int, workers: int
) -> tuple[EvalReport, float]:
    runtime = config.merge_configs(
        config.DEFAULTS,
        {},
        {"technology": technology.value, "seed": seed, "workers": workers},
    )
    started = time.perf_counter()
    sessions = gen_dataset(
        runtime.technology,
        runtime.scenarios,
        runtime.sessions_per_scenario,
        runtime.noise,
        runtime.layout(),
        runtime.area,
        target_height=runtime.target_height,
        ble_truth=runtime.ble_truth,
        aoa_filter_mode=runtime.aoa_filter_mode,
        tracker_config=runtime.tracker,
    )
    dataset_dir = OutputManager(out_dir / "dataset")
    for session in sessions:
        dataset_dir.write_session(session)
    dataset_dir.write_manifest(
        config.dump_toml(config.manifest_sections(runtime, [s.id for s in sessions]))
    )

    folds = run_cv(sessions, technology, runtime.evaluation())
    report = make_report(folds, technology=technology)
    write_report(OutputManager(out_dir / "report"), report)
    elapsed = time.perf_counter() - started
    print(render_report(report))
    print(f"{technology.value.upper()} run took {elapsed:.1f} s")
    return report, elapsed


def _check(technology: Technology, report: EvalReport, elapsed: float) -> int:
    combined = report.combined
    ratio = combined.icon_mean / combined.baseline_mean
    limit = RATIO_LIMITS[technology]
    budget = RUNTIME_BUDGETS[technology]
    checks = {
        f"calibrated/baseline ratio {ratio:.3f} <= {limit}": ratio <= limit,
        f"KS p-value {report.ks.pvalue:.3g} < 0.05": report.ks.pvalue < 0.05,
        "no failed folds": report.ok,
        f"run time {elapsed:.1f} s <= {budget:.0f} s": elapsed <= budget,
    }
    walking = _scenario_mean(report, "walking")
    trolley = _scenario_mean(report, "trolley")
    if walking is not None and trolley is not None:
        checks[f"walking baseline {walking:.4f} > trolley {trolley:.4f}"] = walking > trolley
    status = 0
    for label, ok in checks.items():
        print(f"[{technology.value}] {label}: {'ok' if ok else 'FAIL'}")
        status = status if ok else 1
    return status


def _scenario_mean(report: EvalReport, scenario: str) -> float | None:
    for summary in report.scenarios:
        if summary.scenario == scenario:
            return summary.baseline_mean
    return None


def _walking_gap(report: EvalReport) -> float | None:
    walking = _scenario_mean(report, "walking")
    trolley = _scenario_mean(report, "trolley")
    if walking is None or trolley is None or trolley <= 0:
        return None
    return (walking - trolley) / trolley


if __name__ == "__main__":  # pragma: no cover - manual smoke
    raise SystemExit(main())
