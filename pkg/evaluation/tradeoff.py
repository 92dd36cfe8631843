import math
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from config import SWEEP_GRID_MIN, SWEEP_GRID_SIZE
from evaluation.quality import binary_f1, accuracy
from evaluation.savings import ExitHistogram, expected_saving, exit_distribution
from helpers.logger_config import LoggerManager
from inference.early_exit import ExitPolicy, ExitRecord, infer_batch
from modeling.early_exit_model import EarlyExitModel
from preprocessing.batching import EncodedSplit

logger = LoggerManager().get_logger()

DROP_TOLERANCE = 1e-9


class TradeoffPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold: float = Field(ge=0.0)
    quality: float = Field(description="Primary metric value (accuracy or F1)")
    accuracy: float
    f1: Optional[float] = None
    expected_saving: float
    layer_saving: float = Field(description="Saving measured from counted layer executions")
    time_saving: float = Field(default=0.0, description="1 - wall clock / baseline wall clock")
    wall_clock_s: float = 0.0
    histogram: ExitHistogram

    def quality_drop(self, baseline: "TradeoffPoint") -> float:
        """Drop from the baseline in absolute points (percentage points)."""
        return (baseline.quality - self.quality) * 100.0

    def csv_row(self) -> list:
        return [self.threshold, self.accuracy, self.f1, self.expected_saving, self.layer_saving,
                self.time_saving * 100.0, self.wall_clock_s]


class SweepReport(BaseModel):
    """Trade-off points over a strictly increasing threshold grid starting at the S=0 baseline."""
    metric: str = "accuracy"
    n_layers: int = Field(ge=1)
    points: List[TradeoffPoint] = Field(min_length=1)
    records: List[ExitRecord] = Field(default_factory=list, exclude=True)

    @model_validator(mode="after")
    def _grid_starts_at_baseline(self):
        validate_threshold_grid([point.threshold for point in self.points])
        return self

    @property
    def baseline(self) -> TradeoffPoint:
        return self.points[0]

    @property
    def thresholds(self) -> List[float]:
        return [point.threshold for point in self.points]

    def csv_rows(self) -> List[list]:
        return [point.csv_row() for point in self.points]


class OperatingPoint(BaseModel):
    max_drop: float
    point: TradeoffPoint
    quality_drop: float


class LinearFit(BaseModel):
    slope: float
    intercept: float
    r_squared: float


class SavingPair(BaseModel):
    threshold: float
    expected_saving: float
    layer_saving: float
    measured_saving: float


class ExpectedVsMeasured(BaseModel):
    pairs: List[SavingPair]
    fit: LinearFit


def default_threshold_grid(n_classes: int, size: int = SWEEP_GRID_SIZE, minimum: float = SWEEP_GRID_MIN) -> List[float]:
    """S = 0 followed by size - 1 geometrically spaced thresholds ending at ln(n_classes)."""
    if n_classes < 2:
        raise ValueError(f"n_classes must be at least 2, got {n_classes}")
    if size < 2:
        raise ValueError(f"grid size must be at least 2, got {size}")
    top = math.log(n_classes)
    if not 0.0 < minimum < top:
        raise ValueError(f"grid minimum {minimum} must lie in (0, ln {n_classes})")
    spaced = np.geomspace(minimum, top, size - 1).tolist()
    spaced[0], spaced[-1] = minimum, top
    return [0.0] + spaced


def validate_threshold_grid(grid: Sequence[float]) -> List[float]:
    grid = [float(s) for s in grid]
    if not grid or grid[0] != 0.0:
        raise ValueError("threshold grid must start with the S=0 baseline")
    if any(not math.isfinite(s) for s in grid):
        raise ValueError(f"threshold grid must be finite, got {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"threshold grid must be strictly increasing, got {grid}")
    return grid


def parse_threshold_grid(text: str) -> List[float]:
    """Comma separated thresholds; sorted, deduplicated, and S=0 added when missing."""
    try:
        values = sorted({float(part) for part in text.split(",") if part.strip()})
    except ValueError:
        raise ValueError(f"threshold grid {text!r} is not a comma separated list of numbers") from None
    if any(value < 0.0 for value in values):
        raise ValueError(f"thresholds must be non-negative, got {values}")
    if not values or values[0] != 0.0:
        values = [0.0] + values
    return validate_threshold_grid(values)


def sweep(model: EarlyExitModel, split: EncodedSplit, grid: Sequence[float], metric: str = "accuracy",
          repeats: int = 1, progress: bool = True) -> SweepReport:
    """
    Early-exit inference over the split at every threshold in the grid.

    Each point is timed `repeats` times and keeps the fastest run. The
    records of every point are kept on the report (excluded from its JSON).
    """
    grid = validate_threshold_grid(grid)
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")
    if len(split) == 0:
        raise ValueError("cannot sweep an empty split")
    binary = model.config.n_classes == 2
    if metric == "f1" and not binary:
        raise ValueError(f"F1 needs a binary task, model has {model.config.n_classes} classes")
    n = model.n_layers

    points, records, baseline_wall = [], [], None
    for threshold in tqdm(grid, desc="Sweep", unit="threshold", disable=not progress):
        policy = ExitPolicy(entropy_threshold=threshold)
        result = infer_batch(model, split, policy)
        wall = result.wall_clock_s
        for _ in range(repeats - 1):
            wall = min(wall, infer_batch(model, split, policy).wall_clock_s)

        histogram = exit_distribution(result.records, n)
        predictions = result.predictions
        point_accuracy = accuracy(predictions, split.labels)
        point_f1 = binary_f1(predictions, split.labels) if binary else None
        if baseline_wall is None:
            baseline_wall = wall
        points.append(TradeoffPoint(
            threshold=threshold,
            quality=point_f1 if metric == "f1" else point_accuracy,
            accuracy=point_accuracy,
            f1=point_f1,
            expected_saving=expected_saving(histogram),
            layer_saving=float(1 - Fraction(result.layers_executed, n * len(result))),
            time_saving=1.0 - wall / baseline_wall if baseline_wall > 0 else 0.0,
            wall_clock_s=wall,
            histogram=histogram,
        ))
        records.extend(result.records)
        logger.info(
            f"S={threshold:.5g}: {metric} {points[-1].quality:.4f}, expected saving {points[-1].expected_saving:.4f}, "
            f"time saving {points[-1].time_saving:.4f}"
        )
    return SweepReport(metric=metric, n_layers=n, points=points, records=records)


def select_operating_points(report: SweepReport, max_drops: Sequence[float]) -> List[OperatingPoint]:
    """
    For each quality-drop budget (absolute points), the point with the largest
    expected saving whose drop from the baseline fits the budget. Ties go to
    the larger threshold. Budgets nothing fits are left out.
    """
    baseline = report.baseline
    selected = []
    for max_drop in max_drops:
        eligible = [p for p in report.points if p.quality_drop(baseline) <= max_drop + DROP_TOLERANCE]
        if not eligible:
            logger.warning(f"No sweep point within a {max_drop} point drop")
            continue
        best = max(eligible, key=lambda p: (p.expected_saving, p.threshold))
        selected.append(OperatingPoint(max_drop=max_drop, point=best, quality_drop=best.quality_drop(baseline)))
    return selected


def turning_point(report: SweepReport, tolerance: float = 0.5) -> TradeoffPoint:
    """Last point, walking up the grid, before quality first drops more than `tolerance` points."""
    baseline = report.baseline
    last = baseline
    for point in report.points:
        if point.quality_drop(baseline) > tolerance + DROP_TOLERANCE:
            break
        last = point
    return last


def fit_linear(xs: Sequence[float], ys: Sequence[float]) -> LinearFit:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError(f"fit_linear needs two equal-length series of at least 2 points, got {xs.size} and {ys.size}")
    if np.ptp(xs) == 0.0:
        raise ValueError("fit_linear needs at least two distinct x values")
    slope, intercept = np.polyfit(xs, ys, 1)
    residual = float(np.sum((ys - (slope * xs + intercept)) ** 2))
    total = float(np.sum((ys - ys.mean()) ** 2))
    r_squared = 1.0 - residual / total if total > 0.0 else (1.0 if residual == 0.0 else 0.0)
    return LinearFit(slope=float(slope), intercept=float(intercept), r_squared=r_squared)


def measured_vs_expected(model: EarlyExitModel, split: EncodedSplit, grid: Sequence[float], repeats: int = 3,
                         metric: str = "accuracy", progress: bool = True) -> ExpectedVsMeasured:
    """Wall-clock saving against expected saving at each threshold, with a least-squares fit."""
    report = sweep(model, split, grid, metric=metric, repeats=repeats, progress=progress)
    return expected_vs_measured_from_report(report)


def expected_vs_measured_from_report(report: SweepReport) -> ExpectedVsMeasured:
    pairs = [
        SavingPair(threshold=p.threshold, expected_saving=p.expected_saving, layer_saving=p.layer_saving,
                   measured_saving=p.time_saving)
        for p in report.points
    ]
    xs = [pair.expected_saving for pair in pairs]
    if len(set(xs)) < 2:
        logger.warning("Every threshold gave the same expected saving; the linear fit is degenerate")
        fit = LinearFit(slope=0.0, intercept=0.0, r_squared=0.0)
    else:
        fit = fit_linear(xs, [pair.measured_saving for pair in pairs])
    logger.info(f"Measured vs expected saving: slope {fit.slope:.4f}, R^2 {fit.r_squared:.4f}")
    return ExpectedVsMeasured(pairs=pairs, fit=fit)
