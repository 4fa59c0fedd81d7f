"""Seasonal forecasting targets and multibin log-score machinery.

Targets follow the CDC FluSight conventions: short-term targets are the
weighted ILI percentage 1-4 weeks ahead; seasonal targets are onset week,
peak week and peak percentage. Forecasts are binned distributions: percent
targets use 131 bins ([0.0, 0.1), ..., [12.9, 13.0), [13.0, 100]); week
targets use one bin per season week, onset additionally a "none" bin.

All percentages are rounded to one decimal, half away from zero, before any
comparison: surveillance truth is published at that resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

WEEK_AHEAD_KINDS = ("week1", "week2", "week3", "week4")
SEASONAL_KINDS = ("onset", "peak_timing", "peak_intensity")
ALL_KINDS = WEEK_AHEAD_KINDS + SEASONAL_KINDS
PERCENT_KINDS = WEEK_AHEAD_KINDS + ("peak_intensity",)
WEEK_VALUED_KINDS = ("onset", "peak_timing")

N_PERCENT_BINS = 131  # [0.0,0.1) ... [12.9,13.0), then [13.0,100]

# CDC-style submission labels
CSV_TARGET_LABELS = {
    "week1": "1 wk ahead",
    "week2": "2 wk ahead",
    "week3": "3 wk ahead",
    "week4": "4 wk ahead",
    "onset": "Season onset",
    "peak_timing": "Season peak week",
    "peak_intensity": "Season peak percentage",
}
KIND_FROM_LABEL = {v: k for k, v in CSV_TARGET_LABELS.items()}

# Probability floors applied before scoring so a miss costs about ln(3 * floor)
# for week-valued targets and ln(11 * floor) for percent targets.
PAD_WEEK = 0.00018
PAD_PERCENT = 0.00005

LOG_SKILL_FLOOR = -10.0

MULTIBIN_PERCENT_RADIUS = 5  # +-0.5 percentage points
MULTIBIN_WEEK_RADIUS = 1


def round_tenth(x: float) -> float:
    """Round to one decimal, halves away from zero, on the printed decimal
    value (so 5.35 -> 5.4 even though the nearest double is below 5.35)."""
    return float(Decimal(str(float(x))).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def round_tenth_array(x) -> np.ndarray:
    """Vectorized tenth-rounding for continuous draws (half away from zero for
    nonnegative input; exact decimal ties are not resolved like round_tenth)."""
    x = np.asarray(x, dtype=float)
    return np.floor(x * 10.0 + 0.5) / 10.0


def percent_bin_index(value: float) -> int:
    """Bin index of a rounded percentage; everything >= 13.0 lands in the
    final catch-all bin."""
    if value < 0:
        raise ValueError(f"negative percentage {value}")
    return min(int(math.floor(value * 10.0 + 0.5)), N_PERCENT_BINS - 1)


def percent_bin_edges() -> np.ndarray:
    """Left edges of the 131 percent bins plus the closing edge 100."""
    return np.concatenate([np.arange(N_PERCENT_BINS) / 10.0, [100.0]])


def percent_bin_midpoints() -> np.ndarray:
    # The catch-all bin is treated as one more 0.1-wide bin for point
    # predictions; its true width would put the midpoint at a useless 56.5.
    return np.arange(N_PERCENT_BINS) / 10.0 + 0.05


# ---------------------------------------------------------------------------
# truth targets


def compute_onset(rounded_percent: np.ndarray, baseline: float) -> int | None:
    """Onset week: first week of the first run of three consecutive weeks at
    or above baseline, or None if no such run exists."""
    if baseline is None:
        raise ValueError("onset requires a baseline")
    y = np.asarray(rounded_percent, dtype=float)
    with np.errstate(invalid="ignore"):
        ge = y >= baseline  # NaN compares False, breaking any run
    run = ge[:-2] & ge[1:-1] & ge[2:]
    hits = np.nonzero(run)[0]
    if hits.size == 0:
        return None
    return int(hits[0]) + 1


def compute_peak(rounded_percent: np.ndarray) -> tuple[float, list[int]]:
    """Peak percentage and every week (1-based) attaining it."""
    y = np.asarray(rounded_percent, dtype=float)
    if np.isnan(y).all():
        raise ValueError("peak of an all-missing trajectory")
    peak = float(np.nanmax(y))
    weeks = np.nonzero(y == peak)[0] + 1
    return peak, [int(w) for w in weeks]


@dataclass
class SeasonTruth:
    """Validation trajectory and derived target truths for one location-season."""

    location: str
    scale: str  # "state", "regional" or "national"
    season: int
    percent: np.ndarray  # (T,) rounded to tenths, NaN where unreported
    baseline: float | None
    onset: int | None
    peak_value: float | None
    peak_weeks: list[int]
    seasonal_scorable: bool = True

    @classmethod
    def from_percent(cls, location, scale, season, percent, baseline=None, seasonal_scorable=True):
        arr = np.asarray(percent, dtype=float)
        rounded = np.where(np.isnan(arr), np.nan, round_tenth_array(arr))
        onset = None
        if baseline is not None and not np.isnan(rounded).all():
            onset = compute_onset(rounded, baseline)
        if np.isnan(rounded).all():
            peak_value, peak_weeks = None, []
            seasonal_scorable = False
        else:
            peak_value, peak_weeks = compute_peak(rounded)
        return cls(
            location=location,
            scale=scale,
            season=season,
            percent=rounded,
            baseline=baseline,
            onset=onset,
            peak_value=peak_value,
            peak_weeks=peak_weeks,
            seasonal_scorable=seasonal_scorable,
        )


# ---------------------------------------------------------------------------
# forecast distributions


@dataclass
class TargetDistribution:
    """Binned forecast for one (location, target, forecast week).

    ``probabilities`` runs over the 131 percent bins for percent targets, over
    season weeks 1..T for peak timing, and over weeks 1..T plus a final "none"
    bin for onset.
    """

    location: str
    kind: str
    forecast_week: int  # season week of the last observation used
    probabilities: np.ndarray

    @property
    def n_weeks(self) -> int:
        if self.kind == "onset":
            return len(self.probabilities) - 1
        if self.kind == "peak_timing":
            return len(self.probabilities)
        raise ValueError(f"{self.kind} is not week-valued")

    def check(self) -> None:
        p = self.probabilities
        if (p < 0).any() or not math.isclose(float(p.sum()), 1.0, abs_tol=1e-6):
            raise ValueError(f"{self.location}/{self.kind}: probabilities must sum to 1")


def _percent_bin_counts(values: np.ndarray) -> np.ndarray:
    idx = np.floor(values * 10.0 + 0.5).astype(int)
    idx = np.clip(idx, 0, N_PERCENT_BINS - 1)
    return np.bincount(idx, minlength=N_PERCENT_BINS).astype(float)


def target_distributions(
    percent_draws: np.ndarray,
    location: str,
    forecast_week: int,
    baseline: float | None = None,
    kinds=None,
    pad: bool = True,
) -> dict[str, TargetDistribution]:
    """Bin (T, M) trajectory draws (percent scale) into target distributions.

    Onset is produced only when a baseline is given (state-scale forecasts
    have no onset target). Week-ahead targets past the end of the season are
    omitted. Draws with tied peak weeks split their mass evenly.
    """
    draws = round_tenth_array(np.asarray(percent_draws, dtype=float))
    T, M = draws.shape
    if kinds is None:
        kinds = ALL_KINDS if baseline is not None else [k for k in ALL_KINDS if k != "onset"]
    out: dict[str, TargetDistribution] = {}

    for n, kind in enumerate(WEEK_AHEAD_KINDS, start=1):
        if kind not in kinds:
            continue
        t = forecast_week + n
        if not 1 <= t <= T:
            continue
        probs = _percent_bin_counts(draws[t - 1]) / M
        out[kind] = TargetDistribution(location, kind, forecast_week, probs)

    if "peak_intensity" in kinds:
        probs = _percent_bin_counts(draws.max(axis=0)) / M
        out["peak_intensity"] = TargetDistribution(location, "peak_intensity", forecast_week, probs)

    if "peak_timing" in kinds:
        peak = draws.max(axis=0, keepdims=True)
        ties = draws == peak
        probs = (ties / ties.sum(axis=0, keepdims=True)).sum(axis=1) / M
        out["peak_timing"] = TargetDistribution(location, "peak_timing", forecast_week, probs)

    if "onset" in kinds and baseline is not None:
        with np.errstate(invalid="ignore"):
            ge = draws >= baseline
        run = ge[:-2] & ge[1:-1] & ge[2:]
        started = run.any(axis=0)
        first = np.argmax(run, axis=0)  # week index of first run, if any
        probs = np.zeros(T + 1)
        counts = np.bincount(first[started], minlength=T - 2)
        probs[: T - 2] = counts[: T - 2]
        probs[T] = M - started.sum()
        probs /= M
        out["onset"] = TargetDistribution(location, "onset", forecast_week, probs)

    if pad:
        out = {k: pad_distribution(d) for k, d in out.items()}
    return out


def pad_distribution(dist: TargetDistribution) -> TargetDistribution:
    """Raise every bin to the target family's floor, then renormalize."""
    floor = PAD_PERCENT if dist.kind in PERCENT_KINDS else PAD_WEEK
    p = np.maximum(dist.probabilities, floor)
    return replace(dist, probabilities=p / p.sum())


# ---------------------------------------------------------------------------
# scoring


def multibin_score(dist: TargetDistribution, truth: SeasonTruth) -> float | None:
    """Probability assigned to the truth's multibin window, or None when the
    target is not scorable for this location-season.

    Percent targets credit the truth bin plus 5 on each side; week targets
    credit one week on each side (unioned over tied peak weeks). Windows are
    truncated at the bin range edges. An onset truth of "none" is scored by
    the none bin alone.
    """
    kind = dist.kind
    p = dist.probabilities

    if kind in WEEK_AHEAD_KINDS:
        step = int(kind[4:])
        t = dist.forecast_week + step
        if t < 1 or t > len(truth.percent) or np.isnan(truth.percent[t - 1]):
            return None
        return _percent_window_mass(p, float(truth.percent[t - 1]))

    if not truth.seasonal_scorable:
        return None

    if kind == "peak_intensity":
        if truth.peak_value is None:
            return None
        return _percent_window_mass(p, truth.peak_value)

    if kind == "peak_timing":
        if not truth.peak_weeks:
            return None
        T = dist.n_weeks
        weeks: set[int] = set()
        for w in truth.peak_weeks:
            weeks.update(range(max(w - MULTIBIN_WEEK_RADIUS, 1), min(w + MULTIBIN_WEEK_RADIUS, T) + 1))
        return float(sum(p[w - 1] for w in sorted(weeks)))

    if kind == "onset":
        if truth.baseline is None:
            return None
        T = dist.n_weeks
        if truth.onset is None:
            return float(p[T])  # none bin
        w = truth.onset
        lo, hi = max(w - MULTIBIN_WEEK_RADIUS, 1), min(w + MULTIBIN_WEEK_RADIUS, T)
        return float(p[lo - 1 : hi].sum())

    raise ValueError(f"unknown target kind {kind}")


def _percent_window_mass(p: np.ndarray, truth_value: float) -> float:
    idx = percent_bin_index(truth_value)
    lo = max(idx - MULTIBIN_PERCENT_RADIUS, 0)
    hi = min(idx + MULTIBIN_PERCENT_RADIUS, N_PERCENT_BINS - 1)
    return float(p[lo : hi + 1].sum())


@dataclass
class ScoreRecord:
    model: str
    location: str
    scale: str
    season: int
    target: str
    forecast_week: int
    skill: float
    log_skill: float


def make_record(model, truth: SeasonTruth, dist: TargetDistribution, skill: float) -> ScoreRecord:
    log_skill = LOG_SKILL_FLOOR if skill <= 0 else max(math.log(skill), LOG_SKILL_FLOOR)
    return ScoreRecord(
        model=model,
        location=truth.location,
        scale=truth.scale,
        season=truth.season,
        target=dist.kind,
        forecast_week=dist.forecast_week,
        skill=float(skill),
        log_skill=float(log_skill),
    )


def average_scores(records) -> float:
    """Overall skill: geometric mean of per-record skills via floored logs."""
    logs = [r.log_skill if isinstance(r, ScoreRecord) else _floored_log(r) for r in records]
    if not logs:
        raise ValueError("no scores to average")
    return float(math.exp(sum(logs) / len(logs)))


def _floored_log(skill: float) -> float:
    return LOG_SKILL_FLOOR if skill <= 0 else max(math.log(skill), LOG_SKILL_FLOOR)


# ---------------------------------------------------------------------------
# evaluation windows


def _final_below_week(truth: SeasonTruth) -> int | None:
    """First week below baseline after which the series never returns."""
    if truth.baseline is None:
        return None
    with np.errstate(invalid="ignore"):
        ge = truth.percent >= truth.baseline  # NaN counts as below
    idx = np.nonzero(ge)[0]
    if idx.size == 0:
        return 1
    last_at_or_above = int(idx[-1]) + 1
    if last_at_or_above >= len(truth.percent):
        return None
    return last_at_or_above + 1


def evaluation_window(
    kind: str, truth: SeasonTruth, first_week: int = 5, last_week: int = 29
) -> set[int]:
    """Forecast weeks over which a target counts toward evaluation.

    State-scale targets are evaluated at every forecast week. Aggregate-scale
    windows track the epidemic: onset until six weeks past the true onset,
    peaks until the season has clearly declined, short-term targets from just
    before onset until just after the decline. Seasons with no onset fall back
    to every forecast week.
    """
    all_weeks = set(range(first_week, last_week + 1))
    if truth.scale == "state":
        return all_weeks

    if kind == "onset":
        if truth.onset is None:
            return all_weeks
        return {w for w in all_weeks if w <= truth.onset + 6}

    final_below = _final_below_week(truth)
    if kind in ("peak_timing", "peak_intensity"):
        if final_below is None:
            return all_weeks
        return {w for w in all_weeks if w <= final_below}

    if kind in WEEK_AHEAD_KINDS:
        if truth.onset is None:
            return all_weeks
        lo = truth.onset - 4
        hi = last_week if final_below is None else final_below + 3
        return {w for w in all_weeks if lo <= w <= hi}

    raise ValueError(f"unknown target kind {kind}")


# ---------------------------------------------------------------------------
# point predictions


def point_prediction(dist: TargetDistribution, percent_estimator: str = "mean") -> float | None:
    """Point forecast from a binned distribution.

    Percent targets use the probability-weighted bin midpoint by default;
    ``percent_estimator="mode"`` switches to the modal bin's midpoint for
    sensitivity runs. Week targets use the modal week (None when the onset
    mode is the none bin)."""
    p = dist.probabilities
    if dist.kind in PERCENT_KINDS:
        if percent_estimator == "mode":
            return float(int(np.argmax(p)) / 10.0 + 0.05)
        if percent_estimator != "mean":
            raise ValueError(f"unknown percent point estimator {percent_estimator!r}")
        return float(p @ percent_bin_midpoints())
    mode = int(np.argmax(p))
    if dist.kind == "onset" and mode == dist.n_weeks:
        return None
    return float(mode + 1)
