"""Leave-one-season-out evaluation: fit, forecast, score, summarize.

For each held-out season the model is refit with that season's weeks beyond
the forecast week hidden, forecasts are issued at every planned forecast week,
and every target is scored against the validation trajectory with the
multibin skill. Seasonal targets at the aggregate scales are only counted
inside target-specific evaluation windows around the epidemic (see
``targets.evaluation_window``); state targets count at every forecast week.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import IliPanel, WeightMatrix, observed_aggregates, scorable_seasonal_targets
from .forecast import ForecastJob, aggregate, predict_states
from .model import Hyperconfig
from .sampler import McmcConfig, run_chains
from .targets import (
    ALL_KINDS,
    PERCENT_KINDS,
    ScoreRecord,
    SeasonTruth,
    TargetDistribution,
    evaluation_window,
    make_record,
    multibin_score,
    point_prediction,
    target_distributions,
)


@dataclass(frozen=True)
class ExperimentPlan:
    seasons: tuple[int, ...]
    forecast_weeks: tuple[int, ...] = tuple(range(5, 30))
    model_label: str = "multiscale"
    hpd_level: float = 0.9
    point_estimator: str = "mean"  # percent-target point forecasts; or "mode"


@dataclass
class PointRecord:
    model: str
    location: str
    scale: str
    season: int
    target: str
    forecast_week: int
    point: float
    truth: float

    @property
    def sq_error(self) -> float:
        return (self.point - self.truth) ** 2


@dataclass
class HpdRecord:
    model: str
    location: str
    scale: str
    season: int
    target: str
    forecast_week: int
    width: float


@dataclass
class FitDiagnostics:
    season: int
    forecast_week: int
    max_rhat: float
    min_ess: float
    n_draws: int
    n_warnings: int


@dataclass
class EvaluationResult:
    scores: list[ScoreRecord] = field(default_factory=list)
    points: list[PointRecord] = field(default_factory=list)
    hpd: list[HpdRecord] = field(default_factory=list)
    fits: list[FitDiagnostics] = field(default_factory=list)

    def extend(self, other: "EvaluationResult") -> None:
        self.scores.extend(other.scores)
        self.points.extend(other.points)
        self.hpd.extend(other.hpd)
        self.fits.extend(other.fits)


def hpd_width(dist: TargetDistribution, level: float = 0.9) -> float:
    """Width of the smallest (possibly non-contiguous) set of bins holding at
    least ``level`` probability; ties broken toward earlier bins."""
    p = dist.probabilities
    order = np.argsort(-p, kind="stable")
    cum = np.cumsum(p[order])
    count = int(np.searchsorted(cum, level - 1e-12)) + 1
    width = 0.1 if dist.kind in PERCENT_KINDS else 1.0
    return count * width


def season_truths(
    panel: IliPanel,
    weights: WeightMatrix,
    baselines: dict[tuple[str, int], float],
    season: int,
) -> dict[str, SeasonTruth]:
    """Validation truths for every location in one season."""
    s = panel.season_index(season)
    scorable = scorable_seasonal_targets(panel)
    out: dict[str, SeasonTruth] = {}
    for r, name in enumerate(panel.region_names):
        out[name] = SeasonTruth.from_percent(
            name, "state", season, panel.values[r, s] * 100.0,
            baseline=None, seasonal_scorable=bool(scorable[r, s]),
        )
    agg = observed_aggregates(panel, weights)
    for k, name in enumerate(weights.aggregate_names):
        scale = "national" if k == weights.n_aggregates - 1 else "regional"
        out[name] = SeasonTruth.from_percent(
            name, scale, season, agg[k, s] * 100.0, baseline=baselines.get((name, season))
        )
    return out


def forecast_distributions(
    draws,
    panel: IliPanel,
    weights: WeightMatrix,
    baselines: dict[tuple[str, int], float],
    job: ForecastJob,
    rng: np.random.Generator,
    hyper: Hyperconfig = Hyperconfig(),
) -> dict[str, dict[str, TargetDistribution]]:
    """All padded target distributions, keyed by location, for one forecast."""
    state_traj = predict_states(draws, panel, job, rng, hyper)
    agg_traj = aggregate(state_traj, weights, job)
    out: dict[str, dict[str, TargetDistribution]] = {}
    for traj in (state_traj, agg_traj):
        for loc in traj.locations:
            baseline = baselines.get((loc, job.season)) if traj.scale == "aggregate" else None
            out[loc] = target_distributions(
                traj.percent(loc), loc, job.n_observed, baseline=baseline
            )
    return out


def score_forecast(
    dists: dict[str, dict[str, TargetDistribution]],
    truths: dict[str, SeasonTruth],
    model_label: str,
    first_week: int,
    last_week: int,
    hpd_level: float = 0.9,
    point_estimator: str = "mean",
) -> EvaluationResult:
    """Score one forecast-week's distributions against season truths."""
    result = EvaluationResult()
    for loc, per_kind in sorted(dists.items()):
        truth = truths[loc]
        for kind in ALL_KINDS:
            dist = per_kind.get(kind)
            if dist is None:
                continue
            window = evaluation_window(kind, truth, first_week, last_week)
            if dist.forecast_week not in window:
                continue
            skill = multibin_score(dist, truth)
            if skill is None:
                continue
            result.scores.append(make_record(model_label, truth, dist, skill))
            result.hpd.append(
                HpdRecord(
                    model_label, loc, truth.scale, truth.season, kind,
                    dist.forecast_week, hpd_width(dist, hpd_level),
                )
            )
            truth_value = _point_truth(truth, kind, dist.forecast_week)
            point = point_prediction(dist, point_estimator)
            if truth_value is not None and point is not None:
                if kind == "peak_timing":
                    # squared distance to the nearest tied peak week
                    truth_value = min(truth.peak_weeks, key=lambda w: abs(w - point))
                result.points.append(
                    PointRecord(
                        model_label, loc, truth.scale, truth.season, kind,
                        dist.forecast_week, float(point), float(truth_value),
                    )
                )
    return result


def _point_truth(truth: SeasonTruth, kind: str, forecast_week: int):
    if kind in PERCENT_KINDS and kind != "peak_intensity":
        t = forecast_week + int(kind[4:])
        if t < 1 or t > len(truth.percent) or np.isnan(truth.percent[t - 1]):
            return None
        return float(truth.percent[t - 1])
    if not truth.seasonal_scorable:
        return None
    if kind == "peak_intensity":
        return truth.peak_value
    if kind == "peak_timing":
        return truth.peak_weeks[0] if truth.peak_weeks else None
    if kind == "onset":
        return truth.onset  # None (no onset) is excluded from MSE
    return None


def run_loso(
    panel: IliPanel,
    weights: WeightMatrix,
    baselines: dict[tuple[str, int], float],
    plan: ExperimentPlan,
    hyper: Hyperconfig = Hyperconfig(),
    config: McmcConfig = McmcConfig(),
    n_jobs: int = 1,
    progress=None,
) -> EvaluationResult:
    """Leave-one-season-out experiment over the plan's seasons and weeks."""
    result = EvaluationResult()
    first, last = min(plan.forecast_weeks), max(plan.forecast_weeks)
    agg_series = observed_aggregates(panel, weights)
    for season in plan.seasons:
        s = panel.season_index(season)
        truths = season_truths(panel, weights, baselines, season)
        for nobs in plan.forecast_weeks:
            if progress:
                progress(f"season {season} week {nobs}")
            train = panel.values.copy()
            train[:, s, nobs:] = np.nan
            train_panel = IliPanel(
                values=train,
                region_names=panel.region_names,
                seasons=panel.seasons,
                calendar=panel.calendar,
            )
            draws = run_chains(train, hyper, config, n_jobs=n_jobs)
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, season, nobs]).spawn(1)[0]
            )
            job = ForecastJob(
                season=season,
                season_index=s,
                n_observed=nobs,
                observed_aggregates=agg_series[:, s, :],
            )
            dists = forecast_distributions(draws, train_panel, weights, baselines, job, rng, hyper)
            part = score_forecast(
                dists, truths, plan.model_label, first, last, plan.hpd_level,
                plan.point_estimator,
            )
            rhat = draws.diagnostics.get("rhat")
            ess = draws.diagnostics.get("ess")
            part.fits.append(
                FitDiagnostics(
                    season=season,
                    forecast_week=nobs,
                    max_rhat=float(np.nanmax(rhat)) if rhat is not None else math.nan,
                    min_ess=float(np.nanmin(ess)) if ess is not None else math.nan,
                    n_draws=draws.n_draws,
                    n_warnings=len(draws.diagnostics.get("warnings", [])),
                )
            )
            result.extend(part)
    return result


# ---------------------------------------------------------------------------
# tabulation


_SCORE_COLUMNS = (
    "model", "location", "scale", "season", "target", "forecast_week", "skill", "log_skill",
)


def scores_frame(result: EvaluationResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "model": r.model, "location": r.location, "scale": r.scale,
                "season": r.season, "target": r.target,
                "forecast_week": r.forecast_week, "skill": r.skill,
                "log_skill": r.log_skill,
            }
            for r in result.scores
        ],
        columns=_SCORE_COLUMNS,
    )


def skill_summary(result: EvaluationResult, by=("scale",)) -> pd.DataFrame:
    """Geometric-mean skill grouped by the given record fields."""
    df = scores_frame(result)
    if df.empty:
        return pd.DataFrame(columns=[*by, "skill", "n"])
    g = df.groupby(list(by))["log_skill"]
    out = np.exp(g.mean()).rename("skill").reset_index()
    out["n"] = g.count().to_numpy()
    return out


def mse_frame(result: EvaluationResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "model": r.model, "location": r.location, "scale": r.scale,
                "season": r.season, "target": r.target,
                "forecast_week": r.forecast_week, "point": r.point,
                "truth": r.truth, "sq_error": r.sq_error,
            }
            for r in result.points
        ],
        columns=(
            "model", "location", "scale", "season", "target",
            "forecast_week", "point", "truth", "sq_error",
        ),
    )


def mse_table(result: EvaluationResult, by=("scale", "target")) -> pd.DataFrame:
    df = mse_frame(result)
    if df.empty:
        return pd.DataFrame(columns=[*by, "mse", "n"])
    g = df.groupby(list(by))["sq_error"]
    out = g.mean().rename("mse").reset_index()
    out["n"] = g.count().to_numpy()
    return out


def hpd_frame(result: EvaluationResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "model": r.model, "location": r.location, "scale": r.scale,
                "season": r.season, "target": r.target,
                "forecast_week": r.forecast_week, "width": r.width,
            }
            for r in result.hpd
        ],
        columns=("model", "location", "scale", "season", "target", "forecast_week", "width"),
    )


def volatility_frame(volatility) -> pd.DataFrame:
    """Long-format volatility table: one row per region-season plus an
    "overall" row per region carrying the season average."""
    rows = []
    for i, region in enumerate(volatility.region_names):
        patients = (
            float(volatility.patient_means[i])
            if volatility.patient_means is not None
            else math.nan
        )
        for j, season in enumerate(volatility.seasons):
            rows.append(
                {
                    "region": region, "season": season,
                    "v": volatility.v_rs[i, j], "patient_mean": patients,
                }
            )
        rows.append(
            {
                "region": region, "season": "overall",
                "v": volatility.v_r[i], "patient_mean": patients,
            }
        )
    return pd.DataFrame(rows, columns=["region", "season", "v", "patient_mean"])


def emit_report(
    result: EvaluationResult,
    outdir,
    volatility=None,
) -> list[str]:
    """Write the report CSVs into ``outdir``; returns the filenames written."""
    import os

    os.makedirs(outdir, exist_ok=True)
    written = []

    def _write(name: str, df: pd.DataFrame) -> None:
        df.to_csv(os.path.join(outdir, name), index=False)
        written.append(name)

    _write("scores.csv", scores_frame(result))
    _write("scores_summary.csv", skill_summary(result, by=("scale", "target")))
    _write("mse.csv", mse_frame(result))
    _write("hpd.csv", hpd_frame(result))

    if volatility is not None:
        _write("volatility.csv", volatility_frame(volatility))
    else:
        _write("volatility.csv", pd.DataFrame(columns=["region", "season", "v", "patient_mean"]))

    _write(
        "diagnostics.csv",
        pd.DataFrame(
            [
                {
                    "season": f.season, "forecast_week": f.forecast_week,
                    "max_rhat": f.max_rhat, "min_ess": f.min_ess,
                    "n_draws": f.n_draws, "n_warnings": f.n_warnings,
                }
                for f in result.fits
            ],
            columns=["season", "forecast_week", "max_rhat", "min_ess", "n_draws", "n_warnings"],
        ),
    )
    return written
