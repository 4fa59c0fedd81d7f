"""Posterior-predictive trajectories and multiscale aggregation.

Forecasts are produced at the region (state) scale by pushing every retained
posterior draw through the observation model, then aggregated bottom-up to
multi-state regions and the national scale with population weights. Weeks
already observed pass through as constants, so forecast distributions condition
on the reported series exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import IliPanel, SeasonCalendar, WeightMatrix, epiweeks_in_year
from .model import Hyperconfig, beta_shapes
from .sampler import PosteriorDraws
from .targets import (
    KIND_FROM_LABEL,
    CSV_TARGET_LABELS,
    N_PERCENT_BINS,
    PERCENT_KINDS,
    TargetDistribution,
    point_prediction,
)


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class ForecastJob:
    """Identifies what is being forecast: which season, and how many weeks of
    it have been observed (the forecast week)."""

    season: int
    season_index: int
    n_observed: int
    # reported aggregate series for pass-through, (K, T) proportions; optional
    observed_aggregates: np.ndarray | None = None


@dataclass
class TrajectoryDraws:
    """Sampled season trajectories, (L locations, T weeks, M draws), as
    proportions in [0, 1]. Observed weeks are constant across draws."""

    values: np.ndarray
    locations: tuple[str, ...]
    scale: str  # "state" or "aggregate"
    season: int
    n_observed: int

    @property
    def n_weeks(self) -> int:
        return self.values.shape[1]

    def percent(self, location: str) -> np.ndarray:
        """(T, M) percent-scale draws for one location."""
        return self.values[self.locations.index(location)] * 100.0


def predict_states(
    draws: PosteriorDraws,
    panel: IliPanel,
    job: ForecastJob,
    rng: np.random.Generator,
    hyper: Hyperconfig = Hyperconfig(),
) -> TrajectoryDraws:
    """Posterior-predictive trajectories for every region in the panel.

    Weeks up to ``job.n_observed`` replay the reported values; unreported
    weeks there, and all later weeks, are drawn from the Beta observation
    model under each retained parameter draw.
    """
    s = job.season_index
    mu_common = draws.component("mu_common")  # (M, T)
    mu_region = draws.component("mu_region")  # (M, R, T)
    mu_season = draws.component("mu_season")[:, s, :]  # (M, T)
    mu_interaction = draws.component("mu_interaction")[:, :, s, :]  # (M, R, T)
    lam = draws.component("lam")  # (M, R)

    pi = mu_common[:, None, :] + mu_region + mu_season[:, None, :] + mu_interaction
    theta = 1.0 / (1.0 + np.exp(-pi))
    a = np.maximum(lam[:, :, None] * theta, hyper.beta_floor)
    b = np.maximum(lam[:, :, None] * (1.0 - theta), hyper.beta_floor)
    y = rng.beta(a, b)  # (M, R, T)
    y = np.clip(y, 1e-300, 1.0 - 1e-16)

    observed = panel.values[:, s, :]  # (R, T)
    nobs = job.n_observed
    if nobs > 0:
        known = ~np.isnan(observed[:, :nobs])
        rep = np.broadcast_to(observed[None, :, :nobs], y[:, :, :nobs].shape)
        y[:, :, :nobs] = np.where(known[None, :, :], rep, y[:, :, :nobs])

    return TrajectoryDraws(
        values=np.ascontiguousarray(y.transpose(1, 2, 0)),
        locations=panel.region_names,
        scale="state",
        season=job.season,
        n_observed=nobs,
    )


def aggregate(
    state_traj: TrajectoryDraws, weights: WeightMatrix, job: ForecastJob
) -> TrajectoryDraws:
    """Population-weighted aggregate trajectories, (K, T, M).

    Aggregation is an explicit in-order sum over regions so that recomputed
    checks match bit for bit. Observed weeks replay the reported aggregate
    series when the job carries one (the member-state sum need not equal the
    separately reported aggregate when states were missing); later weeks are
    the weighted member draws.
    """
    if state_traj.scale != "state":
        raise AggregationError("can only aggregate state-scale trajectories")
    if tuple(weights.region_names) != tuple(state_traj.locations):
        raise AggregationError("weight rows do not match trajectory locations")
    col_sums = weights.w.sum(axis=0)
    if not np.allclose(col_sums, 1.0, atol=1e-9):
        raise AggregationError(f"weight columns must sum to 1, got {col_sums}")

    R, T, M = state_traj.values.shape
    K = weights.n_aggregates
    out = np.zeros((K, T, M))
    for k in range(K):
        acc = np.zeros((T, M))
        for r in range(R):
            w = weights.w[r, k]
            if w != 0.0:
                acc = acc + w * state_traj.values[r]
        out[k] = acc

    nobs = state_traj.n_observed
    if job.observed_aggregates is not None and nobs > 0:
        rep = job.observed_aggregates[:, :nobs]
        known = ~np.isnan(rep)
        out[:, :nobs, :] = np.where(known[:, :, None], rep[:, :, None], out[:, :nobs, :])

    return TrajectoryDraws(
        values=out,
        locations=weights.aggregate_names,
        scale="aggregate",
        season=state_traj.season,
        n_observed=nobs,
    )


# ---------------------------------------------------------------------------
# submission-style CSV round trip

_HEADER = ("location", "target", "type", "unit", "bin_start_incl", "bin_end_notincl", "value")


def _week_bin_labels(calendar: SeasonCalendar, season: int) -> list[tuple[str, str]]:
    """(start, end) epiweek labels for season-week bins 1..n_weeks."""
    labels = calendar.epiweek_labels(season)
    out = []
    for t in range(1, calendar.n_weeks + 1):
        year, ew = calendar.season_week_to_year_week(season, t)
        nxt = 1 if ew == epiweeks_in_year(year) else ew + 1
        out.append((f"{float(ew):g}", f"{float(nxt):g}"))
    assert len(labels) == len(out)
    return out


def write_flusight_csv(dists, path, calendar: SeasonCalendar, season: int) -> None:
    """Write target distributions as a submission-style CSV.

    One Point row per target (onset may be "none"), then one Bin row per bin.
    Bin probabilities are written in full precision and must sum to 1 within
    1e-6 per target.
    """
    week_bins = _week_bin_labels(calendar, season)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER)
        for dist in dists:
            dist.check()
            label = CSV_TARGET_LABELS[dist.kind]
            unit = "percent" if dist.kind in PERCENT_KINDS else "week"
            point = point_prediction(dist)
            point_txt = "none" if point is None else repr(float(point))
            if unit == "week" and point is not None:
                point_txt = week_bins[int(point) - 1][0]
            writer.writerow([dist.location, label, "Point", unit, "", "", point_txt])
            if dist.kind in PERCENT_KINDS:
                for i, p in enumerate(dist.probabilities):
                    lo = f"{i / 10.0:.1f}"
                    hi = "100" if i == N_PERCENT_BINS - 1 else f"{(i + 1) / 10.0:.1f}"
                    writer.writerow([dist.location, label, "Bin", unit, lo, hi, repr(float(p))])
            else:
                T = dist.n_weeks
                for t in range(1, T + 1):
                    lo, hi = week_bins[t - 1]
                    writer.writerow(
                        [dist.location, label, "Bin", unit, lo, hi, repr(float(dist.probabilities[t - 1]))]
                    )
                if dist.kind == "onset":
                    writer.writerow(
                        [dist.location, label, "Bin", unit, "none", "none",
                         repr(float(dist.probabilities[T]))]
                    )


def read_flusight_csv(
    path, calendar: SeasonCalendar, season: int, forecast_week: int
) -> dict[tuple[str, str], TargetDistribution]:
    """Read a submission-style CSV back into target distributions."""
    week_bins = _week_bin_labels(calendar, season)
    week_of_label = {lo: t + 1 for t, (lo, _) in enumerate(week_bins)}
    bins: dict[tuple[str, str], dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip().lower() for f in reader.fieldnames or []]
        if fields != list(_HEADER):
            raise ValueError(f"{path}: unexpected header {fields}")
        for rec in reader:
            if rec["type"].strip().lower() != "bin":
                continue
            label = rec["target"].strip()
            kind = KIND_FROM_LABEL.get(label)
            if kind is None:
                raise ValueError(f"{path}: unknown target {label!r}")
            key = (rec["location"].strip(), kind)
            entry = bins.setdefault(key, {})
            start = rec["bin_start_incl"].strip()
            value = float(rec["value"])
            if kind in PERCENT_KINDS:
                entry[int(float(start) * 10 + 0.5)] = value
            elif start.lower() == "none":
                entry["none"] = value
            else:
                entry[week_of_label[f"{float(start):g}"] - 1] = value

    out: dict[tuple[str, str], TargetDistribution] = {}
    T = calendar.n_weeks
    for (location, kind), entry in bins.items():
        if kind in PERCENT_KINDS:
            p = np.zeros(N_PERCENT_BINS)
            for i, v in entry.items():
                p[i] = v
        else:
            p = np.zeros(T + 1 if kind == "onset" else T)
            for i, v in entry.items():
                if i == "none":
                    p[T] = v
                else:
                    p[i] = v
        dist = TargetDistribution(location, kind, forecast_week, p)
        dist.check()
        out[(location, kind)] = dist
    return out
