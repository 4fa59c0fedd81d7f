"""Surveillance data ingestion: ILINet-style CSVs, season calendars, panels,
census aggregation weights, and descriptive summaries.

A "panel" is the (region, season, week) array of weighted ILI proportions the
model consumes. Weeks are indexed within a surveillance season (week 1 is the
season's first epidemiological week, epiweek 40 by default) so that seasons of
different calendar shape line up.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass, field

import numpy as np

from .targets import round_tenth_array

# ILINet proportions below this are reporting noise; clamp up so the Beta
# likelihood never sees boundary values.
MIN_PROPORTION = 0.0005
MAX_PROPORTION = 1.0 - 1e-6


class DataError(ValueError):
    """Raised for unusable surveillance inputs (inconsistent counts, duplicate
    rows, bad weight tables)."""


class IliParseError(DataError):
    """Raised for structurally malformed CSV inputs; message carries the line."""


# ---------------------------------------------------------------------------
# epidemiological calendar


def _week1_start(year: int) -> _dt.date:
    # Surveillance weeks run Sunday-Saturday; week 1 is the first week with at
    # least four days in the new year, i.e. the week containing January 4.
    jan4 = _dt.date(year, 1, 4)
    return jan4 - _dt.timedelta(days=(jan4.weekday() + 1) % 7)


def epiweeks_in_year(year: int) -> int:
    """Number of epidemiological weeks (52 or 53) in a calendar year."""
    return (_week1_start(year + 1) - _week1_start(year)).days // 7


@dataclass(frozen=True)
class SeasonCalendar:
    """Maps (calendar year, epiweek) to (season, season week) and back.

    ``start_epiweek`` is the epiweek at which each season begins (season week
    1); ``n_weeks`` is the fixed season length. Seasons are identified by the
    calendar year they start in. In 53-week years the extra week shifts the
    calendar labels of later season weeks; season-week indices are unaffected.
    """

    start_epiweek: int = 40
    n_weeks: int = 35

    def season_week_to_year_week(self, season: int, t: int) -> tuple[int, int]:
        """Season week ``t`` (1-based) -> (calendar year, epiweek)."""
        if not 1 <= t <= self.n_weeks:
            raise ValueError(f"season week {t} outside 1..{self.n_weeks}")
        ew = self.start_epiweek + t - 1
        n = epiweeks_in_year(season)
        if ew > n:
            return season + 1, ew - n
        return season, ew

    def year_week_to_season_week(self, year: int, epiweek: int) -> tuple[int, int] | None:
        """(calendar year, epiweek) -> (season, season week), or None if the
        week falls outside every season window."""
        if epiweek >= self.start_epiweek:
            season, t = year, epiweek - self.start_epiweek + 1
        else:
            season = year - 1
            t = epiweeks_in_year(season) - self.start_epiweek + 1 + epiweek
        if 1 <= t <= self.n_weeks and 1 <= epiweek <= epiweeks_in_year(year):
            return season, t
        return None

    def epiweek_labels(self, season: int) -> list[int]:
        """Calendar epiweek numbers for season weeks 1..n_weeks."""
        return [self.season_week_to_year_week(season, t)[1] for t in range(1, self.n_weeks + 1)]


# ---------------------------------------------------------------------------
# raw rows and cleaning


@dataclass(frozen=True)
class RawIliRow:
    region_id: str
    year: int
    epiweek: int
    ili_percent: float | None  # weighted ILI, percent scale
    ilitotal: int | None
    total_patients: int | None


def clean_row(row: RawIliRow) -> float | None:
    """Cleaned ILI proportion for one report, or None if unusable.

    Rules: an unknown or zero patient denominator makes the week missing; a
    missing percentage with a reported zero ILI count is a true zero; anything
    reported is clamped into [MIN_PROPORTION, MAX_PROPORTION).
    """
    if (
        row.ilitotal is not None
        and row.total_patients is not None
        and row.ilitotal > row.total_patients
    ):
        raise DataError(
            f"{row.region_id} {row.year}w{row.epiweek}: "
            f"ilitotal {row.ilitotal} exceeds total_patients {row.total_patients}"
        )
    if row.total_patients is None or row.total_patients == 0:
        return None
    if row.ili_percent is None:
        if row.ilitotal == 0:
            y = 0.0
        else:
            return None
    else:
        y = row.ili_percent / 100.0
    return min(max(y, MIN_PROPORTION), MAX_PROPORTION)


_REQUIRED_COLUMNS = ("region", "year", "week", "ili", "ilitotal", "total_patients")
_NA_TOKENS = {"", "na", "nan", "null", "none", "x"}


def _parse_number(text: str, kind=float):
    text = text.strip()
    if text.lower() in _NA_TOKENS:
        return None
    try:
        return kind(text)
    except ValueError:
        return None


def parse_ilinet(path) -> list[RawIliRow]:
    """Parse an ILINet-style CSV with columns region, year, week, ili,
    ilitotal, total_patients (extra columns ignored, NA for missing)."""
    rows: list[RawIliRow] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IliParseError(f"{path}: line 1: empty file") from None
        names = [h.strip().lower() for h in header]
        missing = [c for c in _REQUIRED_COLUMNS if c not in names]
        if missing:
            raise IliParseError(f"{path}: line 1: missing columns {', '.join(missing)}")
        idx = {c: names.index(c) for c in _REQUIRED_COLUMNS}
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) < len(names):
                raise IliParseError(f"{path}: line {lineno}: expected {len(names)} fields")
            year = _parse_number(rec[idx["year"]], int)
            week = _parse_number(rec[idx["week"]], int)
            if year is None or week is None:
                raise IliParseError(f"{path}: line {lineno}: unparseable year/week")
            ilitotal = _parse_number(rec[idx["ilitotal"]], int)
            total = _parse_number(rec[idx["total_patients"]], int)
            rows.append(
                RawIliRow(
                    region_id=rec[idx["region"]].strip(),
                    year=year,
                    epiweek=week,
                    ili_percent=_parse_number(rec[idx["ili"]]),
                    ilitotal=ilitotal,
                    total_patients=total,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# panels


@dataclass
class IliPanel:
    """Cleaned ILI proportions on a (region, season, week) grid; NaN = missing."""

    values: np.ndarray  # (R, S, T) float, NaN for missing
    region_names: tuple[str, ...]
    seasons: tuple[int, ...]  # season start years, ascending
    calendar: SeasonCalendar = field(default_factory=SeasonCalendar)

    @property
    def n_regions(self) -> int:
        return self.values.shape[0]

    @property
    def n_seasons(self) -> int:
        return self.values.shape[1]

    @property
    def n_weeks(self) -> int:
        return self.values.shape[2]

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def region_index(self, name: str) -> int:
        return self.region_names.index(name)

    def season_index(self, season: int) -> int:
        return self.seasons.index(season)


def build_panel(
    rows: list[RawIliRow],
    calendar: SeasonCalendar | None = None,
    region_names=None,
    seasons=None,
) -> IliPanel:
    """Assemble cleaned rows into a panel.

    ``region_names``/``seasons`` default to everything seen in ``rows``;
    passing them explicitly keeps wholly unreported regions (as all-missing
    slices) and fixes ordering. Rows outside every season window are dropped;
    two rows for the same cell are an error.
    """
    calendar = calendar or SeasonCalendar()
    placed = []
    for row in rows:
        loc = calendar.year_week_to_season_week(row.year, row.epiweek)
        if loc is None:
            continue
        placed.append((row, loc))
    if region_names is None:
        region_names = sorted({row.region_id for row, _ in placed})
    if seasons is None:
        seasons = sorted({season for _, (season, _) in placed})
    region_names = tuple(region_names)
    seasons = tuple(int(s) for s in seasons)
    r_index = {name: i for i, name in enumerate(region_names)}
    s_index = {season: i for i, season in enumerate(seasons)}
    values = np.full((len(region_names), len(seasons), calendar.n_weeks), np.nan)
    filled = np.zeros(values.shape, dtype=bool)
    for row, (season, t) in placed:
        r = r_index.get(row.region_id)
        s = s_index.get(season)
        if r is None or s is None:
            continue
        if filled[r, s, t - 1]:
            raise DataError(f"duplicate report for {row.region_id} season {season} week {t}")
        filled[r, s, t - 1] = True
        y = clean_row(row)
        if y is not None:
            values[r, s, t - 1] = y
    return IliPanel(values=values, region_names=region_names, seasons=seasons, calendar=calendar)


def save_panel(panel: IliPanel, path) -> None:
    np.savez_compressed(
        path,
        values=panel.values,
        region_names=np.array(panel.region_names),
        seasons=np.array(panel.seasons),
        calendar=np.array([panel.calendar.start_epiweek, panel.calendar.n_weeks]),
    )


def load_panel(path) -> IliPanel:
    with np.load(path, allow_pickle=False) as z:
        start, n_weeks = (int(v) for v in z["calendar"])
        return IliPanel(
            values=z["values"],
            region_names=tuple(str(n) for n in z["region_names"]),
            seasons=tuple(int(s) for s in z["seasons"]),
            calendar=SeasonCalendar(start_epiweek=start, n_weeks=n_weeks),
        )


def panel_from_values(values, calendar: SeasonCalendar | None = None) -> IliPanel:
    """Wrap a bare (R, S, T) array as a panel with synthetic names."""
    values = np.asarray(values, dtype=float)
    R, S, T = values.shape
    return IliPanel(
        values=values,
        region_names=tuple(f"state{r + 1:02d}" for r in range(R)),
        seasons=tuple(range(2000, 2000 + S)),
        calendar=calendar or SeasonCalendar(n_weeks=T),
    )


def load_baselines(path) -> dict[tuple[str, int], float]:
    """Read a location,season,baseline_percent CSV into a lookup table."""
    out: dict[tuple[str, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip().lower() for f in reader.fieldnames or []]
        for col in ("location", "season", "baseline_percent"):
            if col not in fields:
                raise IliParseError(f"{path}: line 1: missing column {col}")
        for lineno, rec in enumerate(reader, start=2):
            rec = {k.strip().lower(): v for k, v in rec.items() if k is not None}
            try:
                season = int(str(rec["season"]).split("/")[0])
                baseline = float(rec["baseline_percent"])
            except (TypeError, ValueError):
                raise IliParseError(f"{path}: line {lineno}: unparseable row") from None
            out[(rec["location"].strip(), season)] = baseline
    return out


# ---------------------------------------------------------------------------
# census weights and aggregation structure


@dataclass
class WeightMatrix:
    """Population aggregation weights.

    ``w`` has one column per aggregate (each multi-state region with members,
    ascending by region number, then the national total); column entries are
    population shares of member regions and sum to 1.
    """

    w: np.ndarray  # (R, K) columns sum to 1
    membership: np.ndarray  # (R, K) bool
    region_names: tuple[str, ...]
    aggregate_names: tuple[str, ...]
    populations: np.ndarray  # (R,)

    @property
    def n_aggregates(self) -> int:
        return self.w.shape[1]

    def aggregate_index(self, name: str) -> int:
        return self.aggregate_names.index(name)


def load_weights(path, region_names) -> WeightMatrix:
    """Read a state,hhs_region,population CSV and build the weight matrix for
    ``region_names`` (which must match the file's states exactly)."""
    pops: dict[str, float] = {}
    groups: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip().lower() for f in reader.fieldnames or []]
        for col in ("state", "hhs_region", "population"):
            if col not in fields:
                raise IliParseError(f"{path}: line 1: missing column {col}")
        for lineno, rec in enumerate(reader, start=2):
            rec = {k.strip().lower(): v for k, v in rec.items() if k is not None}
            name = rec["state"].strip()
            if name in pops:
                raise DataError(f"{path}: line {lineno}: duplicate state {name}")
            try:
                group = int(rec["hhs_region"])
                pop = float(rec["population"])
            except (TypeError, ValueError):
                raise IliParseError(f"{path}: line {lineno}: unparseable row") from None
            if pop <= 0:
                raise DataError(f"{path}: line {lineno}: nonpositive population for {name}")
            pops[name] = pop
            groups[name] = group
    missing = set(region_names) - set(pops)
    extra = set(pops) - set(region_names)
    if missing or extra:
        raise DataError(
            f"weight table does not match regions (missing: {sorted(missing)}, "
            f"unexpected: {sorted(extra)})"
        )
    region_names = tuple(region_names)
    pop_vec = np.array([pops[name] for name in region_names])
    group_ids = sorted(set(groups.values()))
    agg_names = [f"HHS Region {g}" for g in group_ids] + ["US National"]
    n_agg = len(agg_names)
    member = np.zeros((len(region_names), n_agg), dtype=bool)
    for r, name in enumerate(region_names):
        member[r, group_ids.index(groups[name])] = True
    member[:, -1] = True
    w = member * pop_vec[:, None]
    w = w / w.sum(axis=0, keepdims=True)
    return WeightMatrix(
        w=w,
        membership=member,
        region_names=region_names,
        aggregate_names=tuple(agg_names),
        populations=pop_vec,
    )


def observed_aggregates(panel: IliPanel, weights: WeightMatrix) -> np.ndarray:
    """Population-weighted observed series per aggregate, (K, S, T).

    Missing member regions are dropped week by week and the remaining weights
    renormalized; a week with no reporting members is NaN.
    """
    y = panel.values
    obs = panel.observed
    out = np.full((weights.n_aggregates, panel.n_seasons, panel.n_weeks), np.nan)
    for k in range(weights.n_aggregates):
        wk = weights.w[:, k][:, None, None] * obs
        denom = wk.sum(axis=0)
        num = np.nansum(wk * np.where(obs, y, 0.0), axis=0)
        with np.errstate(invalid="ignore"):
            out[k] = np.where(denom > 0, num / denom, np.nan)
    return out


def aggregate_weekly_patients(rows: list[RawIliRow], region_names) -> np.ndarray:
    """Mean weekly patient volume per region over weeks with a usable count."""
    totals = {name: [] for name in region_names}
    for row in rows:
        if row.region_id in totals and row.total_patients:
            totals[row.region_id].append(row.total_patients)
    return np.array(
        [float(np.mean(totals[name])) if totals[name] else np.nan for name in region_names]
    )


# ---------------------------------------------------------------------------
# scorability of seasonal targets


def scorable_seasonal_targets(panel: IliPanel) -> np.ndarray:
    """(R, S) bool: whether season-level targets (onset/peak) can be validated.

    A region/season is unscorable when any week is missing inside the region's
    buffered historic peak window [earliest peak - 3, latest peak + 3], because
    the true peak could hide in the gap.
    """
    R, S, T = panel.values.shape
    percent = panel.values * 100.0
    out = np.zeros((R, S), dtype=bool)
    for r in range(R):
        peak_weeks: list[int] = []
        for s in range(S):
            y = percent[r, s]
            seen = ~np.isnan(y)
            if not seen.any():
                continue
            rounded = round_tenth_array(np.where(seen, y, -np.inf))
            peak = rounded.max()
            weeks = np.nonzero(rounded == peak)[0] + 1
            peak_weeks.extend((int(weeks.min()), int(weeks.max())))
        if not peak_weeks:
            continue
        lo = max(min(peak_weeks) - 3, 1)
        hi = min(max(peak_weeks) + 3, T)
        window = slice(lo - 1, hi)
        for s in range(S):
            out[r, s] = not np.isnan(panel.values[r, s, window]).any()
    return out


# ---------------------------------------------------------------------------
# standardized volatility


@dataclass
class VolatilityReport:
    v_rs: np.ndarray  # (R, S), NaN where undefined
    v_r: np.ndarray  # (R,)
    patient_means: np.ndarray | None
    region_names: tuple[str, ...]
    seasons: tuple[int, ...]


def standardized_volatility(panel: IliPanel, patient_means=None) -> VolatilityReport:
    """Week-to-week volatility of each region/season after standardizing the
    season's series to mean 0, sd 1.

    v_rs is the root mean square of first differences of the standardized
    series (adjacent observed weeks only); seasons with fewer than two
    observations or no variation are left out. v_r averages v_rs over seasons.
    """
    R, S, T = panel.values.shape
    v_rs = np.full((R, S), np.nan)
    for r in range(R):
        for s in range(S):
            y = panel.values[r, s]
            seen = ~np.isnan(y)
            if seen.sum() < 2:
                continue
            # population sd, so an alternating +-a series standardizes to
            # exactly +-1 and its volatility to exactly 2
            sd = np.std(y[seen])
            if sd == 0 or not math.isfinite(sd):
                continue
            z = (y - np.mean(y[seen])) / sd
            pair = seen[1:] & seen[:-1]
            if not pair.any():
                continue
            d = (z[1:] - z[:-1])[pair]
            v_rs[r, s] = math.sqrt(float(np.mean(d**2)))
    with np.errstate(invalid="ignore"):
        v_r = np.nanmean(v_rs, axis=1)
    return VolatilityReport(
        v_rs=v_rs,
        v_r=v_r,
        patient_means=None if patient_means is None else np.asarray(patient_means, dtype=float),
        region_names=panel.region_names,
        seasons=panel.seasons,
    )
