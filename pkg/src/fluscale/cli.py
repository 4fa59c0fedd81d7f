"""Command-line interface.

Subcommands: clean, fit, forecast, score, evaluate, volatility, selfcheck.
Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical or
validation failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import asdict

import numpy as np
import pandas as pd

from . import config as cfgmod
from . import data as datamod
from . import evaluation as evalmod
from . import targets as targetsmod
from .forecast import ForecastJob, aggregate, predict_states, read_flusight_csv, write_flusight_csv
from .model import Hyperconfig, ModelDims, NumericalError
from .sampler import (
    McmcConfig,
    PosteriorDraws,
    SamplerError,
    geweke_joint_test,
    run_chains,
)


class UsageError(ValueError):
    pass


class SelfcheckFailure(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; keep 2 for data errors
        raise UsageError(message)


def _add_common(p, *names):
    if "input" in names:
        p.add_argument("--input", required=True, help="input file")
    if "weights" in names:
        p.add_argument("--weights", required=True, help="state,hhs_region,population CSV")
    if "baselines" in names:
        p.add_argument("--baselines", help="location,season,baseline_percent CSV")
    if "season" in names:
        p.add_argument("--season", help="season start year (evaluate: comma list or 'all')")
    if "nobs" in names:
        p.add_argument("--nobs", type=int, help="number of observed season weeks")
    if "seed" in names:
        p.add_argument("--seed", type=int, help="overrides mcmc.seed")
    if "jobs" in names:
        p.add_argument("--jobs", type=int, default=1, help="parallel chains")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", required=True, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fluscale", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="parse and clean an ILINet-style CSV into a panel file")
    _add_common(p, "input")

    p = sub.add_parser("fit", help="run MCMC on a panel file")
    _add_common(p, "input", "season", "nobs", "seed", "jobs")

    p = sub.add_parser("forecast", help="turn a fit into submission CSVs")
    _add_common(p, "input", "weights", "baselines", "season", "nobs", "seed")

    p = sub.add_parser("score", help="score submission CSVs against truth")
    _add_common(p, "input", "baselines", "season", "nobs")
    p.add_argument("--truth", required=True, help="location,scale,week,percent CSV")

    p = sub.add_parser("evaluate", help="leave-one-season-out experiment")
    _add_common(p, "input", "weights", "baselines", "season", "seed", "jobs")

    p = sub.add_parser("volatility", help="standardized volatility report")
    _add_common(p, "input")

    p = sub.add_parser("selfcheck", help="run built-in numerical validation checks")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fast", action="store_true", help="shorter sampler checks")
    return parser


def _load_cfg(path):
    return cfgmod.parse_config(path) if path else {}


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"--{name} is required for this command")


# ---------------------------------------------------------------------------
# fit files: posterior draws plus the training panel they came from


def _save_fit(path, draws: PosteriorDraws, panel: datamod.IliPanel) -> None:
    np.savez_compressed(
        path,
        draws=draws.draws,
        chain_id=draws.chain_id,
        dims=np.array(draws.dims.shape),
        config=np.array(json.dumps(asdict(draws.config))),
        accept=np.array(json.dumps(draws.accept_rates)),
        panel_values=panel.values,
        region_names=np.array(panel.region_names),
        seasons=np.array(panel.seasons),
        calendar=np.array([panel.calendar.start_epiweek, panel.calendar.n_weeks]),
    )


def _load_fit(path) -> tuple[PosteriorDraws, datamod.IliPanel]:
    with np.load(path, allow_pickle=False) as z:
        dims = ModelDims(*(int(v) for v in z["dims"]))
        draws = PosteriorDraws(
            draws=z["draws"],
            chain_id=z["chain_id"],
            dims=dims,
            config=McmcConfig(**json.loads(str(z["config"]))),
            accept_rates=json.loads(str(z["accept"])),
        )
        start, n_weeks = (int(v) for v in z["calendar"])
        panel = datamod.IliPanel(
            values=z["panel_values"],
            region_names=tuple(str(n) for n in z["region_names"]),
            seasons=tuple(int(s) for s in z["seasons"]),
            calendar=datamod.SeasonCalendar(start_epiweek=start, n_weeks=n_weeks),
        )
    return draws, panel


# ---------------------------------------------------------------------------
# subcommands


def _cmd_clean(args) -> int:
    cfg = _load_cfg(args.config)
    calendar = cfgmod.calendar_from(cfg)
    rows = datamod.parse_ilinet(args.input)
    panel = datamod.build_panel(rows, calendar)
    datamod.save_panel(panel, args.out)
    n_missing = int(np.isnan(panel.values).sum())
    print(
        f"panel: {panel.n_regions} regions x {panel.n_seasons} seasons x "
        f"{panel.n_weeks} weeks, {n_missing} missing"
    )
    return 0


def _cmd_fit(args) -> int:
    cfg = _load_cfg(args.config)
    hyper = cfgmod.hyper_from(cfg)
    mcmc = cfgmod.mcmc_from(cfg, seed=args.seed)
    panel = datamod.load_panel(args.input)
    values = panel.values.copy()
    if args.season is not None:
        s = panel.season_index(int(args.season))
        nobs = args.nobs if args.nobs is not None else 0
        values[:, s, nobs:] = np.nan
    train_panel = datamod.IliPanel(
        values=values,
        region_names=panel.region_names,
        seasons=panel.seasons,
        calendar=panel.calendar,
    )
    draws = run_chains(values, hyper, mcmc, n_jobs=args.jobs)
    _save_fit(args.out, draws, train_panel)
    rhat = draws.diagnostics.get("rhat")
    rhat_txt = "no rhat (single chain)" if rhat is None else f"max rhat {np.nanmax(rhat):.3f}"
    print(
        f"kept {draws.n_draws} draws from {mcmc.n_chains} chains; "
        f"{rhat_txt}; warnings {len(draws.diagnostics['warnings'])}"
    )
    return 0


def _cmd_forecast(args) -> int:
    cfg = _load_cfg(args.config)
    hyper = cfgmod.hyper_from(cfg)
    _require(args, "season", "nobs")
    season = int(args.season)
    draws, panel = _load_fit(args.input)
    weights = datamod.load_weights(args.weights, panel.region_names)
    baselines = datamod.load_baselines(args.baselines) if args.baselines else {}
    s = panel.season_index(season)
    agg_series = datamod.observed_aggregates(panel, weights)
    job = ForecastJob(
        season=season, season_index=s, n_observed=args.nobs,
        observed_aggregates=agg_series[:, s, :],
    )
    seed = args.seed if args.seed is not None else draws.config.seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, season, args.nobs]))
    dists = evalmod.forecast_distributions(draws, panel, weights, baselines, job, rng, hyper)
    flat = [d for per_kind in dists.values() for d in per_kind.values()]
    os.makedirs(args.out, exist_ok=True)
    _, ew = panel.calendar.season_week_to_year_week(season, args.nobs)
    out_path = os.path.join(args.out, f"EW{ew:02d}-{season}.csv")
    write_flusight_csv(flat, out_path, panel.calendar, season)
    print(f"wrote {out_path} ({len(flat)} targets, {len(dists)} locations)")
    return 0


def _read_truth_csv(path, calendar) -> dict[str, dict]:
    df = pd.read_csv(path)
    need = {"location", "scale", "week", "percent"}
    if not need.issubset(df.columns):
        raise datamod.IliParseError(f"{path}: line 1: need columns {sorted(need)}")
    out: dict[str, dict] = {}
    for loc, group in df.groupby("location"):
        arr = np.full(calendar.n_weeks, np.nan)
        for _, row in group.iterrows():
            t = int(row["week"])
            if not 1 <= t <= calendar.n_weeks:
                raise datamod.DataError(f"{path}: week {t} outside the season")
            arr[t - 1] = row["percent"]
        out[str(loc)] = {"scale": str(group["scale"].iloc[0]), "percent": arr}
    return out


def _cmd_score(args) -> int:
    cfg = _load_cfg(args.config)
    calendar = cfgmod.calendar_from(cfg)
    _require(args, "season")
    season = int(args.season)
    baselines = datamod.load_baselines(args.baselines) if args.baselines else {}
    truth_rows = _read_truth_csv(args.truth, calendar)
    truths = {
        loc: targetsmod.SeasonTruth.from_percent(
            loc, spec["scale"], season, spec["percent"],
            baseline=baselines.get((loc, season)),
        )
        for loc, spec in truth_rows.items()
    }

    if os.path.isdir(args.input):
        files = sorted(
            os.path.join(args.input, n) for n in os.listdir(args.input) if n.endswith(".csv")
        )
    else:
        files = [args.input]
    first = cfg.get("evaluation.first_week", 5)
    last = cfg.get("evaluation.last_week", 29)

    result = evalmod.EvaluationResult()
    for path in files:
        fw = _forecast_week_of(path, calendar, season, args.nobs)
        dists = read_flusight_csv(path, calendar, season, fw)
        per_loc: dict[str, dict] = {}
        for (loc, kind), dist in dists.items():
            if loc in truths:
                per_loc.setdefault(loc, {})[kind] = dist
        result.extend(
            evalmod.score_forecast(
                per_loc, truths, "submission", first, last,
                point_estimator=cfg.get("evaluation.point_estimator", "mean"),
            )
        )

    os.makedirs(args.out, exist_ok=True)
    evalmod.scores_frame(result).to_csv(os.path.join(args.out, "scores.csv"), index=False)
    summary = evalmod.skill_summary(result, by=("location", "target"))
    summary.to_csv(os.path.join(args.out, "scores_summary.csv"), index=False)
    for _, row in summary.iterrows():
        print(f"{row['location']:<24} {row['target']:<16} skill {row['skill']:.4f} (n={row['n']})")
    return 0


def _forecast_week_of(path, calendar, season, nobs) -> int:
    m = re.search(r"EW(\d{1,2})", os.path.basename(path))
    if m:
        ew = int(m.group(1))
        year = season if ew >= calendar.start_epiweek else season + 1
        loc = calendar.year_week_to_season_week(year, ew)
        if loc is None or loc[0] != season:
            raise datamod.DataError(f"{path}: EW{ew} is not in season {season}")
        return loc[1]
    if nobs is None:
        raise UsageError(f"cannot infer forecast week from {path}; pass --nobs")
    return nobs


def _cmd_evaluate(args) -> int:
    cfg = _load_cfg(args.config)
    hyper = cfgmod.hyper_from(cfg)
    mcmc = cfgmod.mcmc_from(cfg, seed=args.seed)
    panel = datamod.load_panel(args.input)
    weights = datamod.load_weights(args.weights, panel.region_names)
    baselines = datamod.load_baselines(args.baselines) if args.baselines else {}
    if args.season in (None, "all"):
        seasons = panel.seasons
    else:
        seasons = tuple(int(s) for s in str(args.season).split(","))
    first = cfg.get("evaluation.first_week", 5)
    last = cfg.get("evaluation.last_week", 29)
    plan = evalmod.ExperimentPlan(
        seasons=seasons,
        forecast_weeks=tuple(range(first, last + 1)),
        point_estimator=cfg.get("evaluation.point_estimator", "mean"),
    )
    result = evalmod.run_loso(
        panel, weights, baselines, plan, hyper, mcmc, n_jobs=args.jobs,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    vol = datamod.standardized_volatility(panel)
    written = evalmod.emit_report(result, args.out, volatility=vol)
    print(f"wrote {', '.join(written)} to {args.out}")
    overall = evalmod.skill_summary(result, by=("scale",))
    for _, row in overall.iterrows():
        print(f"{row['scale']:<10} skill {row['skill']:.4f} (n={row['n']})")
    return 0


def _cmd_volatility(args) -> int:
    cfg = _load_cfg(args.config)
    calendar = cfgmod.calendar_from(cfg)
    if args.input.endswith(".npz"):
        panel = datamod.load_panel(args.input)
        patients = None
    else:
        rows = datamod.parse_ilinet(args.input)
        panel = datamod.build_panel(rows, calendar)
        patients = datamod.aggregate_weekly_patients(rows, panel.region_names)
    report = datamod.standardized_volatility(panel, patient_means=patients)
    evalmod.volatility_frame(report).to_csv(args.out, index=False)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# selfcheck


def _check(name: str, ok: bool, detail: str = "") -> None:
    if ok:
        print(f"ok: {name}" + (f" ({detail})" if detail else ""))
    else:
        raise SelfcheckFailure(f"{name}: {detail}")


def _selfcheck_scoring() -> None:
    # A season with baseline 3.2 crossing up at week 8: onset skill averaged
    # over its evaluation window must land on the documented worked value.
    T = 35
    percent = np.full(T, 1.0)
    percent[7:17] = 4.0  # weeks 8..17 at/above baseline
    truth = targetsmod.SeasonTruth.from_percent("HHS Region 6", "regional", 2014, percent, 3.2)
    _check("onset truth", truth.onset == 8, f"got {truth.onset}")

    skills = [0.27, 0.22, 0.10, 0.68] + [0.99] * 6
    records = []
    for fw, skill in zip(range(5, 15), skills):
        p = np.zeros(T + 1)
        p[7] = skill  # all credited mass on the true onset week
        p[T] = 1.0 - skill
        dist = targetsmod.TargetDistribution("HHS Region 6", "onset", fw, p)
        window = targetsmod.evaluation_window("onset", truth, 5, 29)
        _check(f"onset window contains week {fw}", fw in window)
        got = targetsmod.multibin_score(dist, truth)
        _check(f"multibin at week {fw}", abs(got - skill) < 1e-12, f"{got} vs {skill}")
        records.append(got)
    overall = targetsmod.average_scores(records)
    _check("worked scoring example", abs(overall - 0.57) < 0.005, f"{overall:.4f}")


def _selfcheck_aggregation() -> None:
    rows = [
        ("AZ", 4, 6_407_774, 3.284),
        ("CA", 9, 37_320_903, 2.498),
        ("HI", 9, 1_363_963, 4.341),
        ("NV", 9, 2_702_464, 1.434),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "weights.csv")
        with open(path, "w") as fh:
            fh.write("state,hhs_region,population\n")
            for name, region, pop, _ in rows:
                fh.write(f"{name},{region},{pop}\n")
        weights = datamod.load_weights(path, [r[0] for r in rows])
    k = weights.aggregate_index("US National")
    total = 0.0
    for r, (_, _, _, ili) in enumerate(rows):
        total += weights.w[r, k] * ili
    _check("population-weighted aggregate", abs(total - 2.596) < 1e-3, f"{total:.5f}")


def _selfcheck_padding() -> None:
    p = np.zeros(36)
    p[0] = 1.0
    dist = targetsmod.TargetDistribution("x", "onset", 10, p)
    padded = targetsmod.pad_distribution(dist)
    worst = math.log(float(padded.probabilities.min()) * 3)
    _check(
        "padding floors worst-case onset score",
        worst >= math.log(3 * targetsmod.PAD_WEEK) - 0.01,
        f"{worst:.4f}",
    )

    p = np.zeros(targetsmod.N_PERCENT_BINS)
    p[0] = 1.0
    dist = targetsmod.TargetDistribution("x", "week1", 10, p)
    padded = targetsmod.pad_distribution(dist)
    worst = math.log(float(padded.probabilities.min()) * 11)
    _check(
        "padding floors worst-case percent score",
        worst >= math.log(11 * targetsmod.PAD_PERCENT) - 0.01,
        f"{worst:.4f}",
    )


def _selfcheck_geweke(cycles: int, seed: int) -> None:
    dims = ModelDims(2, 2, 6)
    z = geweke_joint_test(dims, Hyperconfig(), n_cycles=cycles, warmup=300, seed=seed)
    worst = max(abs(v) for v in z.values())
    # 26 moments; 5 sigma keeps the false-alarm rate negligible at this length
    _check("joint-distribution test", worst < 5.0, f"max |z| = {worst:.2f}")


def _selfcheck_prior_moments(seed: int, fast: bool) -> None:
    dims = ModelDims(2, 2, 5)
    values = np.full(dims.shape, np.nan)
    config = McmcConfig(
        n_chains=1,
        n_iterations=2000 if fast else 6000,
        thin=2,
        burnin=100,
        seed=seed,
    )
    draws = run_chains(values, Hyperconfig(), config)
    for name in ("lam_prec", "alpha_a", "alpha_b"):
        x = draws.component(name)
        se = float(np.std(x, ddof=1)) / math.sqrt(max(draws.diagnostics["ess"].min(), 10.0))
        _check(
            f"prior moment {name}",
            abs(float(np.mean(x)) - 1.0) < 6 * max(se, 1e-3),
            f"mean {np.mean(x):.3f}",
        )


def _cmd_selfcheck(args) -> int:
    cfg = _load_cfg(args.config)
    cycles = cfg.get("selfcheck.cycles", 800 if args.fast else 2500)
    _selfcheck_scoring()
    _selfcheck_aggregation()
    _selfcheck_padding()
    _selfcheck_prior_moments(args.seed, args.fast)
    _selfcheck_geweke(cycles, args.seed)
    print("selfcheck passed")
    return 0


# ---------------------------------------------------------------------------


_COMMANDS = {
    "clean": _cmd_clean,
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "score": _cmd_score,
    "evaluate": _cmd_evaluate,
    "volatility": _cmd_volatility,
    "selfcheck": _cmd_selfcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (datamod.DataError, cfgmod.ConfigError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (SamplerError, NumericalError, SelfcheckFailure) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
