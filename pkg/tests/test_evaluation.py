"""Held-out evaluation tests: interval widths, point errors, the mini
leave-one-season-out pipeline, and report emission."""

import numpy as np
import pandas as pd
import pytest

from fluscale import data as da
from fluscale import evaluation as ev
from fluscale import sampler as sa
from fluscale import targets as tg


def _dist(kind, probs, location="US National", week=10):
    return tg.TargetDistribution(location, kind, week, np.asarray(probs, dtype=float))


# --- credible set width --------------------------------------------------------


def test_hpd_width_point_mass():
    p = np.zeros(131)
    p[25] = 1.0
    assert ev.hpd_width(_dist("peak_intensity", p)) == pytest.approx(0.1)


def test_hpd_width_uniform_percent():
    p = np.full(131, 1.0 / 131.0)
    # 90% of 131 bins is 117.9, so 118 bins of width 0.1
    assert ev.hpd_width(_dist("peak_intensity", p)) == pytest.approx(11.8)


def test_hpd_width_full_level_spans_support():
    p = np.full(131, 1.0 / 131.0)
    assert ev.hpd_width(_dist("peak_intensity", p), level=1.0) == pytest.approx(13.1)


def test_hpd_width_bimodal_non_contiguous():
    p = np.zeros(131)
    p[10] = 0.5
    p[90] = 0.5
    assert ev.hpd_width(_dist("peak_intensity", p)) == pytest.approx(0.2)


def test_hpd_width_week_units():
    p = np.zeros(35)
    p[4] = 0.95
    p[5] = 0.05
    assert ev.hpd_width(_dist("peak_timing", p)) == pytest.approx(1.0)
    assert ev.hpd_width(_dist("peak_timing", p), level=0.97) == pytest.approx(2.0)


def test_hpd_width_monotone_in_level():
    rng = np.random.default_rng(0)
    p = rng.random(131)
    p /= p.sum()
    d = _dist("peak_intensity", p)
    widths = [ev.hpd_width(d, level) for level in (0.5, 0.7, 0.9, 0.99)]
    assert widths == sorted(widths)


# --- point scoring -------------------------------------------------------------


def _truth(percent, baseline=2.0, scale="national", location="US National"):
    return tg.SeasonTruth.from_percent(location, scale, 2015, percent, baseline=baseline)


def _uniform_dists(T=10, week=5, location="US National"):
    kinds = {}
    for kind in tg.ALL_KINDS:
        if kind in tg.PERCENT_KINDS:
            p = np.full(131, 1.0 / 131.0)
        elif kind == "onset":
            p = np.full(T + 1, 1.0 / (T + 1))
        else:
            p = np.full(T, 1.0 / T)
        kinds[kind] = _dist(kind, p, location=location, week=week)
    return kinds


def test_score_forecast_perfect_point_has_zero_mse():
    T = 10
    percent = np.array([1.0, 1.2, 2.5, 3.0, 4.0, 5.0, 4.0, 3.0, 2.0, 1.0])
    truth = _truth(percent)
    p = np.zeros(131)
    p[tg.percent_bin_index(truth.peak_value)] = 1.0
    dists = {"US National": {"peak_intensity": _dist("peak_intensity", p, week=6)}}
    res = ev.score_forecast(dists, {"US National": truth}, "m", 5, 29)
    assert len(res.points) == 1
    rec = res.points[0]
    assert rec.truth == truth.peak_value
    # the point is the bin midpoint, 0.05 above the truth bin's left edge
    assert rec.sq_error == pytest.approx(0.05**2)


def test_score_forecast_constant_error():
    percent = np.full(10, 3.0)
    truth = _truth(percent, baseline=None)
    p = np.zeros(131)
    p[tg.percent_bin_index(5.0)] = 1.0  # predicts 5.05 for a 1-week-ahead of 3.0
    dists = {"US National": {"week1": _dist("week1", p, week=5)}}
    res = ev.score_forecast(dists, {"US National": truth}, "m", 5, 29)
    assert res.points[0].sq_error == pytest.approx((5.05 - 3.0) ** 2)


def test_point_estimator_switch():
    percent = np.full(10, 3.0)
    truth = _truth(percent, baseline=None)
    p = np.zeros(131)
    p[20] = 0.6
    p[80] = 0.4
    dists = {"US National": {"week1": _dist("week1", p, week=5)}}
    mean_res = ev.score_forecast(dists, {"US National": truth}, "m", 5, 29)
    mode_res = ev.score_forecast(
        dists, {"US National": truth}, "m", 5, 29, point_estimator="mode"
    )
    assert mean_res.points[0].point == pytest.approx(0.6 * 2.05 + 0.4 * 8.05)
    assert mode_res.points[0].point == pytest.approx(2.05)


def test_peak_timing_point_uses_nearest_tied_week():
    percent = np.zeros(12)
    percent[2] = 6.0
    percent[9] = 6.0  # tied peaks at weeks 3 and 10
    truth = _truth(percent, baseline=None)
    p = np.zeros(12)
    p[8] = 1.0  # predicts week 9
    dists = {"US National": {"peak_timing": _dist("peak_timing", p, week=6)}}
    res = ev.score_forecast(dists, {"US National": truth}, "m", 5, 29)
    assert res.points[0].truth == 10.0
    assert res.points[0].sq_error == pytest.approx(1.0)


def test_score_forecast_respects_windows():
    # peak already past and surveillance below peak level: late forecasts of
    # seasonal targets stop counting, week-ahead keeps its own window
    T = 30
    percent = np.full(T, 1.0)
    percent[7:10] = [3.0, 5.0, 3.0]
    truth = _truth(percent)
    loc = "US National"
    res_in = ev.score_forecast({loc: _uniform_dists(T, week=7, location=loc)}, {loc: truth}, "m", 5, 29)
    res_out = ev.score_forecast({loc: _uniform_dists(T, week=25, location=loc)}, {loc: truth}, "m", 5, 29)
    kinds_in = {r.target for r in res_in.scores}
    kinds_out = {r.target for r in res_out.scores}
    assert "peak_intensity" in kinds_in and "onset" in kinds_in
    assert "peak_intensity" not in kinds_out and "onset" not in kinds_out


def test_score_forecast_state_counts_everywhere():
    T = 30
    percent = np.full(T, 1.0)
    percent[7:10] = [3.0, 5.0, 3.0]
    truth = _truth(percent, baseline=None, scale="state", location="AK")
    dists = {"AK": _uniform_dists(T, week=25, location="AK")}
    dists["AK"].pop("onset")  # states have no onset target
    res = ev.score_forecast(dists, {"AK": truth}, "m", 5, 29)
    assert {r.target for r in res.scores} >= {"peak_intensity", "peak_timing"}


def test_score_forecast_unscorable_seasonal_skipped():
    T = 12
    percent = np.full(T, 2.0)
    truth = tg.SeasonTruth.from_percent("AK", "state", 2015, percent, seasonal_scorable=False)
    res = ev.score_forecast({"AK": _uniform_dists(T, week=6, location="AK")}, {"AK": truth}, "m", 5, 29)
    assert {r.target for r in res.scores} == {"week1", "week2", "week3", "week4"}


# --- mini end-to-end experiment ------------------------------------------------------


def _mini_inputs():
    rng = np.random.default_rng(42)
    T = 12
    shape = np.concatenate([np.linspace(0.01, 0.05, 6), np.linspace(0.05, 0.012, 6)])
    values = shape[None, None, :] * (0.8 + 0.4 * rng.random((2, 2, T)))
    panel = da.IliPanel(
        values=values,
        region_names=("AZ", "CA"),
        seasons=(2014, 2015),
        calendar=da.SeasonCalendar(n_weeks=T),
    )
    pops = np.array([6.4e6, 37.3e6])
    member = np.ones((2, 2), dtype=bool)
    w = member * pops[:, None]
    w = w / w.sum(axis=0, keepdims=True)
    weights = da.WeightMatrix(w, member, panel.region_names, ("HHS Region 9", "US National"), pops)
    baselines = {
        ("HHS Region 9", season): 2.4 for season in panel.seasons
    } | {("US National", season): 2.2 for season in panel.seasons}
    return panel, weights, baselines


def test_run_loso_mini_pipeline_completeness():
    panel, weights, baselines = _mini_inputs()
    plan = ev.ExperimentPlan(seasons=(2015,), forecast_weeks=(4, 6))
    config = sa.McmcConfig(n_chains=1, n_iterations=300, thin=5, burnin=20, seed=7)
    seen = []
    result = ev.run_loso(
        panel, weights, baselines, plan, config=config, progress=seen.append
    )
    assert seen == ["season 2015 week 4", "season 2015 week 6"]
    assert len(result.fits) == 2
    assert all(f.n_draws == config.kept_per_chain for f in result.fits)

    df = ev.scores_frame(result)
    # every location appears at both forecast weeks
    assert set(df["location"]) == {"AZ", "CA", "HHS Region 9", "US National"}
    assert set(df["forecast_week"]) == {4, 6}
    assert set(df[df["scale"] == "state"]["target"]) <= set(tg.ALL_KINDS) - {"onset"}
    assert (df["skill"] > 0).all() and (df["skill"] <= 1).all()
    np.testing.assert_allclose(df["log_skill"], np.log(df["skill"]))

    # each scored target also produced an interval width; points can be fewer
    # (onset-never truths are excluded) but never more
    assert len(result.hpd) == len(result.scores)
    assert 0 < len(result.points) <= len(result.scores)


def test_summaries_and_report_round_trip(tmp_path):
    panel, weights, baselines = _mini_inputs()
    plan = ev.ExperimentPlan(seasons=(2014,), forecast_weeks=(5,))
    config = sa.McmcConfig(n_chains=1, n_iterations=300, thin=5, burnin=20, seed=8)
    result = ev.run_loso(panel, weights, baselines, plan, config=config)

    summary = ev.skill_summary(result, by=("scale",))
    df = ev.scores_frame(result)
    for _, row in summary.iterrows():
        logs = df[df["scale"] == row["scale"]]["log_skill"]
        assert row["skill"] == pytest.approx(np.exp(logs.mean()))
        assert row["n"] == len(logs)

    mse = ev.mse_table(result, by=("target",))
    pf = ev.mse_frame(result)
    for _, row in mse.iterrows():
        errs = pf[pf["target"] == row["target"]]["sq_error"]
        assert row["mse"] == pytest.approx(errs.mean())

    vol = da.standardized_volatility(panel)
    written = ev.emit_report(result, tmp_path, volatility=vol)
    assert set(written) == {
        "scores.csv", "scores_summary.csv", "mse.csv", "hpd.csv",
        "volatility.csv", "diagnostics.csv",
    }
    back = pd.read_csv(tmp_path / "scores.csv")
    pd.testing.assert_frame_equal(back, df)
    volf = pd.read_csv(tmp_path / "volatility.csv")
    # one row per region-season plus one overall row per region
    assert len(volf) == 2 * (2 + 1)
    overall = volf[volf["season"] == "overall"]
    np.testing.assert_allclose(overall["v"].to_numpy(), vol.v_r)


def test_emit_report_empty_result(tmp_path):
    # an experiment with nothing scored still emits headers-only tables
    written = ev.emit_report(ev.EvaluationResult(), tmp_path)
    assert set(written) == {
        "scores.csv", "scores_summary.csv", "mse.csv", "hpd.csv",
        "volatility.csv", "diagnostics.csv",
    }
    df = pd.read_csv(tmp_path / "scores.csv")
    assert df.empty
    assert list(df.columns) == [
        "model", "location", "scale", "season", "target",
        "forecast_week", "skill", "log_skill",
    ]
    hpd = pd.read_csv(tmp_path / "hpd.csv")
    assert hpd.empty and "width" in hpd.columns


def test_summaries_empty():
    empty = ev.EvaluationResult()
    assert ev.skill_summary(empty).empty
    assert ev.mse_table(empty).empty
