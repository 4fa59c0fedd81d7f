"""Library-level walkthrough of one forecast, from panel to scored targets.

Fits a small synthetic panel mid-season, pushes the posterior through the
observation model, aggregates the state trajectories to the regional and
national scales, bins them into the standard targets, and scores each target
against the season as it actually finished.
"""

import os
import tempfile

import numpy as np

from fluscale import data as da
from fluscale import forecast as fo
from fluscale import model as mo
from fluscale import sampler as sa
from fluscale import targets as tg

rng = np.random.default_rng(30)
R, S, T = 3, 2, 16
NOBS = 7
BASELINE = 2.0

# a world with one past season and the season being forecast
t = np.arange(T)
curve = 0.9 + 3.2 * np.exp(-0.5 * ((t - 9) / 2.8) ** 2)
theta = curve[None, None, :] / 100.0 * (0.8 + 0.4 * rng.random((R, S, T)))
lam = np.array([500.0, 1500.0, 900.0])
values = rng.beta(lam[:, None, None] * theta, lam[:, None, None] * (1.0 - theta))
panel = da.panel_from_values(values)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "weights.csv")
    with open(path, "w") as fh:
        fh.write("state,hhs_region,population\n")
        fh.write("state01,9,6392017\nstate02,9,37253956\nstate03,10,6724540\n")
    weights = da.load_weights(path, panel.region_names)

# hide the future of the last season from the sampler
fit_values = panel.values.copy()
fit_values[:, -1, NOBS:] = np.nan
config = sa.McmcConfig(n_chains=1, n_iterations=6000, thin=5, burnin=200, seed=4)
draws = sa.run_chains(fit_values, mo.Hyperconfig(), config)
print(f"kept {draws.n_draws} draws; min ESS {np.nanmin(draws.diagnostics['ess']):.0f}")

job = fo.ForecastJob(
    season=panel.seasons[-1],
    season_index=S - 1,
    n_observed=NOBS,
    observed_aggregates=da.observed_aggregates(panel, weights)[:, S - 1, :],
)
states = fo.predict_states(draws, panel, job, np.random.default_rng(99))
aggs = fo.aggregate(states, weights, job)
k = weights.aggregate_index("US National")

print(f"\nnational forecast from week {NOBS}, median and 90% band (percent):")
band = np.percentile(aggs.values[k] * 100.0, [5, 50, 95], axis=1)
truth_pct = job.observed_aggregates[k] * 100.0
for week in range(T):
    marker = "observed" if week < NOBS else f"truth {truth_pct[week]:.2f}"
    print(
        f"  week {week + 1:>2}  {band[1, week]:5.2f}  "
        f"[{band[0, week]:5.2f}, {band[2, week]:5.2f}]  {marker}"
    )

dists = tg.target_distributions(
    aggs.values[k] * 100.0, "US National", NOBS, baseline=BASELINE
)
truth = tg.SeasonTruth.from_percent(
    "US National", "national", job.season, truth_pct, BASELINE
)
print(f"\nrealized onset week {truth.onset}, peak {truth.peak_value}% at {truth.peak_weeks}")

print("\ntarget scores at this forecast week:")
for kind, dist in dists.items():
    skill = tg.multibin_score(dist, truth)
    point = tg.point_prediction(dist)
    if skill is None:
        continue
    print(f"  {kind:<16} point {point:6.2f}   multibin skill {skill:.3f}")
