"""Builds a small synthetic surveillance world under demos/work/.

Four states across three seasons of twenty weeks, with epidemic curves of
varying timing and height, weekly visit counts, population weights, and
regional baselines. The files use the same formats the real pipeline
ingests, so every CLI command runs on them unchanged.
"""

import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
WORK = os.path.join(HERE, "work")

STATES = ("AZ", "CA", "NV", "WA")
REGION = {"AZ": 9, "CA": 9, "NV": 9, "WA": 10}
POPULATION = {"AZ": 6_392_017, "CA": 37_253_956, "NV": 2_700_551, "WA": 6_724_540}
SEASONS = (2013, 2014, 2015)
T = 20


def epidemic_curve(rng, peak_week, height):
    t = np.arange(T)
    curve = height * np.exp(-0.5 * ((t - peak_week) / 3.0) ** 2)
    return 0.8 + curve * (0.85 + 0.3 * rng.random(T))


def main():
    os.makedirs(WORK, exist_ok=True)
    rng = np.random.default_rng(20130)

    lines = ["region,year,week,ili,ilitotal,total_patients"]
    for state in STATES:
        scale = 0.7 + 0.6 * rng.random()
        for season in SEASONS:
            peak = rng.integers(8, 13)
            pct = epidemic_curve(rng, peak, 3.5 * scale)
            for t in range(T):
                week = 40 + t
                patients = int(400 + 300 * rng.random())
                cases = max(int(round(pct[t] / 100.0 * patients)), 1)
                lines.append(
                    f"{state},{season},{week},{cases / patients * 100.0:.4f},{cases},{patients}"
                )
    with open(os.path.join(WORK, "ili.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    with open(os.path.join(WORK, "weights.csv"), "w") as fh:
        fh.write("state,hhs_region,population\n")
        for state in STATES:
            fh.write(f"{state},{REGION[state]},{POPULATION[state]}\n")

    with open(os.path.join(WORK, "baselines.csv"), "w") as fh:
        fh.write("location,season,baseline_percent\n")
        for season in SEASONS:
            for loc in ("HHS Region 9", "HHS Region 10", "US National"):
                fh.write(f"{loc},{season},2.0\n")

    with open(os.path.join(WORK, "run.cfg"), "w") as fh:
        fh.write(
            "# demo protocol: one short chain so the walkthrough finishes in minutes;\n"
            "# production runs use the defaults (3 chains x 30000)\n"
            f"season.length = {T}\n"
            "mcmc.chains = 1\n"
            "mcmc.iterations = 2000\n"
            "mcmc.thin = 5\n"
            "mcmc.burnin = 100\n"
            "mcmc.seed = 7\n"
            "evaluation.first_week = 6\n"
            "evaluation.last_week = 10\n"
        )

    print(f"wrote ili.csv, weights.csv, baselines.csv, run.cfg to {WORK}")


if __name__ == "__main__":
    main()
