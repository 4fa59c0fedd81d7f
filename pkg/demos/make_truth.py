"""Writes the realized-season truth CSV the score command consumes.

Usage: make_truth.py PANEL.npz WEIGHTS.csv SEASON OUT.csv

State truths come straight from the panel; aggregate truths are the
population-weighted observed series, matching how the live pipeline would
have seen the season end.
"""

import sys

from fluscale import data as da


def main(argv):
    panel_path, weights_path, season, out_path = argv
    panel = da.load_panel(panel_path)
    s = panel.seasons.index(int(season))
    weights = da.load_weights(weights_path, panel.region_names)
    agg = da.observed_aggregates(panel, weights)

    lines = ["location,scale,week,percent"]
    for r, state in enumerate(panel.region_names):
        for t in range(panel.n_weeks):
            lines.append(f"{state},state,{t + 1},{panel.values[r, s, t] * 100.0:.4f}")
    for k, loc in enumerate(weights.aggregate_names):
        scale = "national" if loc == "US National" else "regional"
        for t in range(panel.n_weeks):
            lines.append(f"{loc},{scale},{t + 1},{agg[k, s, t] * 100.0:.4f}")
    with open(out_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main(sys.argv[1:])
