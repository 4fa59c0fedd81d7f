"""Prints a one-line verdict per acceptance test after the run."""

import sys

ACCEPTANCE_LINES = [
    ("test_scoring_worked_example", "multibin scoring worked example"),
    ("test_population_weighted_aggregation", "population-weighted aggregation"),
    ("test_multibin_windows", "multibin window membership"),
    ("test_padded_score_floor", "padded log-score floor"),
    ("test_prior_recovery_no_data", "prior recovery with no data"),
    ("test_joint_distribution_zscores", "joint-distribution kernel test"),
    ("test_calibration_coverage", "credible-interval calibration"),
    ("test_interaction_shrinkage_law", "interaction walk shrinkage law"),
    ("test_aggregate_coherence", "aggregate coherence"),
    ("test_onset_peak_brute_force", "onset/peak brute-force equivalence"),
    ("test_reporting_volume_rank", "reporting-volume rank recovery"),
    ("test_reference_config_mixing", "reference configuration mixing"),
    ("test_full_archive_reproduction", "full-archive reproduction (optional)"),
]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            verdicts.setdefault(name, outcome.upper())
    if not verdicts:
        return

    recorded = {}
    for modname, mod in sys.modules.items():
        if modname.endswith("test_acceptance"):
            recorded = getattr(mod, "RECORDED", {})
            break
    by_key = {
        "test_scoring_worked_example": "scoring",
        "test_population_weighted_aggregation": "aggregation",
        "test_multibin_windows": "windows",
        "test_padded_score_floor": "padding",
        "test_prior_recovery_no_data": "prior_recovery",
        "test_joint_distribution_zscores": "joint_test",
        "test_calibration_coverage": "calibration",
        "test_interaction_shrinkage_law": "shrinkage",
        "test_aggregate_coherence": "coherence",
        "test_onset_peak_brute_force": "onset_peak",
        "test_reporting_volume_rank": "volume_rank",
        "test_reference_config_mixing": "mixing",
    }

    tw = terminalreporter
    tw.section("acceptance criteria")
    for name, label in ACCEPTANCE_LINES:
        verdict = verdicts.get(name, "NOT RUN")
        detail = recorded.get(by_key.get(name, ""), "")
        suffix = f"  [{detail}]" if detail else ""
        tw.write_line(f"  {label:<38} {verdict}{suffix}")
