"""Named reference interleavings must all self-verify."""

import pytest

from epochkv.errors import UnknownScenario
from epochkv.scenarios import SCENARIOS, run_scenario, scenario_names


def test_names_stable():
    assert scenario_names() == list(SCENARIOS)  # registration order, stable
    for expected in (
        "fig1-ltx",
        "fig1-occ",
        "fig1-mvto",
        "fig2-forwarding",
        "wp-visibility",
        "safe-snapshot",
        "recovery",
    ):
        assert expected in SCENARIOS


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenario_passes(name):
    result = run_scenario(name)
    assert result.checks, "scenario must assert something"
    assert result.passed, "\n" + result.report()


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        run_scenario("fig9-nope")
