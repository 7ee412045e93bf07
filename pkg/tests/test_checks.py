import pytest

from ldgcouple.checks import CheckOutcome, CheckResult, discover_checks, format_results, run_checks


def test_discovery_finds_every_group():
    names = {name for name, _, _ in discover_checks()}
    assert {
        "fluxes_lambda_bound",
        "fluxes_jump_products",
        "fluxes_conservativity",
        "local_solves_vertical_velocity",
        "local_solves_plug_back",
        "local_solves_darcy_linear_head",
        "forcing_oracle",
        "balance_rest_lake",
        "balance_volume",
        "balance_energy",
    } <= names
    assert not any(name.startswith("_") for name in names)


@pytest.mark.parametrize("group", ["fluxes", "local_solves", "forcing"])
def test_fast_groups_pass(group):
    results = run_checks([group])
    assert results
    assert all(r.passed for r in results), format_results(results)


@pytest.mark.slow
def test_balance_group_passes():
    results = run_checks(["balance"])
    assert len(results) == 3
    assert all(r.passed for r in results), format_results(results)


def test_failing_handler_is_reported(monkeypatch):
    from ldgcouple import checks

    def boom(seed: int) -> CheckOutcome:
        raise RuntimeError("exploded")

    monkeypatch.setattr(checks, "discover_checks", lambda: iter([("demo_boom", "always fails", boom)]))
    results = run_checks()
    assert len(results) == 1
    assert isinstance(results[0], CheckResult)
    assert results[0].name == "demo_boom"
    assert not results[0].passed
    assert "exploded" in results[0].detail
    assert "0/1 checks passed" in format_results(results)


def test_unknown_selection_runs_nothing():
    assert run_checks(["nonexistent"]) == []
