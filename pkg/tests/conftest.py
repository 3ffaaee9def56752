"""Shared fixtures for the test suite.

The expensive resources (the desk-scale scenario, its collected training
set, and trained models) are built once per session and shared; models are
cached per (variant, seed) so the acceptance tests can reuse each other's
training runs.
"""

import pytest

from spnpb.experiments import RunSettings, collect_scenario, train_variant
from spnpb.scenarios import build_basic_scenario

ACCEPT_SEEDS = (0, 1, 2)

_criteria: dict[int, tuple[str, bool, str]] = {}


def record_criterion(num: int, title: str, passed: bool, detail: str = ""):
    _criteria[num] = (title, bool(passed), detail)


@pytest.fixture
def criterion():
    """Recorder for acceptance-criterion verdicts; one line each is printed
    in the terminal summary."""
    return record_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, passed, detail = _criteria[num]
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {num} [{verdict}] {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk_settings() -> RunSettings:
    return RunSettings()


@pytest.fixture(scope="session")
def desk_spec():
    return build_basic_scenario()


@pytest.fixture(scope="session")
def desk_data(desk_spec):
    return collect_scenario(desk_spec)


@pytest.fixture(scope="session")
def model_cache(desk_data, desk_settings):
    """get(variant, seed) -> (model, report), trained at most once each."""
    cache = {}

    def get(variant: str, seed: int):
        key = (variant, seed)
        if key not in cache:
            cache[key] = train_variant(desk_data, variant, desk_settings,
                                       seed=seed)
        return cache[key]

    return get
