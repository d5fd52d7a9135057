import warnings

import pytest

from bimanual.recognizer import train_bundle
from bimanual.signals import synchronize_trials
from bimanual.synthgen import generate_dataset

STUDY_SEED = 0
STUDY_TRIALS = 60


def synced(raw):
    return {g: synchronize_trials([i.trial for i in v], [i.offsets for i in v]) for g, v in raw.items()}


@pytest.fixture(scope="session")
def study_raw():
    return generate_dataset(trials_per_gesture=STUDY_TRIALS, seed=STUDY_SEED)


@pytest.fixture(scope="session")
def study_dataset(study_raw):
    return synced(study_raw)


@pytest.fixture(scope="session")
def bundles(study_dataset):
    """Both approaches trained on the full synthetic study set."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {ap: train_bundle(study_dataset, ap, seed=STUDY_SEED) for ap in ("4x4D", "2x7D")}


# --- acceptance reporting ---------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when == "teardown" or (rep.when == "setup" and rep.passed):
        return
    number, title = marker.args
    _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number} {verdict}: {title}")
