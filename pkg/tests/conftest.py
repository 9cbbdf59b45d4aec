import pytest
from hypothesis import settings

from dronepayload import synth_corpus
from dronepayload.evaluation import COMPARISON_CLASSIFIERS, evaluate_instances, featurize_corpus

# statistical properties are checked on a fixed example stream
settings.register_profile("repro", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("repro")

CORPUS_SEED = 0
CORPUS_DURATION_S = 170.0

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def corpus():
    """The default 11-class synthetic corpus, 170 s per class."""
    return synth_corpus(duration_s=CORPUS_DURATION_S, seed=CORPUS_SEED)


@pytest.fixture(scope="session")
def features(corpus):
    cache = {}

    def get(window_s):
        if window_s not in cache:
            cache[window_s] = featurize_corpus(corpus, window_s)
        return cache[window_s]

    return get


@pytest.fixture(scope="session")
def short_corpus():
    return synth_corpus(duration_s=12.0, seed=3)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def comparison(features):
    """{(window_s, classifier name): (report, model)} for every comparison classifier."""
    out = {}
    for w in (0.25, 1.0):
        for spec in COMPARISON_CLASSIFIERS:
            out[(w, spec.name)] = evaluate_instances(features(w), spec, experiment_id="classifier-comparison", parameters={"window_s": w})
    return out
