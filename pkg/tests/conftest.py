import numpy as np
import pytest

from riskfair._backend import available_backends
from riskfair.cohort import Cohort, StudentRecord
from riskfair.synth import GeneratorConfig, generate

BACKENDS = available_backends()


def record(i=0, **kw):
    base = dict(id=f"r{i}", year=2010, gender="male", age=18, nationality="national",
                hs_location="in_state", hs_type="public", admission_grade=9.0, dropout=0, underperform=0)
    base.update(kw)
    return StudentRecord(**base)


def small_cohort(n=20, seed=0, **fixed):
    """Random but valid records; keyword arguments pin attributes."""
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        d = int(rng.random() < 0.4)
        kw = dict(
            year=int(rng.choice([2009, 2010, 2011, 2012, 2013, 2014, 2016, 2017])),
            gender="female" if rng.random() < 0.3 else "male",
            age=int(rng.integers(17, 30)),
            nationality="foreign" if rng.random() < 0.3 else "national",
            hs_location="in_state" if rng.random() < 0.7 else "out_of_state",
            hs_type="public" if rng.random() < 0.4 else "non_public",
            admission_grade=round(float(rng.uniform(5, 14)), 2),
            dropout=d,
            underperform=int(not d and rng.random() < 0.3),
        )
        kw.update(fixed)
        recs.append(record(i, **kw))
    return Cohort(tuple(recs))


@pytest.fixture(params=BACKENDS, ids=[b.NAME for b in BACKENDS])
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def cohort10k():
    return generate(GeneratorConfig(n=10_000, seed=7))


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
