import numpy as np
import pytest

from lporec.catalog import build_catalog
from lporec.data import SyntheticSpec, build_splits, core_filter, generate_synthetic


def catalog_from_counts(counts):
    """Catalog whose item ``i`` was seen ``counts[i]`` times."""
    items = [i for i, c in enumerate(counts) for _ in range(c)]
    return build_catalog(items, num_items=len(counts))


@pytest.fixture(scope="session")
def toy_splits():
    records = generate_synthetic(SyntheticSpec(num_users=120, num_items=60, interactions_per_user=12, seed=3))
    return build_splits(core_filter(records, 5), L_max=10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one (criterion, passed, detail) entry per acceptance check, echoed after the run
acceptance_log = []


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(acceptance_log, key=lambda r: int(r[0].split("-")[1])):
        terminalreporter.write_line(f"{name}: {'PASS' if passed else 'FAIL'}  {detail}")
