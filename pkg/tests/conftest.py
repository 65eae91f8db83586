import numpy as np
import pytest

from fallrisk.features import FeatureSet
from fallrisk.geometry import Skeleton, fit_bed_model
from fallrisk.gbdt import Hyperparams
from fallrisk.synthetic import generate_dataset

ACCEPTANCE_RESULTS = []


def record_acceptance(name, passed, detail=""):
    ACCEPTANCE_RESULTS.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def bed():
    """Axis-aligned 100 x 200 bed; left line x=0, right line x=100, middle x=50."""
    return fit_bed_model([(0, 0), (100, 0), (100, 200), (0, 200)])


def make_skeleton(head=(50.0, 20.0), knees=((40.0, 120.0), (60.0, 120.0)), conf=1.0):
    xy = np.tile([50.0, 100.0], (17, 1))
    xy[0] = head
    xy[1:5] = head
    xy[13], xy[14] = knees
    return Skeleton.from_xy(xy, conf)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(400, 0.5, seed=11)


@pytest.fixture(scope="session")
def trained_model(small_dataset):
    from fallrisk.features import Scaling, balance_arrays
    from fallrisk.gbdt import fit_arrays

    fs = FeatureSet.KEYPOINTS_KNEE_HEAD
    X, S = small_dataset.feature_matrix(fs)
    bal = balance_arrays(X, small_dataset.y, np.array(small_dataset.source_ids, dtype=object), S, 2.0, 0)
    return fit_arrays(bal.X, bal.y, Hyperparams(), 0, fs, Scaling.fit(bal.X))
