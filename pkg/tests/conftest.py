import math
import time

import pytest

from dirac_blowup.model import ModelParams
from dirac_blowup.profile import PolarState, integrate_profile
from dirac_blowup.scan import DEFAULT_MODELS, ScanConfig, default_ic_grid, scan_boundedness


@pytest.fixture(scope="session")
def k1l1():
    return ModelParams(1, 1)


@pytest.fixture(scope="session")
def line_profile_right(k1l1):
    """Dense k = l = 1 trajectory on the line delta = -pi/2 from xi0 = 1 toward y = 1."""
    ic = PolarState(0.0, 1.0, 1.0, 0.0, -math.pi / 2)
    return integrate_profile(k1l1, ic, 1.0)


@pytest.fixture(scope="session")
def default_scans():
    """Default sweep for every model, with the total wall time."""
    start = time.perf_counter()
    reports = {}
    for kl in DEFAULT_MODELS:
        params = ModelParams(*kl)
        reports[kl] = scan_boundedness(ScanConfig(params, default_ic_grid()))
    return reports, time.perf_counter() - start
