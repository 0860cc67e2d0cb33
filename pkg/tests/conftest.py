import numpy as np
import pytest

from spacingfit.calibration import DEFAULT_Q_GRID, SigmaTable


@pytest.fixture(scope="session")
def flat_table():
    """Synthetic table with the q=0 analytic variances in every column.

    Exact for q=0 physics; good enough as a stand-in wherever a test only
    needs structurally valid variances.
    """
    n_range = np.arange(3, 151)
    variances = np.tile((n_range + 1.0)[:, None], (1, len(DEFAULT_Q_GRID)))
    return SigmaTable(q_grid=DEFAULT_Q_GRID, n_range=n_range,
                      variances=variances, provenance={"synthetic": "flat"})


@pytest.fixture(scope="session")
def shipped_table():
    from spacingfit.model import default_sigma_table
    return default_sigma_table()
