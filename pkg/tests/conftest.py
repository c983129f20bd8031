import sys
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from solar_coop import PriceSchedule, parse_csv  # noqa: E402

DATA_DIR = Path(__file__).parent / "data"
FIX_A_PATH = DATA_DIR / "fix_a.csv"

# per-interval (consumption, generation) profiles of the two-household fixture,
# for the independent oracle
FIX_A_PROFILES = {
    "A": ([3.0, 1.0], [1.0, 2.0]),
    "B": ([0.0, 2.0], [2.0, 0.0]),
}


@pytest.fixture(scope="session")
def fix_a():
    return parse_csv(FIX_A_PATH)


@pytest.fixture(scope="session")
def prices21():
    return PriceSchedule(2.0, 1.0)
