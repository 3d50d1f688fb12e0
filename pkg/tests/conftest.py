import json
import math
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

# couplings exercised throughout; "sqrt2" has a degenerate zero lattice
GAMMA_BY_KEY = {"0.8": 0.8, "1.0": 1.0, "sqrt2": math.sqrt(2.0), "1.8": 1.8}


@pytest.fixture(scope="session")
def special_oracle():
    with open(DATA / "special_oracle.json") as fh:
        return json.load(fh)


def parse_c(pair):
    return complex(float(pair[0]), float(pair[1]))
