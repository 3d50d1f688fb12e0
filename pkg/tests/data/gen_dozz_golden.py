"""Select the 50 rows of the structure-constant golden table.

Row policy: for each coupling in (0.8, 1.0, sqrt 2, 1.8) walk a fixed
lattice of weight triples alpha_i = u_i * Q (u from a small deterministic
menu, rounded to 4 decimals) and keep the first 13/13/12/12 triples that
are safely regular: denominator lattice distance >= 0.1 and a value whose
magnitude stays within [1e-8, 1e8] so the table is legible.  The values
themselves are then produced by the dozz-table runner from the emitted
config, never by this script, so the committed CSV is a pure output of the
package's certified quadrature.

Run once:  python3 tests/data/gen_dozz_golden.py
Then:      liouville run --config src/liouville/data/dozz_golden_config.json \
               --out /tmp/golden-build
and copy /tmp/golden-build/dozz_table.csv to src/liouville/data/dozz_golden.csv.
"""

import itertools
import json
import math
import pathlib

from liouville.params import derive_params
from liouville.special import dozz, get_evaluator

GAMMAS = (0.8, 1.0, math.sqrt(2.0), 1.8)
COUNTS = (13, 13, 12, 12)
FRACTIONS = (0.52, 0.58, 0.64, 0.70, 0.76, 0.82, 0.88)


def pick_rows(gamma: float, count: int) -> list[list[float]]:
    params = derive_params(gamma)
    ev = get_evaluator(gamma)
    rows = []
    for us in itertools.combinations_with_replacement(FRACTIONS, 3):
        alphas = [round(u * params.Q, 4) for u in us]
        value = dozz(*alphas, params, ev)
        if value.is_pole or value.pole_distance < 0.1:
            continue
        if value.value == 0.0 or not (1e-8 < abs(value.value) < 1e8):
            continue
        rows.append([gamma] + alphas)
        if len(rows) == count:
            return rows
    raise RuntimeError(f"only {len(rows)} regular rows found for gamma={gamma}")


def main() -> None:
    rows = []
    for gamma, count in zip(GAMMAS, COUNTS):
        rows.extend(pick_rows(gamma, count))
    assert len(rows) == 50, len(rows)
    config = {
        "kind": "dozz-table",
        "params": {"rows": rows, "mu": 1.0},
        "seed": 0,
        "note": "golden regression table: 50 regular structure-constant "
                "evaluations across four couplings, committed at first build",
    }
    out = pathlib.Path(__file__).resolve().parents[2] / "src" / "liouville" \
        / "data" / "dozz_golden_config.json"
    out.write_text(json.dumps(config, indent=1) + "\n")
    print(f"wrote {out} with {len(rows)} rows")


if __name__ == "__main__":
    main()
