"""Command-line harness: seeded experiment runs, persistence, regression diffs.

One entry point binds the package into reproducible experiments.  A run is
described by an ExperimentConfig (strict JSON: unknown keys are fatal at
every nesting level), executed with a 64-bit seed through the repo-wide
Philox streams, and persisted as CSV data plus a JSON RunRecord carrying
the config hash, code versions, effective tolerances and a pass verdict.
compare() diffs two RunRecords field by field; Monte Carlo fields (those
publishing a paired stderr) are compared under the combined three-sigma
rule, everything else by relative difference.

Exit codes: 0 pass, 1 tolerance failure, 2 usage or config error,
3 certified-accuracy failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata, resources
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import scipy
from scipy.special import gamma as _gamma_fn

from .blocks import BlockCoefficientCache, block_coefficients
from .bootstrap import (SpectralQuadrature, crossing_check,
                        four_point_bootstrap, four_point_ratio)
from .correlators import CorrelatorJob, correlator_mc, correlator_ratio_mc
from .errors import (AccuracyError, ConfigError, DegeneracyError, DomainError,
                     ResourceError)
from .gff import (SPHERE_ROBIN_CONSTANT, CircleFieldSpec, SphereFieldSpec,
                  chaos_moment, circle_truncated_moment)
from .params import (INFINITY_POINT, CFTParams, conformal_weight,
                     derive_params, make_insertions)
from .special import dozz, get_evaluator, three_point_fixed

EXPERIMENT_KINDS = ("dozz-table", "gmc-moments", "correlator", "block",
                    "bootstrap4pt", "crossing", "mc-vs-dozz", "mc-vs-bootstrap")

_SEED_LIMIT = 2 ** 64

# Exit codes promised by the interface contract.
EXIT_PASS = 0
EXIT_TOLERANCE = 1
EXIT_USAGE = 2
EXIT_ACCURACY = 3


def code_version() -> dict[str, str]:
    """Versions that pin a run: package, numerics stack, RNG family."""
    try:
        pkg = metadata.version("liouville")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {
        "package": pkg,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "rng": f"numpy-philox-{np.__version__}",
    }


# ---------------------------------------------------------------------------
# configuration


def _require(params: Mapping[str, Any], name: str, kind: str) -> Any:
    if name not in params:
        raise ConfigError(f"{kind}: missing required params field '{name}'")
    return params[name]


def _reject_unknown(obj: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {unknown}; "
                          f"allowed: {sorted(allowed)}")


def _as_float(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ConfigError(f"{where} must be finite, got {value!r}")
    return out


def _as_int(value: Any, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{where} must be >= {minimum}, got {value}")
    return value


def _as_float_list(value: Any, n: int | None, where: str) -> list[float]:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{where} must be a list, got {value!r}")
    if n is not None and len(value) != n:
        raise ConfigError(f"{where} must have {n} entries, got {len(value)}")
    return [_as_float(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _as_point(value: Any, where: str) -> complex:
    # A point is [re, im] in stereographic coordinates or the string "inf"
    # for the north pole.
    if value == "inf":
        return INFINITY_POINT
    pair = _as_float_list(value, 2, where)
    return complex(pair[0], pair[1])


def _validate_dozz_table(params: Mapping[str, Any]) -> dict[str, Any]:
    _reject_unknown(params, {"rows", "mu"}, "dozz-table params")
    rows_in = _require(params, "rows", "dozz-table")
    if not isinstance(rows_in, (list, tuple)) or not rows_in:
        raise ConfigError("dozz-table: 'rows' must be a non-empty list")
    rows = [_as_float_list(r, 4, f"dozz-table rows[{i}]")
            for i, r in enumerate(rows_in)]
    return {"rows": rows, "mu": _as_float(params.get("mu", 1.0), "dozz-table mu")}


def _validate_gmc_moments(params: Mapping[str, Any]) -> dict[str, Any]:
    _reject_unknown(params, {"geometry", "gamma", "q", "size", "samples"},
                    "gmc-moments params")
    geometry = _require(params, "geometry", "gmc-moments")
    if geometry not in ("circle", "sphere"):
        raise ConfigError(f"gmc-moments: geometry must be 'circle' or 'sphere', "
                          f"got {geometry!r}")
    return {
        "geometry": geometry,
        "gamma": _as_float(_require(params, "gamma", "gmc-moments"), "gamma"),
        "q": _as_float(_require(params, "q", "gmc-moments"), "q"),
        "size": _as_int(_require(params, "size", "gmc-moments"), "size", 1),
        "samples": _as_int(_require(params, "samples", "gmc-moments"), "samples", 1),
    }


def _validate_correlator(params: Mapping[str, Any]) -> dict[str, Any]:
    _reject_unknown(params, {"gamma", "mu", "points", "alphas", "l_max", "samples"},
                    "correlator params")
    points_in = _require(params, "points", "correlator")
    if not isinstance(points_in, (list, tuple)):
        raise ConfigError("correlator: 'points' must be a list")
    points = [_as_point(p, f"correlator points[{i}]")
              for i, p in enumerate(points_in)]
    alphas = _as_float_list(_require(params, "alphas", "correlator"),
                            len(points), "correlator alphas")
    return {
        "gamma": _as_float(_require(params, "gamma", "correlator"), "gamma"),
        "mu": _as_float(params.get("mu", 1.0), "mu"),
        "points": points,
        "alphas": alphas,
        "l_max": _as_int(_require(params, "l_max", "correlator"), "l_max", 1),
        "samples": _as_int(_require(params, "samples", "correlator"), "samples", 1),
    }


def _validate_block(params: Mapping[str, Any]) -> dict[str, Any]:
    _reject_unknown(params, {"gamma", "p", "alphas", "level"}, "block params")
    return {
        "gamma": _as_float(_require(params, "gamma", "block"), "gamma"),
        "p": _as_float(_require(params, "p", "block"), "p"),
        "alphas": _as_float_list(_require(params, "alphas", "block"), 4,
                                 "block alphas"),
        "level": _as_int(_require(params, "level", "block"), "level", 1),
    }


_QUAD_KEYS = {"level", "p_max", "panels", "nodes_per_panel", "block_tail"}


def _quadrature_from(params: Mapping[str, Any]) -> SpectralQuadrature:
    kwargs: dict[str, Any] = {}
    if "level" in params:
        kwargs["level"] = _as_int(params["level"], "level", 1)
    if "p_max" in params:
        kwargs["p_max"] = _as_float(params["p_max"], "p_max")
    if "panels" in params:
        kwargs["panels"] = _as_int(params["panels"], "panels", 1)
    if "nodes_per_panel" in params:
        kwargs["nodes_per_panel"] = _as_int(params["nodes_per_panel"],
                                            "nodes_per_panel", 2)
    if "block_tail" in params:
        if params["block_tail"] not in ("complete", "truncate"):
            raise ConfigError(f"block_tail must be 'complete' or 'truncate', "
                              f"got {params['block_tail']!r}")
        kwargs["block_tail"] = params["block_tail"]
    return SpectralQuadrature(**kwargs)


def _validate_bootstrap4pt(params: Mapping[str, Any]) -> dict[str, Any]:
    _reject_unknown(params, {"gamma", "z", "alphas"} | _QUAD_KEYS,
                    "bootstrap4pt params")
    out = {
        "gamma": _as_float(_require(params, "gamma", "bootstrap4pt"), "gamma"),
        "z": _as_float(_require(params, "z", "bootstrap4pt"), "z"),
        "alphas": _as_float_list(_require(params, "alphas", "bootstrap4pt"), 4,
                                 "bootstrap4pt alphas"),
    }
    out.update({k: params[k] for k in _QUAD_KEYS if k in params})
    _quadrature_from(out)
    return out


_validate_crossing = _validate_bootstrap4pt


def _validate_mc_vs_dozz(params: Mapping[str, Any]) -> dict[str, Any]:
    _reject_unknown(params, {"gamma", "mu", "points", "alphas_a", "alphas_b",
                             "l_max", "samples"}, "mc-vs-dozz params")
    points_in = _require(params, "points", "mc-vs-dozz")
    if not isinstance(points_in, (list, tuple)) or len(points_in) != 3:
        raise ConfigError("mc-vs-dozz: 'points' must be a list of 3 entries")
    points = [_as_point(p, f"mc-vs-dozz points[{i}]")
              for i, p in enumerate(points_in)]
    for i, p in enumerate(points):
        if p == INFINITY_POINT:
            raise ConfigError(f"mc-vs-dozz: points[{i}] must be finite so the "
                              "exact side is directly evaluable")
    return {
        "gamma": _as_float(_require(params, "gamma", "mc-vs-dozz"), "gamma"),
        "mu": _as_float(params.get("mu", 1.0), "mu"),
        "points": points,
        "alphas_a": _as_float_list(_require(params, "alphas_a", "mc-vs-dozz"),
                                   3, "alphas_a"),
        "alphas_b": _as_float_list(_require(params, "alphas_b", "mc-vs-dozz"),
                                   3, "alphas_b"),
        "l_max": _as_int(_require(params, "l_max", "mc-vs-dozz"), "l_max", 1),
        "samples": _as_int(_require(params, "samples", "mc-vs-dozz"), "samples", 1),
    }


def _validate_mc_vs_bootstrap(params: Mapping[str, Any]) -> dict[str, Any]:
    _reject_unknown(params, {"gamma", "mu", "alphas", "z", "z_prime",
                             "l_max", "samples"} | _QUAD_KEYS,
                    "mc-vs-bootstrap params")
    z = _as_float(_require(params, "z", "mc-vs-bootstrap"), "z")
    zp = _as_float(_require(params, "z_prime", "mc-vs-bootstrap"), "z_prime")
    for name, value in (("z", z), ("z_prime", zp)):
        if not 0.0 < value < 1.0:
            raise ConfigError(f"mc-vs-bootstrap: {name} must lie in (0, 1), "
                              f"got {value}")
    out = {
        "gamma": _as_float(_require(params, "gamma", "mc-vs-bootstrap"), "gamma"),
        "mu": _as_float(params.get("mu", 1.0), "mu"),
        "alphas": _as_float_list(_require(params, "alphas", "mc-vs-bootstrap"),
                                 4, "alphas"),
        "z": z,
        "z_prime": zp,
        "l_max": _as_int(_require(params, "l_max", "mc-vs-bootstrap"), "l_max", 1),
        "samples": _as_int(_require(params, "samples", "mc-vs-bootstrap"),
                           "samples", 1),
    }
    out.update({k: params[k] for k in _QUAD_KEYS if k in params})
    _quadrature_from(out)
    return out


_VALIDATORS: dict[str, Callable[[Mapping[str, Any]], dict[str, Any]]] = {
    "dozz-table": _validate_dozz_table,
    "gmc-moments": _validate_gmc_moments,
    "correlator": _validate_correlator,
    "block": _validate_block,
    "bootstrap4pt": _validate_bootstrap4pt,
    "crossing": _validate_crossing,
    "mc-vs-dozz": _validate_mc_vs_dozz,
    "mc-vs-bootstrap": _validate_mc_vs_bootstrap,
}

# Default per-kind tolerances; overrides are merged on top and every
# effective value is echoed in the RunRecord (no silent downgrades).
_DEFAULT_TOLERANCES: dict[str, dict[str, float]] = {
    "dozz-table": {},
    "gmc-moments": {"sigma": 3.0},
    "correlator": {},
    "block": {},
    "bootstrap4pt": {"tail_rel": 1e-4},
    "crossing": {"discrepancy": 0.02, "tail_rel": 1e-4},
    "mc-vs-dozz": {"rel": 0.05, "sigma": 3.0},
    "mc-vs-bootstrap": {"rel": 0.10},
}


def _canonical_points(params: Mapping[str, Any]) -> dict[str, Any]:
    # complex points are stored back as [re, im] / "inf" so the canonical
    # mapping is pure JSON and hashes deterministically.
    out = dict(params)
    if "points" in out:
        rendered: list[Any] = []
        for p in out["points"]:
            c = complex(p)
            rendered.append("inf" if c == INFINITY_POINT else [c.real, c.imag])
        out["points"] = rendered
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: kind, per-kind params, seed, output dir, tolerances.

    The on-disk format is a single JSON object with exactly these fields
    (out, tolerances and note optional).  Parsing is strict: unknown keys
    anywhere are a ConfigError, which the CLI maps to exit code 2.
    """

    kind: str
    params: dict[str, Any]
    seed: int = 0
    out: str | None = None
    tolerances: dict[str, float] = field(default_factory=dict)
    note: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; "
                              f"expected one of {list(EXPERIMENT_KINDS)}")
        if not (0 <= self.seed < _SEED_LIMIT):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, "
                              f"got {self.seed}")
        object.__setattr__(self, "params", _VALIDATORS[self.kind](self.params))
        known = set(_DEFAULT_TOLERANCES[self.kind])
        _reject_unknown(self.tolerances, known, f"{self.kind} tolerances")
        object.__setattr__(
            self, "tolerances",
            {k: _as_float(v, f"tolerances[{k}]")
             for k, v in self.tolerances.items()})

    @classmethod
    def from_mapping(cls, obj: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(obj, Mapping):
            raise ConfigError(f"config must be a JSON object, got {type(obj).__name__}")
        _reject_unknown(obj, {"kind", "params", "seed", "out", "tolerances", "note"},
                        "config")
        kind = obj.get("kind")
        if not isinstance(kind, str):
            raise ConfigError("config: 'kind' must be a string")
        params = obj.get("params")
        if not isinstance(params, Mapping):
            raise ConfigError("config: 'params' must be an object")
        seed = obj.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"config: 'seed' must be an integer, got {seed!r}")
        out = obj.get("out")
        if out is not None and not isinstance(out, str):
            raise ConfigError("config: 'out' must be a string path")
        tolerances = obj.get("tolerances", {})
        if not isinstance(tolerances, Mapping):
            raise ConfigError("config: 'tolerances' must be an object")
        note = obj.get("note")
        if note is not None and not isinstance(note, str):
            raise ConfigError("config: 'note' must be a string")
        return cls(kind=kind, params=dict(params), seed=seed, out=out,
                   tolerances=dict(tolerances), note=note)

    @classmethod
    def from_json_text(cls, text: str) -> "ExperimentConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_mapping(obj)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        return cls.from_json_text(p.read_text())

    def to_mapping(self) -> dict[str, Any]:
        """Lossless canonical mapping; json.dumps of this round-trips."""
        out: dict[str, Any] = {
            "kind": self.kind,
            "params": _canonical_points(self.params),
            "seed": self.seed,
        }
        if self.out is not None:
            out["out"] = self.out
        if self.tolerances:
            out["tolerances"] = dict(sorted(self.tolerances.items()))
        if self.note is not None:
            out["note"] = self.note
        return out

    def config_hash(self) -> str:
        """sha256 of the semantic content: kind, params, seed, tolerances.

        Output location and free-text note are excluded so relocating or
        annotating a run does not change its identity.
        """
        semantic = self.to_mapping()
        semantic.pop("out", None)
        semantic.pop("note", None)
        blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def effective_tolerances(self, scale: float = 1.0) -> dict[str, float]:
        merged = dict(_DEFAULT_TOLERANCES[self.kind])
        merged.update(self.tolerances)
        return {k: v * scale for k, v in sorted(merged.items())}


@dataclass(frozen=True)
class RunRecord:
    """Persisted outcome of one run; the JSON form is the exchange format."""

    kind: str
    config_hash: str
    seed: int
    code_version: dict[str, str]
    wall_time_s: float
    tolerances_effective: dict[str, float]
    outputs: dict[str, Any]
    passed: bool
    failures: tuple[str, ...]
    config: dict[str, Any]

    def to_mapping(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "code_version": dict(self.code_version),
            "wall_time_s": self.wall_time_s,
            "tolerances_effective": dict(self.tolerances_effective),
            "outputs": dict(self.outputs),
            "passed": self.passed,
            "failures": list(self.failures),
            "config": dict(self.config),
        }

    @classmethod
    def from_mapping(cls, obj: Mapping[str, Any]) -> "RunRecord":
        required = {"kind", "config_hash", "seed", "code_version", "wall_time_s",
                    "tolerances_effective", "outputs", "passed", "failures",
                    "config"}
        missing = sorted(required - set(obj))
        if missing:
            raise ConfigError(f"run record: missing field(s) {missing}")
        return cls(kind=obj["kind"], config_hash=obj["config_hash"],
                   seed=obj["seed"], code_version=dict(obj["code_version"]),
                   wall_time_s=obj["wall_time_s"],
                   tolerances_effective=dict(obj["tolerances_effective"]),
                   outputs=dict(obj["outputs"]), passed=bool(obj["passed"]),
                   failures=tuple(obj["failures"]), config=dict(obj["config"]))

    @classmethod
    def load(cls, path: str | Path) -> "RunRecord":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"run record not found: {p}")
        try:
            obj = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"run record {p} is not valid JSON: {exc}") from exc
        return cls.from_mapping(obj)


# ---------------------------------------------------------------------------
# CSV helpers: repr() of a double is its shortest round-trip form, which
# keeps golden files byte-stable across runs of the same build.


def _fmt(value: Any) -> str:
    # np.float64 subclasses float; coerce so repr is the plain shortest form.
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list[Any]],
               preamble: list[str] | None = None) -> None:
    buf = io.StringIO()
    for line in preamble or []:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# experiment runners.  Each returns (outputs, failures, files); outputs are
# the scalar fields compare() diffs, files the CSV names written to out_dir.

GOLDEN_TABLE_RESOURCE = "dozz_golden.csv"
GOLDEN_CONFIG_RESOURCE = "dozz_golden_config.json"

_GOLDEN_PREAMBLE = [
    "structure-constant golden regression table",
    "produced by the certified strip quadrature (32-node panels) at first "
    "build and committed; re-runs of the committed config must reproduce "
    "this file byte for byte on the pinned numerics stack",
    "regenerate: liouville run --config src/liouville/data/"
    "dozz_golden_config.json --out <dir>",
]


def _run_dozz_table(config: ExperimentConfig, out_dir: Path,
                    tol: dict[str, float]) -> tuple[dict, list, list]:
    rows_out: list[list[Any]] = []
    failures: list[str] = []
    evaluators: dict[float, Any] = {}
    for gamma, a1, a2, a3 in config.params["rows"]:
        params = derive_params(gamma, mu=config.params["mu"])
        if gamma not in evaluators:
            evaluators[gamma] = get_evaluator(gamma)
        ev = evaluators[gamma]
        value = dozz(a1, a2, a3, params, ev)
        if value.is_pole:
            rows_out.append([gamma, a1, a2, a3, math.inf, value.pole_distance])
            continue
        v = value.value
        # real weights give a real constant; the log-space assembly leaves
        # an imaginary rounding residue when the value is negative.
        if abs(v.imag) > 1e-10 * abs(v):
            failures.append(f"row ({gamma}, {a1}, {a2}, {a3}) is not real: {v}")
        if not math.isfinite(v.real):
            failures.append(f"row ({gamma}, {a1}, {a2}, {a3}) is not finite: {v}")
        rows_out.append([gamma, a1, a2, a3, v.real, value.pole_distance])
    csv_path = out_dir / "dozz_table.csv"
    _write_csv(csv_path, ["gamma", "alpha1", "alpha2", "alpha3", "value",
                          "pole_distance"], rows_out, _GOLDEN_PREAMBLE)
    outputs: dict[str, Any] = {
        "n_rows": len(rows_out),
        "table_sha256": _sha256_file(csv_path),
    }
    golden = resources.files("liouville.data") / GOLDEN_TABLE_RESOURCE
    golden_config = resources.files("liouville.data") / GOLDEN_CONFIG_RESOURCE
    if golden.is_file() and golden_config.is_file():
        committed = ExperimentConfig.from_json_text(golden_config.read_text())
        if committed.config_hash() == config.config_hash():
            outputs["golden_match"] = golden.read_bytes() == csv_path.read_bytes()
            if not outputs["golden_match"]:
                failures.append("output differs from the committed golden table")
    return outputs, failures, ["dozz_table.csv"]


def _moment_oracle(spec: CircleFieldSpec | SphereFieldSpec, gamma: float,
                   q: float) -> float | None:
    """Deterministic E[M^q] matching the estimator, where known.

    On the circle the low integer moments of the grid-level chaos have
    closed sums over the truncated covariance; these are the exact
    expectations of what chaos_moment samples, so the sigma band below is
    a calibrated statistical test at any sample count.  On the sphere only
    q = 0 and q = 1 are exact.  Other orders return None and skip the check.
    """
    if q == 0.0:
        return 1.0
    if isinstance(spec, CircleFieldSpec):
        if q in (1.0, 2.0, 3.0):
            return circle_truncated_moment(spec.n_modes, gamma, q,
                                           n_grid=spec.n_grid)
        return None
    if q == 1.0:
        return float(4.0 * math.pi
                     * math.exp(0.5 * gamma * gamma * SPHERE_ROBIN_CONSTANT))
    return None


def _run_gmc_moments(config: ExperimentConfig, out_dir: Path,
                     tol: dict[str, float]) -> tuple[dict, list, list]:
    p = config.params
    if p["geometry"] == "circle":
        spec: CircleFieldSpec | SphereFieldSpec = CircleFieldSpec(
            n_modes=p["size"], seed=config.seed)
    else:
        spec = SphereFieldSpec(l_max=p["size"], seed=config.seed)
    est = chaos_moment(spec, p["gamma"], p["q"], p["samples"])
    oracle = _moment_oracle(spec, p["gamma"], p["q"])
    failures: list[str] = []
    outputs: dict[str, Any] = {
        "estimate": est.mean,
        "estimate_stderr": est.stderr,
        "ess": est.ess,
        "n_samples": est.n_samples,
    }
    if oracle is not None:
        outputs["oracle"] = oracle
        gap = abs(est.mean - oracle)
        band = tol["sigma"] * est.stderr
        outputs["oracle_gap"] = gap
        if est.stderr == 0.0:
            if gap != 0.0:
                failures.append(f"exact moment disagrees with oracle by {gap}")
        elif gap > band:
            failures.append(f"estimate {est.mean} is {gap:.3e} from oracle "
                            f"{oracle}, beyond {tol['sigma']:.3g} s.e. = {band:.3e}")
    _write_csv(out_dir / "gmc_moments.csv",
               ["geometry", "gamma", "q", "size", "samples",
                "estimate", "stderr", "oracle"],
               [[p["geometry"], p["gamma"], p["q"], p["size"], p["samples"],
                 est.mean, est.stderr, "" if oracle is None else oracle]])
    return outputs, failures, ["gmc_moments.csv"]


def _correlator_job(points: list[complex], alphas: list[float],
                    params: CFTParams, l_max: int, samples: int,
                    seed: int) -> CorrelatorJob:
    insertions = make_insertions(points, alphas, params)
    spec = SphereFieldSpec(l_max=l_max, seed=seed)
    return CorrelatorJob(insertions=insertions, params=params, field_spec=spec,
                         n_samples=samples, seed=seed)


def _run_correlator(config: ExperimentConfig, out_dir: Path,
                    tol: dict[str, float]) -> tuple[dict, list, list]:
    p = config.params
    params = derive_params(p["gamma"], mu=p["mu"])
    job = _correlator_job(p["points"], p["alphas"], params, p["l_max"],
                          p["samples"], config.seed)
    est = correlator_mc(job)
    failures: list[str] = []
    if not math.isfinite(est.mean) or not math.isfinite(est.stderr):
        failures.append(f"estimate is not finite: {est.mean} +- {est.stderr}")
    outputs = {
        "estimate": est.mean,
        "estimate_stderr": est.stderr,
        "s": job.s,
        "ess": est.ess,
        "n_samples": est.n_samples,
    }
    _write_csv(out_dir / "correlator.csv",
               ["estimate", "stderr", "s", "ess", "n_samples"],
               [[est.mean, est.stderr, job.s, est.ess, est.n_samples]])
    return outputs, failures, ["correlator.csv"]


def _run_block(config: ExperimentConfig, out_dir: Path,
               tol: dict[str, float]) -> tuple[dict, list, list]:
    p = config.params
    params = derive_params(p["gamma"])
    delta_p = conformal_weight(complex(params.Q, p["p"]), params.Q)
    deltas = tuple(conformal_weight(a, params.Q) for a in p["alphas"])
    coeffs = block_coefficients(delta_p, deltas, p["level"], params.c_L)
    rows = [[n, c.real, c.imag] for n, c in enumerate(coeffs)]
    _write_csv(out_dir / "block_coefficients.csv",
               ["n", "coefficient_real", "coefficient_imag"], rows)
    outputs = {
        "level": p["level"],
        "delta_p": delta_p.real,
        "c1": coeffs[1].real if len(coeffs) > 1 else 0.0,
        "c_last": coeffs[-1].real,
    }
    failures = [] if all(math.isfinite(c.real) for c in coeffs) else [
        "non-finite coefficient in ledger"]
    return outputs, failures, ["block_coefficients.csv"]


def _coefficient_ledger_rows(ps: np.ndarray, channel: str, alphas: tuple,
                             level: int, params: CFTParams,
                             cache: BlockCoefficientCache) -> list[list[Any]]:
    # Per-momentum, per-level coefficient audit trail for the spectral CSVs.
    deltas = tuple(conformal_weight(a, params.Q) for a in alphas)
    rows = []
    for p in ps:
        delta_p = conformal_weight(complex(params.Q, p), params.Q)
        coeffs = cache.lookup(params.gamma, level, delta_p, deltas)
        if coeffs is None:
            coeffs = block_coefficients(delta_p, deltas, level, params.c_L)
            cache.store(params.gamma, level, delta_p, deltas, coeffs)
        for n, c in enumerate(coeffs):
            rows.append([channel, float(p), n, c.real, c.imag])
    return rows


def _run_bootstrap4pt(config: ExperimentConfig, out_dir: Path,
                      tol: dict[str, float]) -> tuple[dict, list, list]:
    p = config.params
    params = derive_params(p["gamma"], mu=p.get("mu", 1.0))
    quad = _quadrature_from(p)
    cache = BlockCoefficientCache(out_dir / "block_cache.json")
    result = four_point_bootstrap(p["z"], tuple(p["alphas"]), quad, params,
                                  coefficient_cache=cache)
    rows = [[float(pn), float(w), float(f)] for pn, w, f in
            zip(result.p_nodes, result.p_weights, result.integrand)]
    _write_csv(out_dir / "spectral_integrand.csv",
               ["p", "weight", "integrand"], rows)
    ledger = _coefficient_ledger_rows(result.p_nodes, "direct",
                                      tuple(p["alphas"]), quad.level, params,
                                      cache)
    _write_csv(out_dir / "block_coefficients.csv",
               ["channel", "p", "n", "coefficient_real", "coefficient_imag"],
               ledger)
    cache.save()
    outputs = {
        "value": result.value,
        "metric_factor": result.metric_factor,
        "folded": result.folded,
        **{k: float(v) for k, v in result.diagnostics.items()},
    }
    failures = []
    if result.diagnostics["tail_rel"] > tol["tail_rel"]:
        failures.append(f"spectrum tail {result.diagnostics['tail_rel']:.3e} "
                        f"exceeds tolerance {tol['tail_rel']:.3e}")
    return outputs, failures, ["spectral_integrand.csv",
                               "block_coefficients.csv"]


def _run_crossing(config: ExperimentConfig, out_dir: Path,
                  tol: dict[str, float]) -> tuple[dict, list, list]:
    p = config.params
    params = derive_params(p["gamma"], mu=p.get("mu", 1.0))
    quad = _quadrature_from(p)
    cache = BlockCoefficientCache(out_dir / "block_cache.json")
    report = crossing_check(p["z"], tuple(p["alphas"]), quad, params,
                            coefficient_cache=cache)
    rows = []
    for channel, res in (("direct", report.direct), ("crossed", report.crossed)):
        rows.extend([channel, float(pn), float(w), float(f)] for pn, w, f in
                    zip(res.p_nodes, res.p_weights, res.integrand))
    _write_csv(out_dir / "crossing_integrand.csv",
               ["channel", "p", "weight", "integrand"], rows)
    ledger = _coefficient_ledger_rows(
        report.direct.p_nodes, "direct", report.direct.alphas, quad.level,
        params, cache)
    ledger += _coefficient_ledger_rows(
        report.crossed.p_nodes, "crossed", report.crossed.alphas, quad.level,
        params, cache)
    _write_csv(out_dir / "block_coefficients.csv",
               ["channel", "p", "n", "coefficient_real", "coefficient_imag"],
               ledger)
    cache.save()
    outputs = {
        "direct_value": report.direct.value,
        "crossed_value": report.crossed.value,
        "transport": report.transport,
        "discrepancy": report.discrepancy,
    }
    failures = []
    if report.discrepancy > tol["discrepancy"]:
        failures.append(f"crossing discrepancy {report.discrepancy:.3e} exceeds "
                        f"tolerance {tol['discrepancy']:.3e}")
    return outputs, failures, ["crossing_integrand.csv",
                               "block_coefficients.csv"]


def _run_mc_vs_dozz(config: ExperimentConfig, out_dir: Path,
                    tol: dict[str, float]) -> tuple[dict, list, list]:
    p = config.params
    params = derive_params(p["gamma"], mu=p["mu"])
    job_a = _correlator_job(p["points"], p["alphas_a"], params, p["l_max"],
                            p["samples"], config.seed)
    job_b = _correlator_job(p["points"], p["alphas_b"], params, p["l_max"],
                            p["samples"], config.seed)
    ratio = correlator_ratio_mc(job_a, job_b)
    pts = tuple(complex(q) for q in p["points"])
    ev = get_evaluator(p["gamma"])
    exact = (three_point_fixed(pts, tuple(p["alphas_a"]), params, ev).real
             / three_point_fixed(pts, tuple(p["alphas_b"]), params, ev).real)
    gap = abs(ratio.mean - exact)
    threshold = max(tol["rel"] * abs(exact), tol["sigma"] * ratio.stderr)
    failures: list[str] = []
    if gap > threshold:
        failures.append(f"MC ratio {ratio.mean} differs from exact ratio "
                        f"{exact} by {gap:.3e}, beyond {threshold:.3e}")
    outputs = {
        "mc_ratio": ratio.mean,
        "mc_ratio_stderr": ratio.stderr,
        "exact_ratio": exact,
        "rel_gap": gap / abs(exact),
        "threshold": threshold,
        "ess": ratio.ess,
        "n_samples": ratio.n_samples,
    }
    _write_csv(out_dir / "mc_vs_dozz.csv",
               ["mc_ratio", "mc_stderr", "exact_ratio", "rel_gap", "threshold"],
               [[ratio.mean, ratio.stderr, exact, outputs["rel_gap"], threshold]])
    return outputs, failures, ["mc_vs_dozz.csv"]


def _run_mc_vs_bootstrap(config: ExperimentConfig, out_dir: Path,
                         tol: dict[str, float]) -> tuple[dict, list, list]:
    p = config.params
    params = derive_params(p["gamma"], mu=p["mu"])
    # MC insertion slots for cross-ratio z are (0, 2z, 2, infinity).
    slots_a = [0.0, 2.0 * p["z"], 2.0, INFINITY_POINT]
    slots_b = [0.0, 2.0 * p["z_prime"], 2.0, INFINITY_POINT]
    job_a = _correlator_job(slots_a, p["alphas"], params, p["l_max"],
                            p["samples"], config.seed)
    job_b = _correlator_job(slots_b, p["alphas"], params, p["l_max"],
                            p["samples"], config.seed)
    mc = correlator_ratio_mc(job_a, job_b)
    quad = _quadrature_from(p)
    cache = BlockCoefficientCache(out_dir / "block_cache.json")
    spectral = four_point_ratio(p["z"], p["z_prime"], tuple(p["alphas"]),
                                quad, params, coefficient_cache=cache)
    cache.save()
    gap = abs(mc.mean - spectral)
    rel_gap = gap / abs(spectral)
    failures: list[str] = []
    if rel_gap > tol["rel"]:
        failures.append(f"MC ratio {mc.mean} differs from spectral ratio "
                        f"{spectral} by {rel_gap:.2%}, beyond {tol['rel']:.2%}")
    outputs = {
        "mc_ratio": mc.mean,
        "mc_ratio_stderr": mc.stderr,
        "spectral_ratio": spectral,
        "rel_gap": rel_gap,
        "ess": mc.ess,
        "n_samples": mc.n_samples,
    }
    _write_csv(out_dir / "mc_vs_bootstrap.csv",
               ["mc_ratio", "mc_stderr", "spectral_ratio", "rel_gap"],
               [[mc.mean, mc.stderr, spectral, rel_gap]])
    return outputs, failures, ["mc_vs_bootstrap.csv"]


_RUNNERS = {
    "dozz-table": _run_dozz_table,
    "gmc-moments": _run_gmc_moments,
    "correlator": _run_correlator,
    "block": _run_block,
    "bootstrap4pt": _run_bootstrap4pt,
    "crossing": _run_crossing,
    "mc-vs-dozz": _run_mc_vs_dozz,
    "mc-vs-bootstrap": _run_mc_vs_bootstrap,
}


def run(config: ExperimentConfig, out_dir: str | Path | None = None,
        threads: int = 1, tolerance_scale: float = 1.0) -> RunRecord:
    """Execute one experiment and persist its outputs and RunRecord.

    out_dir falls back to the config's own 'out', then to
    ./<kind>-<hash prefix> under the working directory.  threads is
    recorded for provenance; execution is serial so outputs stay
    bit-stable.  Domain and accuracy errors from the modules propagate
    verbatim.
    """
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    if not (tolerance_scale > 0.0 and math.isfinite(tolerance_scale)):
        raise ConfigError(f"tolerance-scale must be positive and finite, "
                          f"got {tolerance_scale}")
    chosen = out_dir if out_dir is not None else config.out
    if chosen is None:
        chosen = f"{config.kind}-{config.config_hash()[:12]}"
    out_path = Path(chosen)
    out_path.mkdir(parents=True, exist_ok=True)
    tol = config.effective_tolerances(tolerance_scale)
    start = time.monotonic()
    outputs, failures, files = _RUNNERS[config.kind](config, out_path, tol)
    wall = time.monotonic() - start
    outputs = dict(outputs)
    outputs["files"] = files
    outputs["threads"] = threads
    record = RunRecord(
        kind=config.kind,
        config_hash=config.config_hash(),
        seed=config.seed,
        code_version=code_version(),
        wall_time_s=wall,
        tolerances_effective=tol,
        outputs=outputs,
        passed=not failures,
        failures=tuple(failures),
        config={k: v for k, v in config.to_mapping().items() if k != "out"},
    )
    (out_path / "runrecord.json").write_text(
        json.dumps(record.to_mapping(), indent=1, sort_keys=True) + "\n")
    return record


# ---------------------------------------------------------------------------
# comparison

_COMPARE_RTOL = 1e-9
_COMPARE_SIGMA = 3.0
# Fields that legitimately differ between comparable runs: bookkeeping,
# plus diagnostics derived from a seed-dependent estimate (gap and
# threshold values are recomputable from the compared fields themselves).
_COMPARE_SKIP = {"files", "threads", "ess", "oracle_gap", "rel_gap",
                 "threshold"}


def _numeric(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def compare(record_a: RunRecord | Mapping[str, Any],
            record_b: RunRecord | Mapping[str, Any],
            tolerances: Mapping[str, float] | None = None,
            tolerance_scale: float = 1.0) -> dict[str, Any]:
    """Field-wise diff of two RunRecords with a machine-readable verdict.

    Fields publishing a '<name>_stderr' sibling in both records are Monte
    Carlo estimates and pass when the gap is within the combined
    three-sigma band; every other shared numeric field is held to a
    relative tolerance (default 1e-9, per-field overridable via
    tolerances).  Fields present on only one side fail the comparison.
    """
    a = record_a.to_mapping() if isinstance(record_a, RunRecord) else dict(record_a)
    b = record_b.to_mapping() if isinstance(record_b, RunRecord) else dict(record_b)
    if a["kind"] != b["kind"]:
        raise ConfigError(f"cannot compare kinds {a['kind']!r} and {b['kind']!r}")
    overrides = dict(tolerances or {})
    out_a, out_b = a["outputs"], b["outputs"]
    names = sorted((set(out_a) | set(out_b)) - _COMPARE_SKIP)
    fields: list[dict[str, Any]] = []
    for name in names:
        if name.endswith("_stderr"):
            continue
        if name not in out_a or name not in out_b:
            fields.append({"name": name, "rule": "presence", "passed": False,
                           "detail": "field missing on one side"})
            continue
        va, vb = out_a[name], out_b[name]
        se_name = f"{name}_stderr"
        if _numeric(va) and _numeric(vb) and se_name in out_a and se_name in out_b:
            band = (_COMPARE_SIGMA * tolerance_scale
                    * math.hypot(out_a[se_name], out_b[se_name]))
            diff = abs(va - vb)
            fields.append({"name": name, "rule": "mc-3se", "a": va, "b": vb,
                           "diff": diff, "band": band,
                           "passed": diff <= band or va == vb})
        elif _numeric(va) and _numeric(vb):
            scale = max(abs(va), abs(vb))
            rel = abs(va - vb) / scale if scale > 0.0 else 0.0
            rtol = overrides.get(name, _COMPARE_RTOL) * tolerance_scale
            fields.append({"name": name, "rule": "rel", "a": va, "b": vb,
                           "rel_diff": rel, "rtol": rtol, "passed": rel <= rtol})
        else:
            fields.append({"name": name, "rule": "equal", "a": va, "b": vb,
                           "passed": va == vb})
    return {
        "kind": a["kind"],
        "passed": all(f["passed"] for f in fields),
        "failed_fields": [f["name"] for f in fields if not f["passed"]],
        "fields": fields,
    }


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors already; keep that, but route
    # the message through stderr consistently.
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise SystemExit2(message)


class SystemExit2(Exception):
    """Usage-level failure carrying its message to the common handler."""


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None,
                     help="64-bit seed; overrides the config's seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--threads", type=int, default=1,
                     help="recorded concurrency budget (execution is serial)")
    sub.add_argument("--tolerance-scale", type=float, default=1.0,
                     help="multiply every effective tolerance by this factor")


def _build_parser() -> _Parser:
    parser = _Parser(prog="liouville",
                     description="Liouville sphere workbench experiment harness")
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, help="JSON config path")
    _add_run_flags(p_run)

    p_cmp = subs.add_parser("compare", help="diff two run records")
    p_cmp.add_argument("record_a", help="runrecord.json path")
    p_cmp.add_argument("record_b", help="runrecord.json path")
    p_cmp.add_argument("--tolerance-scale", type=float, default=1.0)

    p_dozz = subs.add_parser("dozz", help="one structure-constant evaluation")
    p_dozz.add_argument("--gamma", type=float, required=True)
    p_dozz.add_argument("--alphas", type=float, nargs=3, required=True,
                        metavar=("A1", "A2", "A3"))
    p_dozz.add_argument("--mu", type=float, default=1.0)

    p_tab = subs.add_parser("dozz-table",
                            help="tabulate structure constants to CSV")
    group = p_tab.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="JSON config path (kind dozz-table)")
    group.add_argument("--golden", action="store_true",
                       help="run the committed golden-table config")
    _add_run_flags(p_tab)

    p_gmc = subs.add_parser("gmc-moments", help="chaos total-mass moment")
    p_gmc.add_argument("--geometry", choices=("circle", "sphere"),
                       required=True)
    p_gmc.add_argument("--gamma", type=float, required=True)
    p_gmc.add_argument("--q", type=float, required=True)
    p_gmc.add_argument("--size", type=int, required=True,
                       help="modes on the circle, max degree on the sphere")
    p_gmc.add_argument("--samples", type=int, required=True)
    _add_run_flags(p_gmc)

    p_blk = subs.add_parser("block", help="series coefficient ledger")
    p_blk.add_argument("--gamma", type=float, required=True)
    p_blk.add_argument("--p", type=float, required=True,
                       help="spectral momentum")
    p_blk.add_argument("--alphas", type=float, nargs=4, required=True,
                       metavar=("A1", "A2", "A3", "A4"))
    p_blk.add_argument("--level", type=int, required=True)
    _add_run_flags(p_blk)

    p_cor = subs.add_parser("correlator", help="Monte Carlo sphere correlator")
    p_cor.add_argument("--job", required=True,
                       help="JSON job file with the correlator params schema")
    _add_run_flags(p_cor)

    for name, helptext in (("bootstrap4pt", "spectral four-point value"),
                           ("crossing", "two-channel consistency check")):
        p_b = subs.add_parser(name, help=helptext)
        p_b.add_argument("--gamma", type=float, required=True)
        p_b.add_argument("--z", type=float, required=True,
                         help="s-channel cross-ratio in (0, 1)")
        p_b.add_argument("--alphas", type=float, nargs=4, required=True,
                         metavar=("A1", "A2", "A3", "A4"))
        p_b.add_argument("--level", type=int, default=None)
        p_b.add_argument("--p-max", type=float, default=None)
        p_b.add_argument("--panels", type=int, default=None)
        p_b.add_argument("--nodes-per-panel", type=int, default=None)
        p_b.add_argument("--block-tail", choices=("complete", "truncate"),
                         default=None)
        _add_run_flags(p_b)

    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.command == "run":
        return ExperimentConfig.load(args.config)
    if args.command == "dozz-table":
        if args.golden:
            text = (resources.files("liouville.data")
                    / GOLDEN_CONFIG_RESOURCE).read_text()
            return ExperimentConfig.from_json_text(text)
        return ExperimentConfig.load(args.config)
    if args.command == "correlator":
        path = Path(args.job)
        if not path.exists():
            raise ConfigError(f"job file not found: {path}")
        try:
            params = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"job file is not valid JSON: {exc}") from exc
        if not isinstance(params, Mapping):
            raise ConfigError("job file must be a JSON object")
        params = dict(params)
        # The job file may carry its own seed alongside the physics fields.
        seed = params.pop("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"job file 'seed' must be an integer, got {seed!r}")
        return ExperimentConfig(kind="correlator", params=params, seed=seed)
    if args.command == "gmc-moments":
        return ExperimentConfig(kind="gmc-moments", params={
            "geometry": args.geometry, "gamma": args.gamma, "q": args.q,
            "size": args.size, "samples": args.samples})
    if args.command == "block":
        return ExperimentConfig(kind="block", params={
            "gamma": args.gamma, "p": args.p, "alphas": list(args.alphas),
            "level": args.level})
    if args.command in ("bootstrap4pt", "crossing"):
        params: dict[str, Any] = {"gamma": args.gamma, "z": args.z,
                                  "alphas": list(args.alphas)}
        for key, value in (("level", args.level), ("p_max", args.p_max),
                           ("panels", args.panels),
                           ("nodes_per_panel", args.nodes_per_panel),
                           ("block_tail", args.block_tail)):
            if value is not None:
                params[key] = value
        return ExperimentConfig(kind=args.command, params=params)
    raise ConfigError(f"no config construction for command {args.command!r}")


def _cmd_dozz(args: argparse.Namespace) -> int:
    params = derive_params(args.gamma, mu=args.mu)
    a1, a2, a3 = args.alphas
    value = dozz(a1, a2, a3, params)
    payload = {
        "gamma": args.gamma,
        "mu": args.mu,
        "alphas": [a1, a2, a3],
        "value": None if value.is_pole else [value.value.real, value.value.imag],
        "log_value": (None if value.log_value is None
                      else [value.log_value.real, value.log_value.imag]),
        "is_pole": value.is_pole,
        "pole_distance": value.pole_distance,
        "code_version": code_version(),
    }
    print(json.dumps(payload, indent=1, sort_keys=True))
    return EXIT_PASS


def _cmd_compare(args: argparse.Namespace) -> int:
    verdict = compare(RunRecord.load(args.record_a),
                      RunRecord.load(args.record_b),
                      tolerance_scale=args.tolerance_scale)
    print(json.dumps(verdict, indent=1, sort_keys=True))
    return EXIT_PASS if verdict["passed"] else EXIT_TOLERANCE


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the documented exit code instead of raising."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "dozz":
            return _cmd_dozz(args)
        if args.command == "compare":
            return _cmd_compare(args)
        config = _config_from_args(args)
        if args.seed is not None:
            mapping = config.to_mapping()
            mapping["seed"] = args.seed
            config = ExperimentConfig.from_mapping(mapping)
        record = run(config, out_dir=args.out, threads=args.threads,
                     tolerance_scale=args.tolerance_scale)
        print(json.dumps(record.to_mapping(), indent=1, sort_keys=True))
        return EXIT_PASS if record.passed else EXIT_TOLERANCE
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AccuracyError, DegeneracyError, ResourceError) as exc:
        print(f"accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY


__all__ = [
    "EXPERIMENT_KINDS", "EXIT_PASS", "EXIT_TOLERANCE", "EXIT_USAGE",
    "EXIT_ACCURACY", "ExperimentConfig", "RunRecord", "code_version",
    "run", "compare", "main",
]
