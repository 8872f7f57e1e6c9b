"""Scenario runner: ``holobeam run`` / ``holobeam validate``.

A scenario is a JSON object::

    {"schema": 1, "kind": "pareto", "seed": 0, "output_dir": "out",
     "rhs": {"rows": 1, "cols": 50, "element_spacing": 0.00333, "wavelength": 0.01},
     "pareto": {...kind-specific block...}}

Angles in scenario files are degrees.  Planar directions are polar pairs
``[theta, phi]`` (theta from the feed axis); scalar angles used by the
linear-array kinds (pareto, chanest, beamtrain) are measured from broadside.
"""

from __future__ import annotations

import os

# cap BLAS/OpenMP pools before numpy loads them
_THREADS = os.environ.get("HOLOBEAM_THREADS")
if _THREADS and _THREADS.isdigit() and int(_THREADS) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from dataclasses import dataclass, field  # noqa: E402
from pathlib import Path  # noqa: E402
from typing import Any, Callable  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .errors import ConfigurationError, InfeasibleError  # noqa: E402
from .export import export, to_json_text, write_json  # noqa: E402

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
SCHEMA_VERSION = 1
KINDS = ("beampattern", "pareto", "jcas", "codesign", "distsense", "chanest", "beamtrain")


class ScenarioError(ValueError):
    """Schema violation; ``where`` is a JSON path or ``line:col``."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


class NumericOverflow(ArithmeticError):
    pass


# ------------------------------------------------------------------ schema

_REQUIRED = object()


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(where, "expected a number")
    return float(v)


def _int(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(where, "expected an integer")
    return v


def _bool(v, where):
    if not isinstance(v, bool):
        raise ScenarioError(where, "expected true/false")
    return v


def _str(v, where):
    if not isinstance(v, str):
        raise ScenarioError(where, "expected a string")
    return v


def _list(item, min_len=0, length=None):
    def check(v, where):
        if not isinstance(v, list):
            raise ScenarioError(where, "expected a list")
        if len(v) < min_len:
            raise ScenarioError(where, f"expected at least {min_len} entries")
        if length is not None and len(v) != length:
            raise ScenarioError(where, f"expected exactly {length} entries")
        return [item(x, f"{where}[{i}]") for i, x in enumerate(v)]

    return check


def _optional(check):
    def inner(v, where):
        return None if v is None else check(v, where)

    return inner


def _complex(v, where):
    """A number or a ``[re, im]`` pair."""
    if isinstance(v, list):
        re, im = _list(_num, length=2)(v, where)
        return complex(re, im)
    return complex(_num(v, where))


_direction = _list(_num, length=2)


def _obj(fields: dict[str, tuple[Callable, Any]]):
    def check(v, where):
        if not isinstance(v, dict):
            raise ScenarioError(where, "expected an object")
        unknown = sorted(set(v) - set(fields))
        if unknown:
            raise ScenarioError(f"{where}.{unknown[0]}", "unknown field")
        out = {}
        for name, (fn, default) in fields.items():
            if name in v:
                out[name] = fn(v[name], f"{where}.{name}")
            elif default is _REQUIRED:
                raise ScenarioError(f"{where}.{name}", "missing required field")
            else:
                out[name] = default
        return out

    return check


_rhs = _obj(
    {
        "rows": (_int, _REQUIRED),
        "cols": (_int, _REQUIRED),
        "element_spacing": (_num, _REQUIRED),
        "wavelength": (_num, _REQUIRED),
        "waveguide_index": (_num, math.sqrt(3.0)),
        "attenuation": (_num, 3.0),
        "power_split": (_optional(_list(_num, 1)), None),
    }
)

_user = _obj(
    {
        "direction_deg": (_direction, _REQUIRED),
        "gain": (_num, 1.0),
        "sinr_floor_db": (_optional(_num), None),
    }
)

_grid = _obj({"theta_deg": (_list(_num, length=3), [0.0, 180.0, 181]), "phi_deg": (_num, 0.0)})

BLOCKS: dict[str, Callable] = {
    "beampattern": _obj(
        {
            "directions_deg": (_list(_direction, 1), _REQUIRED),
            "weights": (_optional(_list(_num, 1)), None),
            "quantization_levels": (_optional(_int), None),
            "p_t": (_num, 1.0),
            "grid": (_grid, None),
        }
    ),
    "pareto": _obj(
        {
            "targets_deg": (_list(_num, 1), _REQUIRED),
            "comm_paths": (_list(_obj({"angle_deg": (_num, _REQUIRED), "gain": (_num, 1.0)}), 1), _REQUIRED),
            "thresholds_db": (_list(_num, 1), _REQUIRED),
            "p_t": (_num, 1.0),
            "noise": (_num, 1e-3),
            "restarts": (_int, 8),
            "pa_reference": (_bool, False),
        }
    ),
    "jcas": _obj(
        {
            "users": (_list(_user), []),
            "targets_deg": (_list(_direction), []),
            "alpha0": (_num, 0.0),
            "band": (_optional(_list(_list(_num, length=2))), None),
            "p_t": (_num, 1.0),
            "noise": (_num, 1e-3),
            "restarts": (_int, 4),
            "max_rounds": (_int, 50),
            "grid": (_grid, None),
        }
    ),
    "codesign": _obj(
        {
            "rx_rhs": (_optional(_rhs), None),
            "targets": (
                _list(_obj({"direction_deg": (_direction, _REQUIRED), "beta": (_complex, 1.0 + 0j)}), 1),
                _REQUIRED,
            ),
            "users": (_list(_user), []),
            "efficiencies": (_list(_num, length=2), [1.0, 1.0]),
            "p_t": (_num, 1.0),
            "noise_ext": (_num, 1e-3),
            "noise_int": (_num, 1e-3),
            "comm_noise": (_num, 1e-3),
            "restarts": (_int, 2),
            "max_rounds": (_int, 30),
            "grid": (_grid, None),
        }
    ),
    "distsense": _obj(
        {
            "tx": (_optional(_list(_rhs, 1)), None),
            "rx": (_optional(_list(_rhs, 1)), None),
            "scatterers": (
                _list(
                    _obj(
                        {
                            "tx_directions_deg": (_list(_direction, 1), _REQUIRED),
                            "rx_directions_deg": (_list(_direction, 1), _REQUIRED),
                            "beta": (_complex, 1.0 + 0j),
                            "clutter": (_bool, False),
                        }
                    ),
                    1,
                ),
                _REQUIRED,
            ),
            "p_t": (_num, 1.0),
            "noise": (_num, 1e-3),
            "restarts": (_int, 2),
            "max_rounds": (_int, 30),
        }
    ),
    "chanest": _obj(
        {
            "pilots": (_int, _REQUIRED),
            "snr_db": (_list(_num, 1), _REQUIRED),
            "trials": (_int, 10),
            "far_paths": (_int, 1),
            "near_paths": (_int, 1),
            "angular_bins": (_optional(_int), None),
            "range_rings": (_int, 6),
            "phi_span": (_num, 0.8),
            "mu_steps": (_list(_num, length=2), [0.5, 6.0]),
            "estimators": (_list(_str, 1), ["omp", "pd_omp"]),
            "max_paths": (_optional(_int), None),
        }
    ),
    "beamtrain": _obj(
        {
            "codebook_cols": (_int, _REQUIRED),
            "layers": (_int, 5),
            "range_bins": (_int, 2),
            "users": (
                _list(
                    _obj(
                        {
                            "angle_deg": (_num, _REQUIRED),
                            "range": (_optional(_num), None),
                            "azimuth_deg": (_num, 0.0),
                        }
                    ),
                    1,
                ),
                _REQUIRED,
            ),
            "snr_db": (_list(_optional(_num), 1), [None]),
            "windows": (_list(_bool, 1), [False, True]),
            "trials": (_int, 1),
            "kappa": (_optional(_num), None),
        }
    ),
}


@dataclass
class Scenario:
    kind: str
    rhs: dict
    seed: int
    params: dict
    output_dir: str
    description: str = ""
    sha256: str = ""
    raw: dict = field(default_factory=dict, repr=False)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario text; raises ``ScenarioError``."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    if not isinstance(raw, dict):
        raise ScenarioError("$", "scenario must be a JSON object")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ScenarioError("$.kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    top = _obj(
        {
            "schema": (_int, _REQUIRED),
            "kind": (_str, _REQUIRED),
            "description": (_str, ""),
            "seed": (_int, 0),
            "output_dir": (_str, "out"),
            "rhs": (_rhs, _REQUIRED),
            kind: (BLOCKS[kind], _REQUIRED),
        }
    )(raw, "$")
    if top["schema"] != SCHEMA_VERSION:
        raise ScenarioError("$.schema", f"unsupported schema {top['schema']}; expected {SCHEMA_VERSION}")
    return Scenario(
        kind=kind,
        rhs=top["rhs"],
        seed=top["seed"],
        params=top[kind],
        output_dir=top["output_dir"],
        description=top["description"],
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        raw=raw,
    )


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ScenarioError(str(path), f"cannot read scenario: {exc}") from None
    return parse_scenario(text)


# ------------------------------------------------------------------ pipelines


@dataclass
class RunResult:
    status: str  # "ok" or "infeasible"
    tables: dict[str, tuple[list[dict], list[str]]]  # file name -> (rows, columns)
    documents: dict[str, Any]  # file name -> JSON document


def _cfg(d: dict):
    from .rhs import RhsConfig

    return RhsConfig(
        d["rows"],
        d["cols"],
        d["element_spacing"],
        d["wavelength"],
        d["waveguide_index"],
        d["attenuation"],
        None if d["power_split"] is None else tuple(d["power_split"]),
    )


def _rad(direction) -> tuple[float, float]:
    return math.radians(direction[0]), math.radians(direction[1])


def _pattern_table(cfg, pattern, digital, grid) -> tuple[list[dict], list[str]]:
    from .rhs import ApertureWindow, Beamformer
    from .wavefield import beampattern, beampattern_rows

    g = grid or {"theta_deg": [0.0, 180.0, 181], "phi_deg": 0.0}
    start, stop, count = g["theta_deg"]
    if count != int(count) or count < 1:
        raise ScenarioError("grid.theta_deg", "point count must be a positive integer")
    thetas = np.linspace(math.radians(start), math.radians(stop), int(count))
    phi = math.radians(g["phi_deg"])
    bf = Beamformer.from_pattern(cfg, pattern)
    samples = beampattern(bf, ApertureWindow.full(cfg), digital, [(t, phi) for t in thetas])
    return beampattern_rows(samples), ["theta_deg", "phi_deg", "power_w"]


def _users(cfg, specs):
    from .beamopt import JcasUser
    from .wavefield import planar_steering

    return [
        JcasUser(
            math.sqrt(u["gain"]) * planar_steering(cfg, _rad(u["direction_deg"])),
            0.0 if u["sinr_floor_db"] is None else 10 ** (u["sinr_floor_db"] / 10),
        )
        for u in specs
    ]


def _run_beampattern(sc: Scenario, seed: int) -> RunResult:
    from .rhs import pattern_for_direction, quantize_pattern, superpose_patterns

    p = sc.params
    cfg = _cfg(sc.rhs)
    dirs = [_rad(d) for d in p["directions_deg"]]
    w = p["weights"] if p["weights"] is not None else [1.0] * len(dirs)
    if len(w) != len(dirs):
        raise ScenarioError("$.beampattern.weights", "one weight per direction is required")
    pattern, rescaled = superpose_patterns([pattern_for_direction(cfg, d) for d in dirs], w)
    if p["quantization_levels"] is not None:
        pattern = quantize_pattern(pattern, p["quantization_levels"])
    digital = np.full(cfg.feed_count, math.sqrt(p["p_t"] / cfg.feed_count), dtype=complex)
    rows, cols = _pattern_table(cfg, pattern, digital, p["grid"])
    doc = {"pattern": pattern.amplitudes, "rescaled": rescaled}
    return RunResult("ok", {"beampattern.csv": (rows, cols)}, {"pattern.json": doc})


def _run_pareto(sc: Scenario, seed: int) -> RunResult:
    from .beamopt import ParetoScenario, max_snr, pa_reference_front, pareto_front, pareto_rows

    p = sc.params
    cfg = _cfg(sc.rhs)
    th_db = p["thresholds_db"]
    if any(b < a for a, b in zip(th_db, th_db[1:])):
        raise ScenarioError("$.pareto.thresholds_db", "thresholds must be sorted ascending")
    scen = ParetoScenario(
        tuple(math.radians(t) for t in p["targets_deg"]),
        tuple((math.radians(c["angle_deg"]), c["gain"]) for c in p["comm_paths"]),
        p["p_t"],
        p["noise"],
    )
    th = [10 ** (t / 10) for t in th_db]
    points = pareto_front(scen, th, cfg, seed=seed, restarts=p["restarts"])
    top, _ = max_snr(cfg, scen)
    infeasible = [db for db, pt in zip(th_db, points) if not pt.feasible]
    cols = ["gamma_c_db", "p_s_w"]
    tables = {"pareto.csv": (pareto_rows(points), cols)}
    if p["pa_reference"]:
        tables["pa_reference.csv"] = (pareto_rows(pa_reference_front(scen, cfg.size, th)), cols)
    doc = {
        "max_snr_db": 10 * math.log10(top) if top > 0 else None,
        "infeasible_thresholds_db": infeasible,
        "points": [
            {"gamma_c": pt.comm_level, "p_s_w": pt.sensing_power, "feasible": pt.feasible, "achieved_snr": pt.comm_snr}
            for pt in points
        ],
    }
    return RunResult("infeasible" if infeasible else "ok", tables, {"report.json": doc})


def _run_jcas(sc: Scenario, seed: int) -> RunResult:
    from .beamopt import jcas_transmit
    from .metrics import RadarUtilityConfig

    p = sc.params
    cfg = _cfg(sc.rhs)
    radar = None
    if p["targets_deg"]:
        band = None if p["band"] is None else tuple(tuple(b) for b in p["band"])
        radar = RadarUtilityConfig(tuple(_rad(d) for d in p["targets_deg"]), p["alpha0"], band)
    rep = jcas_transmit(
        cfg, _users(cfg, p["users"]), radar, seed=seed, p_t=p["p_t"], noise=p["noise"],
        restarts=p["restarts"], max_rounds=p["max_rounds"],
    )
    if not rep.feasible:
        return RunResult("infeasible", {}, {"report.json": rep.to_dict()})
    rows, cols = _pattern_table(cfg, rep.pattern, rep.digital, p["grid"])
    return RunResult("ok", {"beampattern.csv": (rows, cols)}, {"report.json": rep.to_dict()})


def _run_codesign(sc: Scenario, seed: int) -> RunResult:
    from .beamopt import SensingTarget, codesign_maxmin

    p = sc.params
    cfg_t = _cfg(sc.rhs)
    cfg_r = cfg_t if p["rx_rhs"] is None else _cfg(p["rx_rhs"])
    targets = [SensingTarget(_rad(t["direction_deg"]), t["beta"]) for t in p["targets"]]
    rep = codesign_maxmin(
        cfg_t, cfg_r, targets, _users(cfg_t, p["users"]), tuple(p["efficiencies"]), seed=seed,
        p_t=p["p_t"], noise_ext=p["noise_ext"], noise_int=p["noise_int"], comm_noise=p["comm_noise"],
        restarts=p["restarts"], max_rounds=p["max_rounds"],
    )
    if rep.status == "infeasible":
        return RunResult("infeasible", {}, {"report.json": rep.to_dict()})
    rows = [
        {"role": "target", "index": i, "sinr_db": _db(v)} for i, v in enumerate(rep.extras.get("target_sinr", []))
    ] + [{"role": "user", "index": i, "sinr_db": _db(v)} for i, v in enumerate(rep.extras.get("user_sinr", []))]
    tables = {"sinr.csv": (rows, ["role", "index", "sinr_db"])}
    if rep.digital is not None:
        tables["beampattern.csv"] = _pattern_table(cfg_t, rep.pattern, rep.digital, p["grid"])
    return RunResult("ok", tables, {"report.json": rep.to_dict()})


def _db(v: float) -> float:
    return 10 * math.log10(v) if v > 0 else -math.inf


def _run_distsense(sc: Scenario, seed: int) -> RunResult:
    from .beamopt import Scatterer, distsense_maxmin

    p = sc.params
    base = _cfg(sc.rhs)
    tx = [base] if p["tx"] is None else [_cfg(c) for c in p["tx"]]
    rx = [base] if p["rx"] is None else [_cfg(c) for c in p["rx"]]
    scatterers = []
    for i, s in enumerate(p["scatterers"]):
        where = f"$.distsense.scatterers[{i}]"
        if len(s["tx_directions_deg"]) != len(tx) or len(s["rx_directions_deg"]) != len(rx):
            raise ScenarioError(where, "need one direction per transmit and per receive subarray")
        scatterers.append(
            Scatterer(
                tuple(_rad(d) for d in s["tx_directions_deg"]),
                tuple(_rad(d) for d in s["rx_directions_deg"]),
                s["beta"],
                clutter=s["clutter"],
            )
        )
    rep = distsense_maxmin(
        tx, rx, scatterers, seed=seed, p_t=p["p_t"], noise=p["noise"],
        restarts=p["restarts"], max_rounds=p["max_rounds"],
    )
    rows = [{"target": i, "average_sinr_db": _db(v)} for i, v in enumerate(rep.extras["average_sinr"])]
    return RunResult("ok", {"sinr.csv": (rows, ["target", "average_sinr_db"])}, {"report.json": rep.to_dict()})


def _run_chanest(sc: Scenario, seed: int) -> RunResult:
    from .chanest import (
        build_dictionary,
        guided_feed,
        nmse,
        nmse_rows,
        omp,
        pd_omp,
        random_hybrid_channel,
        simulate_pilots,
    )

    p = sc.params
    cfg = _cfg(sc.rhs)
    if cfg.rows != 1:
        raise ScenarioError("$.rhs.rows", "channel estimation runs on a single-row surface")
    unknown = sorted(set(p["estimators"]) - {"omp", "pd_omp"})
    if unknown:
        raise ScenarioError("$.chanest.estimators", f"unknown estimator {unknown[0]!r}")
    N, d = cfg.cols, cfg.element_spacing / cfg.wavelength
    G_a = p["angular_bins"] or max(2, N // 2)
    paths = p["far_paths"] + p["near_paths"]
    feed = guided_feed(N, d, 1.0, cfg.waveguide_index)
    ang = build_dictionary(N, d, "angular", G_a) if "omp" in p["estimators"] else None
    joint = build_dictionary(N, d, "joint", G_a, p["range_rings"]) if "pd_omp" in p["estimators"] else None
    results = []
    for snr in p["snr_db"]:
        for t in range(p["trials"]):
            s = seed + t
            ch = random_hybrid_channel(
                N, d, s, p["far_paths"], p["near_paths"], p["phi_span"], tuple(p["mu_steps"])
            )
            pil = simulate_pilots(ch, p["pilots"], snr, seed=s, feed=feed)
            for name in p["estimators"]:
                if name == "omp":
                    est = omp(pil, ang, min(paths, pil.Q))
                else:
                    est = pd_omp(pil, joint, max_paths=p["max_paths"])
                results.append((snr, s, name, nmse(est.channel_estimate, ch.vector)))
    rows = nmse_rows(results)
    summary = {
        name: {
            str(snr): float(np.median([r["nmse"] for r in rows if r["estimator"] == name and r["snr_db"] == snr]))
            for snr in p["snr_db"]
        }
        for name in p["estimators"]
    }
    doc = {"median_nmse": summary, "angular_bins": G_a, "range_rings": p["range_rings"]}
    return RunResult("ok", {"nmse.csv": (rows, ["snr_db", "seed", "estimator", "nmse"])}, {"summary.json": doc})


def _run_beamtrain(sc: Scenario, seed: int) -> RunResult:
    from .beamtrain import TrainingUser, design_angle_codebook, run_training
    from .chanest import ring_step
    from .rhs import RhsConfig

    p = sc.params
    cfg = _cfg(sc.rhs)
    if not 2 <= p["codebook_cols"] <= cfg.cols:
        raise ScenarioError("$.beamtrain.codebook_cols", "must lie between 2 and the surface column count")
    design = RhsConfig(1, p["codebook_cols"], cfg.element_spacing, cfg.wavelength, cfg.waveguide_index, cfg.attenuation)
    users = []
    for u in p["users"]:
        r = math.inf if u["range"] is None else u["range"]
        users.append(TrainingUser(math.pi / 2 - math.radians(u["angle_deg"]), r, math.radians(u["azimuth_deg"])))
    near = any(not math.isinf(u.range) for u in users)
    mu_max = p["range_bins"] * ring_step(design.cols, design.element_spacing, design.wavelength) if near else 0.0
    samples = (4 * 2 ** p["layers"], 2 * p["range_bins"] if near else 2)
    book = design_angle_codebook(design, p["layers"], samples, seed=seed, mu_max=mu_max)
    rows, traces = [], []
    for snr in p["snr_db"]:
        for win in p["windows"]:
            errors = 0
            for t in range(p["trials"]):
                tr = run_training(
                    cfg, users, book, p["range_bins"] if near else 1,
                    snr_db=math.inf if snr is None else snr, windows=win, seed=seed + t, kappa=p["kappa"],
                )
                errors += sum(not c for c in tr.correct)
                if t == 0:
                    traces.append({"snr_db": snr, "windows": win, "trace": tr.to_dict()})
            rows.append(
                {
                    "snr_db": math.inf if snr is None else snr,
                    "windows": win,
                    "n_a": p["codebook_cols"],
                    "error_rate": errors / (p["trials"] * len(users)),
                }
            )
    return RunResult(
        "ok",
        {"error_rate.csv": (rows, ["snr_db", "windows", "n_a", "error_rate"])},
        {"trace.json": traces},
    )


PIPELINES: dict[str, Callable[[Scenario, int], RunResult]] = {
    "beampattern": _run_beampattern,
    "pareto": _run_pareto,
    "jcas": _run_jcas,
    "codesign": _run_codesign,
    "distsense": _run_distsense,
    "chanest": _run_chanest,
    "beamtrain": _run_beamtrain,
}


# ------------------------------------------------------------------ driver


def _check_finite(rows: list[dict], name: str) -> None:
    """Infinite values are legitimate only as +-inf markers in snr/dB columns."""
    for i, r in enumerate(rows):
        for k, v in r.items():
            if isinstance(v, float) and math.isinf(v) and not (k.endswith("_db")):
                raise NumericOverflow(f"{name} row {i}: {k} overflowed")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_scenario(path, seed: int | None = None, out: str | None = None) -> tuple[int, dict]:
    """Run a scenario file and write its artifacts plus ``manifest.json``.

    Returns ``(exit_code, manifest)``; the manifest is also written on
    infeasible runs so the report can be inspected.
    """
    t0 = time.perf_counter()
    sc = load_scenario(path)
    seed = sc.seed if seed is None else seed
    out_dir = Path(out if out is not None else sc.output_dir)
    with np.errstate(over="raise", invalid="ignore", divide="ignore", under="ignore"):
        try:
            res = PIPELINES[sc.kind](sc, seed)
        except FloatingPointError as exc:
            raise NumericOverflow(str(exc)) from exc
    for name, (rows, _) in res.tables.items():
        _check_finite(rows, name)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for name, (rows, cols) in sorted(res.tables.items()):
        export(rows, "csv", out_dir / name, columns=cols)
        files.append(name)
    for name, doc in sorted(res.documents.items()):
        write_json(doc, out_dir / name)
        files.append(name)
    manifest = {
        "scenario": str(path),
        "scenario_sha256": sc.sha256,
        "kind": sc.kind,
        "seed": seed,
        "status": res.status,
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - t0,
        "files": [{"name": f, "sha256": _sha256(out_dir / f)} for f in sorted(files)],
    }
    write_json(manifest, out_dir / "manifest.json")
    return (EXIT_INFEASIBLE if res.status == "infeasible" else EXIT_OK), manifest


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holobeam", description="Holographic beamforming scenario runner")
    ap.add_argument("--version", action="version", version=f"holobeam {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write its artifacts")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out", default=None, help="override the output directory")
    val = sub.add_parser("validate", help="check a scenario file without running it")
    val.add_argument("scenario")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if _THREADS is not None and not (_THREADS.isdigit() and int(_THREADS) > 0):
        print(f"error: HOLOBEAM_THREADS must be a positive integer, got {_THREADS!r}", file=sys.stderr)
        return EXIT_PARSE
    try:
        if args.command == "validate":
            sc = load_scenario(args.scenario)
            print(f"ok: {sc.kind} scenario, schema {SCHEMA_VERSION}")
            return EXIT_OK
        code, manifest = run_scenario(args.scenario, args.seed, args.out)
    except ScenarioError as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {args.scenario}: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.report is not None:
            sys.stderr.write(to_json_text(exc.report.to_dict()))
        return EXIT_INFEASIBLE
    except (NumericOverflow, OverflowError) as exc:
        print(f"numeric overflow: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if code == EXIT_INFEASIBLE:
        report = next((f["name"] for f in manifest["files"] if f["name"].startswith("report")), None)
        print(f"infeasible: see {report}", file=sys.stderr)
    else:
        print(f"wrote {len(manifest['files'])} files + manifest.json")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
