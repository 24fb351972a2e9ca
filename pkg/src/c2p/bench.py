"""Synthetic sweeps: scene grid x trials x methods, with CSV/JSON/gnuplot output.

Descriptors are INI-style files with one section per sweep::

    [accuracy_r1]
    n = 12, 20, 30
    noise_px = 1.0
    trials = 200
    methods = c2p, c2p-fast, two-step-z-m
    seed = 7

Optional keys: ``translation_magnitude`` (list; default samples (0, 2]),
``focal_px``, ``rotation_bound_rad``. Each grid point is one combination of
``n``, ``noise_px`` and ``translation_magnitude``.
"""

from __future__ import annotations

import configparser
import csv
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from c2p.baselines import solve_two_step
from c2p.errors import C2PError
from c2p.recovery import DEFAULT_EPS_T, solve_c2p
from c2p.synth import DEFAULT_FOCAL_PX, DEFAULT_ROTATION_BOUND, SceneConfig, generate_scene, make_rng, pose_errors

logger = logging.getLogger(__name__)

METHODS = {
    "c2p": ("c2p", None),
    "c2p-fast": ("c2p-fast", None),
    "two-step-z-t": ("qcqp-z", "T"),
    "two-step-z-m": ("qcqp-z", "M"),
    "two-step-zr-t": ("qcqp-z-redundant", "T"),
    "two-step-zr-m": ("qcqp-z-redundant", "M"),
}


@dataclass(frozen=True)
class SweepSpec:
    name: str
    n: Sequence[int]
    noise_px: Sequence[float] = (1.0,)
    translation_magnitude: Sequence[Optional[float]] = (None,)
    trials: int = 10
    methods: Sequence[str] = ("c2p",)
    seed: int = 0
    focal_px: float = DEFAULT_FOCAL_PX
    rotation_bound_rad: float = DEFAULT_ROTATION_BOUND
    eps_t: float = DEFAULT_EPS_T

    def __post_init__(self):
        if not self.n:
            raise ValueError(f"sweep {self.name!r} has no n values")
        if self.trials < 1:
            raise ValueError(f"sweep {self.name!r} needs trials >= 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ValueError(f"sweep {self.name!r}: unknown methods {unknown}; choose from {sorted(METHODS)}")

    def grid(self):
        return list(itertools.product(self.n, self.noise_px, self.translation_magnitude))


@dataclass
class ErrorRecord:
    sweep: str
    grid_index: int
    trial: int
    n: int
    noise_px: float
    translation_magnitude: float
    method: str
    rot_err_deg: float = math.nan
    trans_err_deg: float = math.nan
    certified: bool = False
    is_pure_rot: bool = False
    s_t2: float = math.nan
    solve_ms: float = math.nan
    recovery_ms: float = math.nan
    disambiguation_ms: float = math.nan
    status: str = ""
    failure: str = ""

    @property
    def ok(self) -> bool:
        return not self.failure


CSV_HEADER = [f.name for f in fields(ErrorRecord)]


def _list(value: str, cast):
    return [cast(v.strip()) for v in value.split(",") if v.strip()]


def _magnitude(v: str):
    return None if v.lower() in ("default", "none", "") else float(v)


def parse_descriptor(text: str) -> List[SweepSpec]:
    """Parse a sweep descriptor.

    Raises:
        ValueError: on an empty descriptor or invalid values.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"malformed descriptor: {exc}") from None
    if not cp.sections():
        raise ValueError("descriptor defines no sweeps")
    specs = []
    for name in cp.sections():
        s = cp[name]
        kw: Dict[str, object] = {"name": name, "n": _list(s.get("n", ""), int)}
        if "noise_px" in s:
            kw["noise_px"] = _list(s["noise_px"], float)
        if "translation_magnitude" in s:
            kw["translation_magnitude"] = _list(s["translation_magnitude"], _magnitude)
        if "methods" in s:
            kw["methods"] = _list(s["methods"], str)
        for key, cast in (("trials", int), ("seed", int), ("focal_px", float), ("rotation_bound_rad", float), ("eps_t", float)):
            if key in s:
                kw[key] = cast(s[key])
        specs.append(SweepSpec(**kw))
    return specs


def read_descriptor(path) -> List[SweepSpec]:
    return parse_descriptor(Path(path).read_text())


def _run_method(method: str, pairs, eps_t: float):
    variant, disamb = METHODS[method]
    if disamb is None:
        return solve_c2p(pairs, variant, eps_t=eps_t)
    return solve_two_step(pairs, variant, disamb)


def _run_cell(spec: SweepSpec, g: int, k: int) -> List[ErrorRecord]:
    n, noise, mag = spec.grid()[g]
    cfg = SceneConfig(
        n=n,
        noise_px=noise,
        focal_px=spec.focal_px,
        translation_magnitude=mag,
        rotation_bound_rad=spec.rotation_bound_rad,
        seed=spec.seed,
    )
    inst = generate_scene(cfg, make_rng(spec.seed, g, k))
    out = []
    for method in spec.methods:
        rec = ErrorRecord(spec.name, g, k, n, noise, inst.translation_magnitude, method)
        try:
            est = _run_method(method, inst.pairs, spec.eps_t)
        except (C2PError, np.linalg.LinAlgError, ValueError) as exc:
            rec.failure = f"{type(exc).__name__}: {exc}"
            out.append(rec)
            continue
        rec.rot_err_deg, rec.trans_err_deg = pose_errors(inst.ground_truth, est.pose)
        rec.certified = bool(est.certified)
        rec.is_pure_rot = bool(est.is_pure_rotation)
        rec.s_t2 = math.nan if est.s_t_squared is None else est.s_t_squared
        rec.solve_ms = est.timings.get("solve_ms", math.nan)
        rec.recovery_ms = est.timings.get("recovery_ms", math.nan)
        rec.disambiguation_ms = est.timings.get("disambiguation_ms", 0.0)
        rec.status = est.solver_status
        out.append(rec)
    return out


def _cell_star(args):
    return _run_cell(*args)


def run_experiment(spec: SweepSpec, workers: int = 1) -> List[ErrorRecord]:
    """One record per (grid point, trial, method), ordered by those keys.

    Trial seeds derive from ``(spec.seed, grid_index, trial)``, so serial and
    parallel runs yield the same records. Failures are recorded, not raised.
    """
    jobs = [(spec, g, k) for g in range(len(spec.grid())) for k in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_cell_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        chunks = [_run_cell(*job) for job in jobs]
    order = {m: i for i, m in enumerate(spec.methods)}
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.grid_index, r.trial, order[r.method]))
    return records


def write_csv(path, records: Sequence[ErrorRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([_fmt(v) for v in asdict(r).values()])


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def _stats(values) -> Dict[str, Optional[float]]:
    a = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if a.size == 0:
        return {"median": None, "q25": None, "q75": None, "q90": None}
    q = np.quantile(a, [0.5, 0.25, 0.75, 0.9])
    return {"median": float(q[0]), "q25": float(q[1]), "q75": float(q[2]), "q90": float(q[3])}


def summarize(spec: SweepSpec, records: Sequence[ErrorRecord]) -> dict:
    """Per-cell medians and quantiles, grouped by grid point and method."""
    cells = []
    for g, (n, noise, mag) in enumerate(spec.grid()):
        for method in spec.methods:
            rs = [r for r in records if r.grid_index == g and r.method == method]
            good = [r for r in rs if r.ok]
            cells.append(
                {
                    "grid_index": g,
                    "n": n,
                    "noise_px": noise,
                    "translation_magnitude": mag,
                    "method": method,
                    "trials": len(rs),
                    "failures": len(rs) - len(good),
                    "certified_rate": (sum(r.certified for r in good) / len(good)) if good else None,
                    "pure_rot_rate": (sum(r.is_pure_rot for r in good) / len(good)) if good else None,
                    "rot_err_deg": _stats(r.rot_err_deg for r in good),
                    "trans_err_deg": _stats(r.trans_err_deg for r in good),
                    "s_t2": _stats(r.s_t2 for r in good),
                    "solve_ms": _stats(r.solve_ms for r in good),
                    "recovery_ms": _stats(r.recovery_ms for r in good),
                    "disambiguation_ms": _stats(r.disambiguation_ms for r in good),
                }
            )
    return {"sweep": spec.name, "seed": spec.seed, "trials": spec.trials, "cells": cells}


MEDIAN_COLUMNS = [
    "n",
    "noise_px",
    "translation_magnitude",
    "method",
    "rot_err_deg",
    "trans_err_deg",
    "s_t2",
    "solve_ms",
    "recovery_ms",
    "disambiguation_ms",
    "certified_rate",
]


def write_medians_csv(path, summary: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MEDIAN_COLUMNS)
        for c in summary["cells"]:
            row = []
            for col in MEDIAN_COLUMNS:
                v = c[col]
                if isinstance(v, dict):
                    v = v["median"]
                row.append("nan" if v is None else _fmt(v))
            w.writerow(row)


def gnuplot_script(summaries: Sequence[dict]) -> str:
    """Gnuplot commands plotting median errors and phase times per method against ``n``."""
    lines = [
        "# plots the *_medians.csv files written next to this script",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set logscale x",
        "set terminal pngcairo size 900,600",
    ]
    for s in summaries:
        name = s["sweep"]
        methods = list(dict.fromkeys(c["method"] for c in s["cells"]))
        for col, label in ((5, "rotation error [deg]"), (6, "translation error [deg]"), (8, "solve [ms]"), (10, "disambiguation [ms]")):
            tag = label.split()[0]
            lines.append(f"set output '{name}_{tag}.png'")
            lines.append(f"set title '{name}: median {label}'")
            lines.append("set xlabel 'n'")
            plots = [
                f"'{name}_medians.csv' using 1:(strcol(4) eq '{m}' ? ${col} : 1/0) with linespoints title '{m}'"
                for m in methods
            ]
            lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def run_descriptor(specs: Sequence[SweepSpec], out_dir, workers: int = 1) -> dict:
    """Run every sweep and write ``<sweep>.csv``, ``<sweep>_medians.csv``, ``summary.json``, ``plot.gp``."""
    from c2p.io import dump_json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    total = failed = 0
    for spec in specs:
        tic = time.perf_counter()
        records = run_experiment(spec, workers)
        logger.info("sweep %s: %d records in %.1f s", spec.name, len(records), time.perf_counter() - tic)
        write_csv(out / f"{spec.name}.csv", records)
        summary = summarize(spec, records)
        write_medians_csv(out / f"{spec.name}_medians.csv", summary)
        summaries.append(summary)
        total += len(records)
        failed += sum(not r.ok for r in records)
    result = {"sweeps": summaries, "records": total, "failures": failed}
    with open(out / "summary.json", "w") as fh:
        dump_json(result, fh)
    (out / "plot.gp").write_text(gnuplot_script(summaries))
    return result
