"""Batch experiments: plan files, per-cell runs and result tables.

Plan file syntax, one ``key = value`` per line, ``#`` starts a comment::

    images  = phantom:circle:128  photos/boat.pgm
    looks   = 1 3 5 10 33
    seeds   = 1 2 3 4
    filters = proposed tdm dong
    out_dir = results
    param.proposed.lambda_fid = 1.0
    param.*.tau = 0.1

List values are whitespace separated.  ``param.<filter>.<field>`` sets a
:class:`SolverParams` field for one filter, ``param.*.<field>`` for all.
Relative paths are resolved against the plan file's directory.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import ImageGrid
from .errors import ConfigurationError, DespeckleError
from .fuzzy import FuzzyTemplate
from .imageio import read_image, write_image
from .metrics import mssim, psnr, speckle_index
from .noise import NoiseSpec, apply_speckle
from .phantoms import phantom
from .solvers import SOLVERS, SolverParams, effective_params, run_filter

PARAM_FIELDS = {f.name: f for f in fields(SolverParams)}
_STR_FIELDS = {"mode", "theta_schedule", "flux", "fidelity"}
_INT_FIELDS = {"max_iter", "min_iter"}


class PlanError(ConfigurationError):
    def __init__(self, lineno: int | None, message: str):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


@dataclass
class ExperimentPlan:
    images: list[str]
    looks: list[int]
    seeds: list[int]
    filters: list[str]
    out_dir: str = "results"
    params: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("images", "looks", "seeds", "filters"):
            if not getattr(self, name):
                raise PlanError(None, f"plan needs a nonempty {name!r} list")
        unknown = [f for f in self.filters if f not in SOLVERS]
        if unknown:
            raise PlanError(None, f"unknown filters {unknown}")

    def cells(self):
        for image in self.images:
            for look in self.looks:
                for seed in self.seeds:
                    for filt in self.filters:
                        yield image, look, seed, filt

    def params_for(self, filt: str, overrides: dict | None = None) -> SolverParams:
        """Built-in defaults < plan values (``*`` then per-filter) < ``overrides``."""
        merged = {**self.params.get("*", {}), **self.params.get(filt, {}), **(overrides or {})}
        return SolverParams(**merged)


def coerce_param(name: str, raw: str):
    if name not in PARAM_FIELDS:
        raise ValueError(f"unknown solver parameter {name!r}")
    if name in _STR_FIELDS:
        return raw.replace("-", "_") if name == "theta_schedule" else raw
    if raw.lower() == "none":
        return None
    if name in _INT_FIELDS:
        return int(raw)
    return float(raw)


def parse_plan(text: str, base_dir: str | Path = ".") -> ExperimentPlan:
    base = Path(base_dir)
    values: dict[str, tuple[int, str]] = {}
    params: dict[str, dict] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PlanError(lineno, f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not value:
            raise PlanError(lineno, f"empty value for {key!r}")
        if key.startswith("param."):
            parts = key.split(".")
            if len(parts) != 3:
                raise PlanError(lineno, f"expected param.<filter>.<field>, got {key!r}")
            _, filt, name = parts
            if filt != "*" and filt not in SOLVERS:
                raise PlanError(lineno, f"unknown filter {filt!r}")
            try:
                params.setdefault(filt, {})[name] = coerce_param(name, value)
            except ValueError as exc:
                raise PlanError(lineno, str(exc)) from None
        elif key in ("images", "looks", "seeds", "filters", "out_dir"):
            if key in values:
                raise PlanError(lineno, f"duplicate key {key!r}")
            values[key] = (lineno, value)
        else:
            raise PlanError(lineno, f"unknown key {key!r}")

    def ints(key):
        if key not in values:
            raise PlanError(None, f"missing required key {key!r}")
        lineno, raw = values[key]
        try:
            out = [int(tok) for tok in raw.split()]
        except ValueError:
            raise PlanError(lineno, f"{key} must be integers, got {raw!r}") from None
        if key == "looks" and any(v < 1 for v in out):
            raise PlanError(lineno, "looks must be >= 1")
        if key == "seeds" and any(v < 0 for v in out):
            raise PlanError(lineno, "seeds must be >= 0")
        return out

    for key in ("images", "filters"):
        if key not in values:
            raise PlanError(None, f"missing required key {key!r}")
    lineno, raw = values["filters"]
    filters = raw.split()
    bad = [f for f in filters if f not in SOLVERS]
    if bad:
        raise PlanError(lineno, f"unknown filters {bad}; choose from {sorted(SOLVERS)}")
    images = [tok if tok.startswith("phantom:") else str(base / tok) for tok in values["images"][1].split()]
    out_dir = values.get("out_dir", (0, "results"))[1]
    for filt, p in params.items():
        try:
            SolverParams(**p)
        except (TypeError, ValueError) as exc:
            raise PlanError(None, f"invalid parameters for {filt!r}: {exc}") from None
    return ExperimentPlan(images, ints("looks"), ints("seeds"), filters, str(base / out_dir), params)


def load_plan(path: str | Path) -> ExperimentPlan:
    path = Path(path)
    return parse_plan(path.read_text(), path.parent)


def load_clean(spec: str) -> ImageGrid:
    """Path to an image, or ``phantom:<kind>[:<size>]``."""
    if spec.startswith("phantom:"):
        parts = spec.split(":")
        size = int(parts[2]) if len(parts) > 2 else 128
        return phantom(parts[1], size)
    return read_image(spec)


def image_label(spec: str) -> str:
    if spec.startswith("phantom:"):
        return spec.replace(":", "-")
    return Path(spec).stem


# -- per-cell execution ------------------------------------------------------

COLUMNS = [
    "image", "looks", "seed", "filter", "status",
    "psnr_noisy", "mssim_noisy", "si_noisy",
    "psnr", "mssim", "speckle_index", "iterations", "stop_reason", "error",
]


@dataclass
class Cell:
    image: str
    looks: int
    seed: int
    filter: str
    params: SolverParams
    templates: list[FuzzyTemplate] | None = None
    save_dir: str | None = None
    timing: bool = False


def run_cell(cell: Cell) -> dict:
    row = {
        "image": image_label(cell.image), "looks": cell.looks, "seed": cell.seed,
        "filter": cell.filter, "status": "ok", "error": "",
    }
    try:
        clean = load_clean(cell.image)
        noisy = apply_speckle(clean, NoiseSpec(cell.looks, cell.seed))
        restored, runlog = run_filter(cell.filter, noisy, cell.params, cell.templates)
        row.update(
            psnr_noisy=psnr(clean, noisy), mssim_noisy=mssim(clean, noisy), si_noisy=speckle_index(noisy),
            psnr=psnr(clean, restored), mssim=mssim(clean, restored), speckle_index=speckle_index(restored),
            iterations=runlog.iterations, stop_reason=runlog.stop_reason,
        )
        if cell.timing:
            row["wall_seconds"] = runlog.wall_seconds
        if cell.save_dir:
            prefix = Path(cell.save_dir) / f"{row['image']}_L{cell.looks}_s{cell.seed}_{cell.filter}"
            prefix.parent.mkdir(parents=True, exist_ok=True)
            write_image(prefix.with_suffix(".pgm"), restored)
    except (DespeckleError, OSError, ValueError, FloatingPointError) as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


def run_batch(plan: ExperimentPlan, overrides: dict | None = None, templates=None,
              workers: int = 1, save_images: bool = False, timing: bool = False) -> list[dict]:
    """Run every cell of the plan; failures become rows with ``status=failed``.

    Rows come back in plan order whatever the worker count.
    """
    save_dir = str(Path(plan.out_dir) / "cells") if save_images else None
    cells = [
        Cell(img, look, seed, filt, plan.params_for(filt, overrides), templates, save_dir, timing)
        for img, look, seed, filt in plan.cells()
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(c) for c in cells]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.6f}"
    return str(value)


def rows_to_csv(rows: list[dict], timing: bool = False) -> str:
    cols = COLUMNS + (["wall_seconds"] if timing else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in cols])
    return buf.getvalue()


def summarize(rows: list[dict]) -> list[dict]:
    """Mean PSNR/MSSIM/SI over seeds per (image, looks, filter), successful cells only."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["status"] == "ok":
            groups.setdefault((row["image"], row["looks"], row["filter"]), []).append(row)
    out = []
    for (image, looks, filt), members in groups.items():
        n = len(members)
        out.append({
            "image": image, "looks": looks, "filter": filt, "cells": n,
            "psnr": sum(r["psnr"] for r in members) / n,
            "mssim": sum(r["mssim"] for r in members) / n,
            "speckle_index": sum(r["speckle_index"] for r in members) / n,
        })
    return out


def params_dict(p: SolverParams) -> dict:
    return {f.name: getattr(p, f.name) for f in fields(p)}


def json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [json_safe(v) for v in obj]
    return obj


def batch_report(plan: ExperimentPlan, rows: list[dict], overrides: dict | None = None) -> str:
    report = {
        "plan": {"images": plan.images, "looks": plan.looks, "seeds": plan.seeds, "filters": plan.filters},
        "params_max_level": 255.0,
        "params": {f: params_dict(effective_params(f, plan.params_for(f, overrides), 255.0)) for f in plan.filters},
        "rows": rows,
        "summary": summarize(rows),
    }
    return json.dumps(json_safe(report), indent=2, sort_keys=True) + "\n"
