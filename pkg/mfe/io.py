"""CSV ingestion and JSON result records.

Matching files: header `x_label,y_label,mass`, label "0" for singlehood,
`#` comment lines. Margin files: header `side,label,mass`, side M or W.
"""
from __future__ import annotations

import csv
import json
import math
from functools import singledispatch
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from mfe.counterfactual import CounterfactualResult, summary_by_cell
from mfe.equilibrium import EquilibriumSolution
from mfe.errors import ConfigurationError, ParseError
from mfe.estimation.likelihood import ObservedData
from mfe.estimation.nested import EstimationResult
from mfe.families.design import SurplusTable
from mfe.models import BenchmarkReport, RunConfig
from mfe.types import SINGLE, Market, Matching, TypeSpace

MATCHING_HEADER = ["x_label", "y_label", "mass"]
MARGINS_HEADER = ["side", "label", "mass"]
_TEXT_KEYS = {"kind", "method", "message", "x", "y", "x_labels", "y_labels", "names"}


def _rows(path: str | Path, header: list[str]):
    """Yield (line number, fields) for data rows, after checking the header."""
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 text (byte offset {exc.start})", path=path) from exc
    seen_header = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if not seen_header:
            if fields != header:
                raise ParseError(f"expected header '{','.join(header)}'", path=path, line=lineno)
            seen_header = True
            continue
        if len(fields) != 3:
            raise ParseError(f"expected 3 fields, got {len(fields)}", path=path, line=lineno)
        yield lineno, fields
    if not seen_header:
        raise ParseError("file has no header", path=path)


def _mass(text: str, path: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"mass '{text}' is not a number", path=path, line=lineno) from None
    if not math.isfinite(value) or value < 0:
        raise ParseError(f"mass must be finite and nonnegative, got {text}", path=path, line=lineno)
    return value


def load_matching_csv(path: str | Path, space: TypeSpace | None = None) -> ObservedData:
    """Read an observed matching; types are taken from `space` or in order of first appearance."""
    path = str(path)
    records: dict[tuple[str, str], float] = {}
    x_seen: list[str] = []
    y_seen: list[str] = []
    for lineno, (x, y, raw) in _rows(path, MATCHING_HEADER):
        if not x or not y:
            raise ParseError("labels must be non-empty", path=path, line=lineno)
        if x == SINGLE and y == SINGLE:
            raise ParseError("a row cannot be single on both sides", path=path, line=lineno)
        if (x, y) in records:
            raise ParseError(f"duplicate row ({x}, {y})", path=path, line=lineno)
        if space is not None:
            if x != SINGLE and x not in space.x_labels:
                raise ParseError(f"unknown x label '{x}'", path=path, line=lineno)
            if y != SINGLE and y not in space.y_labels:
                raise ParseError(f"unknown y label '{y}'", path=path, line=lineno)
        records[(x, y)] = _mass(raw, path, lineno)
        if x != SINGLE and x not in x_seen:
            x_seen.append(x)
        if y != SINGLE and y not in y_seen:
            y_seen.append(y)

    if space is None:
        if not x_seen or not y_seen:
            raise ParseError("matching needs at least one type on each side", path=path)
        space = TypeSpace(tuple(x_seen), tuple(y_seen))
    mu_xy = np.zeros(space.shape)
    mu_x0 = np.zeros(space.nx)
    mu_0y = np.zeros(space.ny)
    for (x, y), value in records.items():
        if y == SINGLE:
            mu_x0[space.x_index(x)] = value
        elif x == SINGLE:
            mu_0y[space.y_index(y)] = value
        else:
            mu_xy[space.x_index(x), space.y_index(y)] = value
    return ObservedData(Matching(space, mu_xy, mu_x0, mu_0y))


def save_matching_csv(matching: Matching, path: str | Path) -> None:
    """Couples with positive mass, then every single man and single woman type (so no type is lost)."""
    space = matching.space
    lines = [",".join(MATCHING_HEADER)]
    for i, x in enumerate(space.x_labels):
        for j, y in enumerate(space.y_labels):
            if matching.mu_xy[i, j] > 0:
                lines.append(f"{x},{y},{matching.mu_xy[i, j]:.17g}")
    lines += [f"{x},{SINGLE},{v:.17g}" for x, v in zip(space.x_labels, matching.mu_x0)]
    lines += [f"{SINGLE},{y},{v:.17g}" for y, v in zip(space.y_labels, matching.mu_0y)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_margins_csv(path: str | Path, space: TypeSpace) -> Market:
    path = str(path)
    n = np.full(space.nx, np.nan)
    m = np.full(space.ny, np.nan)
    for lineno, (side, label, raw) in _rows(path, MARGINS_HEADER):
        if side == "M":
            target, labels = n, space.x_labels
        elif side == "W":
            target, labels = m, space.y_labels
        else:
            raise ParseError(f"side must be M or W, got '{side}'", path=path, line=lineno)
        if label not in labels:
            raise ParseError(f"unknown label '{label}'", path=path, line=lineno)
        idx = labels.index(label)
        if not np.isnan(target[idx]):
            raise ParseError(f"duplicate margin for {side} '{label}'", path=path, line=lineno)
        value = _mass(raw, path, lineno)
        if value <= 0:
            raise ParseError("margins must be strictly positive", path=path, line=lineno)
        target[idx] = value
    missing = [f"M:{x}" for x, v in zip(space.x_labels, n) if np.isnan(v)]
    missing += [f"W:{y}" for y, v in zip(space.y_labels, m) if np.isnan(v)]
    if missing:
        raise ParseError(f"missing margins for {', '.join(missing)}", path=path)
    return Market(space, n, m)


def read_config(path: str | Path) -> dict[str, Any]:
    """The raw JSON object of a config file, before flags are merged in."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc.strerror}", path=str(path)) from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 text (byte offset {exc.start})", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object", path=str(path))
    return raw


def load_run_config(path: str | Path) -> RunConfig:
    raw = read_config(path)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config {path}: {exc.errors()[0]['msg']}") from exc


# --- JSON records ---

def _finite(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, np.ndarray):
        return _finite(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _restore(value: Any, key: str | None = None) -> Any:
    if key in _TEXT_KEYS:
        return value
    if isinstance(value, dict):
        return {k: _restore(v, k) for k, v in value.items()}
    if isinstance(value, list):
        return [_restore(v) for v in value]
    if value in ("nan", "inf", "-inf"):
        return float(value)
    return value


def matching_record(matching: Matching) -> dict[str, Any]:
    return {
        "x_labels": list(matching.space.x_labels),
        "y_labels": list(matching.space.y_labels),
        "mu_xy": matching.mu_xy,
        "mu_x0": matching.mu_x0,
        "mu_0y": matching.mu_0y,
    }


@singledispatch
def to_record(result: Any) -> dict[str, Any]:
    raise TypeError(f"no JSON record for {type(result).__name__}")


@to_record.register
def _(result: EquilibriumSolution) -> dict[str, Any]:
    return {
        "kind": "equilibrium",
        "method": result.method,
        "converged": result.converged,
        "outer_iterations": result.outer_iterations,
        "residual_sup_norm": result.residual_sup_norm,
        "matching": matching_record(result.matching),
    }


@to_record.register
def _(result: EstimationResult) -> dict[str, Any]:
    names = result.theta_hat.names
    return {
        "kind": "estimation",
        "method": result.method,
        "converged": result.converged,
        "theta_hat": result.theta_hat.as_dict(),
        "loglik": result.loglik,
        "gradient_norm": result.gradient_norm,
        "iterations": result.iterations,
        "message": result.message,
        "covariance": result.covariance,
        "std_errors": None if result.std_errors is None else dict(zip(names, result.std_errors.tolist())),
    }


@to_record.register
def _(result: CounterfactualResult) -> dict[str, Any]:
    r = result.ratios
    return {
        "kind": "counterfactual",
        "method": result.method,
        "converged": result.converged,
        "iterations": result.iterations,
        "ratios": {"mu_xy": r.mu_xy, "mu_x0": r.mu_x0, "mu_0y": r.mu_0y, "n": r.n, "m": r.m},
        "baseline": matching_record(result.baseline),
        "new_matching": matching_record(result.new_matching),
        "changes": summary_by_cell(result),
    }


@to_record.register
def _(result: SurplusTable) -> dict[str, Any]:
    return {
        "kind": "surplus",
        "x_labels": list(result.space.x_labels),
        "y_labels": list(result.space.y_labels),
        "phi": result.phi,
        "prohibited": result.prohibited,
    }


@to_record.register
def _(result: BenchmarkReport) -> dict[str, Any]:
    return {"kind": f"benchmark-{result.kind}", **result.model_dump(exclude={"kind"})}


def dumps_result(result: Any) -> str:
    record = result if isinstance(result, dict) else to_record(result)
    return json.dumps(_finite(record), ensure_ascii=False, indent=2, allow_nan=False)


def save_result_json(result: Any, path: str | Path) -> None:
    Path(path).write_text(dumps_result(result) + "\n", encoding="utf-8")


def load_result_json(path: str | Path) -> dict[str, Any]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read result: {exc.strerror}", path=str(path)) from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 text (byte offset {exc.start})", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno) from exc
    return _restore(raw)
