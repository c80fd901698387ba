"""CSV and JSON persistence for curves, phase diagrams and instances.

Floats are written with 17 significant digits so every value round-trips
exactly. Lines starting with ``#`` are comments and are skipped on import,
except a leading ``# weakthresh <version>`` line which restores the tool
version of a diagram.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Iterable, TextIO, Union

import numpy as np

from . import __version__
from .harness import PhaseCell, PhaseDiagram
from .solvers import ProblemInstance
from .thresholds import Method, ThresholdCurve, ThresholdPoint

CURVE_HEADER = ["alpha", "beta_w", "method", "residual"]
DIAGRAM_HEADER = ["alpha", "beta", "n", "trials", "successes", "mean_rel_error", "solver", "seed"]

PathOrFile = Union[str, os.PathLike, TextIO]


class CsvFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write(dest: PathOrFile, text: str) -> None:
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)


def _read(source: PathOrFile) -> str:
    if hasattr(source, "read"):
        return source.read()
    with open(source, newline="", encoding="utf-8") as fh:
        return fh.read()


def _render(header: list[str], rows: Iterable[list[str]], comments: Iterable[str]) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def curve_rows(curves: Iterable[ThresholdCurve]) -> list[list[str]]:
    return [
        [fmt(p.alpha), fmt(p.beta_w), p.method.value, fmt(p.residual)]
        for c in curves
        for p in c.points
    ]


def export_csv(
    obj: ThresholdCurve | PhaseDiagram | list[ThresholdCurve],
    dest: PathOrFile,
    comments: Iterable[str] = (),
) -> None:
    """Write a curve, several curves, or a phase diagram as CSV."""
    if isinstance(obj, PhaseDiagram):
        rows = [
            [fmt(c.alpha), fmt(c.beta), str(obj.n), str(c.trials), str(c.successes),
             fmt(c.mean_rel_error), obj.solver, str(obj.master_seed)]
            for c in obj.cells
        ]
        text = _render(DIAGRAM_HEADER, rows, comments)
    else:
        curves = [obj] if isinstance(obj, ThresholdCurve) else list(obj)
        text = _render(CURVE_HEADER, curve_rows(curves), comments)
    _write(dest, text)


def _parse_float(value: str, line: int, name: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise CsvFormatError(f"bad {name} value {value!r}", line) from None


def _parse_int(value: str, line: int, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise CsvFormatError(f"bad {name} value {value!r}", line) from None


def import_csv(source: PathOrFile) -> ThresholdCurve | list[ThresholdCurve] | PhaseDiagram:
    """Read a file written by :func:`export_csv`.

    A curve file with a single method yields one ThresholdCurve, several
    methods a list of them (in order of first appearance).
    """
    text = _read(source)
    version = __version__
    header = None
    header_line = 0
    body: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        if raw.startswith("#"):
            words = raw[1:].split()
            if header is None and len(words) >= 2 and words[0] == "weakthresh":
                version = words[1]
            continue
        fields = next(csv.reader([raw]))
        if header is None:
            header, header_line = fields, lineno
        else:
            body.append((lineno, fields))
    if header is None:
        raise CsvFormatError("missing header", max(header_line, 1))

    if header == CURVE_HEADER:
        curves: dict[Method, ThresholdCurve] = {}
        for lineno, f in body:
            if len(f) != 4:
                raise CsvFormatError(f"expected 4 fields, got {len(f)}", lineno)
            try:
                method = Method(f[2])
            except ValueError:
                raise CsvFormatError(f"unknown method {f[2]!r}", lineno) from None
            point = ThresholdPoint(
                _parse_float(f[0], lineno, "alpha"),
                _parse_float(f[1], lineno, "beta_w"),
                method,
                _parse_float(f[3], lineno, "residual"),
            )
            curves.setdefault(method, ThresholdCurve(method)).points.append(point)
        if len(curves) == 1:
            return next(iter(curves.values()))
        return list(curves.values())

    if header == DIAGRAM_HEADER:
        diagram = None
        for lineno, f in body:
            if len(f) != 8:
                raise CsvFormatError(f"expected 8 fields, got {len(f)}", lineno)
            n = _parse_int(f[2], lineno, "n")
            seed = _parse_int(f[7], lineno, "seed")
            if diagram is None:
                diagram = PhaseDiagram(f[6], n, seed, version=version)
            elif (n, f[6], seed) != (diagram.n, diagram.solver, diagram.master_seed):
                raise CsvFormatError("n, solver and seed must be the same on every row", lineno)
            try:
                cell = PhaseCell(
                    _parse_float(f[0], lineno, "alpha"),
                    _parse_float(f[1], lineno, "beta"),
                    _parse_int(f[3], lineno, "trials"),
                    _parse_int(f[4], lineno, "successes"),
                    _parse_float(f[5], lineno, "mean_rel_error"),
                )
            except ValueError as exc:
                if isinstance(exc, CsvFormatError):
                    raise
                raise CsvFormatError(str(exc), lineno) from None
            diagram.cells.append(cell)
        if diagram is None:
            diagram = PhaseDiagram("", 0, 0, version=version)
        return diagram

    raise CsvFormatError(f"unrecognised header {','.join(header)!r}", header_line)


# ---------------------------------------------------------------------------
# instance files
# ---------------------------------------------------------------------------


def instance_to_dict(instance: ProblemInstance) -> dict:
    truth = instance.truth
    return {
        "n": instance.n,
        "m": instance.m,
        "k": instance.sparsity,
        "seed": instance.seed,
        "matrix": instance.matrix.tolist(),
        "y": instance.measurements.tolist(),
        "x_true": None if truth is None else truth.tolist(),
        "support": None if instance.support is None else [int(i) for i in instance.support],
        "signs": None if instance.signs is None else [int(s) for s in instance.signs],
    }


def instance_from_dict(data: dict) -> ProblemInstance:
    try:
        matrix = np.asarray(data["matrix"], dtype=float)
        y = np.asarray(data["y"], dtype=float)
        n, m = int(data["n"]), int(data["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed instance: {exc}") from None
    if matrix.shape != (m, n):
        raise ValueError(f"matrix shape {matrix.shape} does not match m={m}, n={n}")
    truth = data.get("x_true")
    support = data.get("support")
    signs = data.get("signs")
    return ProblemInstance(
        matrix,
        y,
        truth=None if truth is None else np.asarray(truth, dtype=float),
        sparsity=data.get("k"),
        support=None if support is None else np.asarray(support, dtype=int),
        signs=None if signs is None else np.asarray(signs, dtype=float),
        seed=data.get("seed"),
    )


def write_instance(instance: ProblemInstance, dest: PathOrFile) -> None:
    _write(dest, json.dumps(instance_to_dict(instance)) + "\n")


def read_instance(source: PathOrFile) -> ProblemInstance:
    try:
        data = json.loads(_read(source))
    except json.JSONDecodeError as exc:
        raise ValueError(f"instance file is not valid JSON: {exc}") from None
    return instance_from_dict(data)


def ensure_parent(path: str | os.PathLike) -> Path:
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise FileNotFoundError(f"directory {p.parent} does not exist")
    return p
