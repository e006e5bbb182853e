"""CSV data files and the versioned text model file.

Every float is written with 17 significant digits, which round-trips IEEE
doubles exactly, so ``write(read(f))`` reproduces files this package wrote.
"""
from __future__ import annotations

import csv
import io
import math
from importlib import resources
from pathlib import Path
from typing import TextIO

import numpy as np

from .distributions import DistributionFamily
from .neural import NetworkWeights, Standardizer
from .pipeline import CalibrationModel
from .synthetic import Dataset

MODEL_MAGIC = "accrue-calib-model"
BUNDLED_DATA = "weather_like.csv"
MODEL_VERSION = 1


class FormatError(ValueError):
    pass


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _open_out(target):
    return open(target, "w", newline="") if isinstance(target, (str, Path)) else target


# --------------------------------------------------------------------------
# data CSV


def data_header(d: int) -> list[str]:
    return [f"x_{i}" for i in range(1, d + 1)] + ["m", "y"]


def write_csv(data: Dataset, target) -> None:
    """Write ``x_1..x_d,m,y`` rows to a path or text stream."""
    out = _open_out(target)
    try:
        out.write(",".join(data_header(data.d)) + "\n")
        for xi, mi, yi in zip(data.x, data.m, data.y):
            out.write(",".join([*(fmt(v) for v in xi), fmt(mi), fmt(yi)]) + "\n")
    finally:
        if out is not target:
            out.close()


def _parse_rows(stream: TextIO, name: str):
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{name}: empty file, expected a header row") from None
    header = [h.strip() for h in header]
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(
                f"{name}, line {line_no}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise FormatError(f"{name}, line {line_no}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise FormatError(f"{name}, line {line_no}: non-finite value")
        rows.append(vals)
    return header, rows


def read_csv(source) -> Dataset:
    """Read a ``x_1..x_d,m,y`` file; errors name the offending line."""
    if isinstance(source, (str, Path)):
        name = str(source)
        with open(source, newline="") as fh:
            header, rows = _parse_rows(fh, name)
    else:
        name = getattr(source, "name", "<stream>")
        header, rows = _parse_rows(source, name)
    d = len(header) - 2
    if d < 1 or header != data_header(d):
        raise FormatError(f"{name}, line 1: header must be x_1,...,x_d,m,y; got {','.join(header)}")
    if not rows:
        raise FormatError(f"{name}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :d], arr[:, d], arr[:, d + 1])


def bundled_data_path() -> Path:
    """Path of the bundled three-input example dataset."""
    return Path(str(resources.files("accrue") / "data" / BUNDLED_DATA))


def prediction_header(d: int) -> list[str]:
    return [f"x_{i}" for i in range(1, d + 1)] + ["m", "median", "lo50", "hi50", "lo95", "hi95"]


def write_predictions(x: np.ndarray, m: np.ndarray, bounds: np.ndarray, target) -> None:
    """``bounds`` columns are (lo95, lo50, median, hi50, hi95)."""
    out = _open_out(target)
    try:
        out.write(",".join(prediction_header(x.shape[1])) + "\n")
        for xi, mi, (lo95, lo50, med, hi50, hi95) in zip(x, m, bounds):
            vals = [*xi, mi, med, lo50, hi50, lo95, hi95]
            out.write(",".join(fmt(v) for v in vals) + "\n")
    finally:
        if out is not target:
            out.close()


# --------------------------------------------------------------------------
# model file


def dumps_model(model: CalibrationModel) -> str:
    w = model.weights
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"family {model.family.value}",
        f"beta_star {fmt(model.beta_star)}",
        f"d_in {w.d_in}",
        f"hidden {w.hidden}",
        f"n_out {w.n_out}",
        f"leaky_slope {fmt(model.leaky_slope)}",
        f"seed {int(model.seed)}",
        f"test_loss {fmt(model.test_loss)}",
        "std_mean " + " ".join(fmt(v) for v in model.standardizer.mean),
        "std_scale " + " ".join(fmt(v) for v in model.standardizer.std),
    ]
    for name, arr in zip(("W1", "b1", "W2", "b2"), w.arrays()):
        lines.append(name + " " + " ".join(fmt(v) for v in arr.ravel()))
    return "\n".join(lines) + "\n"


def loads_model(text: str, name: str = "<model>") -> CalibrationModel:
    fields: dict[str, list[str]] = {}
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{name}: empty model file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MODEL_MAGIC:
        raise FormatError(f"{name}: not a model file")
    if head[1] != str(MODEL_VERSION):
        raise FormatError(f"{name}: unsupported model version {head[1]}")
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] in fields:
            raise FormatError(f"{name}, line {line_no}: duplicate field {parts[0]}")
        fields[parts[0]] = parts[1:]

    def one(key):
        try:
            (value,) = fields[key]
        except KeyError:
            raise FormatError(f"{name}: missing field {key}") from None
        except ValueError:
            raise FormatError(f"{name}: field {key} takes one value") from None
        return value

    def floats(key, count):
        if key not in fields:
            raise FormatError(f"{name}: missing field {key}")
        vals = np.array([float(v) for v in fields[key]])
        if vals.size != count:
            raise FormatError(f"{name}: field {key} has {vals.size} values, expected {count}")
        return vals

    try:
        d, h, k = int(one("d_in")), int(one("hidden")), int(one("n_out"))
        weights = NetworkWeights(
            floats("W1", h * d).reshape(h, d),
            floats("b1", h),
            floats("W2", k * h).reshape(k, h),
            floats("b2", k),
        )
        return CalibrationModel(
            family=DistributionFamily.parse(one("family")),
            beta_star=float(one("beta_star")),
            weights=weights,
            standardizer=Standardizer(floats("std_mean", d), floats("std_scale", d)),
            seed=int(one("seed")),
            test_loss=float(one("test_loss")),
            leaky_slope=float(one("leaky_slope")),
        )
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(f"{name}: {exc}") from exc


def write_model(model: CalibrationModel, path) -> None:
    Path(path).write_text(dumps_model(model))


def read_model(path) -> CalibrationModel:
    return loads_model(Path(path).read_text(), str(path))


def dataset_to_text(data: Dataset) -> str:
    buf = io.StringIO()
    write_csv(data, buf)
    return buf.getvalue()
