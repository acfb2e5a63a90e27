"""CSV ingestion, result serialization and run configuration.

Input CSV: a header row, a column ``y``, regressor columns ``x1..xd`` and
optional instrument columns ``z1..zm``.  Without z columns the regression
is treated as exogenous (Z = X).

Output JSON always carries ``schema_version``; floats are written with 17
significant digits so a re-parse reproduces them bit for bit.  Non-finite
floats become ``null``.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict, dataclass, fields, is_dataclass

import numpy as np

from .errors import ParseError, SchemaError
from .instruments import make_dataset

SCHEMA_VERSION = 1
H_MODES = ("plugin", "fixed", "tiny", "huge")
COMMANDS = ("fit", "test", "bandwidth", "simulate", "power", "power-curve")

_XCOL = re.compile(r"^x(\d+)$")
_ZCOL = re.compile(r"^z(\d+)$")


def _numbered(header, pattern):
    cols = [(int(m.group(1)), i) for i, name in enumerate(header) if (m := pattern.match(name))]
    return [i for _, i in sorted(cols)]


def read_table(path):
    """Header and float matrix of a CSV file.

    Raises ParseError naming the data row (1-based, header excluded) and
    the file line of the first bad cell.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        rows = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {row_no} (line {row_no + 1}) has {len(row)} "
                                 f"cells, header has {len(header)}", line=row_no + 1)
            vals = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: row {row_no} (line {row_no + 1}), column "
                                     f"{name!r}: cannot parse {cell!r}", line=row_no + 1) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: row {row_no} (line {row_no + 1}), column "
                                     f"{name!r}: non-finite value {cell!r}", line=row_no + 1)
                vals.append(v)
            rows.append(vals)
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def load_dataset(path, q: float = 0.5, add_intercept: bool = False,
                 sieve_degree: int | None = None, project: bool = True):
    """Read a Dataset from CSV.

    ``add_intercept`` prepends a column of ones to X and, unless it already
    has a constant column, to Z.
    """
    header, table = read_table(path)
    if "y" not in header:
        raise SchemaError(f"{path}: missing column 'y'")
    xi = _numbered(header, _XCOL)
    if not xi:
        raise SchemaError(f"{path}: no regressor columns x1..xd")
    zi = _numbered(header, _ZCOL)
    y = table[:, header.index("y")]
    x = table[:, xi]
    z = table[:, zi] if zi else None
    if add_intercept:
        ones = np.ones((x.shape[0], 1))
        x = np.hstack([ones, x])
        if z is not None and not np.any(np.ptp(z, axis=0) == 0):
            z = np.hstack([ones, z])
    return make_dataset(y, x, z, q=q, sieve_degree=sieve_degree, project=project)


def read_vectors(path):
    """Rows of a headerless or headed numeric CSV (used for direction sets)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    out = []
    for i, row in enumerate(rows, start=1):
        try:
            out.append([float(c) for c in row])
        except ValueError:
            if i == 1:
                continue     # header
            raise ParseError(f"{path}: line {i} is not numeric", line=i) from None
    return np.array(out, dtype=float)


# --------------------------------------------------------------------------
# serialization

def fmt_float(x) -> str:
    return format(float(x), ".17g")


def _plain(obj):
    """Convert results to JSON-ready builtins (numpy and dataclasses included)."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _dump(obj, indent=0):
    pad, inner = " " * indent, " " * (indent + 2)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_dump(v, indent + 2)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _dump(v, indent + 2) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    return json.dumps(obj)


def to_json(result, **extra) -> str:
    body = {"schema_version": SCHEMA_VERSION}
    body.update(_plain(extra))
    payload = _plain(result)
    if isinstance(payload, dict):
        body.update(payload)
    else:
        body["result"] = payload
    return _dump(body) + "\n"


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt_float(v) if math.isfinite(v) else "nan")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


SUMMARY_COLUMNS = ("estimator", "coef", "reps_ok", "failures", "mse", "robust_mse",
                   "median_bias", "mean_bias")


def mc_summary_csv(result) -> str:
    rows = [[r[c] for c in SUMMARY_COLUMNS] for r in result.summary_rows()]
    return csv_text(SUMMARY_COLUMNS, rows)


def mc_draws_csv(result) -> str:
    rows = []
    for lab in result.estimator_labels:
        for rep, beta in zip(result.replications[lab], result.draws[lab]):
            for k, b in enumerate(beta):
                rows.append([int(rep), lab, k, float(b), float(result.truth[k])])
    rows.sort(key=lambda r: (r[0], result.estimator_labels.index(r[1]), r[2]))
    return csv_text(("replication", "estimator", "coef", "estimate", "truth"), rows)


def emit_results(text: str, path=None, stream=None):
    """Write serialized output to ``path`` or, if None, to ``stream``."""
    if path is None or path == "-":
        stream.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    command: str
    data_path: str | None = None
    q: float = 0.5
    kernel: str = "horowitz4"
    h_mode: str = "plugin"
    h_value: float | None = None
    alpha: float = 0.05
    seed: int = 42
    parallelism: int = 1
    output: str | None = None
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.h_mode not in H_MODES:
            raise ValueError(f"h mode must be one of {H_MODES}")
        if self.h_mode == "fixed" and not (self.h_value and self.h_value > 0):
            raise ValueError("fixed bandwidth must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.format not in ("json", "csv"):
            raise ValueError("format must be json or csv")

    def as_dict(self):
        return asdict(self)


def parse_h(value):
    """Map a ``--h`` argument to (mode, value)."""
    if value is None:
        return "plugin", None
    v = str(value).strip().lower()
    if v in ("plugin", "tiny", "huge"):
        return v, None
    try:
        h = float(v)
    except ValueError:
        raise ValueError(f"--h must be plugin, tiny, huge or a positive number, not {value!r}") from None
    if not h > 0 or not math.isfinite(h):
        raise ValueError("bandwidth must be positive")
    return "fixed", h


def load_config(path) -> dict:
    """Read a JSON config file; keys mirror the long flag names."""
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}
