"""Study result rows and their CSV form.

The file starts with ``# key=value`` metadata lines (model, right-hand side,
quadrature orders, failures), followed by a header and one row per run.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields

import numpy as np

COLUMNS = (
    "study",
    "dim",
    "H",
    "h",
    "eps",
    "p",
    "ell",
    "seed",
    "rel_energy_err",
    "rel_l2_err",
    "eoc",
    "decay_slope",
    "wall_ms",
)
TIMING_COLUMNS = ("wall_ms",)


@dataclass
class Row:
    study: str
    dim: int
    H: float
    h: float
    eps: float
    p: int
    ell: str  # integer as text, or "sat"
    seed: int
    rel_energy_err: float | None = None
    rel_l2_err: float | None = None
    eoc: float | None = None
    decay_slope: float | None = None
    wall_ms: float | None = None

    @property
    def failed(self) -> bool:
        return self.rel_energy_err is None


@dataclass
class StudyResult:
    rows: list[Row] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def group(self, **match) -> list[Row]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]


_FLOAT = {"H", "h", "eps", "rel_energy_err", "rel_l2_err", "eoc", "decay_slope", "wall_ms"}
_INT = {"dim", "p", "seed"}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse(name: str, text: str):
    if text == "":
        return None
    if name in _FLOAT:
        return float(text)
    if name in _INT:
        return int(text)
    return text


def to_csv(result: StudyResult, include_timing: bool = True) -> str:
    buf = io.StringIO()
    for k, v in result.metadata.items():
        buf.write(f"# {k}={v}\n")
    cols = [c for c in COLUMNS if include_timing or c not in TIMING_COLUMNS]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in result.rows:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def from_csv(text: str) -> StudyResult:
    meta = {}
    lines = text.splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line.strip():
            body.append(line)
    reader = csv.DictReader(body)
    names = {f.name for f in fields(Row)}
    rows = []
    for rec in reader:
        rows.append(Row(**{k: _parse(k, v) for k, v in rec.items() if k in names}))
    return StudyResult(rows, meta)


def write_csv(result: StudyResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(result))


def read_csv(path) -> StudyResult:
    with open(path, newline="") as fh:
        return from_csv(fh.read())
