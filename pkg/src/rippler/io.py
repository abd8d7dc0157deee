"""Reading test data and writing chain output.

Input tables are CSV files with one header row:

``tests.csv``
    ``individual,week,result`` with ``result`` 0 or 1; a missing row means
    not tested.
``households.csv``
    ``individual,household``.
``covariates.csv``
    ``individual,age,sex`` with age in years and sex ``F`` or ``M``
    (coded 0 and 1 before centring).

Identifiers are arbitrary strings.  Individuals are numbered in the order
they appear in ``households.csv``; ``id_map.csv`` records that numbering.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rippler.errors import ConsistencyError, ParseError
from rippler.model import NOT_TESTED, Population

log = logging.getLogger(__name__)

TESTS, HOUSEHOLDS, COVARIATES, ID_MAP = "tests.csv", "households.csv", "covariates.csv", "id_map.csv"


@dataclass
class Dataset:
    """Ingested data.

    Attributes
    ----------
    population : Population
        Dense household ids and centred ``(age, sex)`` covariates.
    y : ndarray
        ``(T + 1, N)`` observation lattice.
    ids : list of str
        Original identifier of each column.
    raw_covariates : ndarray
        Uncentred age and female indicator.
    """

    population: Population
    y: np.ndarray
    ids: list
    raw_covariates: np.ndarray

    @property
    def T(self) -> int:
        return self.y.shape[0] - 1


def _read_table(path: Path, columns: tuple):
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise ParseError(path, 0, "file not found") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != columns:
            raise ParseError(path, 1, f"expected header {','.join(columns)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(columns):
                raise ParseError(path, reader.line_num, f"expected {len(columns)} fields")
            yield reader.line_num, [c.strip() for c in row]


def _parse(conv, value, path, line, what):
    try:
        return conv(value)
    except ValueError:
        raise ParseError(path, line, f"bad {what} {value!r}") from None


def load_dataset(data_dir, T: int | None = None) -> Dataset:
    """Read the three input tables from ``data_dir``.

    ``T`` defaults to the last tested week.  Week-0 results are moved to
    week 1 (nothing is tested at the initial step) unless week 1 is tested
    too.

    Raises
    ------
    ParseError
        Malformed file, with its line number.
    ConsistencyError
        Unknown or duplicated individuals, duplicate tests, weeks past ``T``.
    """
    data_dir = Path(data_dir)
    index: dict[str, int] = {}
    hh_raw = []
    path = data_dir / HOUSEHOLDS
    for line, (ind, hh) in _read_table(path, ("individual", "household")):
        if ind in index:
            raise ConsistencyError(f"individual {ind!r} listed twice in {HOUSEHOLDS}")
        index[ind] = len(index)
        hh_raw.append(hh)
    n = len(index)
    if n == 0:
        raise ConsistencyError(f"{HOUSEHOLDS} lists no individuals")

    raw = np.full((n, 2), np.nan)
    path = data_dir / COVARIATES
    for line, (ind, age, sex) in _read_table(path, ("individual", "age", "sex")):
        if ind not in index:
            raise ConsistencyError(f"individual {ind!r} in {COVARIATES} has no household")
        if sex not in ("F", "M"):
            raise ParseError(path, line, f"sex must be F or M, got {sex!r}")
        raw[index[ind]] = _parse(float, age, path, line, "age"), float(sex == "M")
    missing = np.flatnonzero(np.isnan(raw[:, 0]))
    if missing.size:
        ids = list(index)
        raise ConsistencyError(f"individual {ids[missing[0]]!r} has no covariates")

    tests = {}
    path = data_dir / TESTS
    for line, (ind, week, result) in _read_table(path, ("individual", "week", "result")):
        if ind not in index:
            raise ConsistencyError(f"individual {ind!r} in {TESTS} has no household")
        w = _parse(int, week, path, line, "week")
        r = _parse(int, result, path, line, "result")
        if w < 0 or r not in (0, 1):
            raise ParseError(path, line, "week must be >= 0 and result 0 or 1")
        key = (w, index[ind])
        if key in tests:
            raise ConsistencyError(f"duplicate test for {ind!r} in week {w}")
        tests[key] = r
    for (w, j) in [k for k in tests if k[0] == 0]:
        if (1, j) in tests:
            raise ConsistencyError(f"individual {list(index)[j]!r} tested in weeks 0 and 1")
        warnings.warn("week-0 results moved to week 1", stacklevel=2)
        tests[(1, j)] = tests.pop((0, j))

    last = max((w for w, _ in tests), default=1)
    T = last if T is None else int(T)
    if last > T:
        raise ConsistencyError(f"test in week {last} beyond T={T}")
    y = np.full((T + 1, n), NOT_TESTED, np.int8)
    for (w, j), r in tests.items():
        y[w, j] = r

    _, households = np.unique(np.array(hh_raw), return_inverse=True)
    cov = raw - raw.mean(axis=0)
    return Dataset(Population(households, cov), y, list(index), raw)


def write_dataset(out_dir, households_raw, raw_covariates, y, ids=None) -> None:
    """Write the three input tables for a lattice ``y`` (inverse of :func:`load_dataset`)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = len(households_raw)
    ids = [f"p{j:04d}" for j in range(n)] if ids is None else list(ids)
    with open(out_dir / HOUSEHOLDS, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("individual", "household"))
        w.writerows((ids[j], f"h{int(households_raw[j]):03d}") for j in range(n))
    with open(out_dir / COVARIATES, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("individual", "age", "sex"))
        w.writerows((ids[j], f"{raw_covariates[j, 0]:.17g}", "M" if raw_covariates[j, 1] else "F")
                    for j in range(n))
    tt, jj = np.nonzero(np.asarray(y) >= 0)
    order = np.lexsort((tt, jj))
    with open(out_dir / TESTS, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("individual", "week", "result"))
        w.writerows((ids[jj[i]], int(tt[i]), int(y[tt[i], jj[i]])) for i in order)


def write_id_map(path, ids) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("column", "individual"))
        w.writerows(enumerate(ids))


# ---------------------------------------------------------------------------
# lattices as run lengths


def encode_rle(x) -> str:
    """One line per individual: initial state then the lengths of its runs."""
    x = np.asarray(x)
    lines = []
    for col in x.T:
        cuts = np.flatnonzero(np.diff(col)) + 1
        runs = np.diff(np.concatenate(([0], cuts, [len(col)])))
        lines.append(" ".join([str(int(col[0]))] + [str(int(r)) for r in runs]))
    return "\n".join(lines) + "\n"


def decode_rle(text: str) -> np.ndarray:
    cols = []
    for line in text.strip().splitlines():
        vals = [int(v) for v in line.split()]
        state, runs = vals[0], vals[1:]
        col = np.concatenate([np.full(r, (state + i) % 2, np.int8) for i, r in enumerate(runs)])
        cols.append(col)
    return np.stack(cols, axis=1)


def write_lattice(path, x) -> None:
    Path(path).write_text(encode_rle(x))


def read_lattice(path) -> np.ndarray:
    return decode_rle(Path(path).read_text())


# ---------------------------------------------------------------------------
# chain output


def write_csv(path, header, rows, fmt="%.17g") -> None:
    """Write a numeric table; floats use a round-trip format."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                str(v) if isinstance(v, (int, np.integer)) else fmt % v for v in row) + "\n")


def read_csv(path):
    """Header and float array of a table written by :func:`write_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def write_json(path, obj) -> None:
    """Deterministic JSON (sorted keys) written atomically."""
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_json(path):
    return json.loads(Path(path).read_text())
