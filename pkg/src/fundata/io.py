"""Readers and writers for CSV, ts and multivariate manifest files.

CSV layout: one header row holding the sampling points, one row per
observation, comma separated, UTF-8. An optional leading index column is
skipped with ``index_col=0``. Missing cells hold ``na_token``.

Multivariate and two-dimensional data are stored as one CSV per component
plus a JSON manifest::

    {"format": "fundata-manifest", "version": 1,
     "components": [{"file": "x_0.csv", "kind": "dense", "n_dim": 1}, ...]}

For two-dimensional components the CSV columns are the row-major flattening
of the (M1, M2) grid and the manifest entry carries ``"argvals"`` with both
grids.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .core import MISSING, DenseFD, IrregularFD, MultivariateFD, to_dense, to_irregular

MANIFEST_FORMAT = "fundata-manifest"
MANIFEST_VERSION = 1


def format_float(x: float) -> str:
    return "%.17g" % x


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_rows(path, index_col: Optional[int]) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    width = len(header)
    for i, r in enumerate(body, start=2):
        if len(r) != width:
            raise ValueError(f"{path}: line {i} has {len(r)} cells, header has {width}")
    if index_col is not None:
        header = header[:index_col] + header[index_col + 1:]
        body = [r[:index_col] + r[index_col + 1:] for r in body]
    if not header:
        raise ValueError(f"{path}: no data columns")
    if not body:
        raise ValueError(f"{path}: no data rows")
    return header, body


def _parse_header(header: List[str], numeric: bool) -> np.ndarray:
    try:
        return np.array([float(h) for h in header])
    except ValueError:
        if numeric:
            raise ValueError("header must hold numeric sampling points") from None
    # factorize: first-appearance order
    codes = {}
    for h in header:
        codes.setdefault(h, len(codes))
    return np.array([codes[h] for h in header], dtype=float)


def _parse_cells(body: List[List[str]], na_token: str) -> np.ndarray:
    return np.array(
        [[MISSING if c == na_token else float(c) for c in r] for r in body], dtype=float
    )


def read_csv_dense(path, index_col: Optional[int] = None, na_token: str = "NA") -> DenseFD:
    """Read a dense CSV file; non-numeric headers are factorized to 0..M-1."""
    header, body = _read_rows(path, index_col)
    grid = _parse_header(header, numeric=False)
    return DenseFD({"input_dim_0": grid}, _parse_cells(body, na_token))


def read_csv_irregular(path, index_col: Optional[int] = None, na_token: str = "NA") -> IrregularFD:
    """Read a CSV file as irregular data, dropping ``na_token`` cells."""
    header, body = _read_rows(path, index_col)
    grid = _parse_header(header, numeric=True)
    values = _parse_cells(body, na_token)
    order = np.argsort(grid, kind="stable")
    return to_irregular(DenseFD({"input_dim_0": grid[order]}, values[:, order]))


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(r) for r in rows)
    return "\n".join(lines) + "\n"


def _dense_rows(values: np.ndarray, na_token: str):
    return [[na_token if np.isnan(x) else format_float(x) for x in row] for row in values]


def write_csv(fd, path, na_token: str = "NA") -> None:
    """Write one-dimensional dense or irregular data as CSV.

    Irregular data is written on the union grid with ``na_token`` fill.
    """
    if isinstance(fd, IrregularFD):
        fd = to_dense(fd)
    if not isinstance(fd, DenseFD):
        raise TypeError("write_csv expects DenseFD or IrregularFD")
    if fd.n_dim == 1:
        header = [format_float(x) for x in fd.grids[0]]
        values = fd.values
    else:
        m1, m2 = (g.size for g in fd.grids)
        header = [str(i) for i in range(m1 * m2)]
        values = fd.values.reshape(fd.n_obs, -1)
    atomic_write_text(path, _csv_text(header, _dense_rows(values, na_token)))


def write_array_csv(path, array: np.ndarray, header: Optional[List[str]] = None) -> None:
    """Write a plain 2-D numeric array (eigenvalues, scores, labels)."""
    array = np.atleast_2d(np.asarray(array))
    if header is None:
        header = [str(i) for i in range(array.shape[1])]
    if np.issubdtype(array.dtype, np.integer):
        rows = [[str(int(x)) for x in row] for row in array]
    else:
        rows = _dense_rows(array.astype(float), "NA")
    atomic_write_text(path, _csv_text(header, rows))


def read_array_csv(path) -> np.ndarray:
    header, body = _read_rows(path, None)
    return _parse_cells(body, "NA")


def write_manifest(mfd, path, na_token: str = "NA") -> List[Path]:
    """Write a multivariate (or 2-D) object as component CSVs plus manifest."""
    if not isinstance(mfd, MultivariateFD):
        mfd = MultivariateFD([mfd])
    path = Path(path)
    stem = path.stem
    entries, files = [], []
    for p, comp in enumerate(mfd):
        name = f"{stem}_{p}.csv"
        write_csv(comp, path.parent / name, na_token=na_token)
        entry = {
            "file": name,
            "kind": "irregular" if isinstance(comp, IrregularFD) else "dense",
            "n_dim": comp.n_dim,
        }
        if comp.n_dim == 2:
            dense = to_dense(comp) if isinstance(comp, IrregularFD) else comp
            entry["argvals"] = [[float(x) for x in g] for g in dense.grids]
        entries.append(entry)
        files.append(path.parent / name)
    doc = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION,
           "na_token": na_token, "components": entries}
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
    return files


def read_manifest(path) -> MultivariateFD:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path}: not a {MANIFEST_FORMAT} file")
    if doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported manifest version {doc.get('version')}")
    na_token = doc.get("na_token", "NA")
    comps = []
    for entry in doc["components"]:
        file = path.parent / entry["file"]
        if entry.get("n_dim", 1) == 2:
            header, body = _read_rows(file, None)
            s, t = (np.asarray(g, dtype=float) for g in entry["argvals"])
            values = _parse_cells(body, na_token)
            if values.shape[1] != s.size * t.size:
                raise ValueError(f"{file}: width does not match manifest grids")
            comp = DenseFD({"input_dim_0": s, "input_dim_1": t},
                           values.reshape(-1, s.size, t.size))
            if entry["kind"] == "irregular":
                comp = to_irregular(comp)
        elif entry["kind"] == "irregular":
            comp = read_csv_irregular(file, na_token=na_token)
        else:
            comp = read_csv_dense(file, na_token=na_token)
        comps.append(comp)
    return MultivariateFD(comps)


def read_ts(path):
    """Read a UEA/UCR ``.ts`` file of equal-length series.

    Returns
    -------
    data : DenseFD or MultivariateFD
        Values on the implicit grid 0..M-1; one component per dimension
        for multivariate problems.
    labels : list of str or None
        Class labels when ``@classLabel true``.
    """
    meta = {}
    class_label = None
    lines = []
    in_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if in_data:
                lines.append((lineno, line))
                continue
            if not line.startswith("@"):
                raise ValueError(f"{path}: line {lineno}: expected a directive")
            parts = line.split()
            key = parts[0].lower()
            if key == "@data":
                in_data = True
            elif key == "@classlabel":
                if len(parts) < 2 or parts[1].lower() not in ("true", "false"):
                    raise ValueError(f"{path}: line {lineno}: malformed @classLabel")
                class_label = parts[1].lower() == "true"
            elif len(parts) >= 2:
                meta[key[1:]] = " ".join(parts[1:])
            else:
                raise ValueError(f"{path}: line {lineno}: directive {parts[0]} has no value")
    if not in_data:
        raise ValueError(f"{path}: missing @data section")
    if class_label is None:
        raise ValueError(f"{path}: missing @classLabel directive")
    if meta.get("timestamps", "false").lower() == "true":
        raise ValueError(f"{path}: timestamped series are not supported")
    if not lines:
        raise ValueError(f"{path}: no series")

    series, labels = [], []
    for lineno, line in lines:
        fields = line.split(":")
        if class_label:
            labels.append(fields[-1].strip())
            fields = fields[:-1]
        dims = []
        for f in fields:
            cells = [c.strip() for c in f.split(",")]
            dims.append([MISSING if c in ("?", "NaN", "nan") else float(c) for c in cells])
        series.append(dims)
    n_dims = {len(s) for s in series}
    if len(n_dims) != 1:
        raise ValueError(f"{path}: series have differing numbers of dimensions")
    lengths = {len(d) for s in series for d in s}
    if len(lengths) != 1:
        raise ValueError(f"{path}: variable-length series are not supported")
    values = np.array(series, dtype=float)  # (N, D, M)
    grid = np.arange(values.shape[2], dtype=float)
    comps = [DenseFD({"input_dim_0": grid}, values[:, d, :]) for d in range(values.shape[1])]
    data = comps[0] if len(comps) == 1 else MultivariateFD(comps)
    return data, (labels if class_label else None)


def write_ts(fd, path, labels=None, problem_name: str = "fundata") -> None:
    """Write dense equal-length series in the ts format.

    The sampling grid itself is not stored (ts grids are implicit).
    """
    comps = list(fd) if isinstance(fd, MultivariateFD) else [fd]
    for c in comps:
        if not isinstance(c, DenseFD) or c.n_dim != 1:
            raise ValueError("ts output requires one-dimensional dense components")
    lengths = {c.grids[0].size for c in comps}
    n = comps[0].n_obs
    has_missing = any(c.has_missing for c in comps)
    header = [
        f"@problemName {problem_name}",
        "@timeStamps false",
        f"@missing {'true' if has_missing else 'false'}",
        f"@univariate {'true' if len(comps) == 1 else 'false'}",
    ]
    if len(comps) > 1:
        header.append(f"@dimensions {len(comps)}")
    header.append(f"@equalLength {'true' if len(lengths) == 1 else 'false'}")
    if len(lengths) == 1:
        header.append(f"@seriesLength {lengths.pop()}")
    if labels is not None:
        if len(labels) != n:
            raise ValueError("labels length does not match the number of observations")
        classes = sorted({str(x) for x in labels})
        header.append("@classLabel true " + " ".join(classes))
    else:
        header.append("@classLabel false")
    header.append("@data")
    body = []
    for i in range(n):
        dims = [
            ",".join("?" if np.isnan(x) else format_float(x) for x in c.values[i])
            for c in comps
        ]
        if labels is not None:
            dims.append(str(labels[i]))
        body.append(":".join(dims))
    atomic_write_text(path, "\n".join(header + body) + "\n")
