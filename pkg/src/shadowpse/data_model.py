"""Observed-data records, datasets, validation and CSV round-trip.

A unit is (R, Z, X_miss, X_obs, A, M_1, ..., M_K, Y) where X_miss is the
block of covariates subject to missingness (present iff R = 1), X_obs the
always-observed covariate block, Z the shadow variable, A a binary
treatment, and M_1, ..., M_K the ordered mediator blocks.

Datasets are stored column-wise as numpy arrays; missing X_miss entries
are NaN rows aligned with R = 0. The record view is materialised lazily.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptyResult,
    MissingCovariate,
    NonFiniteInput,
)

_MISSING_TOKENS = {"", "na", "nan"}


def _as_2d(arr: np.ndarray, n: int, what: str) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2 or out.shape[0] != n:
        raise DimensionMismatch(f"{what}: expected {n} rows, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class DatasetDims:
    """Coordinate counts for each block; m has one entry per mediator."""

    z: int
    x_miss: int
    x_obs: int
    m: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.m)

    @property
    def x(self) -> int:
        return self.x_miss + self.x_obs


@dataclass(frozen=True)
class ObservedRecord:
    """One unit. x_miss is None exactly when r = 0."""

    r: int
    z: np.ndarray
    x_miss: Optional[np.ndarray]
    x_obs: np.ndarray
    a: int
    m: tuple[np.ndarray, ...]
    y: float


def covariate_vector(record: ObservedRecord) -> np.ndarray:
    """Concatenated (x_miss, x_obs), the X fed to all bases.

    Raises MissingCovariate for records with r = 0.
    """
    if record.r == 0 or record.x_miss is None:
        raise MissingCovariate("covariate_vector on a record with missing x_miss")
    return np.concatenate([record.x_miss, record.x_obs])


def _default_columns(dims: DatasetDims) -> dict:
    def block(prefix: str, count: int, start: int = 1) -> list[str]:
        if count == 1 and prefix in ("z",):
            return [prefix]
        return [f"{prefix}{i}" for i in range(start, start + count)]

    x_miss = [f"x{i}" for i in range(1, dims.x_miss + 1)]
    x_obs = [f"x{i}" for i in range(dims.x_miss + 1, dims.x + 1)]
    m_cols = []
    for k, dm in enumerate(dims.m, start=1):
        if dm == 1:
            m_cols.append([f"m{k}"])
        else:
            m_cols.append([f"m{k}_{j}" for j in range(1, dm + 1)])
    return {
        "r": "r",
        "z": block("z", dims.z),
        "x_miss": x_miss,
        "x_obs": x_obs,
        "a": "a",
        "m": m_cols,
        "y": "y",
    }


@dataclass
class Dataset:
    """Column-wise dataset; the canonical storage for all estimators.

    x_miss rows are NaN wherever the covariate block is missing. For
    observed data that coincides with r = 0; simulation can also build
    full datasets that carry x_miss for every record regardless of r
    (those fail validate() and are meant for oracle/diagnostic use only).
    """

    r: np.ndarray
    z: np.ndarray
    x_miss: np.ndarray
    x_obs: np.ndarray
    a: np.ndarray
    m: tuple[np.ndarray, ...]
    y: np.ndarray
    dims: DatasetDims
    columns: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.r)
        self.r = np.asarray(self.r, dtype=int)
        self.a = np.asarray(self.a, dtype=int)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.shape != (n,) or self.a.shape != (n,):
            raise DimensionMismatch("r, a, y must be aligned 1-d arrays")
        self.z = _as_2d(self.z, n, "z")
        self.x_miss = _as_2d(self.x_miss, n, "x_miss")
        self.x_obs = _as_2d(self.x_obs, n, "x_obs")
        self.m = tuple(_as_2d(mk, n, f"m{k+1}") for k, mk in enumerate(self.m))
        got = DatasetDims(
            z=self.z.shape[1],
            x_miss=self.x_miss.shape[1],
            x_obs=self.x_obs.shape[1],
            m=tuple(mk.shape[1] for mk in self.m),
        )
        if got != self.dims:
            raise DimensionMismatch(f"declared dims {self.dims} but arrays give {got}")
        if not self.columns:
            self.columns = _default_columns(self.dims)

    # ---- basic views -------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def k(self) -> int:
        return self.dims.k

    @property
    def complete_mask(self) -> np.ndarray:
        return self.r == 1

    def covariates(self) -> np.ndarray:
        """(x_miss, x_obs) for all rows; NaN where missing."""
        return np.hstack([self.x_miss, self.x_obs])

    def records(self) -> list[ObservedRecord]:
        out = []
        for i in range(self.n):
            xm = None if self.r[i] == 0 else self.x_miss[i].copy()
            out.append(
                ObservedRecord(
                    r=int(self.r[i]),
                    z=self.z[i].copy(),
                    x_miss=xm,
                    x_obs=self.x_obs[i].copy(),
                    a=int(self.a[i]),
                    m=tuple(mk[i].copy() for mk in self.m),
                    y=float(self.y[i]),
                )
            )
        return out

    # ---- point matrices consumed by the sieve bases ------------------

    def conditioning_points(self) -> np.ndarray:
        """(z, x_obs, a, m_1..m_K, y) for every record; always observed."""
        cols = [self.z, self.x_obs, self.a[:, None].astype(float)]
        cols.extend(self.m)
        cols.append(self.y[:, None])
        return np.hstack(cols)

    def regressor_points(self, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """(x, a, m_1..m_K, y) over rows in mask (default: complete cases)."""
        if mask is None:
            mask = self.complete_mask
        cols = [self.x_miss[mask], self.x_obs[mask], self.a[mask, None].astype(float)]
        cols.extend(mk[mask] for mk in self.m)
        cols.append(self.y[mask, None])
        return np.hstack(cols)

    def mu_points(self, k: int, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """(x, m_1..m_{k-1}) over rows in mask (default: complete cases).

        k runs 1..K+1; k = 1 gives covariates only.
        """
        if not 1 <= k <= self.k + 1:
            raise DimensionMismatch(f"mu_points: k={k} outside 1..{self.k + 1}")
        if mask is None:
            mask = self.complete_mask
        cols = [self.x_miss[mask], self.x_obs[mask]]
        cols.extend(self.m[j][mask] for j in range(k - 1))
        return np.hstack(cols)

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(
            r=self.r[mask],
            z=self.z[mask],
            x_miss=self.x_miss[mask],
            x_obs=self.x_obs[mask],
            a=self.a[mask],
            m=tuple(mk[mask] for mk in self.m),
            y=self.y[mask],
            dims=self.dims,
            columns=self.columns,
        )

    def with_r_set_to_one(self) -> "Dataset":
        """Copy with r = 1 everywhere; requires x_miss present for all rows."""
        if np.isnan(self.x_miss).any():
            raise MissingCovariate("cannot set r=1 with NaN x_miss rows present")
        out = self.subset(np.ones(self.n, dtype=bool))
        out.r = np.ones(self.n, dtype=int)
        return out


def from_records(records: Sequence[ObservedRecord], dims: DatasetDims, columns: Optional[dict] = None) -> Dataset:
    """Assemble a Dataset from record objects."""
    if len(records) == 0:
        raise EmptyDataset("no records")
    n = len(records)
    xm = np.full((n, dims.x_miss), np.nan)
    for i, rec in enumerate(records):
        if rec.x_miss is not None:
            xm[i] = rec.x_miss
    return Dataset(
        r=np.array([rec.r for rec in records]),
        z=np.vstack([np.atleast_1d(rec.z) for rec in records]),
        x_miss=xm,
        x_obs=np.vstack([np.atleast_1d(rec.x_obs) for rec in records]),
        a=np.array([rec.a for rec in records]),
        m=tuple(
            np.vstack([np.atleast_1d(rec.m[j]) for rec in records])
            for j in range(dims.k)
        ),
        y=np.array([rec.y for rec in records]),
        dims=dims,
        columns=columns or {},
    )


@dataclass
class ValidationReport:
    n: int
    n_complete: int
    miss_frac: float
    arm_counts: dict
    arm_complete_counts: dict
    flags: list[str]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_complete": self.n_complete,
            "miss_frac": self.miss_frac,
            "arm_counts": {str(k): v for k, v in self.arm_counts.items()},
            "arm_complete_counts": {str(k): v for k, v in self.arm_complete_counts.items()},
            "flags": list(self.flags),
        }


def validate(ds: Dataset) -> ValidationReport:
    """Structural checks (raise) plus statistical red flags (reported).

    Raises DimensionMismatch when a record breaks the missingness
    pattern (x_miss present with r = 0 or absent with r = 1), when r or a
    leave {0,1}; NonFiniteInput when an always-observed field is not
    finite; EmptyDataset on zero records.
    """
    if ds.n == 0:
        raise EmptyDataset("dataset has no records")
    if not np.isin(ds.r, (0, 1)).all():
        raise DimensionMismatch("r must be 0/1")
    if not np.isin(ds.a, (0, 1)).all():
        raise DimensionMismatch("a must be 0/1")
    nan_rows = np.isnan(ds.x_miss).any(axis=1)
    partial = nan_rows & ~np.isnan(ds.x_miss).all(axis=1)
    if partial.any():
        raise DimensionMismatch("x_miss rows must be entirely present or entirely missing")
    present_when_missing = (ds.r == 0) & ~nan_rows
    if present_when_missing.any():
        i = int(np.argmax(present_when_missing))
        raise DimensionMismatch(f"record {i}: x_miss present but r=0")
    absent_when_complete = (ds.r == 1) & nan_rows
    if absent_when_complete.any():
        i = int(np.argmax(absent_when_complete))
        raise DimensionMismatch(f"record {i}: r=1 but x_miss missing")
    always_observed = [ds.z, ds.x_obs, ds.y[:, None], *ds.m]
    for block in always_observed:
        if not np.isfinite(block).all():
            raise NonFiniteInput("non-finite value in an always-observed column")
    cc = ds.complete_mask
    if not np.isfinite(ds.x_miss[cc]).all():
        raise NonFiniteInput("non-finite x_miss value on a complete case")

    n_complete = int(cc.sum())
    arm_counts = {a: int((ds.a == a).sum()) for a in (0, 1)}
    arm_cc = {a: int(((ds.a == a) & cc).sum()) for a in (0, 1)}
    flags = []
    for a in (0, 1):
        if arm_counts[a] == 0:
            flags.append(f"empty_arm:{a}")
        elif arm_cc[a] == 0:
            flags.append(f"empty_complete_arm:{a}")
    if n_complete == 0:
        flags.append("all_missing")
    elif n_complete == ds.n:
        flags.append("no_missing")
    return ValidationReport(
        n=ds.n,
        n_complete=n_complete,
        miss_frac=1.0 - n_complete / ds.n,
        arm_counts=arm_counts,
        arm_complete_counts=arm_cc,
        flags=flags,
    )


def complete_cases(ds: Dataset) -> Dataset:
    """Subset with r = 1. Raises EmptyResult when there are none."""
    mask = ds.complete_mask
    if not mask.any():
        raise EmptyResult("no complete cases")
    return ds.subset(mask)


# ---- CSV + descriptor round trip -------------------------------------


def _fmt(x: float) -> str:
    # shortest representation that round-trips the double exactly
    return repr(float(x))


def header_order(columns: dict) -> list[str]:
    cols = [columns["r"]]
    cols.extend(columns["z"])
    cols.extend(columns["x_miss"])
    cols.extend(columns["x_obs"])
    cols.append(columns["a"])
    for group in columns["m"]:
        cols.extend(group)
    cols.append(columns["y"])
    return cols


def write_descriptor(ds: Dataset, path: str) -> None:
    doc = {"k": ds.k, "columns": ds.columns}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(ds: Dataset, path: str) -> None:
    """Write records in the canonical column order.

    Missing x_miss cells are written empty. Floats use the shortest
    round-trip representation, so read_csv(write_csv(ds)) is
    value-identical.
    """
    order = header_order(ds.columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(order)
        for i in range(ds.n):
            row = [str(int(ds.r[i]))]
            row.extend(_fmt(v) for v in ds.z[i])
            if np.isnan(ds.x_miss[i]).all():
                row.extend("" for _ in range(ds.dims.x_miss))
            else:
                row.extend(_fmt(v) for v in ds.x_miss[i])
            row.extend(_fmt(v) for v in ds.x_obs[i])
            row.append(str(int(ds.a[i])))
            for mk in ds.m:
                row.extend(_fmt(v) for v in mk[i])
            row.append(_fmt(ds.y[i]))
            writer.writerow(row)


def _parse_cell(token: str, col: str, allow_missing: bool) -> float:
    tok = token.strip()
    if tok.lower() in _MISSING_TOKENS:
        if allow_missing:
            return np.nan
        raise NonFiniteInput(f"missing value in always-observed column {col!r}")
    try:
        return float(tok)
    except ValueError as exc:
        raise NonFiniteInput(f"cannot parse {token!r} in column {col!r}") from exc


def read_descriptor(path: str) -> tuple[int, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        k = int(doc["k"])
        columns = doc["columns"]
        for key in ("r", "z", "x_miss", "x_obs", "a", "m", "y"):
            columns[key]
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionMismatch(f"descriptor {path}: missing or malformed field ({exc})")
    if len(columns["m"]) != k:
        raise DimensionMismatch(f"descriptor declares k={k} but {len(columns['m'])} mediator groups")
    return k, columns


def read_csv(data_path: str, descriptor_path: str) -> Dataset:
    """Load a dataset given its sidecar descriptor.

    Column order in the file is free; columns are matched by name.
    """
    k, columns = read_descriptor(descriptor_path)
    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{data_path} is empty")
        header = [h.strip() for h in header]
        idx = {name: i for i, name in enumerate(header)}
        for name in header_order(columns):
            if name not in idx:
                raise DimensionMismatch(f"column {name!r} declared but absent from {data_path}")
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyDataset(f"{data_path} has a header but no records")

    dims = DatasetDims(
        z=len(columns["z"]),
        x_miss=len(columns["x_miss"]),
        x_obs=len(columns["x_obs"]),
        m=tuple(len(g) for g in columns["m"]),
    )
    n = len(rows)
    r = np.zeros(n, dtype=int)
    a = np.zeros(n, dtype=int)
    y = np.zeros(n)
    z = np.zeros((n, dims.z))
    xm = np.zeros((n, dims.x_miss))
    xo = np.zeros((n, dims.x_obs))
    m = tuple(np.zeros((n, dm)) for dm in dims.m)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DimensionMismatch(f"row {i + 2}: {len(row)} cells for {len(header)} columns")
        r[i] = int(_parse_cell(row[idx[columns["r"]]], "r", False))
        a[i] = int(_parse_cell(row[idx[columns["a"]]], "a", False))
        y[i] = _parse_cell(row[idx[columns["y"]]], "y", False)
        for j, col in enumerate(columns["z"]):
            z[i, j] = _parse_cell(row[idx[col]], col, False)
        for j, col in enumerate(columns["x_miss"]):
            xm[i, j] = _parse_cell(row[idx[col]], col, True)
        for j, col in enumerate(columns["x_obs"]):
            xo[i, j] = _parse_cell(row[idx[col]], col, False)
        for kk, group in enumerate(columns["m"]):
            for j, col in enumerate(group):
                m[kk][i, j] = _parse_cell(row[idx[col]], col, False)
    return Dataset(r=r, z=z, x_miss=xm, x_obs=xo, a=a, m=m, y=y, dims=dims, columns=columns)
