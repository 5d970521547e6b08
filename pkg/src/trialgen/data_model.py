"""Combined trial and target-population data: construction, CSV I/O, checks.

A combined sample stacks randomized-trial rows (with treatment and
outcome) and target-population rows (covariates only). Estimation code
works on the columnar arrays; :class:`SubjectRow` is the row-wise view
used for construction and I/O. Covariates never include an intercept
column; design matrices prepend the constant at use sites. Row order is
preserved end to end so seeded resampling is reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    MalformedNumberError,
    MissingColumnError,
    MissingTrialValueError,
    NonBinaryIndicatorError,
    OutcomeOnPopulationRowError,
    TreatmentOnPopulationRowError,
)

_NA_TOKENS = frozenset({"", "na", "nan", "n/a"})


@dataclass(frozen=True)
class SubjectRow:
    """One subject: trial indicator, optional treatment/outcome, covariates."""

    s: int
    t: Optional[int]
    y: Optional[float]
    x: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class CombinedSample:
    """Immutable columnar view of trial rows followed or interleaved with population rows.

    ``t`` and ``y`` are NaN exactly on population rows (``s == 0``) and
    finite on trial rows. Instances are safe to share across parallel
    workers; the arrays are marked read-only.
    """

    s: np.ndarray
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self) -> None:
        s = np.ascontiguousarray(self.s, dtype=np.int8)
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("covariate array must be 2-d (n rows x p covariates)")
        n = s.shape[0]
        if t.shape != (n,) or y.shape != (n,) or x.shape[0] != n:
            raise ValueError("s, t, y, x row counts differ")
        if x.shape[1] != len(self.covariate_names):
            raise ValueError("covariate_names length does not match covariate columns")
        if ((s != 0) & (s != 1)).any():
            raise NonBinaryIndicatorError("trial indicator outside {0, 1}")
        trial = s == 1
        t_trial = t[trial]
        if np.isnan(t_trial).any() or np.isnan(y[trial]).any():
            raise MissingTrialValueError("trial rows must carry treatment and outcome")
        if ((t_trial != 0.0) & (t_trial != 1.0)).any():
            raise NonBinaryIndicatorError("treatment indicator outside {0, 1}")
        if not np.isnan(t[~trial]).all():
            raise TreatmentOnPopulationRowError("population rows must not carry a treatment")
        if not np.isnan(y[~trial]).all():
            raise OutcomeOnPopulationRowError("population rows must not carry an outcome")
        for arr in (s, t, y, x):
            arr.flags.writeable = False
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @cached_property
    def trial_mask(self) -> np.ndarray:
        return self.s == 1

    @cached_property
    def pop_mask(self) -> np.ndarray:
        return self.s == 0

    @cached_property
    def n_trial(self) -> int:
        return int(self.trial_mask.sum())

    @property
    def n_pop(self) -> int:
        return self.n - self.n_trial

    @cached_property
    def trial_indices(self) -> np.ndarray:
        return np.flatnonzero(self.trial_mask)

    @cached_property
    def pop_indices(self) -> np.ndarray:
        return np.flatnonzero(self.pop_mask)

    def subset(self, indices: np.ndarray) -> "CombinedSample":
        """New sample from rows ``indices`` (with repetition allowed)."""
        idx = np.asarray(indices)
        return CombinedSample(
            s=self.s[idx], t=self.t[idx], y=self.y[idx], x=self.x[idx],
            covariate_names=self.covariate_names,
        )

    def rows(self) -> Iterator[SubjectRow]:
        for i in range(self.n):
            in_trial = self.s[i] == 1
            yield SubjectRow(
                s=int(self.s[i]),
                t=int(self.t[i]) if in_trial else None,
                y=float(self.y[i]) if in_trial else None,
                x=tuple(float(v) for v in self.x[i]),
            )

    @classmethod
    def from_rows(cls, rows: Sequence[SubjectRow],
                  covariate_names: Sequence[str]) -> "CombinedSample":
        n = len(rows)
        p = len(covariate_names)
        s = np.empty(n, dtype=np.int8)
        t = np.full(n, np.nan)
        y = np.full(n, np.nan)
        x = np.empty((n, p))
        for i, row in enumerate(rows):
            s[i] = row.s
            if row.t is not None:
                t[i] = row.t
            if row.y is not None:
                y[i] = row.y
            x[i] = row.x
        return cls(s=s, t=t, y=y, x=x, covariate_names=tuple(covariate_names))


def validate(sample: CombinedSample) -> list[str]:
    """Diagnostics for estimation readiness; empty list means usable.

    Pure: never mutates the sample, and repeated calls return the same list.
    """
    issues: list[str] = []
    if sample.n < 2:
        issues.append("combined sample has fewer than 2 subjects")
    if sample.n_trial < 2:
        issues.append("trial has fewer than 2 subjects")
    trial_t = sample.t[sample.trial_mask]
    if sample.n_trial > 0:
        if not (trial_t == 1).any():
            issues.append("empty treatment arm")
        if not (trial_t == 0).any():
            issues.append("empty control arm")
    if sample.n_pop < 1:
        issues.append("empty target population")
    if not np.isfinite(sample.x).all():
        issues.append("non-finite covariate values")
    if sample.n_trial > 0 and not np.isfinite(sample.y[sample.trial_mask]).all():
        issues.append("non-finite trial outcomes")
    return issues


def _parse_number(token: str, column: str, row: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise MalformedNumberError(
            f"could not parse {column}={token!r} as a number at row {row}"
        ) from None


def _is_na(token: str) -> bool:
    return token.strip().lower() in _NA_TOKENS


def load_csv(path, schema: Optional[Mapping[str, object]] = None) -> CombinedSample:
    """Read a combined sample from a comma-delimited UTF-8 file.

    The file needs a header row with columns for the trial indicator,
    treatment, outcome, and the covariates. ``schema`` remaps column
    names: keys ``"s"``, ``"t"``, ``"y"`` give single column names and
    ``"x"`` lists the covariate columns; by default the columns are named
    ``s``, ``t``, ``y`` and every other column is a covariate, in file
    order. Treatment and outcome cells must be blank (or NA) exactly on
    population rows. Row numbers in error messages are 1-based data rows.
    """
    schema = dict(schema or {})
    s_col = str(schema.get("s", "s"))
    t_col = str(schema.get("t", "t"))
    y_col = str(schema.get("y", "y"))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError("file is empty; header row required") from None
        header = [h.strip() for h in header]
        positions = {name: i for i, name in enumerate(header)}
        missing = [c for c in (s_col, t_col, y_col) if c not in positions]
        if missing:
            raise MissingColumnError(f"missing column(s): {', '.join(missing)}")
        if "x" in schema:
            x_cols = [str(c) for c in schema["x"]]  # type: ignore[union-attr]
            missing_x = [c for c in x_cols if c not in positions]
            if missing_x:
                raise MissingColumnError(f"missing covariate column(s): {', '.join(missing_x)}")
        else:
            x_cols = [c for c in header if c not in (s_col, t_col, y_col)]
        if not x_cols:
            raise MissingColumnError("no covariate columns found")

        rows: list[SubjectRow] = []
        for i, record in enumerate(reader, start=1):
            if not record or all(cell.strip() == "" for cell in record):
                continue
            if len(record) != len(header):
                raise MalformedNumberError(
                    f"row {i} has {len(record)} cells, expected {len(header)}"
                )
            s_val = _parse_number(record[positions[s_col]], s_col, i)
            if s_val not in (0.0, 1.0):
                raise NonBinaryIndicatorError(f"s={s_val!r} outside {{0, 1}} at row {i}")
            t_tok = record[positions[t_col]]
            y_tok = record[positions[y_col]]
            t_val: Optional[float] = None if _is_na(t_tok) else _parse_number(t_tok, t_col, i)
            y_val: Optional[float] = None if _is_na(y_tok) else _parse_number(y_tok, y_col, i)
            if s_val == 1.0:
                if t_val is None:
                    raise MissingTrialValueError(f"trial row {i} lacks a treatment value")
                if y_val is None:
                    raise MissingTrialValueError(f"trial row {i} lacks an outcome value")
                if t_val not in (0.0, 1.0):
                    raise NonBinaryIndicatorError(f"t={t_val!r} outside {{0, 1}} at row {i}")
            else:
                if t_val is not None:
                    raise TreatmentOnPopulationRowError(
                        f"population row {i} carries a treatment value"
                    )
                if y_val is not None:
                    raise OutcomeOnPopulationRowError(
                        f"population row {i} carries an outcome value; drop it or "
                        f"mark the row as trial"
                    )
            x_vals = tuple(
                _parse_number(record[positions[c]], c, i) for c in x_cols
            )
            rows.append(SubjectRow(
                s=int(s_val),
                t=None if t_val is None else int(t_val),
                y=y_val,
                x=x_vals,
            ))
    return CombinedSample.from_rows(rows, x_cols)


def write_csv(sample: CombinedSample, path) -> None:
    """Write a sample in the format :func:`load_csv` reads (exact round trip)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "t", "y", *sample.covariate_names])
        for row in sample.rows():
            writer.writerow([
                row.s,
                "" if row.t is None else row.t,
                "" if row.y is None else repr(row.y),
                *[repr(v) for v in row.x],
            ])


@dataclass(frozen=True)
class VarianceEntry:
    """Standard error and confidence interval from one variance method."""

    method: str
    se: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate with one entry per requested variance method."""

    estimator: str
    point: float
    entries: tuple[VarianceEntry, ...]
    metadata: Mapping[str, object] = field(default_factory=dict)
