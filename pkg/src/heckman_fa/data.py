"""Dataset ingestion, standardization, bias injection, splitting and a
synthetic MNAR generator with known ground truth."""

from __future__ import annotations

import csv
import json
import math
import operator
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, FeatureMask, SealedOutcomes
from .errors import (
    DegenerateSplit,
    EmptySelection,
    FullSelectionWarning,
    NonFinite,
    ParseError,
    SchemaError,
    ZeroVariance,
)

SEALED_SUFFIX = ".sealed.json"
SYNTH_BLOCK = 1024

_COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@dataclass(frozen=True)
class BiasRule:
    """Rows satisfying ``column comparator threshold`` keep their outcome."""

    column: str
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.comparator not in _COMPARATORS:
            raise ValueError(f"comparator must be one of {sorted(_COMPARATORS)}")

    def select(self, values: np.ndarray) -> np.ndarray:
        return _COMPARATORS[self.comparator](values, self.threshold)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Ground-truth parameters of the selection and prediction equations.

    ``beta`` and ``gamma`` have length ``K + 1`` with the intercept first;
    ``beta`` must be zero wherever ``true_mask`` is off.
    """

    n: int
    K: int
    true_mask: FeatureMask
    beta: np.ndarray
    gamma: np.ndarray
    rho: float
    sigma: float = 1.0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        if beta.shape != (self.K + 1,) or gamma.shape != (self.K + 1,):
            raise ValueError("beta and gamma need K + 1 entries (intercept first)")
        if self.true_mask.K != self.K:
            raise ValueError("true_mask length differs from K")
        if np.any(beta[1:][~self.true_mask.assigned] != 0.0):
            raise ValueError("beta must be zero off the true mask")
        if not abs(self.rho) < 1.0:
            raise ValueError("|rho| must be < 1")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if self.n < 2:
            raise ValueError("n must be at least 2")


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Evaluation-only record of what the generator drew."""

    spec: SyntheticSpec
    seed: int
    y_full: np.ndarray
    u_p: np.ndarray
    u_s: np.ndarray

    def to_json(self) -> dict:
        sp = self.spec
        return {
            "evaluation_only": True,
            "seed": self.seed,
            "n": sp.n,
            "K": sp.K,
            "true_mask": [int(v) for v in sp.true_mask.assigned],
            "beta": sp.beta.tolist(),
            "gamma": sp.gamma.tolist(),
            "rho": sp.rho,
            "sigma": sp.sigma,
            "y_full": self.y_full.tolist(),
        }


@dataclass(frozen=True)
class Standardizer:
    """Per-feature location/scale, population-variance convention."""

    location: np.ndarray
    scale: np.ndarray
    feature_names: tuple[str, ...]

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.location) / self.scale

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.location

    def transform(self, data: Dataset) -> Dataset:
        if tuple(data.feature_names) != self.feature_names:
            raise SchemaError("feature names differ from the fitted standardizer")
        return _replace_features(data, self.apply(data.x_sel))


def _replace_features(data: Dataset, x: np.ndarray) -> Dataset:
    return Dataset(
        x_sel=x,
        y=data.y,
        s=data.s,
        feature_names=data.feature_names,
        row_order=data.row_order,
        outcome_name=data.outcome_name,
        sealed=data.sealed,
    )


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"cannot parse {what} value {text!r}", line=line) from None


def load_csv(
    path,
    outcome: str,
    features: Sequence[str] | None = None,
    indicator: str | None = None,
) -> Dataset:
    """Read a comma-delimited file with a header row.

    A blank outcome field marks a row as unobserved unless ``indicator``
    names a 0/1 column, which then decides observation on its own (rows
    with indicator 0 have their outcome moved to the sealed channel).
    Observed rows are moved to the front; ``row_order`` records the
    0-based data-row index each row came from.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        col = {name: i for i, name in enumerate(header)}
        if outcome not in col:
            raise SchemaError(f"outcome column {outcome!r} not in header")
        if indicator is not None and indicator not in col:
            raise SchemaError(f"indicator column {indicator!r} not in header")
        if features is None:
            features = [h for h in header if h not in (outcome, indicator)]
        for f in features:
            if f not in col:
                raise SchemaError(f"feature column {f!r} not in header")
        if len(features) < 2:
            raise SchemaError("need at least 2 selection-feature columns")
        fidx = [col[f] for f in features]

        xs, ys, ss = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(row)}", line=line
                )
            xrow = []
            for f, j in zip(features, fidx):
                cell = row[j].strip()
                if not cell:
                    raise ParseError(f"missing value for feature {f!r}", line=line)
                v = _parse_float(cell, f"feature {f!r}", line)
                if not math.isfinite(v):
                    raise NonFinite(f"non-finite value {cell!r} in {f!r}", row=line)
                xrow.append(v)
            cell = row[col[outcome]].strip()
            yv = math.nan if not cell else _parse_float(cell, "outcome", line)
            if cell and not math.isfinite(yv):
                raise NonFinite(f"non-finite outcome {cell!r}", row=line)
            if indicator is None:
                sv = not math.isnan(yv)
            else:
                flag = row[col[indicator]].strip()
                if flag not in ("0", "1"):
                    raise ParseError(f"indicator must be 0 or 1, got {flag!r}", line=line)
                sv = flag == "1"
                if sv and math.isnan(yv):
                    raise ParseError("indicator is 1 but outcome is blank", line=line)
            xs.append(xrow)
            ys.append(yv)
            ss.append(sv)
    if not xs:
        raise ParseError("no data rows", line=2)
    return Dataset.from_arrays(
        np.array(xs),
        np.array(ys),
        np.array(ss),
        feature_names=list(features),
        outcome_name=outcome,
        keep_hidden=indicator is not None,
    )


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def save_csv(data: Dataset, path, indicator: str | None = None) -> None:
    """Write ``data`` in the dialect :func:`load_csv` reads.

    Hidden outcomes are written blank; the sealed channel is never
    written here.
    """
    header = list(data.feature_names) + [data.outcome_name]
    if indicator:
        header.append(indicator)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.x_sel[i]] + [_fmt(data.y[i])]
            if indicator:
                row.append(str(int(data.s[i])))
            w.writerow(row)


def sealed_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(SEALED_SUFFIX)


def write_sealed(truth: SyntheticTruth, path) -> None:
    with Path(path).open("w") as fh:
        json.dump(truth.to_json(), fh, indent=1)
        fh.write("\n")


def standardize(data: Dataset) -> tuple[Dataset, Standardizer]:
    """Center and scale every feature over all ``n`` rows; outcome untouched."""
    x = data.x_sel
    loc = x.mean(axis=0)
    scale = x.std(axis=0)
    for k, name in enumerate(data.feature_names):
        if scale[k] <= 1e-12 * max(1.0, abs(loc[k])):
            raise ZeroVariance(name)
    st = Standardizer(loc, scale, tuple(data.feature_names))
    return st.transform(data), st


def inject_bias(data: Dataset, rule: BiasRule) -> Dataset:
    """Hide the outcome of every row not satisfying ``rule``.

    Hidden outcomes move to the sealed channel. Feature values are copied
    bit-for-bit; only row order, ``s`` and outcome visibility change.
    """
    if not data.fully_observed:
        raise ValueError("inject_bias needs a fully observed dataset")
    if rule.column not in data.feature_names:
        raise SchemaError(f"bias column {rule.column!r} not in dataset")
    keep = rule.select(data.x_sel[:, data.feature_names.index(rule.column)])
    if not keep.any():
        raise EmptySelection(f"rule {rule.column} {rule.comparator} {rule.threshold} selects no row")
    if keep.all():
        warnings.warn("bias rule hides no outcome", FullSelectionWarning, stacklevel=2)
        return data
    return Dataset.from_arrays(
        data.x_sel,
        data.y,
        keep,
        feature_names=data.feature_names,
        row_order=data.row_order,
        outcome_name=data.outcome_name,
        keep_hidden=True,
    )


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded shuffle; the first ``train_fraction`` of rows train, the rest test."""
    if not data.fully_observed:
        raise ValueError("split precedes bias injection; dataset must be fully observed")
    n = data.n
    n_train = int(round(n * spec.train_fraction))
    if n_train <= 0 or n_train >= n:
        raise DegenerateSplit(f"split of {n} rows at {spec.train_fraction} leaves a side empty")
    perm = np.random.default_rng(spec.seed).permutation(n)

    def take(idx):
        return Dataset(
            x_sel=data.x_sel[idx],
            y=data.y[idx],
            s=data.s[idx],
            feature_names=data.feature_names,
            row_order=data.row_order[idx],
            outcome_name=data.outcome_name,
        )

    return take(perm[:n_train]), take(perm[n_train:])


def _draw_block(spec: SyntheticSpec, seed: int, block: int, rows: int, stream: int = 0):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, block)))
    x = rng.standard_normal((rows, spec.K))
    e = rng.standard_normal((rows, 2))
    return x, e


def _generate(spec: SyntheticSpec, seed: int, stream: int = 0):
    xs, es = [], []
    for b, start in enumerate(range(0, spec.n, SYNTH_BLOCK)):
        x, e = _draw_block(spec, seed, b, min(SYNTH_BLOCK, spec.n - start), stream)
        xs.append(x)
        es.append(e)
    x = np.vstack(xs)
    e = np.vstack(es)
    # Cholesky factor of [[sigma^2, rho*sigma], [rho*sigma, 1]]
    chol = np.array([[spec.sigma, 0.0], [spec.rho, math.sqrt(1.0 - spec.rho**2)]])
    u = e @ chol.T
    u_p, u_s = u[:, 0], u[:, 1]
    s = spec.gamma[0] + x @ spec.gamma[1:] + u_s > 0.0
    y = spec.beta[0] + x @ spec.beta[1:] + u_p
    return x, y, s, u_p, u_s


def synthesize(spec: SyntheticSpec, seed: int) -> tuple[Dataset, SyntheticTruth]:
    """Draw a biased training set from the two-equation selection model.

    Rows are generated in fixed blocks of ``SYNTH_BLOCK``, each from its own
    seed sub-stream, so any block can be regenerated independently.
    """
    x, y, s, u_p, u_s = _generate(spec, seed)
    if not s.any():
        raise EmptySelection("generator selected no row")
    data = Dataset.from_arrays(x, y, s, keep_hidden=True)
    order = data.row_order
    truth = SyntheticTruth(spec=spec, seed=seed, y_full=y[order], u_p=u_p[order], u_s=u_s[order])
    return data, truth


def population(spec: SyntheticSpec, seed: int, n: int | None = None) -> Dataset:
    """A fully observed draw from the same model, for held-out test data.

    Uses a separate seed sub-stream, so it never repeats the rows of
    ``synthesize(spec, seed)``.
    """
    if n is not None:
        spec = SyntheticSpec(n, spec.K, spec.true_mask, spec.beta, spec.gamma, spec.rho, spec.sigma)
    x, y, _, _, _ = _generate(spec, seed, stream=1)
    return Dataset.from_arrays(x, y, np.ones(spec.n, dtype=bool))
