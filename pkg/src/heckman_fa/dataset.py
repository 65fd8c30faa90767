"""Core containers: the biased training set and the feature mask."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AllZeroMask, SchemaError


class SealedOutcomes:
    """Outcomes hidden by the selection process, kept for evaluation only.

    Values are never serialized with the training data. Every call to
    :meth:`reveal` is counted so holdout hygiene can be asserted.
    """

    def __init__(self, values):
        self._values = np.array(values, dtype=float)
        self._values.setflags(write=False)
        self.reads = 0

    def __len__(self) -> int:
        return self._values.shape[0]

    def __repr__(self) -> str:
        return f"SealedOutcomes(<{len(self)} hidden>)"

    def reveal(self) -> np.ndarray:
        self.reads += 1
        return self._values.copy()


@dataclass(frozen=True, eq=False)
class FeatureMask:
    """Which selection features are also prediction features."""

    assigned: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assigned).astype(bool).ravel()
        a.setflags(write=False)
        object.__setattr__(self, "assigned", a)
        if not a.any():
            raise AllZeroMask("no selection feature is assigned")

    @classmethod
    def from_indices(cls, indices: Sequence[int], K: int) -> "FeatureMask":
        a = np.zeros(K, dtype=bool)
        a[list(indices)] = True
        return cls(a)

    @classmethod
    def full(cls, K: int) -> "FeatureMask":
        return cls(np.ones(K, dtype=bool))

    @property
    def K(self) -> int:
        return self.assigned.shape[0]

    @property
    def j_count(self) -> int:
        return int(self.assigned.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.assigned)

    def issuperset(self, other: "FeatureMask") -> bool:
        return bool(np.all(self.assigned | ~other.assigned))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMask):
            return NotImplemented
        return np.array_equal(self.assigned, other.assigned)

    def __hash__(self) -> int:
        return hash(self.assigned.tobytes())

    def __repr__(self) -> str:
        return f"FeatureMask({''.join('1' if v else '0' for v in self.assigned)})"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Selection features for all ``n`` rows, outcomes for the first ``m``.

    Observed rows come first; ``y`` holds NaN for the ``n - m`` rows whose
    outcome is missing. ``row_order[i]`` is the source row of row ``i``.
    """

    x_sel: np.ndarray
    y: np.ndarray
    s: np.ndarray
    feature_names: tuple[str, ...]
    row_order: np.ndarray
    outcome_name: str = "y"
    sealed: SealedOutcomes | None = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x_sel, dtype=float)
        y = np.asarray(self.y, dtype=float)
        s = np.asarray(self.s).astype(np.int8)
        if x.ndim != 2:
            raise SchemaError("x_sel must be a 2-D matrix")
        n, K = x.shape
        if K < 2:
            raise SchemaError(f"need at least 2 selection features, got {K}")
        if y.shape != (n,) or s.shape != (n,):
            raise SchemaError("x_sel, y and s disagree on the number of rows")
        m = int(s.sum())
        if m < 1:
            raise SchemaError("no observed outcome")
        if not (np.all(s[:m] == 1) and np.all(s[m:] == 0)):
            raise SchemaError("observed rows must come first")
        if not np.all(np.isfinite(x)):
            raise SchemaError("non-finite selection feature value")
        if not np.all(np.isfinite(y[:m])):
            raise SchemaError("non-finite observed outcome")
        if len(self.feature_names) != K:
            raise SchemaError("feature_names length differs from K")
        for arr in (x, y, s):
            arr.setflags(write=False)
        object.__setattr__(self, "x_sel", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "row_order", np.asarray(self.row_order, dtype=np.int64))

    @classmethod
    def from_arrays(
        cls,
        x_sel,
        y,
        s=None,
        feature_names: Sequence[str] | None = None,
        row_order=None,
        outcome_name: str = "y",
        keep_hidden: bool = False,
    ) -> "Dataset":
        """Build a dataset in any row order; observed rows are moved first.

        ``s`` defaults to "outcome is not NaN". With ``keep_hidden`` the
        outcomes of ``s == 0`` rows are moved into the sealed side channel
        instead of being discarded.
        """
        x = np.asarray(x_sel, dtype=float)
        y = np.asarray(y, dtype=float)
        s = ~np.isnan(y) if s is None else np.asarray(s).astype(bool)
        order = np.concatenate([np.flatnonzero(s), np.flatnonzero(~s)])
        src = np.arange(x.shape[0]) if row_order is None else np.asarray(row_order)
        m = int(s.sum())
        y_out = y[order].copy()
        sealed = SealedOutcomes(y_out[m:]) if keep_hidden else None
        y_out[m:] = np.nan
        if feature_names is None:
            feature_names = [f"x{k + 1}" for k in range(x.shape[1])]
        return cls(
            x_sel=x[order],
            y=y_out,
            s=s[order],
            feature_names=tuple(feature_names),
            row_order=src[order],
            outcome_name=outcome_name,
            sealed=sealed,
        )

    @property
    def n(self) -> int:
        return self.x_sel.shape[0]

    @property
    def K(self) -> int:
        return self.x_sel.shape[1]

    @property
    def m(self) -> int:
        return int(self.s.sum())

    @property
    def fully_observed(self) -> bool:
        return self.m == self.n

    @property
    def x_obs(self) -> np.ndarray:
        return self.x_sel[: self.m]

    @property
    def y_obs(self) -> np.ndarray:
        return self.y[: self.m]
