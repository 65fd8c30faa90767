"""Metrics, the naive OLS baseline, paired t-tests and benchmark tables."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import AssignmentProbabilities, TrainTrace, train_assignment
from .config import RunConfig
from .dataset import Dataset, FeatureMask
from .errors import NoCandidateInRange
from .extraction import ExtractionResult, extract_fa, extract_fa_star, extract_heckman_c
from .selection import (
    HeckmanFit,
    adjusted_r2,
    fit_heckman,
    fit_probit,
    lstsq_qr,
    r_squared,
)


class Holdout:
    """Fully observed test rows whose outcomes are read through a counter."""

    def __init__(self, data: Dataset):
        if not data.fully_observed:
            raise ValueError("held-out data must be fully observed")
        self._data = data
        self.reads = 0

    @property
    def x(self) -> np.ndarray:
        return self._data.x_sel

    @property
    def n(self) -> int:
        return self._data.n

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self._data.feature_names

    def outcomes(self) -> np.ndarray:
        self.reads += 1
        return np.array(self._data.y)


@dataclass(frozen=True, eq=False)
class OLSFit:
    coef: np.ndarray
    mask: FeatureMask
    r2: float
    r2_adj: float
    train_mse: float

    def predict(self, x) -> np.ndarray:
        return self.coef[0] + np.asarray(x, dtype=float) @ self.coef[1:]


def fit_naive_ols(data: Dataset, mask: FeatureMask) -> OLSFit:
    """OLS of the observed outcome on an intercept plus the masked features."""
    x = data.x_obs[:, mask.indices]
    design = np.column_stack([np.ones(data.m), x])
    coef_c, _ = lstsq_qr(design, data.y_obs)
    coef = np.zeros(data.K + 1)
    coef[0] = coef_c[0]
    coef[1 + mask.indices] = coef_c[1:]
    fitted = design @ coef_c
    r2 = r_squared(data.y_obs, fitted)
    return OLSFit(
        coef=coef,
        mask=mask,
        r2=r2,
        r2_adj=adjusted_r2(r2, data.m, mask.j_count),
        train_mse=float(np.mean((data.y_obs - fitted) ** 2)),
    )


def test_mse(model, holdout: Holdout) -> float:
    """Mean squared error of ``model.predict`` over every held-out row."""
    y = holdout.outcomes()
    return float(np.mean((y - model.predict(holdout.x)) ** 2))


test_mse.__test__ = False  # not a pytest test


@dataclass(frozen=True, eq=False)
class EvalReport:
    """One method's outcome. ``train_mse_imr`` includes the IMR term;
    ``train_mse`` is the population-form prediction on observed rows."""

    method_tag: str
    train_mse: float
    train_mse_imr: float | None
    test_mse: float | None
    rho_hat: float | None
    r2_adj: float
    mask: FeatureMask
    runtime_seconds: float
    seed: int
    feature_names: tuple[str, ...] = ()

    def features(self) -> list[str]:
        names = self.feature_names or tuple(f"x{k + 1}" for k in range(self.mask.K))
        return [names[k] for k in self.mask.indices]

    def as_row(self, with_runtime: bool = True) -> dict:
        row = {
            "method": self.method_tag,
            "J": self.mask.j_count,
            "features": " ".join(self.features()),
            "rho_hat": _num(self.rho_hat),
            "r2_adj": _num(self.r2_adj),
            "train_mse": _num(self.train_mse),
            "train_mse_imr": _num(self.train_mse_imr),
            "test_mse": _num(self.test_mse),
            "seed": str(self.seed),
        }
        if with_runtime:
            row["runtime_s"] = f"{self.runtime_seconds:.3f}"
        return row


def _num(v) -> str:
    return "NA" if v is None else f"{v:.6g}"


def make_report(
    tag: str,
    model,
    train: Dataset,
    holdout: Holdout | None,
    seed: int,
    runtime: float,
) -> EvalReport:
    pred = model.predict(train.x_obs)
    train_mse = float(np.mean((train.y_obs - pred) ** 2))
    is_heckman = isinstance(model, HeckmanFit)
    return EvalReport(
        method_tag=tag,
        train_mse=train_mse,
        train_mse_imr=model.train_mse if is_heckman else None,
        test_mse=None if holdout is None else test_mse(model, holdout),
        rho_hat=model.rho_hat if is_heckman else None,
        r2_adj=model.r2_adj,
        mask=model.mask,
        runtime_seconds=max(runtime, 0.0),
        seed=seed,
        feature_names=train.feature_names,
    )


@dataclass(eq=False)
class MethodRun:
    report: EvalReport
    model: object
    pi_hat: AssignmentProbabilities | None = None
    trace: TrainTrace | None = None
    extraction: ExtractionResult | None = None
    naive_report: EvalReport | None = None


def run_method(
    train: Dataset,
    config: RunConfig,
    holdout: Holdout | None = None,
    method: str | None = None,
    probit=None,
) -> MethodRun:
    """Fit one method end to end and evaluate it.

    FA / FA_STAR: train the assignment, extract a mask, refit. HECKMAN_C:
    correlation ranking. NAIVE: OLS on all features. Methods that extract
    also report naive OLS on the extracted mask.
    """
    method = method or config.method
    t0 = time.perf_counter()
    if method == "NAIVE":
        model = fit_naive_ols(train, FeatureMask.full(train.K))
        return MethodRun(make_report("NAIVE", model, train, holdout, config.seed,
                                     time.perf_counter() - t0), model)
    if probit is None:
        probit = fit_probit(train)
    pi_hat = trace = None
    if method in ("FA", "FA_STAR"):
        pi_hat, trace = train_assignment(train, config, probit)
        if method == "FA":
            ext = extract_fa(train, pi_hat, config, probit)
        else:
            ext = extract_fa_star(train, pi_hat, config, probit)
    elif method == "HECKMAN_C":
        ext = extract_heckman_c(train, config, probit)
    else:
        raise ValueError(f"unknown method {method!r}")
    model = fit_heckman(train, ext.mask, probit)
    runtime = time.perf_counter() - t0
    report = make_report(method, model, train, holdout, config.seed, runtime)
    naive = make_report(f"NAIVE@{method}", fit_naive_ols(train, ext.mask), train,
                        holdout, config.seed, 0.0)
    return MethodRun(report, model, pi_hat, trace, ext, naive)


# -- paired t-test -----------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` by Lentz's continued fraction."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: int) -> float:
    t2 = t * t
    if t2 < df:
        # df / (df + t^2) rounds to 1 for tiny t; use the complement
        return 1.0 - betainc_reg(0.5, df / 2.0, t2 / (df + t2))
    return betainc_reg(df / 2.0, 0.5, df / (df + t2))


@dataclass(frozen=True)
class PairedTestResult:
    mean_diff: float
    std_diff: float
    t_statistic: float | None
    p_value: float | None
    pairs: int
    zero_variance: bool = False


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> PairedTestResult:
    """Paired t-test on ``a - b`` with a two-sided p-value (``pairs - 1`` df).

    Identical differences leave t undefined; ``zero_variance`` flags it.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length vectors with at least 2 pairs")
    d = a - b
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return PairedTestResult(mean, 0.0, None, None, n, True)
    t = mean / (sd / math.sqrt(n))
    return PairedTestResult(mean, sd, t, t_two_sided_p(t, n - 1), n)


# -- benchmark ---------------------------------------------------------------


@dataclass(eq=False)
class BenchmarkResult:
    reports: list[EvalReport] = field(default_factory=list)
    grid_c_T: list[dict] = field(default_factory=list)
    grid_T_B: list[dict] = field(default_factory=list)
    ttests: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def methods_csv(self, with_runtime: bool = True) -> str:
        return _csv([r.as_row(with_runtime) for r in self.reports])

    def render(self, with_runtime: bool = True) -> str:
        parts = ["Methods", _aligned([r.as_row(with_runtime) for r in self.reports])]
        if self.failures:
            parts += ["", "Failures", _aligned(self.failures)]
        if self.ttests:
            parts += ["", "Paired t-tests (test MSE)", _aligned(self.ttests)]
        if self.grid_c_T:
            parts += ["", "Sensitivity: test MSE over (c, T)", _aligned(self.grid_c_T)]
        if self.grid_T_B:
            parts += ["", "Sensitivity: runtime and test MSE over (T, B)", _aligned(self.grid_T_B)]
        return "\n".join(parts) + "\n"


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _aligned(rows: list[dict]) -> str:
    if not rows:
        return "(none)"
    cols = list(rows[0])
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    lines.append("  ".join("-" * widths[c] for c in cols))
    lines += ["  ".join(str(r[c]).ljust(widths[c]) for c in cols) for r in rows]
    return "\n".join(lines)


def _timed_fa(train, holdout, config):
    t0 = time.perf_counter()
    try:
        run = run_method(train, config, holdout, "FA")
    except NoCandidateInRange:
        return None, time.perf_counter() - t0
    return run.report.test_mse, time.perf_counter() - t0


def benchmark(
    train: Dataset,
    holdout: Holdout | None,
    config: RunConfig,
    methods: Sequence[str] = ("NAIVE", "FA", "FA_STAR", "HECKMAN_C"),
    grid_c: Sequence[float] = (),
    grid_T: Sequence[int] = (),
    grid_B: Sequence[int] = (),
    repeats: int = 1,
    with_runtime: bool = True,
) -> BenchmarkResult:
    """Run every method under one seed regime plus optional sensitivity grids.

    With ``repeats >= 2`` each extracting method is rerun on seeds
    ``seed .. seed + repeats - 1`` and paired t-tests against naive OLS on
    the same extracted mask are reported.
    """
    if not methods:
        raise ValueError("empty method list")
    res = BenchmarkResult()
    for method in methods:
        for r in range(repeats):
            cfg = config.with_(seed=config.seed + r)
            try:
                run = run_method(train, cfg, holdout, method)
                res.reports.append(run.report)
                if run.naive_report is not None:
                    res.reports.append(run.naive_report)
            except NoCandidateInRange as exc:
                res.failures.append({"method": method, "seed": str(cfg.seed),
                                     "error": "NoCandidateInRange", **{k: _num(v) for k, v in exc.rho_summary.items()}})
            if method == "NAIVE":
                break
    if repeats >= 2 and holdout is not None:
        for method in methods:
            own = [r for r in res.reports if r.method_tag == method]
            base = [r for r in res.reports if r.method_tag == f"NAIVE@{method}"]
            if len(own) >= 2 and len(own) == len(base):
                tt = paired_t_test([r.test_mse for r in own], [r.test_mse for r in base])
                res.ttests.append({
                    "comparison": f"{method} vs NAIVE (same mask)",
                    "pairs": str(tt.pairs),
                    "mean_diff": _num(tt.mean_diff),
                    "std_diff": _num(tt.std_diff),
                    "t": _num(tt.t_statistic),
                    "p_value": _num(tt.p_value),
                })
    for c in grid_c:
        row = {"c": f"{c:g}"}
        for T in grid_T:
            mse, _ = _timed_fa(train, holdout, config.with_(c=c, T=T))
            row[f"T={T}"] = _num(mse)
        res.grid_c_T.append(row)
    if grid_B:
        for B in grid_B:
            row = {"B": str(B)}
            for T in grid_T or (config.T,):
                mse, secs = _timed_fa(train, holdout, config.with_(T=T, B=B))
                if with_runtime:
                    row[f"time T={T}"] = f"{secs:.3f}"
                row[f"mse T={T}"] = _num(mse)
            res.grid_T_B.append(row)
    return res
