"""Pick the final prediction-feature mask.

All three strategies fit the two-step model on candidate masks, keep the
candidates whose estimated noise correlation lies in the user range, and
return the one with the largest adjusted R^2 (first one wins ties).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assignment import (
    STREAM_EXTRACT,
    AssignmentProbabilities,
    draw_gumbel,
    feature_assign,
    seed_stream,
)
from .config import RunConfig
from .dataset import Dataset, FeatureMask
from .errors import AllZeroMask, InsufficientSamples, NoCandidateInRange, SingularDesign
from .selection import HeckmanFit, ProbitFit, fit_heckman, fit_probit

FA = "FA"
FA_STAR = "FA_STAR"
HECKMAN_C = "HECKMAN_C"


@dataclass(frozen=True, eq=False)
class Candidate:
    index: int
    mask: FeatureMask | None
    status: str
    rho_hat: float | None = None
    r2_adj: float | None = None
    fit: HeckmanFit | None = field(default=None, repr=False)

    @property
    def accepted(self) -> bool:
        return self.status == "in_range"


@dataclass(frozen=True, eq=False)
class ExtractionResult:
    mask: FeatureMask
    fit: HeckmanFit
    accepted_count: int
    best_r2_adj: float
    method_tag: str
    candidates: list[Candidate] = field(default_factory=list, repr=False)

    @property
    def skipped_count(self) -> int:
        return sum(c.status in ("singular", "all_zero", "undefined_rho") for c in self.candidates)


def rho_summary(candidates: list[Candidate]) -> dict:
    rhos = np.array([c.rho_hat for c in candidates if c.rho_hat is not None])
    out = {"candidates": len(candidates), "defined": int(rhos.size)}
    if rhos.size:
        out.update(
            min=float(rhos.min()),
            median=float(np.median(rhos)),
            max=float(rhos.max()),
        )
    return out


def evaluate_mask(
    data: Dataset, mask: FeatureMask, probit: ProbitFit, rho_range: tuple[float, float], index: int = 0
) -> Candidate:
    lo, hi = rho_range
    try:
        fit = fit_heckman(data, mask, probit)
    except (SingularDesign, InsufficientSamples):
        return Candidate(index, mask, "singular")
    if fit.rho_hat is None:
        return Candidate(index, mask, "undefined_rho", None, fit.r2_adj, fit)
    status = "in_range" if lo <= fit.rho_hat <= hi else "out_of_range"
    return Candidate(index, mask, status, fit.rho_hat, fit.r2_adj, fit)


def _select(
    candidates: list[Candidate], tag: str, rho_range: tuple[float, float]
) -> ExtractionResult:
    best = None
    for cand in candidates:
        if cand.accepted and (best is None or cand.r2_adj > best.r2_adj):
            best = cand
    if best is None:
        summary = rho_summary(candidates)
        raise NoCandidateInRange(
            f"{tag}: no candidate has rho_hat in [{rho_range[0]:g}, {rho_range[1]:g}] ({summary})",
            rho_summary=summary,
        )
    return ExtractionResult(
        mask=best.mask,
        fit=best.fit,
        accepted_count=sum(c.accepted for c in candidates),
        best_r2_adj=best.r2_adj,
        method_tag=tag,
        candidates=candidates,
    )


def fa_candidate(
    data: Dataset,
    pi_hat: AssignmentProbabilities,
    config: RunConfig,
    probit: ProbitFit,
    b: int,
) -> Candidate:
    """Evaluate the ``b``-th extraction draw; depends only on ``(seed, b)``."""
    draw = draw_gumbel(pi_hat, config.tau, seed_stream(config.seed, STREAM_EXTRACT, b))
    try:
        mask, _ = feature_assign(data, draw)
    except AllZeroMask:
        return Candidate(b, None, "all_zero")
    return evaluate_mask(data, mask, probit, config.rho_range, b)


def extract_fa(
    data: Dataset,
    pi_hat: AssignmentProbabilities,
    config: RunConfig,
    probit: ProbitFit | None = None,
    n_jobs: int = 1,
) -> ExtractionResult:
    """Draw ``B`` masks from ``pi_hat`` and keep the best in-range one."""
    config.rho_range  # fail early when the range is missing
    if probit is None:
        probit = fit_probit(data)

    def one(b):
        return fa_candidate(data, pi_hat, config, probit, b)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            candidates = list(ex.map(one, range(config.B)))
    else:
        candidates = [one(b) for b in range(config.B)]
    return _select(candidates, FA, config.rho_range)


def rank_by_pi(pi_hat: AssignmentProbabilities) -> np.ndarray:
    """Feature indices by descending assignment probability, ties by index."""
    return np.argsort(-pi_hat.p_assign, kind="stable")


def correlation_ranking(data: Dataset) -> np.ndarray:
    """Feature indices by descending |Pearson correlation| with the observed
    outcome; zero-variance features count as correlation 0."""
    if data.m < 3:
        raise InsufficientSamples(f"correlation ranking needs m >= 3, got {data.m}")
    x = data.x_obs - data.x_obs.mean(axis=0)
    y = data.y_obs - data.y_obs.mean()
    sx = np.sqrt(np.sum(x * x, axis=0))
    sy = np.sqrt(np.sum(y * y))
    corr = np.zeros(data.K)
    ok = (sx > 0) & (sy > 0)
    corr[ok] = (x[:, ok].T @ y) / (sx[ok] * sy)
    return np.argsort(-np.abs(corr), kind="stable")


def sweep_prefixes(
    data: Dataset, order, config: RunConfig, probit: ProbitFit, tag: str
) -> ExtractionResult:
    """Fit the top-J prefix of ``order`` for J = 1..K-1; smallest J wins ties."""
    rho_range = config.rho_range
    order = np.asarray(order)
    candidates = [
        evaluate_mask(data, FeatureMask.from_indices(order[:j], data.K), probit, rho_range, j)
        for j in range(1, data.K)
    ]
    return _select(candidates, tag, rho_range)


def extract_fa_star(
    data: Dataset,
    pi_hat: AssignmentProbabilities,
    config: RunConfig,
    probit: ProbitFit | None = None,
) -> ExtractionResult:
    if probit is None:
        probit = fit_probit(data)
    return sweep_prefixes(data, rank_by_pi(pi_hat), config, probit, FA_STAR)


def extract_heckman_c(
    data: Dataset, config: RunConfig, probit: ProbitFit | None = None
) -> ExtractionResult:
    order = correlation_ranking(data)
    if probit is None:
        probit = fit_probit(data)
    return sweep_prefixes(data, order, config, probit, HECKMAN_C)
