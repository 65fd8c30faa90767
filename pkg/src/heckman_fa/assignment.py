"""Learned assignment of selection features to the prediction equation.

Each feature carries a two-class categorical (not assigned / assigned).
Masks are drawn with the Gumbel-Max trick; gradients flow through the
Gumbel-Softmax relaxation of the same draw (straight-through).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import RunConfig
from .dataset import Dataset, FeatureMask
from .errors import AllZeroMask, SingularDesign
from .selection import HeckmanFit, ProbitFit, fit_heckman, fit_probit

log = logging.getLogger(__name__)

PI_EPS = 1e-6
MAX_REDRAWS = 16
STREAM_TRAIN = 1
STREAM_EXTRACT = 2


def _upper_bound(eps: float) -> float:
    hi = 1.0 - eps
    while 1.0 - hi < eps:
        hi = np.nextafter(hi, 0.0)
    return float(hi)


_PI_HI = _upper_bound(PI_EPS)


def seed_stream(seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent generator addressed by ``(seed, stream, index)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


def project(raw) -> np.ndarray:
    """Clamp to ``[eps, 1 - eps]``, renormalize columns, then pin row 0 to
    ``1 - row 1`` so the invariants hold without rounding slack."""
    p = np.clip(np.asarray(raw, dtype=float), PI_EPS, 1.0 - PI_EPS)
    p = p / p.sum(axis=0, keepdims=True)
    assigned = np.clip(p[1], PI_EPS, _PI_HI)
    return np.vstack([1.0 - assigned, assigned])


@dataclass(frozen=True, eq=False)
class AssignmentProbabilities:
    """``pi[0, k]``: feature ``k`` not assigned; ``pi[1, k]``: assigned."""

    pi: np.ndarray

    def __post_init__(self):
        p = np.array(self.pi, dtype=float)
        if p.ndim != 2 or p.shape[0] != 2:
            raise ValueError("pi must have shape (2, K)")
        if np.any(p < PI_EPS) or np.any(p > 1.0 - PI_EPS):
            raise ValueError(f"pi entries must lie in [{PI_EPS}, 1 - {PI_EPS}]")
        if np.any(np.abs(p.sum(axis=0) - 1.0) > 1e-12):
            raise ValueError("pi columns must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "pi", p)

    @classmethod
    def initial(cls, K: int, c: float) -> "AssignmentProbabilities":
        return cls(project(np.vstack([np.full(K, 1.0 - c), np.full(K, c)])))

    @property
    def K(self) -> int:
        return self.pi.shape[1]

    @property
    def p_assign(self) -> np.ndarray:
        return self.pi[1]

    def step(self, grad, alpha: float) -> "AssignmentProbabilities":
        return AssignmentProbabilities(project(self.pi - alpha * np.asarray(grad)))


@dataclass(frozen=True, eq=False)
class GumbelDraw:
    g: np.ndarray
    z_hard: np.ndarray
    z_soft: np.ndarray
    tau: float

    @property
    def psi(self) -> np.ndarray:
        return self.z_hard[1].astype(bool)


def gumbel_noise(rng: np.random.Generator, K: int) -> np.ndarray:
    u = rng.uniform(np.finfo(float).tiny, 1.0, size=(2, K))
    return -np.log(-np.log(u))


def draw_gumbel(
    pi: AssignmentProbabilities,
    tau: float,
    rng: np.random.Generator | None = None,
    g=None,
) -> GumbelDraw:
    """Hard one-hot sample and its softmax relaxation from one noise draw.

    Pass ``g`` to freeze the noise instead of sampling it from ``rng``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if g is None:
        g = gumbel_noise(rng, pi.K)
    g = np.asarray(g, dtype=float)
    logits = np.log(pi.pi) + g
    hot = np.argmax(logits, axis=0)
    z_hard = np.zeros((2, pi.K), dtype=np.int8)
    z_hard[hot, np.arange(pi.K)] = 1
    scaled = logits / tau
    scaled = scaled - scaled.max(axis=0, keepdims=True)
    e = np.exp(scaled)
    z_soft = e / e.sum(axis=0, keepdims=True)
    return GumbelDraw(g=g, z_hard=z_hard, z_soft=z_soft, tau=float(tau))


def feature_assign(data: Dataset, draw: GumbelDraw) -> tuple[FeatureMask, np.ndarray]:
    """Mask from the hard draw and the masked observed-row feature matrix.

    Raises AllZeroMask when no feature is drawn.
    """
    mask = FeatureMask(draw.psi)
    return mask, data.x_obs * mask.assigned


def mae_loss(fit: HeckmanFit, data: Dataset) -> float:
    return float(np.mean(np.abs(data.y_obs - fit.fitted)))


def _chain(dpsi: np.ndarray, draw: GumbelDraw, pi: AssignmentProbabilities) -> np.ndarray:
    # psi depends on the relaxed z[1] only; d z[1] / d pi[q] = +-z0*z1 / (tau*pi[q])
    coupling = draw.z_soft[0] * draw.z_soft[1] / draw.tau
    return np.vstack([-dpsi * coupling / pi.pi[0], dpsi * coupling / pi.pi[1]])


def mae_gradient(
    data: Dataset, fit: HeckmanFit, draw: GumbelDraw, pi: AssignmentProbabilities
) -> np.ndarray:
    """Straight-through gradient of the MAE with respect to ``pi``.

    Coefficients and the IMR column are held fixed; ``sign(0) = 0``.
    """
    dpsi = -kernels.sign_colsum(data.x_obs, fit.residuals) * fit.beta_hat[1:] / data.m
    return _chain(dpsi, draw, pi)


def mse_gradient_probe(
    data: Dataset, fit: HeckmanFit, draw: GumbelDraw, pi: AssignmentProbabilities
) -> np.ndarray:
    """Same chain as :func:`mae_gradient` with the squared-error factor.

    Vanishes at a least-squares fit because the residuals are orthogonal
    to every assigned column; kept as a numerical check of that fact.
    """
    dpsi = -2.0 * (data.x_obs.T @ fit.residuals) * fit.beta_hat[1:] / data.m
    return _chain(dpsi, draw, pi)


@dataclass(frozen=True, eq=False)
class EpochRecord:
    epoch: int
    loss: float
    mask: FeatureMask | None
    redraws: int = 0
    skipped: bool = False
    pi: np.ndarray | None = None


@dataclass(eq=False)
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])


def _fit_with_redraws(data, pi, tau, rng, probit):
    last = None
    for attempt in range(MAX_REDRAWS + 1):
        draw = draw_gumbel(pi, tau, rng)
        try:
            mask, _ = feature_assign(data, draw)
            return draw, mask, fit_heckman(data, mask, probit), attempt
        except (AllZeroMask, SingularDesign) as exc:
            last = exc
    raise last


def train_assignment(
    data: Dataset,
    config: RunConfig,
    probit: ProbitFit | None = None,
    keep_pi: bool = False,
) -> tuple[AssignmentProbabilities, TrainTrace]:
    """Learn assignment probabilities by straight-through MAE descent.

    Every epoch draws fresh noise from its own seed sub-stream. A draw that
    assigns nothing is redrawn up to ``MAX_REDRAWS`` times; if all fail,
    that epoch leaves ``pi`` unchanged.
    """
    pi = AssignmentProbabilities.initial(data.K, config.c)
    if probit is None:
        probit = fit_probit(data)
    trace = TrainTrace()
    for epoch in range(config.T):
        rng = seed_stream(config.seed, STREAM_TRAIN, epoch)
        try:
            draw, mask, fit, redraws = _fit_with_redraws(data, pi, config.tau, rng, probit)
        except AllZeroMask:
            log.info("epoch %d: every redraw assigned no feature; update skipped", epoch)
            trace.records.append(
                EpochRecord(epoch, float("nan"), None, MAX_REDRAWS, True,
                            pi.pi.copy() if keep_pi else None)
            )
            continue
        loss = mae_loss(fit, data)
        pi = pi.step(mae_gradient(data, fit, draw, pi), config.alpha)
        trace.records.append(
            EpochRecord(epoch, loss, mask, redraws, False, pi.pi.copy() if keep_pi else None)
        )
    return pi, trace
