"""Value-of-information censoring over aggregated primal-dual beliefs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .agent import AgentState, covariance_update, primal_update
from .models import ProcessModel
from .window import StackedSystem, build_stacked


class GaussianBelief:
    """Gaussian with a block-diagonal covariance.

    ``blocks`` lists the diagonal covariance blocks in order; ``None`` marks
    an identity block. A plain dense covariance is a single block.
    """

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("belief covariance does not match mean dimension")
        self.blocks = [cov]
        self.sizes = [self.mean.size]

    @classmethod
    def stacked(cls, parts) -> "GaussianBelief":
        """Build from ``(mean, cov)`` pairs; ``cov=None`` means identity."""
        means, blocks, sizes = [], [], []
        for m, c in parts:
            m = np.atleast_1d(np.asarray(m, dtype=float))
            means.append(m)
            blocks.append(c)
            sizes.append(m.size)
        out = cls.__new__(cls)
        out.mean = np.concatenate(means) if means else np.zeros(0)
        out.blocks = [None if b is None else np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
        out.sizes = sizes
        for b, s in zip(out.blocks, sizes):
            if b is not None and b.shape != (s, s):
                raise ValueError("belief covariance does not match mean dimension")
        return out

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return block_diag(*[np.eye(s) if b is None else b for b, s in zip(self.blocks, self.sizes)])

    def split(self):
        out, start = [], 0
        for b, s in zip(self.blocks, self.sizes):
            out.append((self.mean[start:start + s], b, s))
            start += s
        return out


@dataclass(frozen=True)
class CensorConfig:
    gamma: float = 0.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("censoring threshold gamma must be >= 0")


def aggregate(mean: np.ndarray, cov: np.ndarray, lam: np.ndarray, phi_values=None) -> GaussianBelief:
    """Stack ``(x, lam[, phi])`` with covariance ``diag(P, I[, I])``.

    ``phi_values`` is the ordered list of mission duals, or ``None`` when
    the scenario has no missions.
    """
    parts = [(mean, cov), (lam, None)]
    if phi_values is not None and len(phi_values):
        parts.append((np.asarray(phi_values, float), None))
    return GaussianBelief.stacked(parts)


def _chol(S: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc


def _dense_kl(mp, Sp, mq, Sq) -> float:
    Lp, Lq = _chol(Sp), _chol(Sq)
    # tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    M = np.linalg.solve(Lq, Lp)
    diff = np.linalg.solve(Lq, mq - mp)
    logdet = 2.0 * (np.sum(np.log(np.diag(Lq))) - np.sum(np.log(np.diag(Lp))))
    return 0.5 * (np.sum(M * M) + diff @ diff - mp.size + logdet)


def gaussian_kl(p: GaussianBelief, q: GaussianBelief) -> float:
    """KL(p || q) for multivariate normals.

    When both beliefs share a block layout the divergence is summed block by
    block (exact for block-diagonal covariances); identity-vs-identity
    blocks reduce to half the squared mean difference.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if p.sizes == q.sizes:
        kl = 0.0
        for (mp, bp, _), (mq, bq, s) in zip(p.split(), q.split()):
            if bp is None and bq is None:
                d = mq - mp
                kl += 0.5 * float(d @ d)
            else:
                kl += _dense_kl(mp, np.eye(s) if bp is None else bp, mq, np.eye(s) if bq is None else bq)
    else:
        kl = _dense_kl(p.mean, p.cov, q.mean, q.cov)
    # rounding can leave a tiny negative value for identical inputs
    return max(float(kl), 0.0)


def baseline_propagate(state: AgentState, model: ProcessModel, rho: float,
                       phi_values=None, sys: StackedSystem | None = None) -> GaussianBelief:
    """Belief the agent would hold after a step with no new information.

    Runs the plain primal / covariance / dual pipeline without the
    measurement rows and with an empty neighborhood. ``phi_values`` are the
    reference mission duals (already ordered); ``state`` is not modified.
    ``sys`` may pass this step's stacked system; its measurement rows are
    dropped.
    """
    if sys is None:
        sys = build_stacked(model, None, state.window)
    elif sys.has_group("measurement"):
        sys = sys.without("measurement")
    x = primal_update(state, sys, rho, neighbor_means=[])
    P = covariance_update(sys)
    return aggregate(x, P, state.lam.copy(), phi_values)


def voi_decision(actual: GaussianBelief, baseline: GaussianBelief, cfg: CensorConfig) -> tuple[bool, float]:
    """Transmit when ``KL(actual || baseline) >= gamma``."""
    voi = gaussian_kl(actual, baseline)
    if math.isinf(cfg.gamma):
        return False, voi
    return voi >= cfg.gamma, voi
