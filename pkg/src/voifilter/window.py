"""Rolling-window bookkeeping for the windowed MAP problem.

A window holds ``H + 1`` consecutive states, oldest first, stacked into a
single vector of length ``n (H + 1)``. The stacked least-squares system
``(r, W, C)`` has up to three row groups:

* dynamics: ``x_k - A x_{k-1} = 0`` weighted by ``Q``,
* measurement: ``H x_k = z`` weighted by ``R`` (omitted when there is none),
* prior: ``x_{k-H:k-1} = xbar`` weighted by the prior window covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .models import Measurement, ProcessModel


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


@dataclass
class RollingWindow:
    """Mean and joint covariance of ``H + 1`` stacked states (oldest first)."""

    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if self.mean.ndim != 1 or self.mean.size % self.n:
            raise ValueError("window mean length must be a multiple of the state dimension")
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("window covariance does not match the mean")

    @property
    def horizon(self) -> int:
        return self.mean.size // self.n - 1

    @property
    def dim(self) -> int:
        return self.mean.size

    def state(self, idx: int) -> np.ndarray:
        """State ``idx`` of the window; negative indices count from the newest."""
        slots = self.mean.reshape(-1, self.n)
        return slots[idx].copy()

    @property
    def tail(self) -> np.ndarray:
        return self.state(-1)

    def block(self, i: int, j: int | None = None) -> np.ndarray:
        j = i if j is None else j
        n = self.n
        i %= self.horizon + 1
        j %= self.horizon + 1
        return self.cov[i * n:(i + 1) * n, j * n:(j + 1) * n].copy()

    def copy(self) -> "RollingWindow":
        return RollingWindow(self.mean.copy(), self.cov.copy(), self.n)


def initial_window(x0: np.ndarray, P0: np.ndarray, horizon: int) -> RollingWindow:
    """Every slot at ``x0`` with independent ``P0`` blocks."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    x0 = np.asarray(x0, dtype=float)
    return RollingWindow(
        mean=np.tile(x0, horizon + 1),
        cov=block_diag(*[np.asarray(P0, dtype=float)] * (horizon + 1)),
        n=x0.size,
    )


@dataclass
class StackedSystem:
    """Windowed least-squares system ``min ||C x - r||^2_{W^-1}``.

    ``W`` is kept as its diagonal blocks; ``groups`` names each block and
    gives its row slice into ``r`` and ``C``.
    """

    r: np.ndarray
    C: np.ndarray
    W_blocks: list[np.ndarray]
    groups: list[tuple[str, slice]]
    # optional precomputed inverses; None entries are computed here
    W_inv_blocks: list[np.ndarray | None] | None = field(default=None, repr=False)

    def __post_init__(self):
        given = self.W_inv_blocks or [None] * len(self.W_blocks)
        self.W_inv_blocks = [np.linalg.inv(b) if inv is None else inv for b, inv in zip(self.W_blocks, given)]
        self._info = None
        self._info_vec = None

    @property
    def W(self) -> np.ndarray:
        return block_diag(*self.W_blocks)

    @property
    def W_inv(self) -> np.ndarray:
        return block_diag(*self.W_inv_blocks)

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    def has_group(self, name: str) -> bool:
        return any(g == name for g, _ in self.groups)

    @property
    def info(self) -> np.ndarray:
        """``C^T W^-1 C``, accumulated group by group."""
        if self._info is None:
            acc = np.zeros((self.dim, self.dim))
            for (_, rows), Winv in zip(self.groups, self.W_inv_blocks):
                Cg = self.C[rows]
                acc += Cg.T @ Winv @ Cg
            self._info = symmetrize(acc)
        return self._info

    @property
    def info_vec(self) -> np.ndarray:
        """``C^T W^-1 r``."""
        if self._info_vec is None:
            acc = np.zeros(self.dim)
            for (_, rows), Winv in zip(self.groups, self.W_inv_blocks):
                acc += self.C[rows].T @ (Winv @ self.r[rows])
            self._info_vec = acc
        return self._info_vec

    def without(self, name: str) -> "StackedSystem":
        """Copy with row group ``name`` removed (weights are not re-inverted)."""
        keep = [k for k, (g, _) in enumerate(self.groups) if g != name]
        r, C, groups, start = [], [], [], 0
        for k in keep:
            g, rows = self.groups[k]
            r.append(self.r[rows])
            C.append(self.C[rows])
            groups.append((g, slice(start, start + C[-1].shape[0])))
            start += C[-1].shape[0]
        return StackedSystem(
            r=np.concatenate(r), C=np.vstack(C), W_blocks=[self.W_blocks[k] for k in keep], groups=groups,
            W_inv_blocks=[self.W_inv_blocks[k] for k in keep],
        )

    def cost(self, x: np.ndarray) -> float:
        e = self.C @ x - self.r
        return float(e @ self.W_inv @ e)

    def group_costs(self, x: np.ndarray) -> dict[str, float]:
        out = {}
        for (name, rows), Winv in zip(self.groups, self.W_inv_blocks):
            e = self.C[rows] @ x - self.r[rows]
            out[name] = float(e @ Winv @ e)
        return out


def build_stacked(model: ProcessModel, meas: Measurement | None, prior: RollingWindow) -> StackedSystem:
    """Assemble ``(r, W, C)`` for one agent at one sampling instant.

    The prior row group covers the first ``H`` slots of ``prior``; the newest
    slot is tied to them only through the dynamics rows. Passing
    ``meas=None`` drops the measurement rows entirely.
    """
    n = prior.n
    if model.n != n:
        raise ValueError(f"model state dim {model.n} != window state dim {n}")
    H = prior.horizon
    N = n * (H + 1)

    C_dyn = np.zeros((n, N))
    C_dyn[:, (H - 1) * n:H * n] = -model.A
    C_dyn[:, H * n:] = np.eye(n)
    rows_C = [C_dyn]
    rows_r = [np.zeros(n)]
    blocks = [model.Q]
    inverses = [model.Q_inv]
    names = ["dynamics"]

    if meas is not None:
        Hm = np.atleast_2d(meas.H)
        if Hm.shape[1] != n or Hm.shape[0] != meas.pseudo_obs.size:
            raise ValueError("measurement dimensions do not match the window")
        C_meas = np.zeros((Hm.shape[0], N))
        C_meas[:, H * n:] = Hm
        rows_C.append(C_meas)
        rows_r.append(np.asarray(meas.pseudo_obs, dtype=float))
        blocks.append(np.atleast_2d(meas.R))
        inverses.append(None)
        names.append("measurement")

    C_prior = np.zeros((n * H, N))
    C_prior[:, :n * H] = np.eye(n * H)
    rows_C.append(C_prior)
    rows_r.append(prior.mean[:n * H])
    blocks.append(prior.cov[:n * H, :n * H])
    inverses.append(None)
    names.append("prior")

    groups, start = [], 0
    for name, Cg in zip(names, rows_C):
        groups.append((name, slice(start, start + Cg.shape[0])))
        start += Cg.shape[0]
    return StackedSystem(
        r=np.concatenate(rows_r),
        C=np.vstack(rows_C),
        W_blocks=[np.asarray(b, dtype=float) for b in blocks],
        groups=groups,
        W_inv_blocks=inverses,
    )


def advance_window(window: RollingWindow, model: ProcessModel) -> RollingWindow:
    """Roll the window forward by one sampling instant.

    The oldest state is marginalized out, and a new slot predicted from
    the previous newest state is appended with no cross-covariance to the
    retained slots.
    """
    n = window.n
    N = window.dim
    P_tail = window.cov[N - n:, N - n:]
    mean = np.empty(N)
    mean[:N - n] = window.mean[n:]
    mean[N - n:] = model.A @ window.mean[N - n:]
    cov = np.zeros((N, N))
    cov[:N - n, :N - n] = window.cov[n:, n:]
    cov[N - n:, N - n:] = symmetrize(model.A @ P_tail @ model.A.T + model.Q)
    return RollingWindow(mean=mean, cov=cov, n=n)
