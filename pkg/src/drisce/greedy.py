"""Greedy sparse recovery: OMP for single vectors, SOMP for shared support."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GreedyConfig:
    sparsity: int
    residual_tol: float = 0.0

    def __post_init__(self):
        if self.sparsity < 1:
            raise ValueError("sparsity must be at least 1")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be nonnegative")


@dataclass
class SparseEstimate:
    """Support, coefficients and grid frequencies of one recovery problem.

    coeffs holds the joint least-squares refit on the support, one row per
    selected atom and one column per measurement vector.  freqs carries the
    (x1, x2) grid point of each atom once a dictionary is attached.
    """

    support: np.ndarray
    coeffs: np.ndarray
    freqs: np.ndarray | None = None
    history: dict = field(default_factory=dict)

    @property
    def sparsity(self):
        return len(self.support)


def _refit(y, phi, support):
    coef, *_ = np.linalg.lstsq(phi[:, support], y, rcond=None)
    return coef


def somp_solve(y, phi, cfg):
    """Simultaneous OMP over the columns of ``y`` with one shared support.

    Atom scores sum |correlation|^2 across measurement vectors; the
    support is refit jointly by least squares every iteration.  Ties pick
    the lowest atom index, and iteration stops early once the residual
    norm drops to ``cfg.residual_tol``.
    """
    y = np.asarray(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    norms = np.linalg.norm(phi, axis=0)
    norms[norms == 0] = 1.0
    k_max = min(cfg.sparsity, phi.shape[1])

    support = []
    resid = y.copy()
    coeffs = np.zeros((0, y.shape[1]), dtype=complex)
    for _ in range(k_max):
        if np.linalg.norm(resid) <= cfg.residual_tol:
            break
        score = np.sum(np.abs(phi.conj().T @ resid) ** 2, axis=1) / norms ** 2
        score[support] = -np.inf
        pick = int(np.argmax(score))
        support.append(pick)
        coeffs = _refit(y, phi, support)
        resid = y - phi[:, support] @ coeffs
    return SparseEstimate(support=np.asarray(support, dtype=int), coeffs=coeffs)


def omp_solve(y, phi, cfg):
    """Orthogonal matching pursuit; identical to SOMP with one column."""
    return somp_solve(y, phi, cfg)
