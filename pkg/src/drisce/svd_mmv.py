"""Low-rank splitting of bilinear measurements into paired MMV recoveries.

A bilinear observation Y = Phi1 Delta Phi2^H with sparse Delta is split by
SVD into two multiple-measurement-vector problems that share a row support
(one per factor), solved independently, and reassembled as the product of
the recovered factors.  The module also hosts the two benchmark routes:
Kronecker CS on the vectorized problem and SVD-CS (per-column recovery
without the shared support).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gamp import SolverConfig, m_em_gamp
from .greedy import GreedyConfig, SparseEstimate, omp_solve
from .recovery import solve_sparse, support_by_energy

FRAMEWORKS = ("svd_mmv", "svd_cs", "kronecker")
EXPLICIT_KRON_LIMIT = 4096


@dataclass
class SvdSplit:
    """Rank-R factor pair with the singular scale split symmetrically."""

    e1: np.ndarray
    e2: np.ndarray
    singular_values: np.ndarray

    @property
    def rank(self):
        return len(self.singular_values)


@dataclass
class FactorEstimates:
    """Row-sparse factor coefficient matrices sharing per-factor supports."""

    est1: SparseEstimate
    est2: SparseEstimate
    num_atoms1: int
    num_atoms2: int

    def dense(self, which):
        est = self.est1 if which == 1 else self.est2
        g = self.num_atoms1 if which == 1 else self.num_atoms2
        out = np.zeros((g, est.coeffs.shape[1]), dtype=complex)
        out[est.support] = est.coeffs
        return out


def split_via_svd(y, rank):
    """Top-``rank`` SVD triplets of Y with sqrt(sigma) pushed into each side."""
    y = np.asarray(y, dtype=complex)
    if rank < 1:
        raise ValueError("rank must be at least 1")
    if rank > min(y.shape):
        raise ValueError(f"rank {rank} exceeds min(Y.shape) = {min(y.shape)}")
    u, s, vh = np.linalg.svd(y, full_matrices=False)
    root = np.sqrt(s[:rank])
    return SvdSplit(e1=u[:, :rank] * root, e2=vh[:rank].conj().T * root,
                    singular_values=s[:rank])


def recover_factors(split, phi1, phi2, solver, sparsity, cfg=None):
    """Solve the two MMV problems E_i ~ Phi_i Delta_i with shared supports."""
    est1 = solve_sparse(split.e1, phi1, solver, sparsity, cfg)
    est2 = solve_sparse(split.e2, phi2, solver, sparsity, cfg)
    return FactorEstimates(est1=est1, est2=est2,
                           num_atoms1=phi1.shape[1], num_atoms2=phi2.shape[1])


def reassemble(factors):
    """Sparse matrix estimate Delta = Delta1 @ Delta2^H."""
    d1 = factors.dense(1)
    d2 = factors.dense(2)
    if d1.shape[1] != d2.shape[1]:
        raise ValueError("factor column counts differ")
    return d1 @ d2.conj().T


def _vec(x):
    return x.reshape(-1, order="F")


def _mat(x, shape):
    return x.reshape(shape, order="F")


class KronOperator:
    """Implicit conj(Phi2) (x) Phi1 acting on column-major vec(Delta).

    Matrix-vector products go through the two-sided form
    vec(Phi1 X Phi2^H), so the full Kronecker matrix never materialises.
    """

    def __init__(self, phi1, phi2):
        self.phi1 = np.asarray(phi1, dtype=complex)
        self.phi2 = np.asarray(phi2, dtype=complex)
        self.abs1 = np.abs(self.phi1) ** 2
        self.abs2_ = np.abs(self.phi2) ** 2
        self.in_shape = (self.phi1.shape[1], self.phi2.shape[1])
        self.out_shape = (self.phi1.shape[0], self.phi2.shape[0])
        self.shape = (self.out_shape[0] * self.out_shape[1],
                      self.in_shape[0] * self.in_shape[1])

    def _per_column(self, x, shape, f):
        x = np.asarray(x)
        out = np.stack([_vec(f(_mat(x[:, k], shape))) for k in range(x.shape[1])], axis=1)
        return out

    def apply(self, x):
        return self._per_column(x, self.in_shape,
                                lambda m: self.phi1 @ m @ self.phi2.conj().T)

    def apply_adjoint(self, y):
        return self._per_column(y, self.out_shape,
                                lambda m: self.phi1.conj().T @ m @ self.phi2)

    def apply_abs2(self, x):
        return self._per_column(x, self.in_shape,
                                lambda m: self.abs1 @ m @ self.abs2_.T)

    def apply_abs2_adjoint(self, y):
        return self._per_column(y, self.out_shape,
                                lambda m: self.abs1.T @ m @ self.abs2_)

    def column(self, g):
        g1, g2 = g % self.in_shape[0], g // self.in_shape[0]
        return _vec(np.outer(self.phi1[:, g1], self.phi2[:, g2].conj()))

    def columns(self, indices):
        return np.stack([self.column(g) for g in indices], axis=1)

    def col_norms_sq(self):
        return np.kron(np.sum(self.abs2_, axis=0), np.sum(self.abs1, axis=0))

    def materialize(self):
        if self.shape[1] > EXPLICIT_KRON_LIMIT:
            raise ValueError(
                f"explicit Kronecker matrix with {self.shape[1]} columns exceeds the "
                f"{EXPLICIT_KRON_LIMIT}-column guard; use the implicit operator"
            )
        return np.kron(self.phi2.conj(), self.phi1)


def _kron_greedy(y_vec, op, sparsity, residual_tol=0.0):
    """OMP on the implicit Kronecker operator (max correlation, LS refit)."""
    norms = np.maximum(op.col_norms_sq(), 1e-300)
    support = []
    resid = y_vec.copy()
    coeffs = np.zeros((0, 1), dtype=complex)
    for _ in range(sparsity):
        if np.linalg.norm(resid) <= residual_tol:
            break
        score = np.abs(op.apply_adjoint(resid)[:, 0]) ** 2 / norms
        score[support] = -np.inf
        support.append(int(np.argmax(score)))
        cols = op.columns(support)
        coeffs, *_ = np.linalg.lstsq(cols, y_vec, rcond=None)
        resid = y_vec - cols @ coeffs
    return np.asarray(support, dtype=int), coeffs


def baseline_solve(y, phi1, phi2, mode, solver, sparsity, cfg=None,
                   rank=None, explicit=False):
    """Benchmark recovery of Delta from Y = Phi1 Delta Phi2^H.

    mode "kronecker" works on the vectorized observation through the
    implicit operator (or the materialised matrix when small enough and
    requested); "svd_cs" splits by SVD like the MMV route but solves every
    rank-one column independently, without a shared support.
    """
    y = np.asarray(y, dtype=complex)
    cfg = cfg or SolverConfig()
    g1, g2 = phi1.shape[1], phi2.shape[1]

    if mode == "kronecker":
        op = KronOperator(phi1, phi2)
        y_vec = _vec(y)[:, None]
        if explicit:
            full = op.materialize()
            est = solve_sparse(y_vec, full, solver, sparsity, cfg)
            support, coeffs = est.support, est.coeffs
        elif solver == "somp":
            support, coeffs = _kron_greedy(y_vec, op, sparsity)
        elif solver == "gamp":
            state, _ = m_em_gamp(y_vec, op, cfg)
            support = support_by_energy(state.t_hat, sparsity)
            cols = op.columns(support)
            coeffs, *_ = np.linalg.lstsq(cols, y_vec, rcond=None)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        delta = np.zeros(g1 * g2, dtype=complex)
        delta[support] = coeffs[:, 0]
        return _mat(delta, (g1, g2))

    if mode == "svd_cs":
        rank = rank or sparsity
        split = split_via_svd(y, rank)
        d1 = np.zeros((g1, rank), dtype=complex)
        d2 = np.zeros((g2, rank), dtype=complex)
        for k in range(rank):
            for phi, e_col, out in ((phi1, split.e1[:, k], d1), (phi2, split.e2[:, k], d2)):
                if solver == "somp":
                    est = omp_solve(e_col, phi, GreedyConfig(sparsity=sparsity))
                    sup, coef = est.support, est.coeffs[:, 0]
                else:
                    state, _ = m_em_gamp(e_col[:, None], phi, cfg)
                    sup = support_by_energy(state.t_hat, sparsity)
                    coef, *_ = np.linalg.lstsq(phi[:, sup], e_col, rcond=None)
                out[sup, k] = coef
        return d1 @ d2.conj().T

    raise ValueError(f"unknown baseline mode {mode!r}")
