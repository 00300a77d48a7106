"""Shared front end over the greedy and Bayesian sparse solvers."""

from __future__ import annotations

import numpy as np

from .gamp import SolverConfig, m_em_gamp
from .greedy import GreedyConfig, SparseEstimate, somp_solve

SOLVERS = ("somp", "gamp")


def support_by_energy(t_hat, sparsity):
    """Top rows of a posterior mean by l2 energy, ties to the lower index."""
    energy = np.linalg.norm(np.atleast_2d(t_hat), axis=1)
    order = np.argsort(-energy, kind="stable")
    return np.sort(order[:sparsity])


def solve_sparse(e, phi, solver, sparsity, cfg=None):
    """Recover a row-sparse coefficient matrix from E ~ Phi @ Delta.

    Returns a SparseEstimate whose support is sorted ascending and whose
    coefficients are the joint least-squares refit on that support; this
    is shared by the SOMP and EM-GAMP routes so downstream consumers never
    care which solver produced the estimate.
    """
    e = np.asarray(e, dtype=complex)
    if e.ndim == 1:
        e = e[:, None]
    if solver == "somp":
        est = somp_solve(e, phi, GreedyConfig(sparsity=sparsity))
        support = np.sort(est.support)
    elif solver == "gamp":
        cfg = cfg or SolverConfig()
        state, _ = m_em_gamp(e, phi, cfg)
        support = support_by_energy(state.t_hat, sparsity)
    else:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    coeffs, *_ = np.linalg.lstsq(phi[:, support], e, rcond=None)
    return SparseEstimate(support=support, coeffs=coeffs)


def attach_grid(est, dictionary):
    """Fill in the (x1, x2) grid frequencies of the selected atoms."""
    est.freqs = dictionary.grid[est.support]
    return est
