"""First-order off-grid refinement of recovered steering directions.

After an on-grid solve picks P atoms, the composite spatial frequencies of
the non-anchored paths are pushed off the grid with multiplicative
perturbations solved from a linearised (matrix least squares) system, then
coefficients and residual are refreshed.  A step that increases the
residual is rejected and stops the procedure, so the accepted residual is
non-increasing.  The anchored line-of-sight path, when present, is never
touched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import steering_matrix


@dataclass
class RefinableEstimate:
    """Continuous-frequency estimate carried through refinement steps.

    ``target`` is the observation the refined paths must explain (the raw
    observation with the anchored path's contribution already removed).
    """

    freqs: np.ndarray          # (P, 2) composite frequencies
    coeffs: np.ndarray         # (P, R)
    target: np.ndarray         # (M, R)
    residual: np.ndarray       # (M, R)
    los_index: int | None = None
    iteration: int = 0
    converged: bool = False

    @property
    def num_paths(self):
        return self.freqs.shape[0]

    def refinable(self):
        return [b for b in range(self.num_paths) if b != self.los_index]


def steering_gradients(geom, f_ele, f_azi):
    """Derivatives of the steering vector w.r.t. each composite frequency.

    The differentiated axis picks up an elementwise j*pi*n weighting; the
    other axis keeps its plain phase ramp (z outer, y inner).
    """
    nz, ny = geom.n_z, geom.n_y
    az = np.exp(1j * np.pi * f_ele * np.arange(nz))
    ay = np.exp(1j * np.pi * f_azi * np.arange(ny))
    wz = 1j * np.pi * np.arange(nz)
    wy = 1j * np.pi * np.arange(ny)
    scale = 1.0 / np.sqrt(geom.size)
    return scale * np.kron(az * wz, ay), scale * np.kron(az, ay * wy)


def mls_solve(y, a_list):
    """Least-squares weights for Y ~ sum_b w_b A_b over matrix atoms.

    Solves the vectorised normal equations; a rank-deficient stack falls
    back to the pseudoinverse (minimum-norm) solution with a warning.
    """
    y = np.asarray(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    g = np.stack([np.asarray(a, dtype=complex).reshape(-1, order="F") for a in a_list],
                 axis=1)
    if len(a_list) > g.shape[0]:
        raise ValueError("more atoms than observations (P > M*R)")
    w, _, rank, _ = np.linalg.lstsq(g, y.reshape(-1, order="F"), rcond=None)
    if rank < len(a_list):
        warnings.warn("rank-deficient MLS system; using minimum-norm solution",
                      RuntimeWarning, stacklevel=2)
    return w


def _perturbation_atoms(est, mix, geom, axis):
    """Linearised atoms theta_b * C * da/dtheta_b * t_b^T for each path."""
    atoms = []
    for b in est.refinable():
        grad_e, grad_a = steering_gradients(geom, est.freqs[b, 0], est.freqs[b, 1])
        grad = grad_e if axis == 0 else grad_a
        atoms.append(est.freqs[b, axis] * np.outer(mix @ grad, est.coeffs[b]))
    return atoms


def refine_iteration(est, mix, geom):
    """One perturb / refit / accept-or-stop cycle.

    Both frequency axes are perturbed from the current residual, the
    partial dictionary is rebuilt at the new frequencies, coefficients are
    refit against the target, and the step is rejected (marking
    convergence) if the residual norm grew.
    """
    if est.converged:
        return est
    refinable = est.refinable()
    if not refinable:
        est.converged = True
        return est

    new_freqs = est.freqs.copy()
    for axis in (0, 1):
        atoms = _perturbation_atoms(est, mix, geom, axis)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            w = mls_solve(est.residual, atoms)
        for k, b in enumerate(refinable):
            new_freqs[b, axis] = np.clip(
                est.freqs[b, axis] * (1.0 + np.real(w[k])), -1.0, 1.0)

    part = mix @ steering_matrix(geom, new_freqs[refinable])
    coeffs, *_ = np.linalg.lstsq(part, est.target, rcond=None)
    residual = est.target - part @ coeffs
    if np.linalg.norm(residual) > np.linalg.norm(est.residual):
        est.converged = True
        return est

    out_coeffs = est.coeffs.copy()
    out_coeffs[refinable] = coeffs
    return RefinableEstimate(freqs=new_freqs, coeffs=out_coeffs, target=est.target,
                             residual=residual, los_index=est.los_index,
                             iteration=est.iteration + 1)


def offgrid_run(on_grid, mix, geom, e, max_iters=10, los_index=None):
    """Refine an on-grid SparseEstimate against the raw observation ``e``.

    ``on_grid`` must carry grid frequencies; ``los_index`` points at the
    anchored path inside its support (None refines every path, as for the
    user channels where no anchor exists).  Works identically for one or
    several measurement vectors.
    """
    if on_grid.freqs is None:
        raise ValueError("attach grid frequencies before refinement")
    e = np.asarray(e, dtype=complex)
    if e.ndim == 1:
        e = e[:, None]
    freqs = np.array(on_grid.freqs, dtype=float)
    coeffs = np.array(on_grid.coeffs, dtype=complex)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]

    target = e
    if los_index is not None:
        los_atom = mix @ steering_matrix(geom, freqs[[los_index]])
        target = e - los_atom @ coeffs[[los_index]]
    est = RefinableEstimate(freqs=freqs, coeffs=coeffs, target=target,
                            residual=np.empty(0), los_index=los_index)
    keep = est.refinable()
    if keep:
        part = mix @ steering_matrix(geom, freqs[keep])
        est.residual = target - part @ coeffs[keep]
    else:
        est.residual = target.copy()
        est.converged = True

    for _ in range(max_iters):
        if est.converged:
            break
        est = refine_iteration(est, mix, geom)
    return est


def reconstruct(geom, est):
    """Steering-matrix reconstruction A(freqs) @ coeffs for any estimate."""
    return steering_matrix(geom, est.freqs) @ est.coeffs
