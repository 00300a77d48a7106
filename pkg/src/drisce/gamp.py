"""Bayesian sparse recovery core: GMM spike-and-slab prior, GAMP message
passing over single or multiple measurement vectors, and EM hyperparameter
learning.

The prior on each coefficient t_{g,r} is

    p(t) = (1 - kappa_g) * delta(t) + kappa_g * sum_l w_{r,l} CN(t; nu_{r,l}, vs_{r,l})

with the sparsity rate kappa_g shared across measurement vectors r (that
coupling is what ties the R recovery problems together).  All Gaussian
ratios run in the log domain; variances are floored at VAR_FLOOR.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

VAR_FLOOR = 1e-12


class GampDivergenceError(RuntimeError):
    """GAMP state left the finite domain; callers may retry with more damping."""


@dataclass
class GmmHyperparams:
    """The learned parameter set of the spike-and-slab GMM prior.

    kappa: (G,) sparsity rates; weights/means/variances: (R, L) mixture
    parameters per measurement vector; noise_var: (R,) output noise.
    """

    kappa: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        self.kappa = np.clip(np.asarray(self.kappa, dtype=float), 0.0, 1.0)
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=complex)
        self.variances = np.maximum(np.asarray(self.variances, dtype=float), VAR_FLOOR)
        self.noise_var = np.maximum(np.asarray(self.noise_var, dtype=float), VAR_FLOOR)
        wsum = self.weights.sum(axis=1, keepdims=True)
        if not np.allclose(wsum, 1.0, atol=1e-8):
            raise ValueError("mixture weights must sum to 1 per measurement vector")
        self.weights = self.weights / wsum

    @property
    def num_components(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budgets and damping for the EM-GAMP solver."""

    gamp_iters: int = 50
    em_iters: int = 10
    inner_tol: float = 1e-8
    gm_components: int = 3
    damping: float = 0.7

    def __post_init__(self):
        if min(self.gamp_iters, self.em_iters, self.gm_components) < 1:
            raise ValueError("iteration counts and component count must be positive")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.inner_tol < 0:
            raise ValueError("inner_tol must be nonnegative")


@dataclass
class GampState:
    """Iterates and per-entry posterior pieces of one GAMP run."""

    t_hat: np.ndarray      # (G, R) posterior means
    tau_t: np.ndarray      # (G, R) posterior variances
    s_hat: np.ndarray      # (M, R)
    tau_s: np.ndarray
    mu_hat: np.ndarray     # (M, R)
    tau_mu: np.ndarray
    psi_hat: np.ndarray    # (G, R)
    tau_psi: np.ndarray
    spike_prob: np.ndarray  # (G, R) posterior slab probability
    resp: np.ndarray        # (G, R, L) mixture responsibilities
    comp_mean: np.ndarray   # (G, R, L)
    comp_var: np.ndarray    # (G, R, L)
    iterations: int = 0


class DenseOperator:
    """Adapter giving a plain matrix the operator interface GAMP uses."""

    def __init__(self, phi):
        self.phi = np.asarray(phi)
        self.abs2 = np.abs(self.phi) ** 2
        self.shape = self.phi.shape

    def apply(self, x):
        return self.phi @ x

    def apply_adjoint(self, y):
        return self.phi.conj().T @ y

    def apply_abs2(self, x):
        return self.abs2 @ x

    def apply_abs2_adjoint(self, y):
        return self.abs2.T @ y

    def col_norms_sq(self):
        return self.abs2.sum(axis=0)


class ColumnScaledOperator:
    """View of an operator with unit-normalized columns."""

    def __init__(self, op, norms):
        self.op = op
        self.norms = norms
        self.norms_sq = norms ** 2
        self.shape = op.shape

    def apply(self, x):
        return self.op.apply(x / self.norms[:, None])

    def apply_adjoint(self, y):
        return self.op.apply_adjoint(y) / self.norms[:, None]

    def apply_abs2(self, x):
        return self.op.apply_abs2(x / self.norms_sq[:, None])

    def apply_abs2_adjoint(self, y):
        return self.op.apply_abs2_adjoint(y) / self.norms_sq[:, None]


def _as_operator(phi):
    return DenseOperator(phi) if isinstance(phi, np.ndarray) else phi


def output_denoiser(mu_hat, tau_mu, e, rho):
    """Scalar AWGN output step: s = (e - mu)/(tau + rho), tau_s = 1/(tau + rho)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("noise variance must be positive")
    denom = tau_mu + rho
    return (e - mu_hat) / denom, 1.0 / denom


def _log_cn(x, mean, var):
    """log CN(x; mean, var) for a circular complex Gaussian."""
    return -np.abs(x - mean) ** 2 / var - np.log(np.pi * var)


def input_denoiser(psi_hat, tau_psi, theta):
    """MMSE denoiser under the spike-and-slab GMM prior.

    Accepts (G, R) arrays (scalars broadcast) and returns the posterior
    mean/variance plus the per-entry pieces (spike_prob, resp, comp_mean,
    comp_var) the EM step reuses.  Responsibilities are formed with
    log-sum-exp so extreme likelihood ratios saturate instead of
    overflowing.
    """
    psi_hat = np.atleast_2d(np.asarray(psi_hat, dtype=complex))
    tau_psi = np.maximum(np.atleast_2d(np.asarray(tau_psi, dtype=float)), VAR_FLOOR)
    kappa = theta.kappa[:, None] if theta.kappa.ndim == 1 else theta.kappa
    w = theta.weights[None, :, :]       # (1, R, L)
    nu = theta.means[None, :, :]
    vs = theta.variances[None, :, :]

    psi = psi_hat[:, :, None]
    tau = tau_psi[:, :, None]
    log_like = _log_cn(psi, nu, vs + tau)                    # (G, R, L)
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    comp = log_w + log_like
    comp_max = comp.max(axis=2, keepdims=True)
    slab_logsum = comp_max[:, :, 0] + np.log(np.exp(comp - comp_max).sum(axis=2))
    resp = np.exp(comp - comp_max)
    resp /= resp.sum(axis=2, keepdims=True)

    log_spike = _log_cn(0.0, psi_hat, tau_psi)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        gap = (np.log(kappa) + slab_logsum) - (np.log1p(-kappa) + log_spike)
        spike_prob = np.where(kappa >= 1.0, 1.0,
                              np.where(kappa <= 0.0, 0.0, 1.0 / (1.0 + np.exp(-gap))))

    comp_var = tau * vs / (tau + vs)
    comp_mean = comp_var * (psi / tau + nu / vs)
    slab_mean = (resp * comp_mean).sum(axis=2)
    slab_m2 = (resp * (np.abs(comp_mean) ** 2 + comp_var)).sum(axis=2)
    t_hat = spike_prob * slab_mean
    tau_t = np.maximum(spike_prob * slab_m2 - np.abs(t_hat) ** 2, 0.0)
    return t_hat, tau_t, spike_prob, resp, comp_mean, comp_var


def _prior_moments(theta, num_atoms, num_vectors):
    m1 = (theta.weights * theta.means).sum(axis=1)                       # (R,)
    m2 = (theta.weights * (np.abs(theta.means) ** 2 + theta.variances)).sum(axis=1)
    t_hat = theta.kappa[:, None] * m1[None, :] * np.ones((num_atoms, num_vectors))
    tau_t = theta.kappa[:, None] * m2[None, :] - np.abs(t_hat) ** 2
    return t_hat.astype(complex), np.maximum(tau_t, VAR_FLOOR)


def gamp_pass(e, phi, theta, cfg, state=None):
    """Run the GAMP loop to convergence or the iteration budget.

    phi may be a dense matrix or any object exposing apply/apply_adjoint/
    apply_abs2/apply_abs2_adjoint (used for implicit Kronecker operators).
    ``state`` warm-starts from a previous pass; otherwise iterates start
    from the prior moments.
    """
    op = _as_operator(phi)
    m, g = op.shape
    e = np.asarray(e, dtype=complex)
    if e.ndim == 1:
        e = e[:, None]
    r = e.shape[1]
    if state is None:
        t_hat, tau_t = _prior_moments(theta, g, r)
        s_hat = np.zeros((m, r), dtype=complex)
        tau_s = np.zeros((m, r))
    else:
        t_hat, tau_t = state.t_hat, state.tau_t
        s_hat, tau_s = state.s_hat, state.tau_s

    d = cfg.damping
    rho = theta.noise_var[None, :]
    pieces = None
    mu_hat = np.zeros((m, r), dtype=complex)
    tau_mu = np.zeros((m, r))
    psi_hat = np.zeros((g, r), dtype=complex)
    tau_psi = np.ones((g, r))
    # fitted means live in measurement space, so runaway iterates show up
    # as mu_hat dwarfing the observation itself
    blowup = 1e12 * (np.linalg.norm(e) ** 2 + VAR_FLOOR)
    for it in range(cfg.gamp_iters):
        tau_mu = op.apply_abs2(tau_t)
        mu_hat = op.apply(t_hat) - tau_mu * s_hat
        s_new, tau_s_new = output_denoiser(mu_hat, tau_mu, e, rho)
        s_hat = d * s_new + (1 - d) * s_hat
        tau_s = d * tau_s_new + (1 - d) * tau_s

        tau_psi = 1.0 / np.maximum(op.apply_abs2_adjoint(tau_s), 1e-30)
        psi_hat = t_hat + tau_psi * op.apply_adjoint(s_hat)
        t_new, tau_t_new, *pieces = input_denoiser(psi_hat, tau_psi, theta)
        t_prev = t_hat
        t_hat = d * t_new + (1 - d) * t_hat
        tau_t = d * tau_t_new + (1 - d) * tau_t

        if not np.all(np.isfinite(t_hat)) or np.linalg.norm(mu_hat) ** 2 > blowup:
            raise GampDivergenceError(
                f"divergent GAMP state at iteration {it}; consider lowering damping"
            )
        if np.sum(np.abs(t_hat - t_prev) ** 2) < cfg.inner_tol:
            break

    spike_prob, resp, comp_mean, comp_var = pieces
    return GampState(
        t_hat=t_hat, tau_t=tau_t, s_hat=s_hat, tau_s=tau_s,
        mu_hat=mu_hat, tau_mu=tau_mu, psi_hat=psi_hat, tau_psi=tau_psi,
        spike_prob=spike_prob, resp=resp, comp_mean=comp_mean, comp_var=comp_var,
        iterations=it + 1,
    )


def em_update(theta, state, e):
    """One maximization step over all prior and noise hyperparameters.

    Component moments are tilted by the posterior responsibilities from
    the last GAMP pass; when the posterior support is empty the mixture
    parameters are left untouched and only the noise and sparsity rates
    move.
    """
    e = np.asarray(e, dtype=complex)
    if e.ndim == 1:
        e = e[:, None]
    w = state.spike_prob[:, :, None] * state.resp          # (G, R, L)
    denom = w.sum(axis=0)                                  # (R, L)
    occupied = denom > 1e-300

    rho_old = theta.noise_var[None, :]
    shrink = np.abs((e - state.mu_hat) / (state.tau_mu / rho_old + 1.0)) ** 2
    smear = state.tau_mu * rho_old / (state.tau_mu + rho_old)
    noise_var = np.maximum((shrink + smear).mean(axis=0), VAR_FLOOR)

    kappa = np.clip(state.spike_prob.mean(axis=1), 0.0, 1.0)

    means = theta.means.copy()
    variances = theta.variances.copy()
    weights = theta.weights.copy()
    if np.any(occupied):
        num_mean = (w * state.comp_mean).sum(axis=0)
        spread = np.abs(theta.means[None, :, :] - state.comp_mean) ** 2 + state.comp_var
        num_var = (w * spread).sum(axis=0)
        means[occupied] = num_mean[occupied] / denom[occupied]
        variances[occupied] = np.maximum(num_var[occupied] / denom[occupied], VAR_FLOOR)
        total = state.spike_prob.sum(axis=0)               # (R,)
        live = total > 1e-300
        weights[live] = denom[live] / total[live, None]
        wsum = weights.sum(axis=1, keepdims=True)
        weights = weights / np.where(wsum > 0, wsum, 1.0)

    return GmmHyperparams(kappa=kappa, weights=weights, means=means,
                          variances=variances, noise_var=noise_var)


def init_hyperparams(e, num_atoms, cfg):
    """Deterministic starting point for EM.

    Sparsity starts at M/(2G); the slab variance budget ||E||_F^2/(M R
    kappa) is spread over components by factors of 10, and the noise floor
    assumes a 10 dB starting SNR.
    """
    e = np.asarray(e, dtype=complex)
    if e.ndim == 1:
        e = e[:, None]
    m, r = e.shape
    l_gm = cfg.gm_components
    kappa0 = min(m / (2.0 * num_atoms), 1.0)
    energy = max(np.linalg.norm(e) ** 2 / (m * r), VAR_FLOOR)
    base = energy / kappa0
    variances = np.tile(base * 10.0 ** (-np.arange(l_gm, dtype=float)), (r, 1))
    weights = np.full((r, l_gm), 1.0 / l_gm)
    means = np.zeros((r, l_gm), dtype=complex)
    noise_var = np.full(r, energy / 11.0)
    return GmmHyperparams(kappa=np.full(num_atoms, kappa0), weights=weights,
                          means=means, variances=variances, noise_var=noise_var)


def m_em_gamp(e, phi, cfg, theta=None):
    """Alternate GAMP (E-step) with hyperparameter updates (M-step).

    Works unchanged for R = 1 (the single-measurement-vector case used at
    the RIS) and R > 1.  Internally the observation is brought to unit
    scale and the operator columns are unit-normalized, so the learning
    runs at a standard scale whatever the physical units; the returned
    coefficients refer to the original operator.  The returned ``theta``
    describes the prior in the normalized frame (unit-energy columns,
    unit-scale observation).
    """
    op = _as_operator(phi)
    e = np.asarray(e, dtype=complex)
    if e.ndim == 1:
        e = e[:, None]
    m, r = e.shape
    scale = np.linalg.norm(e) / np.sqrt(m * r)
    if scale == 0 or not np.isfinite(scale):
        scale = 1.0
    e_work = e / scale
    norms = np.sqrt(np.maximum(op.col_norms_sq(), 1e-300))
    if isinstance(phi, np.ndarray):
        work_op = DenseOperator(phi / norms[None, :])
    else:
        work_op = ColumnScaledOperator(op, norms)

    theta0 = theta
    attempt_cfg = cfg
    state = None
    # on divergence, restart the whole EM schedule with stronger damping
    for attempt in range(3):
        theta = theta0 if theta0 is not None else init_hyperparams(e_work, op.shape[1], cfg)
        state = None
        try:
            for _ in range(cfg.em_iters):
                state = gamp_pass(e_work, work_op, theta, attempt_cfg, state=state)
                theta = em_update(theta, state, e_work)
            break
        except GampDivergenceError:
            if attempt == 2:
                raise
            attempt_cfg = replace(attempt_cfg, damping=attempt_cfg.damping / 3.0,
                                  gamp_iters=attempt_cfg.gamp_iters * 2)

    back = scale / norms[:, None]
    state = replace(state, t_hat=state.t_hat * back,
                    tau_t=state.tau_t * back ** 2,
                    psi_hat=state.psi_hat * back,
                    tau_psi=state.tau_psi * back ** 2)
    return state, theta
