"""End-to-end two-timescale estimation pipelines.

Large timescale (once per long coherence block): estimate the RIS-user
channels at each RIS RF chain, lift them to the BS-RIS channels via the
multi-user stacked systems, then peel the single-reflection terms off the
double-reflection stage to recover the inter-RIS channel.  Small timescale
(every block): re-estimate the RIS-user channels at the BS through the
known BS-RIS channels, which multiplies the measurement count per
sub-frame by the BS array size.

Every stage returns a ChannelEstimate carrying a provenance tag; stages
that consume auxiliary channels refuse raw arrays so that the pipeline
ordering cannot be bypassed silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import protocol
from .dictionary import GridSpec, build_dictionary
from .geometry import composite_freqs, los_angles
from .offgrid import offgrid_run, reconstruct
from .recovery import attach_grid, solve_sparse
from .svd_mmv import baseline_solve, recover_factors, split_via_svd


@dataclass
class ChannelEstimate:
    """An estimated (or ground-truth) channel with its provenance."""

    value: np.ndarray
    source: str  # "perfect" or "estimated"

    def __post_init__(self):
        if self.source not in ("perfect", "estimated"):
            raise ValueError("source must be 'perfect' or 'estimated'")


def perfect(value):
    return ChannelEstimate(value=np.asarray(value, dtype=complex), source="perfect")


def _require_tagged(name, est):
    if not isinstance(est, ChannelEstimate):
        raise TypeError(
            f"{name} must be a ChannelEstimate from an earlier pipeline stage "
            "(or perfect()); raw arrays carry no provenance"
        )
    return est


@dataclass
class EstimationReport:
    """Per-stage estimates, NMSE scores and wall times of one trial."""

    scheme: str
    assumption: str
    channels: dict = field(default_factory=dict)
    nmse: dict = field(default_factory=dict)
    runtime_ms: dict = field(default_factory=dict)


def compute_nmse(truth, estimate):
    """Single-realization squared-error ratio ||est - truth||^2 / ||truth||^2."""
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch {estimate.shape} vs {truth.shape}")
    denom = np.linalg.norm(truth) ** 2
    if denom == 0:
        raise ValueError("truth has zero norm")
    return float(np.linalg.norm(estimate - truth) ** 2 / denom)


def _solve_vector_system(system, solver, sparsity, cfg, offgrid, offgrid_iters):
    """Sparse solve + optional refinement of one SMV system; returns (L,) vector."""
    est = solve_sparse(system.y, system.phi, solver, sparsity, cfg)
    attach_grid(est, system.dictionary)
    if offgrid:
        est = offgrid_run(est, system.mix, system.dictionary.geom, system.y,
                          max_iters=offgrid_iters, los_index=None)
    return reconstruct(system.dictionary.geom, est)[:, 0]


def estimate_ris_user_at_ris(rec, pilots, sched, ris_dict, solver="gamp",
                             sparsity=3, cfg=None, offgrid=True, offgrid_iters=10):
    """Per-user RIS-side estimation of the RIS-user channels (one RIS).

    No dictionary anchor applies (user locations are unknown), so every
    recovered path is refined.  Returns an L x U ChannelEstimate.
    """
    num_users = pilots.num_users
    h_hat = np.zeros((ris_dict.atoms.shape[0], num_users), dtype=complex)
    for u in range(num_users):
        system = protocol.assemble_h_at_ris(rec, pilots, sched, ris_dict, u)
        h_hat[:, u] = _solve_vector_system(system, solver, sparsity, cfg,
                                           offgrid, offgrid_iters)
    return ChannelEstimate(value=h_hat, source="estimated")


def _los_position(support):
    """Index of the anchored atom (grid point 0) inside a support, if any."""
    hits = np.flatnonzero(support == 0)
    return int(hits[0]) if len(hits) else None


def _recover_bilinear(system, framework, solver, sparsity, cfg,
                      offgrid=False, offgrid_iters=10):
    """Recover the channel matrix behind a BilinearSystem.

    svd_mmv optionally refines both factors off-grid (anchored atoms stay
    put); the benchmark frameworks are on-grid by construction.
    """
    dict_l, dict_r = system.dict_left, system.dict_right
    if framework == "svd_mmv":
        split = split_via_svd(system.y, sparsity)
        factors = recover_factors(split, system.phi_left, system.phi_right,
                                  solver, sparsity, cfg)
        sides = []
        for est, mix, dic, e in ((factors.est1, system.mix_left, dict_l, split.e1),
                                 (factors.est2, system.mix_right, dict_r, split.e2)):
            attach_grid(est, dic)
            if offgrid:
                los = _los_position(est.support) if dic.anchor is not None else None
                est = offgrid_run(est, mix, dic.geom, e, max_iters=offgrid_iters,
                                  los_index=los)
            sides.append(reconstruct(dic.geom, est))
        return sides[0] @ sides[1].conj().T
    if framework in ("svd_cs", "kronecker"):
        if offgrid:
            raise ValueError(f"off-grid refinement is not defined for {framework}")
        delta = baseline_solve(system.y, system.phi_left, system.phi_right,
                               framework, solver, sparsity, cfg)
        return dict_l.atoms @ delta @ dict_r.atoms.conj().T
    raise ValueError(f"unknown framework {framework!r}")


def estimate_bs_ris(rec, pilots, sched, bs_dict, ris_dict, h_hat,
                    framework="svd_mmv", solver="gamp", sparsity=3, cfg=None,
                    offgrid=True, offgrid_iters=10):
    """BS-RIS channel from the multi-user stacked system of one RIS."""
    h_hat = _require_tagged("h_hat", h_hat)
    system = protocol.assemble_f_mae(rec, pilots, sched, bs_dict, ris_dict,
                                     h_hat.value)
    f = _recover_bilinear(system, framework, solver, sparsity, cfg,
                          offgrid, offgrid_iters)
    return ChannelEstimate(value=f, source="estimated")


def estimate_inter_ris(rec, pilots, sched, ris2_dict, ris1_dict,
                       f1_hat, f2_hat, h1_hat, h2_hat,
                       framework="svd_mmv", solver="gamp", sparsity=3, cfg=None,
                       offgrid=True, offgrid_iters=10):
    """Inter-RIS channel from the double-reflection stage.

    All four auxiliary estimates must be provenance-tagged; the
    single-reflection signals are removed with (f1, h1) and (f2, h2) and
    the sensing operands are built from f2 and the stacked h1 matrix.
    """
    f1_hat = _require_tagged("f1_hat", f1_hat)
    f2_hat = _require_tagged("f2_hat", f2_hat)
    h1_hat = _require_tagged("h1_hat", h1_hat)
    h2_hat = _require_tagged("h2_hat", h2_hat)
    system = protocol.assemble_d_system(rec, pilots, sched, ris2_dict, ris1_dict,
                                        f1_hat.value, f2_hat.value,
                                        h1_hat.value, h2_hat.value)
    d = _recover_bilinear(system, framework, solver, sparsity, cfg,
                          offgrid, offgrid_iters)
    return ChannelEstimate(value=d, source="estimated")


def estimate_small_timescale(rec, pilots, sched, ris_dict, f_hat,
                             solver="gamp", sparsity=3, cfg=None,
                             offgrid=True, offgrid_iters=10):
    """RIS-user channels re-estimated at the BS through a known BS-RIS link."""
    f_hat = _require_tagged("f_hat", f_hat)
    num_users = pilots.num_users
    h_hat = np.zeros((ris_dict.atoms.shape[0], num_users), dtype=complex)
    for u in range(num_users):
        system = protocol.assemble_h_small(rec, pilots, sched, ris_dict,
                                           f_hat.value, u)
        h_hat[:, u] = _solve_vector_system(system, solver, sparsity, cfg,
                                           offgrid, offgrid_iters)
    return ChannelEstimate(value=h_hat, source="estimated")


def anchored_dictionaries(deploy, bs_geom, ris_geom, g_bs, g_ris):
    """All per-stage dictionaries of the pipeline, keyed by what they sense.

    Fixed links get LoS-anchored grids (a different anchor per channel,
    e.g. the RIS 2 dictionary is anchored differently for F2 and for the
    inter-RIS link); the user channels get the uniform grid since no user
    location is assumed known.
    """
    los = los_angles(deploy)

    def anchor(pair):
        return tuple(composite_freqs(*pair)[0])

    gz_b, gy_b = g_bs
    gz_r, gy_r = g_ris
    return {
        "bs_f1": build_dictionary(bs_geom, GridSpec(gz_b, gy_b, anchor(los.bs_to_ris[0]))),
        "bs_f2": build_dictionary(bs_geom, GridSpec(gz_b, gy_b, anchor(los.bs_to_ris[1]))),
        "ris_f1": build_dictionary(ris_geom, GridSpec(gz_r, gy_r, anchor(los.ris_from_bs[0]))),
        "ris_f2": build_dictionary(ris_geom, GridSpec(gz_r, gy_r, anchor(los.ris_from_bs[1]))),
        "ris_d_rx": build_dictionary(ris_geom, GridSpec(gz_r, gy_r, anchor(los.ris2_to_ris1))),
        "ris_d_tx": build_dictionary(ris_geom, GridSpec(gz_r, gy_r, anchor(los.ris1_to_ris2))),
        "ris_user": build_dictionary(ris_geom, GridSpec(gz_r, gy_r)),
    }
