"""Uplink pilot training: pilots, reflection schedules, received signals.

The uplink runs in sub-frames of T symbols.  Users transmit mutually
orthogonal pilot sequences while the RISs hold one reflection pattern per
sub-frame; the single-RF-chain RIS combines its received snapshot with the
same pattern it reflects with.  Assembly helpers turn despread records into
the linear / bilinear measurement systems consumed by the sparse solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STAGES = ("ris1_rx", "ris2_rx", "bs_rx_single_1", "bs_rx_single_2", "bs_rx_double")


def dbm_to_mw(dbm):
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class PilotBook:
    """T x U matrix of per-user pilot columns with S^H S = power*T*I."""

    S: np.ndarray
    power: float

    @property
    def num_users(self):
        return self.S.shape[1]

    @property
    def num_symbols(self):
        return self.S.shape[0]


def gen_pilots(num_users, num_symbols, power_dbm):
    """Scaled DFT pilot columns, s_u[t] = sigma_p * exp(-2j*pi*t*u/T)."""
    if num_symbols < num_users:
        raise ValueError("need at least as many symbols as users (T >= U)")
    power = dbm_to_mw(power_dbm)
    t = np.arange(num_symbols)[:, None]
    u = np.arange(num_users)[None, :]
    s = np.sqrt(power) * np.exp(-2j * np.pi * t * u / num_symbols)
    return PilotBook(S=s, power=power)


@dataclass(frozen=True)
class ReflectionSchedule:
    """Unit-modulus reflection columns for both RISs over Q sub-frames.

    In paired mode the Q = n_x * n_y sub-frames enumerate the product of
    n_x RIS-1 patterns (constant along each block) with n_y RIS-2 patterns
    (cycling inside each block); sub-frame q maps to (x, y) = divmod(q, n_y).
    """

    v1: np.ndarray
    v2: np.ndarray
    pairing: tuple | None = None

    @property
    def num_subframes(self):
        return self.v1.shape[1]

    def block_v1(self, x):
        n_y = self.pairing[1]
        return self.v1[:, x * n_y]

    def block_v2(self, y):
        return self.v2[:, y]


def _unit_phases(rng, shape):
    return np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size=shape))


def gen_reflection_schedule(rng, num_elements, num_subframes, pairing=None):
    """Draw i.i.d. uniform-phase schedules for both RISs.

    pairing=(n_x, n_y) builds the blocked product schedule used for the
    inter-RIS channel; it requires num_subframes == n_x * n_y.
    """
    if pairing is None:
        v1 = _unit_phases(rng, (num_elements, num_subframes))
        v2 = _unit_phases(rng, (num_elements, num_subframes))
        return ReflectionSchedule(v1=v1, v2=v2)
    n_x, n_y = pairing
    if num_subframes != n_x * n_y:
        raise ValueError("paired mode needs num_subframes == n_x * n_y")
    base1 = _unit_phases(rng, (num_elements, n_x))
    base2 = _unit_phases(rng, (num_elements, n_y))
    v1 = np.repeat(base1, n_y, axis=1)
    v2 = np.tile(base2, (1, n_x))
    return ReflectionSchedule(v1=v1, v2=v2, pairing=(n_x, n_y))


@dataclass
class RxRecord:
    """Raw received samples of one training stage.

    ris stages fill ``y_ris`` (Q x T, one combined row per sub-frame); BS
    stages fill ``y_bs`` (Q x J x T).
    """

    stage: str
    noise_power: float
    y_ris: np.ndarray | None = None
    y_bs: np.ndarray | None = None

    @property
    def num_subframes(self):
        arr = self.y_ris if self.y_ris is not None else self.y_bs
        return arr.shape[0]


def _noise(rng, shape, var):
    if var == 0:
        return np.zeros(shape, dtype=complex)
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_uplink(chan, pilots, sched, stage, rng, noise_power=0.0):
    """Simulate one training stage over the whole schedule.

    The single-reflection stages model time division (the other RIS is
    off); "bs_rx_double" superposes both single reflections and the
    double-reflection path through the inter-RIS channel.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    s_h = pilots.S.conj().T                      # U x T, rows s_u^H
    q_n = sched.num_subframes
    if stage in ("ris1_rx", "ris2_rx"):
        i = 0 if stage == "ris1_rx" else 1
        v = sched.v1 if i == 0 else sched.v2     # L x Q
        h_mat = chan.h[i].T                      # L x U
        signal = (v.conj().T @ h_mat) @ s_h      # Q x T
        noise = _noise(rng, (q_n, h_mat.shape[0], pilots.num_symbols), noise_power)
        combined = np.einsum("lq,qlt->qt", v.conj(), noise)
        return RxRecord(stage=stage, noise_power=noise_power, y_ris=signal + combined)

    f = {"bs_rx_single_1": chan.F1, "bs_rx_single_2": chan.F2}.get(stage)
    if stage == "bs_rx_double":
        per_q = (np.einsum("jl,lq,ul->quj", chan.F1, sched.v1, chan.h[0])
                 + np.einsum("jl,lq,ul->quj", chan.F2, sched.v2, chan.h[1])
                 + np.einsum("jl,lq,lk,kq,uk->quj", chan.F2, sched.v2, chan.D,
                             sched.v1, chan.h[0]))
    else:
        i = 0 if stage == "bs_rx_single_1" else 1
        v = sched.v1 if i == 0 else sched.v2
        per_q = np.einsum("jl,lq,ul->quj", f, v, chan.h[i])
    y = per_q.transpose(0, 2, 1) @ s_h           # Q x J x T
    y += _noise(rng, y.shape, noise_power)
    return RxRecord(stage=stage, noise_power=noise_power, y_bs=y)


def despread(rec, pilots, user):
    """Per-sub-frame matched filtering against user ``user``'s pilot.

    Returns a length-Q vector for RIS records or a Q x J matrix for BS
    records; noiseless records yield the user's signal term exactly.
    """
    if not (0 <= user < pilots.num_users):
        raise IndexError("user index out of range")
    scale = 1.0 / (pilots.power * pilots.num_symbols)
    s_u = pilots.S[:, user]
    if rec.y_ris is not None:
        return scale * (rec.y_ris @ s_u)
    return scale * (rec.y_bs @ s_u)


@dataclass
class LinearSystem:
    """Sparse recovery instance y ~ (mix @ dictionary.atoms) @ coeffs.

    ``mix`` is the measurement part in front of the steering dictionary,
    kept separate because off-grid refinement needs it on its own.
    """

    y: np.ndarray
    mix: np.ndarray
    dictionary: object
    noise_var: float = 0.0

    @property
    def phi(self):
        return self.mix @ self.dictionary.atoms


@dataclass
class BilinearSystem:
    """Bilinear instance Y ~ PhiL @ Delta @ PhiR^H with factored sides."""

    y: np.ndarray
    mix_left: np.ndarray
    dict_left: object
    mix_right: np.ndarray
    dict_right: object
    noise_var: float = 0.0

    @property
    def phi_left(self):
        return self.mix_left @ self.dict_left.atoms

    @property
    def phi_right(self):
        return self.mix_right @ self.dict_right.atoms


def assemble_h_at_ris(rec, pilots, sched, ris_dict, user):
    """RIS-side per-user system: despread rows against V^H A_L."""
    if rec.y_ris is None:
        raise ValueError("needs a RIS-side record")
    v = sched.v1 if rec.stage == "ris1_rx" else sched.v2
    y = despread(rec, pilots, user)[:, None]
    mix = v.conj().T
    n_elem = v.shape[0]
    noise_var = n_elem * rec.noise_power / (pilots.power * pilots.num_symbols)
    return LinearSystem(y=y, mix=mix, dictionary=ris_dict, noise_var=noise_var)


def assemble_f_mae(rec, pilots, sched, bs_dict, ris_dict, h_hat):
    """Multi-user stacked BS-RIS system, Y ~ A_B Xi (C A_L)^H.

    h_hat is the L x U matrix of (estimated) RIS-user channels of the
    active RIS; user blocks are concatenated along the measurement axis.
    """
    if rec.y_bs is None:
        raise ValueError("needs a BS-side record")
    if h_hat is None:
        raise ValueError("F estimation needs the RIS-user channel estimates")
    v = sched.v1 if rec.stage.endswith("_1") else sched.v2
    num_users = h_hat.shape[1]
    y_blocks = [despread(rec, pilots, u).T for u in range(num_users)]   # J x Q each
    y = np.concatenate(y_blocks, axis=1)                                # J x QU
    mix_right = np.concatenate([v.conj().T * h_hat[:, u].conj()[None, :]
                                for u in range(num_users)], axis=0)     # QU x L
    mix_left = np.eye(bs_dict.atoms.shape[0], dtype=complex)
    noise_var = rec.noise_power / (pilots.power * pilots.num_symbols)
    return BilinearSystem(y=y, mix_left=mix_left, dict_left=bs_dict,
                          mix_right=mix_right, dict_right=ris_dict,
                          noise_var=noise_var)


def assemble_d_system(rec, pilots, sched, ris2_dict, ris1_dict,
                      f1_hat, f2_hat, h1_hat, h2_hat):
    """Inter-RIS system from the double-reflection stage.

    Single-reflection contributions are removed with the supplied
    estimates, then sub-frames are arranged into the (n_y*J) x (n_x*U)
    block observation Y ~ (C_2 A_L2) Delta (C_1 A_L1)^H.
    """
    for name, val in (("f1_hat", f1_hat), ("f2_hat", f2_hat),
                      ("h1_hat", h1_hat), ("h2_hat", h2_hat)):
        if val is None:
            raise ValueError(f"D estimation needs prior estimate {name}")
    if rec.y_bs is None or sched.pairing is None:
        raise ValueError("needs a double-reflection record with a paired schedule")
    n_x, n_y = sched.pairing
    num_users = h1_hat.shape[1]
    n_bs = rec.y_bs.shape[1]

    despread_all = np.stack([despread(rec, pilots, u) for u in range(num_users)], axis=2)
    single1 = np.einsum("jl,lq,lu->qju", f1_hat, sched.v1, h1_hat)
    single2 = np.einsum("jl,lq,lu->qju", f2_hat, sched.v2, h2_hat)
    resid = despread_all - single1 - single2                      # Q x J x U

    y = np.zeros((n_y * n_bs, n_x * num_users), dtype=complex)
    for x in range(n_x):
        for yy in range(n_y):
            q = x * n_y + yy
            y[yy * n_bs:(yy + 1) * n_bs, x * num_users:(x + 1) * num_users] = resid[q]

    mix_left = np.concatenate([f2_hat * sched.block_v2(yy)[None, :]
                               for yy in range(n_y)], axis=0)     # nY*J x L
    mix_right = np.concatenate([h1_hat.conj().T * sched.block_v1(x).conj()[None, :]
                                for x in range(n_x)], axis=0)     # nX*U x L
    noise_var = rec.noise_power / (pilots.power * pilots.num_symbols)
    return BilinearSystem(y=y, mix_left=mix_left, dict_left=ris2_dict,
                          mix_right=mix_right, dict_right=ris1_dict,
                          noise_var=noise_var)


def assemble_h_small(rec, pilots, sched, ris_dict, f_hat, user):
    """BS-side small-timescale system, stacked over sub-frames.

    The sensing matrix gains a factor J in measurement count over the
    RIS-side system because every BS antenna observes each sub-frame.
    """
    if f_hat is None:
        raise ValueError("small-timescale estimation needs the BS-RIS estimate")
    if rec.y_bs is None:
        raise ValueError("needs a BS-side record")
    v = sched.v1 if rec.stage.endswith("_1") else sched.v2
    y = despread(rec, pilots, user).reshape(-1, 1)                # QJ x 1
    q_n = rec.num_subframes
    mix = np.concatenate([f_hat * v[:, q][None, :] for q in range(q_n)], axis=0)
    noise_var = rec.noise_power / (pilots.power * pilots.num_symbols)
    return LinearSystem(y=y, mix=mix, dictionary=ris_dict, noise_var=noise_var)
