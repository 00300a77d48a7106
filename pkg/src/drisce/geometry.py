"""Geometric mmWave channel synthesis for the double-RIS uplink.

All arrays are uniform planar arrays (UPAs) lying in their local y-z plane
and facing the +x half-space.  Elevation is the polar angle measured from
the +z axis, azimuth is measured in the x-y plane from the +x axis, so the
boresight direction is (elevation, azimuth) = (pi/2, 0).

A channel matrix is a weighted sum of steering-vector outer products.  The
steering vector is parameterised by the pair of composite spatial
frequencies (cos(ele), sin(ele)*sin(azi)); with half-wavelength spacing the
2d/lambda factor is 1 and both composites live in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# 28 GHz path-loss constants: PL = a1 + 10*a2*log10(d) + N(0, shadow_sigma) [dB]
LOS_PATHLOSS_A1 = 61.4
LOS_PATHLOSS_A2 = 2.0
LOS_SHADOW_SIGMA = 5.8
NLOS_PATHLOSS_A1 = 72.0
NLOS_PATHLOSS_A2 = 2.92
NLOS_SHADOW_SIGMA = 8.7

# NLoS scattering coverage for random angle draws (front half-space).
NLOS_ELEV_RANGE = (np.pi / 4, 3 * np.pi / 4)
NLOS_AZIM_RANGE = (-np.pi / 2, np.pi / 2)


@dataclass(frozen=True)
class UpaGeometry:
    """Uniform planar array with n_y x n_z elements on a y-z grid."""

    n_y: int
    n_z: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.n_y < 1 or self.n_z < 1:
            raise ValueError("array dimensions must be positive")
        if self.spacing_over_wavelength <= 0:
            raise ValueError("element spacing must be positive")

    @property
    def size(self):
        return self.n_y * self.n_z


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path loss with lognormal shadowing, one LoS/NLoS class."""

    a1: float
    a2: float
    shadow_sigma: float = 0.0

    def __post_init__(self):
        if self.a2 <= 0:
            raise ValueError("path-loss exponent a2 must be positive")
        if self.shadow_sigma < 0:
            raise ValueError("shadow_sigma must be nonnegative")


LOS_PATHLOSS = PathLossParams(LOS_PATHLOSS_A1, LOS_PATHLOSS_A2, LOS_SHADOW_SIGMA)
NLOS_PATHLOSS = PathLossParams(NLOS_PATHLOSS_A1, NLOS_PATHLOSS_A2, NLOS_SHADOW_SIGMA)


@dataclass(frozen=True)
class Deployment:
    """Node positions in metres plus the radial ring users are drawn from."""

    bs_pos: tuple
    ris1_pos: tuple
    ris2_pos: tuple
    user_ring_min: float = 1.0
    user_ring_max: float = 30.0

    def __post_init__(self):
        pts = [np.asarray(p, dtype=float) for p in (self.bs_pos, self.ris1_pos, self.ris2_pos)]
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                if np.allclose(pts[a], pts[b]):
                    raise ValueError("deployment positions must be pairwise distinct")
        if not (0 < self.user_ring_min <= self.user_ring_max):
            raise ValueError("require 0 < user_ring_min <= user_ring_max")


@dataclass
class PathSet:
    """Gains and angles of the propagation paths behind one channel.

    ``departure_*`` angles belong to the array on the row side of the
    synthesized matrix, ``arrival_*`` to the column side.  Channel vectors
    (RIS-user) only have the departure side; their arrival fields are None.
    ``los_index`` marks the path pinned to the geometric line of sight.
    """

    gains: np.ndarray
    departure_elev: np.ndarray
    departure_azim: np.ndarray
    arrival_elev: np.ndarray | None = None
    arrival_azim: np.ndarray | None = None
    los_index: int | None = None

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=complex)
        p = self.gains.shape[0]
        if p < 1:
            raise ValueError("a path set needs at least one path")
        for name in ("departure_elev", "departure_azim", "arrival_elev", "arrival_azim"):
            vec = getattr(self, name)
            if vec is None:
                continue
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (p,):
                raise ValueError(f"{name} must have one entry per path")
            setattr(self, name, vec)
        if self.los_index is not None and not (0 <= self.los_index < p):
            raise ValueError("los_index out of range")

    @property
    def num_paths(self):
        return self.gains.shape[0]

    def departure_freqs(self):
        """Composite spatial frequencies (cos ele, sin ele * sin azi), (P, 2)."""
        return composite_freqs(self.departure_elev, self.departure_azim)

    def arrival_freqs(self):
        if self.arrival_elev is None:
            raise ValueError("this path set has no arrival side")
        return composite_freqs(self.arrival_elev, self.arrival_azim)


@dataclass
class ChannelRealization:
    """One coherent draw of all channels plus the path sets behind them.

    F1, F2 are J x L (BS rows, RIS columns), D is L x L (RIS 2 rows,
    RIS 1 columns) and h has shape (2, U, L) indexed by (RIS, user).
    """

    F1: np.ndarray
    F2: np.ndarray
    D: np.ndarray
    h: np.ndarray
    path_sets: dict = field(default_factory=dict)
    user_positions: np.ndarray | None = None

    @property
    def num_users(self):
        return self.h.shape[1]


def composite_freqs(elev, azim):
    """Map (elevation, azimuth) pairs to the UPA spatial-frequency pair."""
    elev = np.atleast_1d(np.asarray(elev, dtype=float))
    azim = np.atleast_1d(np.asarray(azim, dtype=float))
    return np.stack([np.cos(elev), np.sin(elev) * np.sin(azim)], axis=-1)


def steering_vector(geom, x1, x2):
    """UPA steering vector at spatial frequencies (x1, x2).

    x1 drives the z-axis phase ramp (outer Kronecker factor), x2 the y-axis
    ramp (inner factor); the result has unit Euclidean norm.
    """
    scale = geom.spacing_over_wavelength / 0.5
    az = np.exp(1j * np.pi * scale * x1 * np.arange(geom.n_z))
    ay = np.exp(1j * np.pi * scale * x2 * np.arange(geom.n_y))
    return np.kron(az, ay) / np.sqrt(geom.size)


def steering_matrix(geom, freqs):
    """Stack steering vectors for an (P, 2) array of frequency pairs, N x P."""
    freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
    scale = geom.spacing_over_wavelength / 0.5
    az = np.exp(1j * np.pi * scale * np.outer(np.arange(geom.n_z), freqs[:, 0]))
    ay = np.exp(1j * np.pi * scale * np.outer(np.arange(geom.n_y), freqs[:, 1]))
    # columnwise Kronecker product (Khatri-Rao), z outer / y inner
    out = az[:, None, :] * ay[None, :, :]
    return out.reshape(geom.size, freqs.shape[0]) / np.sqrt(geom.size)


def spherical_direction(src, dst):
    """(elevation, azimuth) of the segment src -> dst in the shared frame."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    d = dst - src
    r = np.linalg.norm(d)
    if r == 0:
        raise ValueError("coincident positions have no direction")
    elev = np.arccos(np.clip(d[2] / r, -1.0, 1.0))
    azim = np.arctan2(d[1], d[0])
    return float(elev), float(azim)


@dataclass(frozen=True)
class LosAngles:
    """Line-of-sight (elevation, azimuth) pairs of the three fixed links."""

    bs_to_ris: tuple     # departure at the BS toward RIS i, i in {0, 1}
    ris_from_bs: tuple   # arrival at RIS i looking back at the BS
    ris2_to_ris1: tuple  # inter-RIS link seen from RIS 2
    ris1_to_ris2: tuple  # inter-RIS link seen from RIS 1


def los_angles(deploy):
    """Geometric LoS angles of the BS-RIS and RIS-RIS links."""
    bs, r1, r2 = deploy.bs_pos, deploy.ris1_pos, deploy.ris2_pos
    return LosAngles(
        bs_to_ris=(spherical_direction(bs, r1), spherical_direction(bs, r2)),
        ris_from_bs=(spherical_direction(r1, bs), spherical_direction(r2, bs)),
        ris2_to_ris1=spherical_direction(r2, r1),
        ris1_to_ris2=spherical_direction(r1, r2),
    )


def path_loss_db(distance, params, rng=None):
    """Log-distance path loss in dB, optionally with a shadowing draw."""
    pl = params.a1 + 10.0 * params.a2 * np.log10(distance)
    if rng is not None and params.shadow_sigma > 0:
        pl += params.shadow_sigma * rng.standard_normal()
    return pl


def sample_path_gain(rng, distance, params, pin_aleph=None, budget_offset_db=0.0):
    """Draw one path gain ~ CN(0, aleph * 10^(-PL/10)).

    The lognormal power factor aleph = K1^1.8 * 10^(K2/10) with
    K1 ~ U(0, 1) and K2 ~ N(0, 16) follows the 28 GHz measurement model;
    ``pin_aleph`` overrides the draw (used to pin variances in tests).
    ``budget_offset_db`` credits link gains the bare path-loss formula
    omits (antenna/element gains, calibration); it defaults to zero.
    """
    pl = path_loss_db(distance, params, rng) - budget_offset_db
    if pin_aleph is None:
        k1 = rng.uniform(0.0, 1.0)
        k2 = 4.0 * rng.standard_normal()
        aleph = k1 ** 1.8 * 10.0 ** (0.1 * k2)
    else:
        aleph = pin_aleph
    var = aleph * 10.0 ** (-0.1 * pl)
    return np.sqrt(var / 2.0) * (rng.standard_normal() + 1j * rng.standard_normal())


def _uniform_angles(rng, n):
    elev = rng.uniform(*NLOS_ELEV_RANGE, size=n)
    azim = rng.uniform(*NLOS_AZIM_RANGE, size=n)
    return elev, azim


def draw_path_set(rng, link, num_paths, deploy, pl_los=LOS_PATHLOSS,
                  pl_nlos=NLOS_PATHLOSS, user_pos=None, pin_aleph=None,
                  budget_offset_db=0.0, shared_class=False):
    """Draw gains and angles for one channel.

    link selects the endpoints: "bs_ris1", "bs_ris2", "ris_ris" (first path
    pinned to the geometric LoS, remaining paths NLoS) or "ris1_user",
    "ris2_user" (all paths drawn randomly; requires ``user_pos``).

    With ``shared_class`` the large-scale quantities (path-loss class,
    shadowing and the lognormal factor) are drawn once for the link and
    every path gain is i.i.d. complex Gaussian at that common variance;
    the default instead classes each path individually (first path LoS,
    the rest NLoS) with independent large-scale draws per path.
    """
    if num_paths < 1:
        raise ValueError("num_paths must be at least 1")
    pos = {"bs": np.asarray(deploy.bs_pos, float),
           "ris1": np.asarray(deploy.ris1_pos, float),
           "ris2": np.asarray(deploy.ris2_pos, float)}

    if link in ("bs_ris1", "bs_ris2"):
        row_p, col_p = pos["bs"], pos["ris1" if link == "bs_ris1" else "ris2"]
        two_sided, pin_los = True, True
    elif link == "ris_ris":
        row_p, col_p = pos["ris2"], pos["ris1"]
        two_sided, pin_los = True, True
    elif link in ("ris1_user", "ris2_user"):
        if user_pos is None:
            raise ValueError(f"{link} needs a user position")
        row_p, col_p = pos["ris1" if link == "ris1_user" else "ris2"], np.asarray(user_pos, float)
        two_sided, pin_los = False, False
    else:
        raise ValueError(f"unknown link class {link!r}")

    distance = np.linalg.norm(col_p - row_p)
    dep_e, dep_a = _uniform_angles(rng, num_paths)
    arr_e, arr_a = _uniform_angles(rng, num_paths)
    los_index = None
    if pin_los:
        los_index = 0
        dep_e[0], dep_a[0] = spherical_direction(row_p, col_p)
        arr_e[0], arr_a[0] = spherical_direction(col_p, row_p)

    if shared_class:
        # deterministic large-scale gain per link (LoS-class path loss at
        # the endpoint distance), i.i.d. small-scale path gains
        pl = pl_los.a1 + 10.0 * pl_los.a2 * np.log10(distance)
        var = 10.0 ** (-0.1 * (pl - budget_offset_db))
        gains = np.sqrt(var / 2.0) * (rng.standard_normal(num_paths)
                                      + 1j * rng.standard_normal(num_paths))
    else:
        # per-path classes: the first (LoS) path keeps the LoS constants,
        # the rest use the NLoS class, all with independent draws
        classes = [pl_nlos] * num_paths
        classes[0] = pl_los
        gains = np.array([sample_path_gain(rng, distance, classes[p], pin_aleph,
                                           budget_offset_db)
                          for p in range(num_paths)])
    return PathSet(
        gains=gains,
        departure_elev=dep_e,
        departure_azim=dep_a,
        arrival_elev=arr_e if two_sided else None,
        arrival_azim=arr_a if two_sided else None,
        los_index=los_index,
    )


def synth_matrix(row_geom, col_geom, paths):
    """Sum of steering outer products, scaled by sqrt(N_row*N_col/P)."""
    p = paths.num_paths
    a_row = steering_matrix(row_geom, paths.departure_freqs())
    a_col = steering_matrix(col_geom, paths.arrival_freqs())
    scale = np.sqrt(row_geom.size * col_geom.size / p)
    return scale * (a_row * paths.gains) @ a_col.conj().T


def synth_vector(geom, paths):
    """Channel vector sum, scaled by sqrt(N/P)."""
    a = steering_matrix(geom, paths.departure_freqs())
    return np.sqrt(geom.size / paths.num_paths) * a @ paths.gains


def synth_channels(bs_geom, ris_geom, path_sets):
    """Assemble a ChannelRealization from per-channel path sets.

    path_sets maps "f1", "f2" -> two-sided PathSet (BS rows, RIS cols),
    "d" -> two-sided PathSet (RIS 2 rows, RIS 1 cols) and "h" -> nested
    list indexed [ris][user] of one-sided PathSets.
    """
    f1 = synth_matrix(bs_geom, ris_geom, path_sets["f1"])
    f2 = synth_matrix(bs_geom, ris_geom, path_sets["f2"])
    d = synth_matrix(ris_geom, ris_geom, path_sets["d"])
    h_sets = path_sets["h"]
    num_users = len(h_sets[0])
    h = np.zeros((2, num_users, ris_geom.size), dtype=complex)
    for i in range(2):
        for u in range(num_users):
            h[i, u] = synth_vector(ris_geom, h_sets[i][u])
    return ChannelRealization(F1=f1, F2=f2, D=d, h=h, path_sets=dict(path_sets))


def draw_user_positions(rng, deploy, num_users):
    """Users uniform on a horizontal ring around RIS 2."""
    center = np.asarray(deploy.ris2_pos, dtype=float)
    radius = rng.uniform(deploy.user_ring_min, deploy.user_ring_max, size=num_users)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=num_users)
    out = np.tile(center, (num_users, 1))
    out[:, 0] += radius * np.cos(angle)
    out[:, 1] += radius * np.sin(angle)
    out[:, 2] = 1.5  # handset height
    return out


def draw_realization(rng, bs_geom, ris_geom, deploy, num_users,
                     paths_f=3, paths_d=3, paths_h=3, budget_offsets=None,
                     shared_class=False):
    """Draw a full channel realization under the stochastic path model.

    ``budget_offsets`` maps link classes ("bs_ris", "ris_ris", "ris_user")
    to dB credits applied on top of the path-loss formula;
    ``shared_class`` selects the one-large-scale-gain-per-link profile.
    """
    off = {"bs_ris": 0.0, "ris_ris": 0.0, "ris_user": 0.0}
    off.update(budget_offsets or {})
    users = draw_user_positions(rng, deploy, num_users)
    sets = {
        "f1": draw_path_set(rng, "bs_ris1", paths_f, deploy,
                            budget_offset_db=off["bs_ris"], shared_class=shared_class),
        "f2": draw_path_set(rng, "bs_ris2", paths_f, deploy,
                            budget_offset_db=off["bs_ris"], shared_class=shared_class),
        "d": draw_path_set(rng, "ris_ris", paths_d, deploy,
                           budget_offset_db=off["ris_ris"], shared_class=shared_class),
        "h": [[draw_path_set(rng, f"ris{i + 1}_user", paths_h, deploy,
                             user_pos=users[u], budget_offset_db=off["ris_user"],
                             shared_class=shared_class)
               for u in range(num_users)] for i in range(2)],
    }
    chan = synth_channels(bs_geom, ris_geom, sets)
    chan.user_positions = users
    return chan
