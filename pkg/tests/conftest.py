"""Shared fixtures: planted on-grid channel realizations for pipeline tests."""

import numpy as np

from drisce.dictionary import los_aided_grid, uniform_grid
from drisce.estimators import anchored_dictionaries  # noqa: F401  (re-export)
from drisce.geometry import (
    PathSet,
    composite_freqs,
    los_angles,
    synth_channels,
)


def freqs_to_angles(x1, x2):
    """Invert (cos e, sin e sin a) for grid points inside the unit disk."""
    elev = np.arccos(x1)
    s = np.sin(elev)
    if s == 0:
        raise ValueError("poles are not representable")
    return elev, np.arcsin(np.clip(x2 / s, -1.0, 1.0))


def _disk_grid_indices(grid_z, grid_y, margin=1e-9):
    """Atom indices whose frequency pair lies strictly inside the unit disk."""
    ok = []
    for iz, x1 in enumerate(grid_z):
        for iy, x2 in enumerate(grid_y):
            if x1 ** 2 + x2 ** 2 < 1.0 - margin:
                ok.append((iz, iy))
    return ok


def _pick_distinct(rng, candidates, count, forbid_z=(), forbid_y=()):
    """Pick grid pairs with pairwise-distinct rows and columns."""
    picks = []
    used_z, used_y = set(forbid_z), set(forbid_y)
    order = rng.permutation(len(candidates))
    for idx in order:
        iz, iy = candidates[idx]
        if iz in used_z or iy in used_y:
            continue
        picks.append((iz, iy))
        used_z.add(iz)
        used_y.add(iy)
        if len(picks) == count:
            return picks
    raise RuntimeError("not enough disk-interior grid points")


def _ongrid_pathset(rng, dep_grid, arr_grid, num_paths, pin_first, gain_scale=1.0):
    """Two-sided path set with every path exactly on the given axis grids."""
    dep_candidates = _disk_grid_indices(dep_grid[0], dep_grid[1])
    arr_candidates = _disk_grid_indices(arr_grid[0], arr_grid[1])
    if pin_first:
        dep_picks = [(0, 0)] + _pick_distinct(rng, dep_candidates, num_paths - 1,
                                              forbid_z=(0,), forbid_y=(0,))
        arr_picks = [(0, 0)] + _pick_distinct(rng, arr_candidates, num_paths - 1,
                                              forbid_z=(0,), forbid_y=(0,))
    else:
        dep_picks = _pick_distinct(rng, dep_candidates, num_paths)
        arr_picks = _pick_distinct(rng, arr_candidates, num_paths)

    dep_e, dep_a, arr_e, arr_a = [], [], [], []
    for (dz, dy), (az, ay) in zip(dep_picks, arr_picks):
        e, a = freqs_to_angles(dep_grid[0][dz], dep_grid[1][dy])
        dep_e.append(e)
        dep_a.append(a)
        e, a = freqs_to_angles(arr_grid[0][az], arr_grid[1][ay])
        arr_e.append(e)
        arr_a.append(a)
    gains = gain_scale * (rng.standard_normal(num_paths)
                          + 1j * rng.standard_normal(num_paths)) / np.sqrt(2)
    gains += gain_scale * (0.5 + 0.5j)  # keep every path well away from zero
    return PathSet(gains=gains, departure_elev=np.array(dep_e),
                   departure_azim=np.array(dep_a), arrival_elev=np.array(arr_e),
                   arrival_azim=np.array(arr_a), los_index=0 if pin_first else None)


def _ongrid_vector_pathset(rng, grid, num_paths, gain_scale=1.0):
    candidates = _disk_grid_indices(grid[0], grid[1])
    picks = _pick_distinct(rng, candidates, num_paths)
    elev, azim = [], []
    for iz, iy in picks:
        e, a = freqs_to_angles(grid[0][iz], grid[1][iy])
        elev.append(e)
        azim.append(a)
    gains = gain_scale * ((rng.standard_normal(num_paths)
                           + 1j * rng.standard_normal(num_paths)) / np.sqrt(2)
                          + (0.5 + 0.5j))
    return PathSet(gains=gains, departure_elev=np.array(elev),
                   departure_azim=np.array(azim))


def plant_ongrid_realization(rng, deploy, bs_geom, ris_geom, num_users, num_paths,
                             g_bs, g_ris, gain_scale=1.0):
    """Channel realization whose every path sits on the pipeline's grids.

    Fixed links use the anchored grids (first path on the anchor); user
    channels use the uniform grid.  With zero noise the whole pipeline can
    recover every channel exactly, which is the sanity oracle for the
    estimators.
    """
    los = los_angles(deploy)

    def axis_grids(geom_sizes, anchor_pair):
        gz, gy = geom_sizes
        a = composite_freqs(*anchor_pair)[0]
        return los_aided_grid(gz, a[0]), los_aided_grid(gy, a[1])

    f1 = _ongrid_pathset(rng, axis_grids(g_bs, los.bs_to_ris[0]),
                         axis_grids(g_ris, los.ris_from_bs[0]), num_paths,
                         pin_first=True, gain_scale=gain_scale)
    f2 = _ongrid_pathset(rng, axis_grids(g_bs, los.bs_to_ris[1]),
                         axis_grids(g_ris, los.ris_from_bs[1]), num_paths,
                         pin_first=True, gain_scale=gain_scale)
    d = _ongrid_pathset(rng, axis_grids(g_ris, los.ris2_to_ris1),
                        axis_grids(g_ris, los.ris1_to_ris2), num_paths,
                        pin_first=True, gain_scale=gain_scale)
    uniform = (uniform_grid(g_ris[0]), uniform_grid(g_ris[1]))
    h_sets = [[_ongrid_vector_pathset(rng, uniform, num_paths, gain_scale)
               for _ in range(num_users)] for _ in range(2)]
    return synth_channels(bs_geom, ris_geom,
                          {"f1": f1, "f2": f2, "d": d, "h": h_sets})
