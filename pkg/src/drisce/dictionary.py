"""Beamspace dictionaries on uniform and line-of-sight-anchored angle grids.

A dictionary collects UPA steering vectors sampled on a per-axis grid of
composite spatial frequencies.  The anchored variant shifts the grid so a
known direction (e.g. the geometric LoS of a fixed link) is exactly the
first grid point, which removes basis mismatch for that path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import steering_matrix


@dataclass(frozen=True)
class GridSpec:
    """Per-axis grid sizes and an optional (x1, x2) anchor pair."""

    g_z: int
    g_y: int
    los_anchor: tuple | None = None

    def __post_init__(self):
        if self.g_z < 1 or self.g_y < 1:
            raise ValueError("grid sizes must be positive")
        if self.los_anchor is not None:
            for x in self.los_anchor:
                if not (-1.0 < x <= 1.0):
                    raise ValueError("anchor components must lie in (-1, 1]")

    @property
    def num_atoms(self):
        return self.g_z * self.g_y


@dataclass(frozen=True)
class Dictionary:
    """Steering atoms (N x G) and the grid frequencies behind each column.

    For an anchored dictionary, atom 0 sits exactly on the anchor pair.
    """

    atoms: np.ndarray
    grid_z: np.ndarray
    grid_y: np.ndarray
    geom: object
    anchor: tuple | None = None

    @property
    def num_atoms(self):
        return self.atoms.shape[1]

    @property
    def grid(self):
        """Per-atom (x1, x2) pairs, shape (G, 2), z index outer."""
        gz = np.repeat(self.grid_z, len(self.grid_y))
        gy = np.tile(self.grid_y, len(self.grid_z))
        return np.stack([gz, gy], axis=1)


def los_aided_grid(g, anchor):
    """Anchor-shifted frequency grid {wrap(anchor + 2k/G)}, k = 0..G-1.

    Values above 1 wrap by -2 so everything stays in (-1, 1]; the anchor
    itself is grid point 0.
    """
    if g < 1:
        raise ValueError("grid size must be at least 1")
    if not (-1.0 < anchor <= 1.0):
        raise ValueError("anchor must lie in (-1, 1]")
    pts = anchor + 2.0 * np.arange(g) / g
    pts[pts > 1.0] -= 2.0
    return pts


def uniform_grid(g):
    """Critical DFT grid; the -1 endpoint is reported as its alias +1."""
    return los_aided_grid(g, 1.0)


def build_dictionary(geom, spec):
    """Steering dictionary over the per-axis grids selected by ``spec``."""
    if spec.los_anchor is None:
        grid_z = uniform_grid(spec.g_z)
        grid_y = uniform_grid(spec.g_y)
    else:
        grid_z = los_aided_grid(spec.g_z, spec.los_anchor[0])
        grid_y = los_aided_grid(spec.g_y, spec.los_anchor[1])
    gz = np.repeat(grid_z, spec.g_y)
    gy = np.tile(grid_y, spec.g_z)
    atoms = steering_matrix(geom, np.stack([gz, gy], axis=1))
    return Dictionary(atoms=atoms, grid_z=grid_z, grid_y=grid_y, geom=geom,
                      anchor=spec.los_anchor)


def square_grid_spec(num_atoms, anchor=None):
    """Split a total atom budget across the two axes, square when possible."""
    g_z = int(np.sqrt(num_atoms))
    while num_atoms % g_z:
        g_z -= 1
    return GridSpec(g_z=g_z, g_y=num_atoms // g_z, los_anchor=anchor)
