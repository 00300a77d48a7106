"""Uniform and anchored beamspace dictionaries."""

import numpy as np
import pytest

from drisce.dictionary import GridSpec, build_dictionary, los_aided_grid, square_grid_spec, uniform_grid
from drisce.geometry import UpaGeometry, steering_vector


class TestGrids:
    def test_anchor_zero_is_dft_grid(self):
        assert np.allclose(sorted(los_aided_grid(4, 0.0)), [-0.5, 0.0, 0.5, 1.0])
        assert np.allclose(los_aided_grid(4, 0.0), [0.0, 0.5, 1.0, -0.5])

    def test_wrap(self):
        assert np.allclose(los_aided_grid(2, 0.9), [0.9, -0.1], atol=1e-12)

    def test_anchor_member_and_distinct(self):
        grid = los_aided_grid(8, 0.3)
        assert grid[0] == 0.3
        assert len(np.unique(np.round(grid, 12))) == 8

    def test_range(self):
        for anchor in (-0.99, 0.0, 0.37, 1.0):
            grid = los_aided_grid(16, anchor)
            assert np.all(grid > -1.0) and np.all(grid <= 1.0)

    def test_uniform_is_aliased_dft(self):
        grid = uniform_grid(4)
        assert np.allclose(sorted(grid), [-0.5, 0.0, 0.5, 1.0])

    def test_bad_anchor(self):
        with pytest.raises(ValueError):
            los_aided_grid(4, 1.2)
        with pytest.raises(ValueError):
            los_aided_grid(4, -1.0)


class TestDictionary:
    def test_critical_sampling_orthonormal(self):
        geom = UpaGeometry(2, 2)
        d = build_dictionary(geom, GridSpec(g_z=2, g_y=2))
        gram = d.atoms.conj().T @ d.atoms
        assert np.allclose(gram, np.eye(4), atol=1e-12)

    def test_anchored_one_path_exact(self):
        geom = UpaGeometry(4, 4)
        anchor = (0.213, -0.587)
        d = build_dictionary(geom, GridSpec(4, 4, los_anchor=anchor))
        target = steering_vector(geom, *anchor)
        coef, *_ = np.linalg.lstsq(d.atoms, target, rcond=None)
        resid = target - d.atoms @ coef
        assert np.linalg.norm(resid) < 1e-12
        # and the projection concentrates on atom 0
        assert np.argmax(np.abs(coef)) == 0

    def test_column_norms(self):
        geom = UpaGeometry(4, 4)
        rng = np.random.default_rng(2)
        anchor = tuple(rng.uniform(-0.9, 1.0, size=2))
        d = build_dictionary(geom, GridSpec(8, 8, los_anchor=anchor))
        norms = np.linalg.norm(d.atoms, axis=0)
        assert np.max(np.abs(norms - 1.0)) < 1e-12

    def test_atom_grid_association(self):
        geom = UpaGeometry(2, 3)
        d = build_dictionary(geom, GridSpec(3, 2))
        for g in range(d.num_atoms):
            x1, x2 = d.grid[g]
            assert np.allclose(d.atoms[:, g], steering_vector(geom, x1, x2))

    def test_square_split(self):
        spec = square_grid_spec(16)
        assert (spec.g_z, spec.g_y) == (4, 4)
        spec = square_grid_spec(12)
        assert spec.g_z * spec.g_y == 12

    def test_vcr_single_nonzero_on_anchor(self):
        # a channel whose LoS frequencies equal the anchors hits exactly one
        # atom pair of the two-sided representation
        geom_l = UpaGeometry(2, 2)
        geom_r = UpaGeometry(2, 2)
        anchor_l = (0.4, 0.15)
        anchor_r = (-0.3, 0.77)
        dl = build_dictionary(geom_l, GridSpec(2, 2, los_anchor=anchor_l))
        dr = build_dictionary(geom_r, GridSpec(2, 2, los_anchor=anchor_r))
        chan = np.outer(steering_vector(geom_l, *anchor_l),
                        steering_vector(geom_r, *anchor_r).conj())
        coef, *_ = np.linalg.lstsq(np.kron(dr.atoms.conj(), dl.atoms),
                                   chan.reshape(-1, order="F"), rcond=None)
        xi = coef.reshape(dl.num_atoms, dr.num_atoms, order="F")
        resid = chan - dl.atoms @ xi @ dr.atoms.conj().T
        assert np.linalg.norm(resid) / np.linalg.norm(chan) < 1e-10
        mags = np.abs(xi)
        assert mags[0, 0] > 0.999
        assert np.sum(mags > 1e-6) == 1
