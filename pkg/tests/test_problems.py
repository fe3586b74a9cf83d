"""Benchmark preset geometry checks."""

import numpy as np
import pytest

from rbto.errors import InvalidParameterError
from rbto.problems import lbeam_grid, mbb_grid


class TestMbbGrid:
    def test_default_shape_and_load(self):
        grid, dof = mbb_grid()
        assert (grid.nx, grid.ny) == (60, 20)
        assert grid.n_active == 1200
        # unit downward load at the top symmetry corner
        assert dof == 2 * grid.node_id(0, 20) + 1
        assert grid.loads[dof] == -1.0
        assert np.count_nonzero(grid.loads) == 1

    def test_supports(self):
        grid, _ = mbb_grid()
        fixed = set(grid.fixed_dofs.tolist())
        # symmetry edge: x-DOFs of every node on x=0
        for iy in range(21):
            dx, dy = grid.dof_ids(0, iy)
            assert dx in fixed
            assert dy not in fixed
        # roller: y-DOF of the outer bottom corner only
        _, dy = grid.dof_ids(60, 0)
        assert dy in fixed
        assert len(fixed) == 22

    def test_all_elements_active(self):
        grid, _ = mbb_grid()
        assert grid.active_mask.all()


class TestLbeamGrid:
    def test_default_shape_and_mask(self):
        grid, dof = lbeam_grid()
        assert (grid.nx, grid.ny) == (60, 60)
        assert grid.n_active == 3600 - 900
        mask = grid.active_mask.reshape(60, 60)
        assert not mask[45, 45]  # upper-right quarter passive
        assert mask[10, 45] and mask[45, 10] and mask[10, 10]

    def test_supports_and_load(self):
        grid, dof = lbeam_grid()
        fixed = set(grid.fixed_dofs.tolist())
        for ix in range(31):  # topmost remaining edge fully fixed
            dx, dy = grid.dof_ids(ix, 60)
            assert dx in fixed and dy in fixed
        assert len(fixed) == 62
        # unit downward load at the midpoint of the lower arm's right edge
        assert dof == 2 * grid.node_id(60, 15) + 1
        assert grid.loads[dof] == -1.0

    def test_alternative_quadrants_guarded(self):
        with pytest.raises(InvalidParameterError):
            lbeam_grid(60, passive_quadrant="lower-left")
        with pytest.raises(InvalidParameterError):
            lbeam_grid(60, passive_quadrant="diagonal")
        with pytest.raises(InvalidParameterError):
            lbeam_grid(61)
