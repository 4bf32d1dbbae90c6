"""Sensitivity-guided augmentation against its matched-budget control."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steepshape.dataset import DomainBox
from steepshape.derivatives import (
    OracleFn,
    polynomial_oracle,
    quadratic_oracle,
    runge_oracle,
    tanh_oracle,
)
from steepshape.tbs import FlatFunctionError, TbsConfig, baseline_augment, tbs_augment

UNIT = DomainBox([-1.0], [1.0])


class TestTbsConfig:
    def test_rejects_bad_budgets_and_designs(self):
        with pytest.raises(ValueError):
            TbsConfig(n_initial=0)
        with pytest.raises(ValueError):
            TbsConfig(n_added=-1)
        with pytest.raises(ValueError):
            TbsConfig(initial_design="sobol")


class TestBudgetAndProvenance:
    @pytest.mark.parametrize("design", ["uniform", "grid"])
    def test_row_budget_and_initial_block(self, design):
        cfg = TbsConfig(n_initial=16, n_added=24, seed=3, initial_design=design)
        f = runge_oracle()
        tbs = tbs_augment(f, UNIT, cfg)
        bs = baseline_augment(f, UNIT, cfg)
        assert len(tbs) == len(bs) == 40
        # the two arms share the initial design row for row, so any metric
        # difference comes from the extra points alone
        assert np.array_equal(tbs.points[:16], bs.points[:16])
        assert not np.array_equal(tbs.points[16:], bs.points[16:])

    def test_labels_come_from_the_oracle(self):
        cfg = TbsConfig(n_initial=8, n_added=8, seed=0)
        f = tanh_oracle(5.0)
        ds = tbs_augment(f, UNIT, cfg)
        assert np.array_equal(ds.labels, f.evaluate(ds.points))

    def test_points_stay_inside_the_domain(self):
        box = DomainBox([-2.0, 0.0], [2.0, 4.0])
        f = quadratic_oracle(0.0, [0.0, 1.0], [[6.0, 0.0], [0.0, 0.5]])
        cfg = TbsConfig(n_initial=32, n_added=50, n_gmm=2, seed=1)
        for augment in (tbs_augment, baseline_augment):
            ds = augment(f, box, cfg)
            assert np.all(box.contains(ds.points))

    def test_zero_added_returns_the_bare_design(self):
        cfg = TbsConfig(n_initial=6, n_added=0, seed=2, initial_design="grid")
        ds = tbs_augment(runge_oracle(), UNIT, cfg)
        assert len(ds) == 6
        assert np.array_equal(ds.points, np.linspace(-1, 1, 6)[:, None])

    def test_fixed_seed_reproduces_the_dataset(self):
        cfg = TbsConfig(n_initial=12, n_added=12, seed=9)
        f = runge_oracle()
        a = tbs_augment(f, UNIT, cfg)
        b = tbs_augment(f, UNIT, cfg)
        assert np.array_equal(a.points, b.points)
        c = tbs_augment(f, UNIT, TbsConfig(n_initial=12, n_added=12, seed=10))
        assert not np.array_equal(a.points, c.points)

    def test_grid_design_needs_one_dimension(self):
        box = DomainBox([-1, -1], [1, 1])
        f = quadratic_oracle(0.0, [1.0, 1.0], np.eye(2))
        with pytest.raises(ValueError):
            tbs_augment(f, box, TbsConfig(initial_design="grid"))


class TestConcentration:
    @pytest.mark.parametrize(
        "factory", [lambda: tanh_oracle(10.0), runge_oracle], ids=["tanh", "runge"]
    )
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_extras_crowd_the_steep_region(self, factory, seed):
        # both oracles are steepest around the origin; the guided extras
        # should sit far closer to it than the uniform control
        cfg = TbsConfig(n_initial=64, n_added=200, n_gmm=3, seed=seed, initial_design="grid")
        f = factory()
        tbs = tbs_augment(f, UNIT, cfg)
        bs = baseline_augment(f, UNIT, cfg)
        guided = np.abs(tbs.points[64:, 0]).mean()
        control = np.abs(bs.points[64:, 0]).mean()
        assert guided < 0.5 * control

    def test_two_dimensional_ridge(self):
        # steep only along x0: guided extras shrink the x0 spread, not x1
        box = DomainBox([-1, -1], [1, 1])
        f = OracleFn(lambda pts: np.tanh(8.0 * pts[:, 0]))
        cfg = TbsConfig(n_initial=128, n_added=300, n_gmm=2, seed=4)
        tbs = tbs_augment(f, box, cfg)
        bs = baseline_augment(f, box, cfg)
        assert np.abs(tbs.points[128:, 0]).mean() < 0.5 * np.abs(bs.points[128:, 0]).mean()
        assert np.abs(tbs.points[128:, 1]).mean() > 0.25


class TestFlatFunctions:
    constant = staticmethod(lambda: polynomial_oracle({(0,): 3.0}))

    def test_flat_sensitivity_raises_by_default(self):
        with pytest.raises(FlatFunctionError, match="lenient"):
            tbs_augment(self.constant(), UNIT, TbsConfig(seed=0))

    def test_lenient_mode_warns_and_matches_the_control(self):
        cfg = TbsConfig(n_initial=10, n_added=10, seed=5, lenient=True)
        with pytest.warns(RuntimeWarning, match="flat sensitivity"):
            tbs = tbs_augment(self.constant(), UNIT, cfg)
        bs = baseline_augment(self.constant(), UNIT, cfg)
        assert np.array_equal(tbs.points, bs.points)

    def test_linear_functions_are_not_flat(self):
        # constant nonzero gradient is constant sensitivity, which is flat
        # after the min shift; the lenient path must still engage
        f = polynomial_oracle({(1,): 2.0})
        with pytest.raises(FlatFunctionError):
            tbs_augment(f, UNIT, TbsConfig(seed=0))

    def test_non_finite_sensitivity_is_reported(self):
        bad = OracleFn(
            lambda pts: pts[:, 0],
            lambda pts, k: np.full(pts.shape[0], np.nan),
        )
        with pytest.raises(ValueError, match="non-finite"):
            tbs_augment(bad, UNIT, TbsConfig(seed=0))


@settings(max_examples=15, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=10_000),
    n_initial=st.integers(min_value=8, max_value=32),
    n_added=st.integers(min_value=1, max_value=32),
)
def test_pairing_property(seed, n_initial, n_added):
    cfg = TbsConfig(n_initial=n_initial, n_added=n_added, n_gmm=2, seed=seed)
    f = runge_oracle()
    tbs = tbs_augment(f, UNIT, cfg)
    bs = baseline_augment(f, UNIT, cfg)
    assert len(tbs) == len(bs) == n_initial + n_added
    assert np.array_equal(tbs.points[:n_initial], bs.points[:n_initial])
    assert np.all(UNIT.contains(tbs.points))
