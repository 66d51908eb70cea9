import numpy as np
import pytest

from vexflow.exponent import (
    ExponentField,
    ExponentSchedule,
    critical_mask,
    edge_adaptive_exponent,
    schedule_from_rule,
    validate_gap,
)
from vexflow.grid import Grid2D, VectorField

from conftest import step_field


def test_constant_field_properties():
    grid = Grid2D(4, 4)
    p = ExponentField.constant(grid, 2.0)
    assert p.p_minus == 2.0
    assert p.dual_exponent == 2.0
    assert not critical_mask(p).any()


def test_all_critical():
    p = ExponentField.constant(Grid2D(4, 4), 1.0)
    assert critical_mask(p).all()
    assert p.dual_exponent == np.inf


def test_piecewise_mask():
    grid = Grid2D(8, 8)
    vals = np.where(np.arange(8)[:, None] < 4, 1.0, 2.0) * np.ones((1, 8))
    p = ExponentField(grid, vals, p_plus=2.0)
    mask = critical_mask(p)
    assert mask[:4].all() and not mask[4:].any()


def test_gap_enforced_at_construction():
    grid = Grid2D(4, 4)
    vals = np.full((4, 4), 1.05)
    with pytest.raises(ValueError):
        ExponentField(grid, vals, p_plus=2.0, gap=0.1)


def test_values_above_p_plus_rejected():
    grid = Grid2D(4, 4)
    with pytest.raises(ValueError):
        ExponentField(grid, np.full((4, 4), 2.5), p_plus=2.0)


def test_validate_gap():
    grid = Grid2D(4, 4)
    p = ExponentField.constant(grid, 1.5, gap=0.25)
    assert validate_gap(p, 0.25)
    loose = ExponentField(grid, np.full((4, 4), 1.05), p_plus=2.0, gap=0.01)
    assert not validate_gap(loose, 0.25)


class TestEdgeAdaptive:
    def test_constant_image_gives_p_max(self):
        grid = Grid2D(8, 8)
        u = VectorField(grid, np.full((8, 8, 3), 0.4))
        p = edge_adaptive_exponent(u, sigma=1.0, k=10.0, p_max=2.0, gap=0.1)
        assert np.all(p.values == 2.0)
        assert not critical_mask(p).any()

    def test_sharp_step_produces_critical_band(self):
        u = step_field(16, 16, height=10.0)
        p = edge_adaptive_exponent(u, sigma=0.0, k=100.0, p_max=2.0, gap=0.1)
        mask = critical_mask(p)
        # the forward difference puts the jump at column index split-1
        assert mask[7].all()
        assert not mask[0].any() and not mask[-1].any()
        # thresholding matches the raw conductance formula on the edge band
        s2 = 100.0  # |grad| = 10 across the jump
        raw = 1.0 + (2.0 - 1.0) / (1.0 + 100.0 * s2)
        assert raw < 1.1

    def test_gap_always_valid(self, rng):
        grid = Grid2D(12, 12)
        for _ in range(10):
            u = VectorField(grid, rng.uniform(0, 1, (12, 12, 3)))
            p = edge_adaptive_exponent(u, sigma=1.0, k=500.0, p_max=1.8, gap=0.1)
            assert validate_gap(p, 0.1)

    def test_bad_parameters_rejected(self, rng):
        grid = Grid2D(4, 4)
        u = VectorField(grid, rng.uniform(0, 1, (4, 4, 1)))
        with pytest.raises(ValueError):
            edge_adaptive_exponent(u, sigma=-1.0, k=1.0, p_max=2.0)
        with pytest.raises(ValueError):
            edge_adaptive_exponent(u, sigma=1.0, k=0.0, p_max=2.0)
        with pytest.raises(ValueError):
            edge_adaptive_exponent(u, sigma=1.0, k=1.0, p_max=1.05, gap=0.1)


class TestSchedule:
    def test_constant_rule(self):
        p = ExponentField.constant(Grid2D(4, 4), 1.5)
        sched = schedule_from_rule(lambda t: p, [0.0, 0.5, 1.0])
        assert sched.at(0.0) is sched.at(0.0)
        assert np.array_equal(sched.at(0.5).values, p.values)

    def test_linear_interpolation_midpoint(self):
        grid = Grid2D(8, 8)
        y = np.zeros((8, 8), bool)
        y[:2] = True
        T = 1.0

        def rule(t):
            off = 2.0 + (1.25 - 2.0) * (t / T)
            vals = np.where(y, 1.0, off)
            return ExponentField(grid, vals, p_plus=2.0, gap=0.1)

        sched = schedule_from_rule(rule, [0.0, 0.5, 1.0])
        mid = sched.at(0.5)
        assert np.allclose(mid.values[~y], 1.625)
        assert np.all(mid.values[y] == 1.0)

    def test_freeze_rule_equals_repeated_field(self):
        p = ExponentField.constant(Grid2D(4, 4), 1.3, gap=0.2)
        frozen = schedule_from_rule(lambda t: p, [0.0, 1.0])
        const = ExponentSchedule.constant(p)
        for t in (0.0, 0.7, 1.0):
            assert np.array_equal(frozen.at(t).values, const.at(t).values)

    def test_invalid_slice_rejected(self):
        grid = Grid2D(4, 4)

        def rule(t):
            return ExponentField(grid, np.full((4, 4), 1.0 + t), p_plus=2.0, gap=0.5)

        with pytest.raises(ValueError):
            schedule_from_rule(rule, [0.0, 0.1])  # 1.1 violates gap 0.5


def test_schedule_mixed_p_plus_rejected():
    grid = Grid2D(4, 4)
    fields = {0.0: ExponentField.constant(grid, 1.5), 1.0: ExponentField.constant(grid, 2.0)}
    sched = schedule_from_rule(lambda t: fields[0.0], [0.0])
    sched.rule = lambda t: fields[1.0]
    with pytest.raises(ValueError):
        sched.at(1.0)
