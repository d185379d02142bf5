import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualgate.errors import ContractViolationError
from dualgate.models import RegressionTuple
from dualgate.smid import (
    DirectionSet,
    HistoryStack,
    ParameterBox,
    avg_width_reduction,
    check_fe,
    smid_update,
    try_admit,
    width,
)
from oracles import grid_scan_bounds


def _tup(y, f):
    return RegressionTuple(np.atleast_1d(np.asarray(y, float)),
                           np.atleast_2d(np.asarray(f, float)))


class TestTryAdmit:
    def test_empty_stack_admits_anything(self):
        stack = HistoryStack()
        assert try_admit(stack, _tup([1.0], [[1.0]]))
        assert len(stack) == 1

    def test_duplicate_rejected(self):
        stack = HistoryStack(admission_threshold=1e-4)
        t = _tup([1.0], [[0.0]])  # zero excitation row
        try_admit(stack, t)
        assert not try_admit(stack, _tup([1.0], [[0.0]]))

    def test_orthogonal_rows_both_admitted(self):
        stack = HistoryStack()
        assert try_admit(stack, _tup([1.0, 0.0], [[1.0, 0.0], [0.0, 0.0]]))
        assert try_admit(stack, _tup([0.0, 1.0], [[0.0, 0.0], [0.0, 1.0]]))
        assert stack.lambda_min() > 0.9

    def test_full_stack_replacement_improves_spectrum(self):
        stack = HistoryStack(capacity=2)
        try_admit(stack, _tup([1.0, 0.0], [[1.0, 0.0], [0.0, 0.0]]))
        try_admit(stack, _tup([1.0, 0.0], [[0.9, 0.0], [0.0, 1e-3]]))
        before = stack.lambda_min()
        admitted = try_admit(stack, _tup([0.0, 1.0], [[0.0, 0.0], [0.0, 1.0]]))
        assert admitted
        assert len(stack) == 2
        assert stack.lambda_min() > before

    def test_nonfinite_tuple_rejected(self):
        stack = HistoryStack()
        assert not try_admit(stack, _tup([np.nan], [[1.0]]))


class TestCheckFE:
    def test_identity_regressor_excites(self):
        stack = HistoryStack()
        try_admit(stack, _tup([0.0, 0.0], np.eye(2)))
        assert check_fe(stack, 0.5)

    def test_empty_stack_fails(self):
        assert not check_fe(HistoryStack(), 0.1)

    def test_rank_deficient_stack_fails(self):
        stack = HistoryStack(admission_threshold=0.0, min_fill=5)
        for _ in range(3):
            stack.tuples.append(_tup([1.0], [[1.0, 0.0]]))
        assert not check_fe(stack, 1e-9)


class TestSmidUpdate:
    def test_inactive_constraints_leave_box(self):
        box = ParameterBox([0.0], [2.0])
        stack = HistoryStack()
        try_admit(stack, _tup([1.0], [[1.0]]))
        out = smid_update(box, stack, eps=5.0)
        assert np.allclose(out.lo, box.lo) and np.allclose(out.hi, box.hi)

    def test_scalar_hand_solved_bounds(self):
        box = ParameterBox([0.0], [2.0])
        stack = HistoryStack()
        try_admit(stack, _tup([1.0], [[1.0]]))
        out = smid_update(box, stack, eps=0.1)
        assert np.allclose(out.lo, [0.9]) and np.allclose(out.hi, [1.1])

    def test_infeasible_keeps_box(self, caplog):
        box = ParameterBox([0.0], [2.0])
        stack = HistoryStack(min_fill=2)
        stack.tuples.append(_tup([1.0], [[1.0]]))
        stack.tuples.append(_tup([-1.0], [[1.0]]))
        out = smid_update(box, stack, eps=0.1)
        assert np.allclose(out.lo, box.lo) and np.allclose(out.hi, box.hi)

    def test_two_parameter_shrink_both_coordinates(self):
        # Two windows at different speeds separate linear and quadratic drag.
        theta = np.array([0.25, 0.4])
        box = ParameterBox([0.0, 0.0], [0.5, 0.8])
        stack = HistoryStack()
        for speed in (1.0, 3.0):
            f = np.array([[speed, speed * speed]])
            try_admit(stack, _tup(f @ theta, f))
        out = smid_update(box, stack, eps=0.01)
        assert np.all(out.hi - out.lo < np.array([0.11, 0.11]))
        assert out.contains(theta, tol=1e-9)

    def test_scalar_fastpath_matches_lp(self):
        rng = np.random.default_rng(11)
        from dualgate import smid as smid_mod

        for _ in range(20):
            box = ParameterBox([rng.uniform(-1, 0)], [rng.uniform(0.5, 2)])
            stack = HistoryStack(min_fill=10)
            theta = rng.uniform(box.lo, box.hi)
            for _ in range(rng.integers(1, 5)):
                f = rng.normal(size=(3, 1))
                noise = rng.uniform(-0.05, 0.05, size=3)
                stack.tuples.append(_tup(f @ theta + noise, f))
            fast = smid_update(box, stack, eps=0.06)
            F = np.vstack([t.Fmat for t in stack.tuples])
            Y = np.concatenate([t.Y for t in stack.tuples])
            from dualgate.linprog import LinearProgram, solve_lp

            lo = solve_lp(LinearProgram(np.ones(1), A_ub=np.vstack([F, -F]),
                                        b_ub=np.concatenate([Y + 0.06, 0.06 - Y]),
                                        lo=box.lo, hi=box.hi))
            hi = solve_lp(LinearProgram(-np.ones(1), A_ub=np.vstack([F, -F]),
                                        b_ub=np.concatenate([Y + 0.06, 0.06 - Y]),
                                        lo=box.lo, hi=box.hi))
            assert abs(fast.lo[0] - lo.value) < 1e-7
            assert abs(fast.hi[0] + hi.value) < 1e-7

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_nested_and_consistent(self, seed):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 3))
        box = ParameterBox(np.zeros(p), np.ones(p))
        theta = rng.uniform(0, 1, p)
        eps = 0.05
        for _ in range(3):
            stack = HistoryStack(min_fill=20)
            for _ in range(rng.integers(1, 4)):
                f = rng.normal(size=(2, p))
                noise = rng.uniform(-eps * 0.8, eps * 0.8, size=2)
                stack.tuples.append(_tup(f @ theta + noise, f))
            new = smid_update(box, stack, eps)
            assert box.contains_box(new)
            assert new.contains(theta, tol=1e-9)
            for d in DirectionSet.axes(p):
                assert width(new, d) <= width(box, d) + 1e-12
            box = new

    def test_grid_scan_oracle_equivalence(self):
        # The lattice scan always underestimates the true extent; at a
        # pointed vertex it can miss by a few steps of slack, so the check
        # is one-sided with a small geometry allowance.
        rng = np.random.default_rng(4)
        step = 1e-3
        for _ in range(5):
            p = int(rng.integers(1, 3))
            box = ParameterBox(np.zeros(p), np.ones(p))
            theta = rng.uniform(0.2, 0.8, p)
            stack = HistoryStack(min_fill=10)
            for _ in range(rng.integers(1, 6)):
                f = rng.normal(size=(2, p))
                stack.tuples.append(_tup(f @ theta + rng.uniform(-0.04, 0.04, 2), f))
            out = smid_update(box, stack, eps=0.05)
            scan = grid_scan_bounds(stack.tuples, box.lo, box.hi, 0.05, step=step)
            assert scan is not None
            lo_scan, hi_scan = scan
            assert np.all(lo_scan >= out.lo - 1e-9)  # scan inside the LP box
            assert np.all(hi_scan <= out.hi + 1e-9)
            assert np.all(lo_scan - out.lo <= 4 * step)
            assert np.all(out.hi - hi_scan <= 4 * step)


class TestWidth:
    def test_axis_width_of_initial_case_study_box(self):
        box = ParameterBox([0.0, 0.0], [0.5, 0.8])
        assert width(box, np.array([1.0, 0.0])) == pytest.approx(0.5)

    def test_degenerate_box(self):
        box = ParameterBox([0.3, 0.4], [0.3, 0.4])
        for d in DirectionSet.axes(2):
            assert width(box, d) == 0.0

    def test_diagonal_direction(self):
        box = ParameterBox([0.0, 0.0], [1.0, 1.0])
        d = np.array([1.0, 1.0]) / np.sqrt(2)
        assert width(box, d) == pytest.approx(np.sqrt(2))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_translation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 4))
        lo = rng.normal(size=p)
        hi = lo + rng.uniform(0.1, 2.0, p)
        shift = rng.normal(size=p)
        d = rng.normal(size=p)
        d /= np.linalg.norm(d)
        a = width(ParameterBox(lo, hi), d)
        b = width(ParameterBox(lo + shift, hi + shift), d)
        assert a == pytest.approx(b, abs=1e-12)

    def test_non_unit_direction_rejected(self):
        with pytest.raises(ContractViolationError):
            width(ParameterBox([0.0], [1.0]), np.array([2.0]))


class TestAvgWidthReduction:
    def test_identity_is_zero(self):
        box = ParameterBox([0.0], [1.0])
        assert avg_width_reduction(box, box, DirectionSet.axes(1)) == 0.0

    def test_scalar_arithmetic(self):
        before = ParameterBox([0.0], [1.0])
        after = ParameterBox([0.25], [0.75])
        assert avg_width_reduction(before, after, DirectionSet.axes(1)) == pytest.approx(0.5)

    def test_case_study_reported_bounds(self):
        # [0, 0.5] x [0, 0.8] -> [0, 0.33] x [0.25, 0.34] averages to 0.44.
        before = ParameterBox([0.0, 0.0], [0.5, 0.8])
        after = ParameterBox([0.0, 0.25], [0.33, 0.34])
        red = avg_width_reduction(before, after, DirectionSet.axes(2))
        assert red == pytest.approx(((0.5 - 0.33) + (0.8 - 0.09)) / 2, abs=1e-12)
        assert red == pytest.approx(0.44, abs=1e-12)

    def test_not_nested_rejected(self):
        before = ParameterBox([0.0], [1.0])
        after = ParameterBox([-0.1], [0.5])
        with pytest.raises(ContractViolationError):
            avg_width_reduction(before, after, DirectionSet.axes(1))
