"""Classification, density certificates, and the decomposition round trip."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doobkit import (
    AdaptedProcess,
    MeasureFamily,
    NotInA0,
    NotSupermartingale,
    PreconditionFailed,
    StepFailure,
    Xi0Step,
    a0_membership,
    alpha_interval,
    classify,
    completeness_check,
    cond_exp_cells,
    find_a0_element,
    make_a0_element,
    martingale_increments,
    mixture,
    one_step_ratio_cells,
    optional_decompose,
    uniform_gap_bound,
    verify_decomposition,
    xi0_step_alpha,
    xi0_step_lp,
)
from doobkit.claims import envelope_process
from doobkit.regularity import MartingaleDelta
from doobkit.generators import random_family, random_space, random_supermartingale


def _proc(space, *levels):
    return AdaptedProcess(space=space, per_time=tuple(np.asarray(l, dtype=float) for l in levels))


class TestClassify:
    def test_constant_is_martingale(self, space_b, family_b):
        f = _proc(space_b, [3.0], [3.0, 3.0], [3.0, 3.0, 3.0, 3.0])
        assert classify(f, family_b).kind == "martingale"

    def test_envelope_counterexample(self, space_b, family_b, xi_b):
        f = envelope_process(family_b, xi_b)
        verdict = classify(f, family_b)
        assert verdict.kind == "not-supermartingale"
        t, cell, extreme, mag = verdict.worst_violation
        # E under the uniform extreme of (1.12, 1) is 1.06 > f_0 = 1
        assert (t, cell, extreme) == (1, 0, 0)
        assert mag == pytest.approx(0.06, abs=1e-12)

    def test_deterministic_decreasing_is_strict(self, space_b, family_b):
        f = _proc(space_b, [2.0], [1.0, 1.0], [1.0, 1.0, 1.0, 1.0])
        assert classify(f, family_b).kind == "supermartingale-strict"

    def test_one_step_verdict_matches_multistep_mixtures(self):
        # checking extremes one step at a time decides the property for
        # every mixture over every time gap
        rng = np.random.default_rng(11)
        for _ in range(10):
            space = random_space(rng)
            family = random_family(rng, space)
            f, _, _ = random_supermartingale(rng, space, family)
            verdict = classify(f, family)
            assert verdict.is_supermartingale
            for _ in range(50):
                q = mixture(family, rng.dirichlet(np.ones(len(family))))
                for n in range(1, space.horizon + 1):
                    fn = f.at_atoms(n)
                    for m in range(n):
                        e = cond_exp_cells(space, fn, q, m)
                        assert np.all(e <= f.at_cells(m) + 1e-10)


class TestA0:
    def test_constant_one_is_member(self, family_b):
        assert a0_membership(family_b, np.ones(4))

    def test_fixture_b_member(self, family_b, xi_b):
        assert a0_membership(family_b, xi_b)

    def test_non_member(self, family_b):
        assert not a0_membership(family_b, np.array([2.0, 0.0, 0.0, 0.0]))

    def test_convex_combinations_stay_inside(self, family_b, xi_b):
        rng = np.random.default_rng(5)
        a = make_a0_element(family_b, xi_b)
        b = make_a0_element(family_b, np.ones(4))
        for _ in range(20):
            t = rng.uniform()
            assert a0_membership(family_b, t * a.xi + (1 - t) * b.xi)

    def test_make_raises(self, family_b):
        with pytest.raises(NotInA0):
            make_a0_element(family_b, np.array([2.0, 0.0, 0.0, 0.0]))


class TestFindA0Element:
    def test_default_is_member(self, family_b):
        el = find_a0_element(family_b)
        assert a0_membership(family_b, el.xi)

    def test_vertex_with_indicator_objective(self, family_b):
        el = find_a0_element(family_b, objective=np.array([1.0, 0.0, 0.0, 0.0]))
        assert a0_membership(family_b, el.xi)
        # both expectation constraints are active at an optimal vertex
        for p in family_b:
            assert p.expect(el.xi) == pytest.approx(1.0, abs=1e-12)

    def test_two_atom_singleton_vertex(self):
        from doobkit import Measure, build_space

        space = build_space(2, [[[0, 1]], [[0], [1]]])
        fam = MeasureFamily(space=space, extremes=(Measure(np.array([0.5, 0.5])),))
        el = find_a0_element(fam, objective=np.array([1.0, 0.0]))
        np.testing.assert_allclose(el.xi, [2.0, 0.0], atol=1e-12)


class TestUniformGapBound:
    def _strict_super(self, space_b):
        return _proc(space_b, [2.0], [1.5, 1.4], [1.0, 1.0, 1.0, 1.0])

    def test_zero_phi_trivial(self, space_b, family_b):
        rep = uniform_gap_bound(self._strict_super(space_b), family_b, 1, np.zeros(4))
        assert rep.verified

    def test_singleton_constants(self, space_b, family_b):
        fam = MeasureFamily(space=space_b, extremes=(family_b.extremes[0],))
        rep = uniform_gap_bound(self._strict_super(space_b), fam, 1, np.full(4, 0.3))
        assert (rep.l, rep.L) == (1.0, 1.0)
        assert rep.constant == pytest.approx(0.5)
        assert rep.verified

    def test_fixture_b_sampled(self, space_b, family_b):
        rep = uniform_gap_bound(
            self._strict_super(space_b), family_b, 1, np.full(4, 0.3), n_samples=100
        )
        assert rep.verified
        assert rep.constant == pytest.approx(0.4 / 3.5)

    def test_precondition_failures(self, space_b, family_b):
        f = self._strict_super(space_b)
        with pytest.raises(PreconditionFailed):
            uniform_gap_bound(f, family_b, 1, np.full(4, 5.0))  # gap too small
        with pytest.raises(PreconditionFailed):
            uniform_gap_bound(f, family_b, 2, np.array([0.1, 0.2, 0.0, 0.0]))  # not measurable


class TestMartingaleIncrements:
    def test_constant_density_has_zero_increments(self, family_b):
        el = make_a0_element(family_b, np.ones(4))
        delta = martingale_increments(el, family_b, base_index=0, n=1)
        np.testing.assert_allclose(delta.increments, 0.0, atol=0)
        assert delta.pos_cells == ()
        assert set(delta.neg_cells) == {0, 1}

    def test_fixture_b_base_dependence(self, family_b, xi_b):
        el = make_a0_element(family_b, xi_b)
        under_p2 = martingale_increments(el, family_b, base_index=1, n=1)
        np.testing.assert_allclose(under_p2.increments, [0.12, -0.12], atol=1e-14)
        assert under_p2.pos_cells == (0,) and under_p2.neg_cells == (1,)
        under_p1 = martingale_increments(el, family_b, base_index=0, n=1)
        np.testing.assert_allclose(under_p1.increments, 0.0, atol=1e-14)

    def test_zero_conditional_mean_under_base(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            space = random_space(rng)
            family = random_family(rng, space)
            el = find_a0_element(family, objective=rng.normal(size=space.n_atoms))
            base = int(rng.integers(0, len(family)))
            n = int(rng.integers(1, space.horizon + 1))
            delta = martingale_increments(el, family, base_index=base, n=n)
            e = cond_exp_cells(
                space, space.expand(n, delta.increments), family.extremes[base], n - 1
            )
            assert np.abs(e).max() <= 1e-12
            assert set(delta.neg_cells) | set(delta.pos_cells) == set(range(space.n_cells(n)))


class TestAlphaInterval:
    def test_two_bounds_coincide(self):
        iv = alpha_interval(np.array([0.8, 1.2]), np.array([-0.5, 0.5]))
        assert (iv.lower, iv.upper) == (pytest.approx(0.4), pytest.approx(0.4))
        assert iv.preferred == pytest.approx(0.4)

    def test_already_dominated(self):
        iv = alpha_interval(np.array([1.0, 1.0]), np.array([-0.5, 0.5]))
        assert iv.preferred == 0.0
        assert (iv.lower, iv.upper) == (0.0, 0.0)

    def test_empty(self):
        iv = alpha_interval(np.array([1.2, 1.2]), np.array([0.5, -0.5]))
        assert iv.empty

    def test_zero_increment_cell_gates_feasibility(self):
        assert alpha_interval(np.array([1.1]), np.array([0.0])).empty
        assert not alpha_interval(np.array([0.9]), np.array([0.0])).empty

    @settings(max_examples=80, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_membership_scan(self, seed):
        # alpha inside the interval dominates at every cell; alpha outside
        # fails somewhere; nothing strictly dominates when the interval is empty
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 6))
        vals = rng.uniform(0.0, 1.5, size=k)
        d = np.round(rng.uniform(-1, 1, size=k), 3)
        iv = alpha_interval(vals, d)
        for alpha in np.linspace(-3.0, 3.0, 41):
            strictly = bool(np.all(vals <= 1.0 + alpha * d - 1e-9))
            if iv.empty:
                assert not strictly
            elif iv.contains(alpha, tol=0.0):
                assert np.all(vals <= 1.0 + alpha * d + 1e-9)
            elif alpha < iv.lower - 1e-6 or alpha > iv.upper + 1e-6:
                assert not strictly


class TestXi0StepAlpha:
    def test_constant_martingale_any_alpha(self, space_b, family_b):
        f = _proc(space_b, [3.0], [3.0, 3.0], [3.0, 3.0, 3.0, 3.0])
        el = make_a0_element(family_b, np.ones(4))
        step = xi0_step_alpha(f, el, family_b, 1)
        assert isinstance(step, Xi0Step)
        np.testing.assert_allclose(step.xi0, 1.0, atol=0)

    def test_deterministic_drop(self, space_b, family_b):
        f = _proc(space_b, [2.0], [1.0, 1.0], [0.5, 0.5, 0.5, 0.5])
        el = make_a0_element(family_b, np.ones(4))
        step = xi0_step_alpha(f, el, family_b, 1)
        assert isinstance(step, Xi0Step)
        assert step.alpha == 0.0
        np.testing.assert_allclose(step.xi0, 1.0, atol=0)

    def test_nonzero_alpha_success(self, space_b, family_b):
        # a density constant on the time-1 cells has measure-invariant
        # conditional expectations on FIXTURE-B, so its increments certify a
        # genuine drop: ratio (1.2, .6), normalizer .9, alpha = 5/6
        el = make_a0_element(family_b, np.array([1.4, 1.4, 0.6, 0.6]))
        f = _proc(space_b, [1.0], [1.2, 0.6], [1.2, 1.2, 0.6, 0.6])
        assert classify(f, family_b).is_supermartingale
        step = xi0_step_alpha(f, el, family_b, 1)
        assert isinstance(step, Xi0Step)
        assert step.alpha == pytest.approx(5.0 / 6.0, abs=1e-12)
        np.testing.assert_allclose(step.xi0, [4 / 3, 4 / 3, 2 / 3, 2 / 3], atol=1e-12)
        for p in family_b:
            e = cond_exp_cells(space_b, step.xi0, p, 0)
            assert abs(e[0] - 1.0) <= 1e-12

    def test_unit_conditional_check_rejects(self, space_b, family_b, xi_b):
        # the density martingale under the uniform base drifts under the
        # tilted extreme, so a nonzero alpha certificate must be refused
        f = _proc(space_b, [1.0], [1.0, 1.0], [1.05, 0.8, 1.05, 0.8])
        assert classify(f, family_b).is_supermartingale
        el = make_a0_element(family_b, xi_b)
        step = xi0_step_alpha(f, el, family_b, 2)
        assert isinstance(step, StepFailure)
        assert "extreme" in step.reason


class TestXi0StepLp:
    def test_martingale_returns_ratio(self, space_b, family_b):
        f = _proc(space_b, [2.0], [2.4, 1.6], [2.4, 2.4, 1.6, 1.6])
        # a family-martingale: both measures force cell constancy after time 1
        assert classify(f, family_b).kind == "martingale"
        step = xi0_step_lp(f, family_b, 1)
        assert isinstance(step, Xi0Step)
        np.testing.assert_allclose(
            step.xi0, space_b.expand(1, one_step_ratio_cells(f, 1)), atol=1e-10
        )

    def test_deterministic_gives_constant_one(self, space_b, family_b):
        f = _proc(space_b, [2.0], [1.0, 1.0], [0.5, 0.5, 0.5, 0.5])
        step = xi0_step_lp(f, family_b, 1)
        np.testing.assert_allclose(step.xi0, 1.0, atol=0)
        step = xi0_step_lp(f, family_b, 2)
        np.testing.assert_allclose(step.xi0, 1.0, atol=0)

    def test_generated_instances_always_feasible(self):
        rng = np.random.default_rng(17)
        for _ in range(15):
            space = random_space(rng)
            family = random_family(rng, space)
            f, _, _ = random_supermartingale(rng, space, family)
            for m in range(1, space.horizon + 1):
                step = xi0_step_lp(f, family, m)
                assert isinstance(step, Xi0Step), step
                ratio = space.expand(m, one_step_ratio_cells(f, m))
                assert np.all(step.xi0 >= ratio - 1e-9)
                for p in family:
                    e = cond_exp_cells(space, step.xi0, p, m - 1)
                    assert np.abs(e - 1.0).max() <= 1e-9

    def test_infeasible_cell_reported(self, space_b, family_b, xi_b):
        env = envelope_process(family_b, xi_b)
        step = xi0_step_lp(env, family_b, 1)
        assert isinstance(step, StepFailure)
        assert step.cell == 0
        assert step.certificate is not None and step.certificate > 0


class TestOptionalDecompose:
    def test_martingale_gives_zero_compensator(self, space_b, family_b):
        f = _proc(space_b, [2.0], [2.4, 1.6], [2.4, 2.4, 1.6, 1.6])
        assert classify(f, family_b).kind == "martingale"
        dec = optional_decompose(f, family_b, strategy="auto")
        for m in range(3):
            np.testing.assert_allclose(dec.compensator.at_cells(m), 0.0, atol=1e-10)
            np.testing.assert_allclose(dec.martingale.at_cells(m), f.at_cells(m), atol=1e-10)

    def test_deterministic_by_hand(self, space_b, family_b):
        f = _proc(space_b, [2.0], [1.0, 1.0], [1.0, 1.0, 1.0, 1.0])
        dec = optional_decompose(f, family_b, strategy="lp")
        np.testing.assert_allclose(dec.martingale.at_cells(1), [2.0, 2.0], atol=0)
        np.testing.assert_allclose(dec.compensator.at_cells(1), [1.0, 1.0], atol=0)

    def test_rejects_non_supermartingale(self, family_b, xi_b):
        env = envelope_process(family_b, xi_b)
        with pytest.raises(NotSupermartingale):
            optional_decompose(env, family_b)

    def test_rejects_negative_process(self, space_b, family_b):
        f = _proc(space_b, [1.0], [0.5, -0.5], [0.5, 0.5, -0.5, -0.5])
        with pytest.raises(NotSupermartingale):
            optional_decompose(f, family_b)

    @pytest.mark.parametrize("strategy", ["lp", "auto"])
    def test_round_trip_random_instances(self, strategy):
        rng = np.random.default_rng(23)
        for _ in range(15):
            space = random_space(rng)
            family = random_family(rng, space)
            f, _, _ = random_supermartingale(rng, space, family)
            dec = optional_decompose(f, family, strategy=strategy)
            report = verify_decomposition(f, dec, family)
            assert report.ok, [c for c in report.checks if not c.passed]

    def test_alpha_strategy_on_singleton_family(self):
        # with one measure the density martingale is genuinely driftless,
        # so the closed-form path certifies every step
        rng = np.random.default_rng(31)
        for _ in range(10):
            space = random_space(rng)
            family = random_family(rng, space, max_extremes=1)
            f, _, _ = random_supermartingale(rng, space, family)
            dec = optional_decompose(f, family, strategy="auto")
            assert verify_decomposition(f, dec, family).ok


class TestVerifyDecomposition:
    def test_passes_on_constructed(self, space_b, family_b):
        f = _proc(space_b, [2.0], [1.5, 1.2], [1.5, 1.5, 0.9, 0.9])
        assert classify(f, family_b).is_supermartingale
        dec = optional_decompose(f, family_b)
        assert verify_decomposition(f, dec, family_b).ok

    def test_tampered_compensator_flagged(self, space_b, family_b):
        f = _proc(space_b, [2.0], [1.0, 1.0], [1.0, 1.0, 1.0, 1.0])
        dec = optional_decompose(f, family_b)
        bad_comp = AdaptedProcess(
            space=space_b,
            per_time=(
                dec.compensator.at_cells(0),
                dec.compensator.at_cells(1),
                dec.compensator.at_cells(2) - np.array([0.5, 0.0, 0.0, 0.0]),
            ),
        )
        from doobkit import OptionalDecomposition

        tampered = OptionalDecomposition(
            martingale=dec.martingale, compensator=bad_comp, steps=dec.steps
        )
        report = verify_decomposition(f, tampered, family_b)
        assert not report.ok
        failing = {c.name for c in report.checks if not c.passed}
        assert "compensator-monotone" in failing

    def test_centered_residuals_tight(self):
        rng = np.random.default_rng(41)
        space = random_space(rng)
        family = random_family(rng, space)
        f, _, _ = random_supermartingale(rng, space, family)
        dec = optional_decompose(f, family)
        report = verify_decomposition(f, dec, family)
        centered = [c for c in report.checks if c.name == "centered-compensator-residuals"]
        assert centered and centered[0].max_violation <= 1e-12


class TestCompletenessCheck:
    def test_vacuous_when_no_up_moves(self, family_b):
        el = make_a0_element(family_b, np.ones(4))
        delta = martingale_increments(el, family_b, base_index=0, n=1)
        report = completeness_check(family_b, delta, 1)
        assert report.vacuous and report.fraction_inside == 1.0

    def test_two_point_with_zero_mass_sits_at_hull_floor(self):
        from doobkit import Measure, build_space

        space = build_space(2, [[[0, 1]], [[0], [1]]])
        fam = MeasureFamily(
            space=space,
            extremes=(Measure(np.array([0.2, 0.8])), Measure(np.array([0.8, 0.2]))),
        )
        # increments with a flat down cell force the (1, 0) two-point target
        delta = MartingaleDelta(
            m=1, increments=np.array([0.0, 0.3]), neg_cells=(0,), pos_cells=(1,), base_index=0
        )
        report = completeness_check(fam, delta, 1)
        assert report.fraction_inside == 0.0
        assert report.pairs[0][2] == pytest.approx(0.2, abs=1e-9)

    def test_near_degenerate_extreme_tightens_the_hull(self):
        from doobkit import Measure, build_space

        space = build_space(2, [[[0, 1]], [[0], [1]]])
        base = (Measure(np.array([0.2, 0.8])), Measure(np.array([0.8, 0.2])))
        fam = MeasureFamily(space=space, extremes=base)
        wide = MeasureFamily(
            space=space, extremes=base + (Measure(np.array([0.999, 0.001])),)
        )
        delta = MartingaleDelta(
            m=1, increments=np.array([0.0, 0.3]), neg_cells=(0,), pos_cells=(1,), base_index=0
        )
        before = completeness_check(fam, delta, 1).pairs[0][2]
        after = completeness_check(wide, delta, 1).pairs[0][2]
        assert after < before
        assert after == pytest.approx(0.001, abs=1e-9)
