"""Audits of the envelope identities: known counterexamples and search."""

import numpy as np
import pytest

from doobkit import (
    AdaptedProcess,
    AuditInstance,
    ClaimPreconditionUnmet,
    MeasureFamily,
    audit,
    classify,
    cond_exp,
    parse_scenario,
    search_counterexample,
)
from doobkit.claims import CLAIM_IDS, envelope_process


@pytest.fixture()
def instance_b(family_b, xi_b):
    return AuditInstance(family=family_b, xi=xi_b)


class TestFixtureBCounterexamples:
    def test_tmars5(self, instance_b):
        result = audit("lemma-tmars5", instance_b)
        assert result.verdict == "counterexample"
        assert result.violation == pytest.approx(0.06, abs=1e-10)

    def test_fmars5(self, instance_b):
        result = audit("thm-fmars5", instance_b)
        assert result.verdict == "counterexample"
        assert result.violation == pytest.approx(0.12, abs=1e-10)

    def test_q5_and_lkq4(self, instance_b):
        for claim in ("lemma-q5", "lemma-lkq4"):
            result = audit(claim, instance_b)
            assert result.verdict == "counterexample"
            assert result.violation == pytest.approx(0.06, abs=1e-10)

    def test_1q5(self, instance_b):
        result = audit("lemma-1q5", instance_b)
        assert result.verdict == "counterexample"
        assert result.violation == pytest.approx(0.12, abs=1e-10)

    def test_mars12(self, instance_b):
        result = audit("thm-mars12", instance_b)
        assert result.verdict == "counterexample"
        assert "no certificate" in result.detail

    def test_mmars1_with_constant_process(self, family_b, xi_b, space_b):
        flat = AdaptedProcess(
            space=space_b,
            per_time=(np.array([1.0]), np.ones(2), np.ones(4)),
        )
        result = audit("thm-mmars1", AuditInstance(family=family_b, xi=xi_b, f=flat))
        assert result.verdict == "counterexample"
        assert result.violation == pytest.approx(0.12, abs=1e-10)


class TestPreconditions:
    def test_fmars5_needs_a0(self, family_b):
        bad = AuditInstance(family=family_b, xi=np.array([2.0, 0.0, 0.0, 0.0]))
        with pytest.raises(ClaimPreconditionUnmet):
            audit("thm-fmars5", bad)

    def test_1q5_needs_equal_expectations(self, family_b):
        bad = AuditInstance(family=family_b, xi=np.array([1.0, 0.2, 0.4, 2.0]))
        with pytest.raises(ClaimPreconditionUnmet):
            audit("lemma-1q5", bad)

    def test_mmars1_needs_non_increasing(self, family_b, xi_b, space_b):
        rising = AdaptedProcess(
            space=space_b, per_time=(np.array([1.0]), np.full(2, 2.0), np.full(4, 3.0))
        )
        with pytest.raises(ClaimPreconditionUnmet):
            audit("thm-mmars1", AuditInstance(family=family_b, xi=xi_b, f=rising))

    def test_unknown_claim(self, instance_b):
        with pytest.raises(ValueError, match="unknown claim"):
            audit("lemma-q99", instance_b)


class TestPastingStableFamiliesPass:
    def test_envelope_claims_hold_on_product_families(self):
        # families assembled from independent per-node conditional choices
        # are stable under pasting, and there the envelope identities hold
        from doobkit.generators import product_family, random_space

        for seed in range(30):
            rng = np.random.default_rng(seed)
            space = random_space(rng)
            fam = product_family(rng, space)
            xi = rng.uniform(0.0, 2.0, size=space.n_atoms)
            inst = AuditInstance(family=fam, xi=xi)
            for claim in ("lemma-q5", "lemma-lkq4", "lemma-tmars5"):
                result = audit(claim, inst)
                assert result.verdict == "pass", (seed, claim, result.violation)


class TestSingletonFamiliesPass:
    def test_q5_reduces_to_tower(self, space_b, family_b):
        fam = MeasureFamily(space=space_b, extremes=(family_b.extremes[1],))
        inst = AuditInstance(family=fam, xi=np.array([1.0, 3.0, 2.0, 6.0]))
        assert audit("lemma-q5", inst).verdict == "pass"

    def test_all_claims_pass_on_singletons(self, space_b, family_b):
        fam = MeasureFamily(space=space_b, extremes=(family_b.extremes[1],))
        xi = np.array([0.5, 1.5, 2.0, 0.4])
        xi_a0 = xi / fam.extremes[0].expect(xi)
        flat = AdaptedProcess(
            space=space_b, per_time=(np.array([2.0]), np.full(2, 1.5), np.full(4, 1.0))
        )
        for claim in CLAIM_IDS:
            inst = AuditInstance(family=fam, xi=xi_a0, f=flat)
            assert audit(claim, inst).verdict == "pass", claim


class TestWitnessReplay:
    def test_fixture_b_witness_replays(self, instance_b, space_b):
        result = audit("lemma-tmars5", instance_b)
        scenario = parse_scenario(result.witness)
        family = scenario.family()
        xi = scenario.claims["xi"].atoms(scenario.space)
        env = envelope_process(family, xi)
        verdict = classify(env, family, tol=0.0)
        assert verdict.worst_violation[3] == pytest.approx(result.violation, abs=1e-10)

    def test_searched_witness_replays(self):
        result = search_counterexample("lemma-tmars5", budget=500, seed=7)
        assert result.verdict == "counterexample"
        scenario = parse_scenario(result.witness)
        family = scenario.family()
        if "xi" in scenario.claims:
            xi = scenario.claims["xi"].atoms(scenario.space)
        else:
            xi = np.asarray(result.witness["xi_atoms"], dtype=float)
        env = envelope_process(family, xi)
        verdict = classify(env, family, tol=0.0)
        assert verdict.worst_violation[3] == pytest.approx(result.violation, abs=1e-10)

    def test_fmars5_witness_replays(self):
        result = search_counterexample("thm-fmars5", budget=500, seed=11)
        assert result.verdict == "counterexample"
        scenario = parse_scenario(result.witness)
        family = scenario.family()
        if "xi" in scenario.claims:
            xi = scenario.claims["xi"].atoms(scenario.space)
        else:
            xi = np.asarray(result.witness["xi_atoms"], dtype=float)
        worst = 0.0
        for m in range(scenario.space.horizon + 1):
            conds = [cond_exp(scenario.space, xi, p, m) for p in family]
            for i in range(len(conds)):
                for j in range(i + 1, len(conds)):
                    worst = max(worst, float(np.abs(conds[i] - conds[j]).max()))
            for b, base in enumerate(family):
                if m == 0:
                    continue
                proc = cond_exp(scenario.space, xi, base, m)
                prev = cond_exp(scenario.space, xi, base, m - 1)
                for p in family:
                    e = cond_exp(scenario.space, proc, p, m - 1)
                    worst = max(worst, float(np.abs(e - prev).max()))
        assert worst == pytest.approx(result.violation, abs=1e-10)


class TestWitnessRoundTrip:
    @pytest.mark.parametrize("claim", CLAIM_IDS)
    def test_every_claim_witness_re_audits_identically(self, claim):
        from doobkit.claims import instance_from_dict

        result = search_counterexample(claim, budget=800, seed=13)
        assert result.verdict == "counterexample", claim
        rebuilt = instance_from_dict(result.witness)
        again = audit(claim, rebuilt)
        assert again.verdict == "counterexample"
        assert again.violation == pytest.approx(result.violation, abs=1e-10)


class TestSearch:
    def test_budget_validation(self):
        with pytest.raises(ValueError):
            search_counterexample("lemma-tmars5", budget=0, seed=0)

    def test_deterministic_given_seed(self):
        a = search_counterexample("lemma-tmars5", budget=200, seed=3)
        b = search_counterexample("lemma-tmars5", budget=200, seed=3)
        assert a.verdict == b.verdict == "counterexample"
        assert a.violation == b.violation
        assert a.witness == b.witness

    def test_singleton_restriction_passes(self):
        result = search_counterexample("lemma-q5", budget=50, seed=5, max_extremes=1)
        assert result.verdict == "pass"
        assert result.budget_used == 50

    def test_shrinking_keeps_violation(self):
        result = search_counterexample("lemma-tmars5", budget=500, seed=21)
        assert result.verdict == "counterexample"
        assert result.violation > 1e-9
        # shrunk witnesses stay within the sampling envelope
        assert result.witness["atoms"] <= 8
