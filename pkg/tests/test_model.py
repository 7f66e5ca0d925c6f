import json

import numpy as np
import pytest
from scipy import special

import clustertail as ct
from clustertail import model
from clustertail.errors import (
    ConfigFormatError,
    ConnectivityViolation,
    DuplicateTailIndex,
    EmptySet,
    SubcriticalityViolation,
)

# exact fractions for the reference model's expected clusters
S11, S21 = 26 / 15, 4 / 15
S12, S22 = 2 / 5, 8 / 5


def brute_zeta_mean(alpha, p, terms=10**8):
    """Direct summation of p * sum k^-alpha / zeta(alpha+1) plus an integral
    tail bound; independent of scipy's Hurwitz accumulation."""
    ks = np.arange(1, terms + 1, dtype=np.float64)
    partial = float(np.sum(ks ** -alpha))
    tail_hi = (terms + 1) ** (1 - alpha) / (alpha - 1) + (terms + 1) ** -alpha
    z = float(np.sum(ks ** -(alpha + 1.0))) + (terms + 1) ** -alpha / alpha
    return p * partial / z, p * tail_hi / z


def brute_zeta_survival(alpha, p, x, terms=10**7):
    s = alpha + 1.0
    k0 = int(np.floor(x))
    ks = np.arange(k0 + 1, k0 + terms + 1, dtype=np.float64)
    num = float(np.sum(ks ** -s))
    num_tail = (k0 + terms + 1) ** (1 - s) / (s - 1) + (k0 + terms + 1) ** -s
    den = float(np.sum(np.arange(1, k0 + terms + 1, dtype=np.float64) ** -s)) + (
        k0 + terms + 1
    ) ** (1 - s) / (s - 1)
    return p * num / den, p * num_tail / den


class TestLawMean:
    def test_zero_activity(self):
        assert ct.law_mean(ct.OffspringLaw("zeta_tail", 1.6, 0.0)) == 0.0

    def test_mixed_poisson_closed_form(self):
        law = ct.OffspringLaw("mixed_poisson", 2.0, 1.0, x_m=1.0, phi=0.5)
        assert ct.law_mean(law) == pytest.approx(1.0, abs=1e-12)

    def test_zeta_against_brute_sum(self):
        law = ct.OffspringLaw("zeta_tail", 1.6, 0.2284)
        got = ct.law_mean(law)
        oracle, bound = brute_zeta_mean(1.6, 0.2284, terms=10**8)
        assert abs(got - oracle) <= bound + 1e-10
        assert got == pytest.approx(0.4, abs=3e-4)
        assert special.zeta(1.6) / special.zeta(2.6) == pytest.approx(1.7516, abs=2e-4)


class TestLawSurvival:
    def test_below_support_is_activity(self):
        law = ct.OffspringLaw("zeta_tail", 1.6, 0.3)
        assert ct.law_survival(law, 0.5) == pytest.approx(0.3, abs=1e-14)
        assert ct.law_survival(law, 0.0) == pytest.approx(0.3, abs=1e-14)

    def test_zero_activity(self):
        for fam, kw in (("zeta_tail", {}), ("mixed_poisson", {"x_m": 1.0, "phi": 1.0})):
            law = ct.OffspringLaw(fam, 1.6, 0.0, **kw)
            assert ct.law_survival(law, 7.0) == 0.0

    def test_zeta_against_partial_sums(self):
        law = ct.OffspringLaw("zeta_tail", 1.6, 1.0)
        got = ct.law_survival(law, 10.0)
        oracle, bound = brute_zeta_survival(1.6, 1.0, 10.0)
        assert abs(got - oracle) <= bound + 1e-12

    def test_nonincreasing_and_slowly_varying(self):
        law = ct.OffspringLaw("zeta_tail", 1.6, 0.7)
        xs = [0, 1, 2, 5, 10, 100, 5000]
        vals = [ct.law_survival(law, x) for x in xs]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        ratio = ct.law_survival(law, 2e4) / ct.law_survival(law, 1e4)
        assert ratio == pytest.approx(2.0 ** -1.6, rel=0.02)

    def test_mixed_poisson_survival_monotone_and_mass(self):
        law = ct.OffspringLaw("mixed_poisson", 2.2, 0.6, x_m=1.0, phi=0.8)
        vals = [ct.law_survival(law, x) for x in (0, 1, 3, 10, 50)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        # unconditioned Poisson mixture puts mass at zero: P(B>0) < p
        assert vals[0] < 0.6

    def test_mixed_poisson_survival_vs_mc(self):
        law = ct.OffspringLaw("mixed_poisson", 2.2, 1.0, x_m=1.0, phi=0.8)
        from clustertail.rng import derive, unit_array

        u1 = unit_array(derive(11, 1), 400_000)
        u2 = unit_array(derive(11, 2), 400_000)
        w = law.x_m * u1 ** (-1.0 / law.alpha)
        rng = np.random.default_rng(0)
        b = rng.poisson(w * law.phi)
        _ = u2
        for x in (0, 2, 10):
            emp = float((b > x).mean())
            exact = ct.law_survival(law, x)
            se = np.sqrt(exact * (1 - exact) / b.size)
            assert abs(emp - exact) <= 5 * se + 1e-6


class TestTruncatedMean:
    def test_zeta_brute(self):
        law = ct.OffspringLaw("zeta_tail", 1.6, 0.5)
        ks = np.arange(1, 21, dtype=np.float64)
        z = special.zeta(2.6)
        oracle = 0.5 * float(np.sum(ks * ks ** -2.6)) / z
        assert model.law_mean_truncated(law, 20.0) == pytest.approx(oracle, rel=1e-10)

    def test_cutoff_below_one(self):
        law = ct.OffspringLaw("zeta_tail", 1.6, 0.5)
        assert model.law_mean_truncated(law, 0.5) == 0.0

    def test_mixed_poisson_consistent(self):
        law = ct.OffspringLaw("mixed_poisson", 2.5, 0.8, x_m=1.0, phi=0.7)
        full = ct.law_mean(law)
        trunc = model.law_mean_truncated(law, 50.0)
        assert 0.0 < trunc < full
        # E[B 1{B<=M}] -> E[B]
        assert model.law_mean_truncated(law, 1e6) == pytest.approx(full, rel=1e-6)


class TestValidate:
    def test_d1_scalar(self):
        p = model.solve_activity_for_mean("zeta_tail", 2.0, 0.5)
        cfg = ct.ModelConfig([[ct.OffspringLaw("zeta_tail", 2.0, p)]])
        assert cfg.report.spectral_radius == pytest.approx(0.5, abs=1e-9)
        assert cfg.report.passed

    def test_r2_values(self, r2):
        assert r2.report.spectral_radius < 0.55
        np.testing.assert_allclose(r2.sbar[:, 0], [S11, S21], atol=1e-9)
        np.testing.assert_allclose(r2.sbar[:, 1], [S12, S22], atol=1e-9)
        assert list(r2.report.tail_indices_sorted) == sorted([1.6, 3.4, 2.9, 2.2])

    def test_subcritical_violation(self):
        laws = [
            [ct.OffspringLaw("zeta_tail", 2.0, model.solve_activity_for_mean("zeta_tail", 2.0, 1.0)),
             ct.OffspringLaw("zeta_tail", 2.1, 0.0)],
            [ct.OffspringLaw("zeta_tail", 2.2, 0.0),
             ct.OffspringLaw("zeta_tail", 2.3, model.solve_activity_for_mean("zeta_tail", 2.3, 0.5))],
        ]
        with pytest.raises(SubcriticalityViolation):
            ct.ModelConfig(laws)
        report = ct.validate(laws)
        assert not report.passed and not report.subcritical
        assert report.spectral_radius == pytest.approx(1.0, abs=1e-9)

    def test_duplicate_tail_index(self):
        laws = [
            [ct.OffspringLaw("zeta_tail", 2.0, 0.2), ct.OffspringLaw("zeta_tail", 2.0, 0.1)],
            [ct.OffspringLaw("zeta_tail", 2.4, 0.1), ct.OffspringLaw("zeta_tail", 2.6, 0.2)],
        ]
        with pytest.raises(DuplicateTailIndex):
            ct.ModelConfig(laws)

    def test_connectivity_violation(self):
        laws = [
            [ct.OffspringLaw("zeta_tail", 2.0, 0.2), ct.OffspringLaw("zeta_tail", 2.1, 0.0)],
            [ct.OffspringLaw("zeta_tail", 2.2, 0.0), ct.OffspringLaw("zeta_tail", 2.3, 0.2)],
        ]
        with pytest.raises(ConnectivityViolation):
            ct.ModelConfig(laws)

    def test_fixed_point_identity(self, r2):
        # sbar_j = e_j + sum_i mean[i<-j] sbar_i
        for j in range(2):
            rhs = np.eye(2)[j] + r2.sbar @ r2.mean_matrix[:, j]
            np.testing.assert_allclose(r2.sbar[:, j], rhs, atol=1e-10)


class TestExpectedCluster:
    def test_no_offspring_is_root(self, d1_zero):
        np.testing.assert_allclose(ct.expected_cluster(d1_zero, 0), [1.0])

    def test_r2_columns(self, r2):
        np.testing.assert_allclose(ct.expected_cluster(r2, 0), [S11, S21], atol=1e-9)
        np.testing.assert_allclose(ct.expected_cluster(r2, 1), [S12, S22], atol=1e-9)


class TestAlphaCalculus:
    def test_alpha_star(self, r2):
        assert model.alpha_star_lstar(r2, 0) == (1.6, 0)
        assert model.alpha_star_lstar(r2, 1) == (2.2, 1)

    def test_alpha_of_sets(self, r2):
        assert ct.alpha_of(r2, {0}) == pytest.approx(1.6)
        assert ct.alpha_of(r2, {1}) == pytest.approx(2.2)
        assert ct.alpha_of(r2, {0, 1}) == pytest.approx(2.8)
        assert ct.alpha_of(r2, frozenset(), allow_empty=True) == 0.0
        with pytest.raises(EmptySet):
            ct.alpha_of(r2, frozenset())

    def test_strictly_increasing_in_inclusion(self, r2):
        assert ct.alpha_of(r2, {0}) < ct.alpha_of(r2, {0, 1})
        assert ct.alpha_of(r2, {1}) < ct.alpha_of(r2, {0, 1})


class TestRateLambda:
    def test_singleton_is_survival(self, r2):
        law = r2.laws[0][0]
        assert ct.rate_lambda(r2, {0}, 50.0) == pytest.approx(
            ct.law_survival(law, 50.0), rel=1e-12
        )

    def test_pair_formula(self, r2):
        n = 40.0
        expect = n * ct.law_survival(r2.laws[0][0], n) * ct.law_survival(r2.laws[1][1], n)
        assert ct.rate_lambda(r2, {0, 1}, n) == pytest.approx(expect, rel=1e-12)

    def test_regular_variation_ratio(self, r2):
        for jset in ({0}, {1}, {0, 1}):
            a = ct.alpha_of(r2, jset)
            ratio = ct.rate_lambda(r2, jset, 2e4) / ct.rate_lambda(r2, jset, 1e4)
            assert ratio == pytest.approx(2.0 ** -a, rel=0.05)


class TestLoader:
    def test_round_trip(self, r2, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps(model.config_to_dict(r2)))
        cfg = ct.config_from_json(path)
        np.testing.assert_allclose(cfg.sbar, r2.sbar, atol=1e-12)

    def test_mean_solved_by_bisection(self):
        cfg = model.config_from_dict(
            {"d": 1, "offspring": [[{"family": "zeta_tail", "alpha": 2.0, "mean": 0.5}]]}
        )
        assert ct.law_mean(cfg.laws[0][0]) == pytest.approx(0.5, abs=1e-11)

    def test_malformed(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"d": 2, "offspring": [')
        with pytest.raises(ConfigFormatError):
            ct.config_from_json(bad)
        with pytest.raises(ConfigFormatError):
            model.config_from_dict({"d": 2, "offspring": [[{"family": "nope"}]]})
        with pytest.raises(ConfigFormatError):
            model.config_from_dict({"d": 1, "offspring": [[{"family": "zeta_tail", "alpha": 0.5, "p": 0.1}]]})

    def test_unreachable_mean(self):
        with pytest.raises(ConfigFormatError):
            model.solve_activity_for_mean("zeta_tail", 3.0, 10.0)


class TestLawSampling:
    def test_mc_mean_within_4se(self, r2):
        # 1e6 draws from each R2 law against the exact mean
        from clustertail.rng import derive, unit_array
        from clustertail.kernels import law_pack, KTAB

        pack = law_pack(r2)
        cdf = pack[7]
        for j in range(2):
            for i in range(2):
                u = unit_array(derive(17, 100 + 2 * j + i), 1_000_000)
                ks = np.searchsorted(cdf[j, i, :], u)
                assert ks.max() <= KTAB  # beyond-table draws are ~1e-7 events
                emp = float(ks.mean())
                se = float(ks.std() / np.sqrt(ks.size))
                exact = ct.law_mean(r2.laws[j][i])
                assert abs(emp - exact) <= 4 * se
