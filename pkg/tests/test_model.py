import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spacingfit.calibration import DEFAULT_Q_GRID, SigmaTable
from spacingfit.model import (ModelError, ModelParams, brody_coefficients, brody_ps,
                              gaussian_term, model_curve, p1, p2, ps_missing,
                              read_curve, sample_spacings, solved_bn, write_curve)

from oracles import SOLVED_B1, SOLVED_B2, quad_p1


class TestParams:
    def test_bounds(self):
        ModelParams(q=0.0, f=1.0)
        ModelParams(q=1.0, f=0.05)
        with pytest.raises(ModelError, match="q"):
            ModelParams(q=1.2, f=0.5)
        with pytest.raises(ModelError, match="f"):
            ModelParams(q=0.5, f=0.0)


class TestBrodyCoefficients:
    def test_poisson_point(self):
        c = brody_coefficients(0.0)
        assert c.a == pytest.approx(1.0, abs=1e-12)
        assert c.b == pytest.approx(1.0, abs=1e-12)
        assert c.b1 == pytest.approx(1.0, abs=1e-12)
        assert c.b2 == pytest.approx(1.0, abs=1e-12)

    def test_wigner_point(self):
        c = brody_coefficients(1.0)
        assert c.b == pytest.approx(np.pi / 4.0, abs=1e-12)
        assert c.a == pytest.approx(np.pi / 2.0, abs=1e-12)
        assert c.b1 == pytest.approx(1.0 / 7.2, abs=1e-12)
        assert c.b2 == pytest.approx(1.0 / 60.0, abs=1e-12)

    def test_prefactor_relations(self):
        c = brody_coefficients(0.6)
        assert c.a == pytest.approx((0.6 + 1.0) * c.b, rel=1e-14)
        assert c.a1 == pytest.approx((2 * 0.6 + 1.0) * c.b1, rel=1e-14)
        assert c.a2 == pytest.approx((3 * 0.6 + 1.0) * c.b2, rel=1e-14)


class TestBrodyDensity:
    def test_poisson_form(self):
        s = np.linspace(0.0, 6.0, 601)
        assert np.max(np.abs(brody_ps(s, 0.0) - np.exp(-s))) < 1e-12

    def test_wigner_form(self):
        s = np.linspace(0.0, 6.0, 601)
        want = np.pi / 2.0 * s * np.exp(-np.pi * s ** 2 / 4.0)
        assert np.max(np.abs(brody_ps(s, 1.0) - want)) < 1e-12

    def test_scalar_input(self):
        assert brody_ps(1.0, 0.0) == pytest.approx(np.exp(-1.0))

    @given(q=st.floats(0.0, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_nonnegative(self, q):
        s = np.linspace(0.0, 10.0, 101)
        assert (brody_ps(s, q) >= 0.0).all()


class TestSolvedCoefficients:
    @pytest.mark.parametrize("q", sorted(SOLVED_B1))
    def test_b1_matches_independent_root(self, q):
        got, _ = solved_bn(q)
        assert got == pytest.approx(SOLVED_B1[q], rel=5e-6)

    @pytest.mark.parametrize("q", sorted(SOLVED_B2))
    def test_b2_matches_independent_root(self, q):
        _, got = solved_bn(q)
        assert got == pytest.approx(SOLVED_B2[q], rel=5e-6)


class TestGapDensities:
    def test_p1_against_oracle(self):
        for q in (0.3, 0.8):
            b1, _ = solved_bn(q)
            for s in (0.4, 1.3, 2.9):
                assert p1(s, q) == pytest.approx(quad_p1(s, q, b1), abs=1e-8)

    def test_p1_poisson_closed_form(self):
        s = np.linspace(0.01, 10, 50)
        assert np.max(np.abs(p1(s, 0.0) - s * np.exp(-s))) < 1e-10

    def test_p2_poisson_closed_form(self):
        s = np.linspace(0.01, 10, 50)
        assert np.max(np.abs(p2(s, 0.0) - 0.5 * s ** 2 * np.exp(-s))) < 1e-10

    def test_scalar_and_vector_agree(self):
        v = p1(np.array([0.7, 1.1]), 0.5)
        assert p1(0.7, 0.5) == pytest.approx(v[0], rel=1e-14)

    def test_negative_s_rejected(self):
        with pytest.raises(ModelError):
            p1(-0.5, 0.5)


class TestGaussianTerm:
    def test_hand_formula(self, flat_table):
        # flat table: variance n+1 everywhere
        n, s, q = 5, 4.0, 0.0
        var = 6.0
        want = np.exp(-((s - 6.0) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
        assert gaussian_term(n, s, q, flat_table) == pytest.approx(want, rel=1e-12)

    def test_peak_at_mean(self, flat_table):
        vals = [gaussian_term(4, s, 0.2, flat_table) for s in (3.0, 5.0, 7.0)]
        assert vals[1] == max(vals)

    def test_low_order_rejected(self, flat_table):
        with pytest.raises(ModelError, match="n = 3"):
            gaussian_term(2, 1.0, 0.5, flat_table)


class TestCompositeDensity:
    def test_f_one_reduces_to_brody(self, flat_table):
        s = np.linspace(0.0, 6.0, 241)
        for q in (0.0, 0.5, 1.0):
            got = ps_missing(s, ModelParams(q=q, f=1.0), flat_table)
            assert np.max(np.abs(got - brody_ps(s, q))) < 1e-14

    def test_poisson_with_gaps_is_exponential(self, flat_table):
        s = np.linspace(0.0, 6.0, 601)
        got = ps_missing(s, ModelParams(q=0.0, f=0.9), flat_table)
        assert np.max(np.abs(got - np.exp(-s))) < 5e-3

    def test_scalar_matches_vector(self, flat_table):
        params = ModelParams(q=0.4, f=0.6)
        vec = ps_missing(np.array([0.9, 2.2]), params, flat_table)
        assert ps_missing(0.9, params, flat_table) == pytest.approx(vec[0], rel=1e-14)

    def test_refuses_unprovenanced_table(self):
        n_range = np.arange(3, 151)
        var = np.tile((n_range + 1.0)[:, None], (1, len(DEFAULT_Q_GRID)))
        bare = SigmaTable(q_grid=DEFAULT_Q_GRID, n_range=n_range, variances=var)
        with pytest.raises(ModelError, match="provenance"):
            ps_missing(1.0, ModelParams(q=0.3, f=0.7), bare)

    def test_unverified_override(self):
        n_range = np.arange(3, 151)
        var = np.tile((n_range + 1.0)[:, None], (1, len(DEFAULT_Q_GRID)))
        loose = SigmaTable(q_grid=DEFAULT_Q_GRID, n_range=n_range, variances=var,
                           unverified_ok=True)
        assert ps_missing(1.0, ModelParams(q=0.3, f=0.7), loose) > 0.0

    def test_k_max_too_small_for_f(self, flat_table):
        # f=0.05 needs the series far beyond n=150; the table runs out
        with pytest.raises(ModelError, match="series|table"):
            ps_missing(1.0, ModelParams(q=0.3, f=0.05), flat_table, k_max=400)

    def test_truncation_insensitive_at_moderate_f(self, flat_table):
        params = ModelParams(q=0.5, f=0.7)
        a = ps_missing(2.0, params, flat_table, k_max=150)
        b = ps_missing(2.0, params, flat_table, k_max=60)
        assert a == pytest.approx(b, abs=1e-12)


class TestModelCurve:
    def test_tuple_grid_is_bin_centers(self, flat_table):
        curve = model_curve(ModelParams(q=0.3, f=0.8), (1.0, 0.25), table=flat_table)
        assert np.allclose(curve.grid, [0.125, 0.375, 0.625, 0.875])

    def test_unit_mass_and_mean(self, flat_table):
        # the flat fixture carries q=0-sized variances at every q, which
        # overstates the Gaussian mass lost below s=0; tolerances here cover
        # that artifact, the calibrated-table check is in test_acceptance
        grid = np.linspace(0.0, 40.0, 8001)
        curve = model_curve(ModelParams(q=0.6, f=0.5), grid, table=flat_table)
        mass = np.trapezoid(curve.values, grid)
        mean = np.trapezoid(grid * curve.values, grid)
        assert mass == pytest.approx(1.0, abs=4e-3)
        assert mean == pytest.approx(1.0, abs=8e-3)

    def test_curve_file_roundtrip(self, tmp_path, flat_table):
        curve = model_curve(ModelParams(q=0.3, f=0.8), (3.0, 0.1), table=flat_table)
        path = tmp_path / "curve.csv"
        write_curve(curve, path)
        back = read_curve(path)
        assert np.array_equal(back.grid, curve.grid)
        assert np.array_equal(back.values, curve.values)
        assert back.params == curve.params


class TestSampling:
    def test_deterministic(self, flat_table):
        params = ModelParams(q=0.5, f=0.8)
        a = sample_spacings(params, 500, seed=3, table=flat_table)
        b = sample_spacings(params, 500, seed=3, table=flat_table)
        assert np.array_equal(a.values, b.values)

    def test_seed_matters(self, flat_table):
        params = ModelParams(q=0.5, f=0.8)
        a = sample_spacings(params, 500, seed=3, table=flat_table)
        b = sample_spacings(params, 500, seed=4, table=flat_table)
        assert not np.array_equal(a.values, b.values)

    def test_unit_mean(self, flat_table):
        params = ModelParams(q=0.6, f=0.7)
        sample = sample_spacings(params, 200_000, seed=1, table=flat_table)
        assert sample.values.mean() == pytest.approx(1.0, abs=0.01)

    def test_positive_values(self, flat_table):
        sample = sample_spacings(ModelParams(q=0.0, f=0.5), 2000, seed=9,
                                 table=flat_table)
        assert (sample.values > 0).all()

    def test_matches_model_cdf(self, flat_table):
        # empirical CDF at a few probe points vs trapezoid CDF of the curve
        params = ModelParams(q=0.8, f=0.9)
        sample = sample_spacings(params, 100_000, seed=12, table=flat_table)
        grid = np.linspace(0.0, 12.0, 4801)
        curve = model_curve(params, grid, table=flat_table)
        cdf = np.concatenate(([0.0], np.cumsum(0.5 * (curve.values[1:] + curve.values[:-1])
                                               * np.diff(grid))))
        for probe in (0.5, 1.0, 2.0):
            want = np.interp(probe, grid, cdf)
            got = np.mean(sample.values <= probe)
            assert got == pytest.approx(want, abs=0.01)
