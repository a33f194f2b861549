import math

import numpy as np
import pytest

from chargeplan.metamodel import (
    BUILTIN_COEFFICIENTS,
    DesignGrid,
    FitReport,
    RsmCoefficients,
    SingularDesignError,
    basis_row,
    eval_rsm,
    fit_rsm,
    inverse_logit,
    logit,
    rsm_hessian,
    rsm_jacobian,
)


class TestLogitPair:
    def test_center(self):
        y, clamped = logit(0.5)
        assert y == 0.0 and not clamped

    def test_round_trip(self):
        y, _ = logit(0.2)
        assert inverse_logit(y) == pytest.approx(0.2, abs=1e-12)

    def test_known_value(self):
        y, _ = logit(0.88)
        assert y == pytest.approx(1.9924, abs=1e-3)

    def test_clamped_endpoints(self):
        y0, c0 = logit(0.0)
        y1, c1 = logit(1.0)
        assert c0 and c1
        assert y0 == pytest.approx(math.log(1e-9 / (1 - 1e-9)))
        assert y1 == pytest.approx(-y0, rel=1e-9)

    def test_inverse_range(self):
        for y in (-800.0, -40.0, 0.0, 40.0, 800.0):
            p = inverse_logit(y)
            assert 0.0 < p < 1.0


class TestEval:
    def test_zero_arrivals_rule(self):
        assert eval_rsm(BUILTIN_COEFFICIENTS, 12, 3, 7, 0.0) == 0.0

    def test_pinned_reference_point(self):
        # direct polynomial expansion at (5, 5, 4, 5) gives logit -6.6614
        assert eval_rsm(BUILTIN_COEFFICIENTS, 5, 5, 4, 5) == pytest.approx(
            0.0012777193649968497, rel=1e-12
        )

    def test_output_in_unit_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            s = rng.integers(1, 16)
            r = rng.integers(1, 16)
            v = rng.integers(2, 11)
            a = rng.uniform(0.0, 30.0)
            b = eval_rsm(BUILTIN_COEFFICIENTS, s, r, v, a)
            assert 0.0 <= b < 1.0

    def test_more_slots_give_less_blocking(self):
        at = lambda s: eval_rsm(BUILTIN_COEFFICIENTS, s, 5, 4, 6.0)
        assert at(12) < at(2)


class TestDerivatives:
    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        coeffs = BUILTIN_COEFFICIENTS
        for _ in range(20):
            x = np.array(
                [
                    rng.uniform(1, 15),
                    rng.uniform(1, 15),
                    rng.uniform(2, 10),
                    rng.uniform(0.25, 30),
                ]
            )
            jac = rsm_jacobian(coeffs, *x)
            h = 1e-5
            for k in range(4):
                up, dn = x.copy(), x.copy()
                up[k] += h
                dn[k] -= h
                fd = (
                    basis_row(*up) @ coeffs.as_array()
                    - basis_row(*dn) @ coeffs.as_array()
                ) / (2 * h)
                assert jac[k] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_hessian_cross_term(self):
        h = rsm_hessian(BUILTIN_COEFFICIENTS)
        assert h[0, 1] == -0.0645
        assert h[1, 0] == -0.0645

    def test_hessian_arrivals_curvature(self):
        h = rsm_hessian(BUILTIN_COEFFICIENTS)
        assert h[3, 3] == pytest.approx(-0.542)

    def test_hessian_symmetric_and_constant(self):
        h = rsm_hessian(BUILTIN_COEFFICIENTS)
        assert np.array_equal(h, h.T)
        assert np.array_equal(h, rsm_hessian(BUILTIN_COEFFICIENTS))


def synthetic_surface_samples(coeffs, n_levels=4):
    pts, vals = [], []
    for s in np.linspace(1, 15, n_levels):
        for r in np.linspace(1, 15, n_levels):
            for v in np.linspace(2, 10, n_levels):
                for a in np.linspace(0.25, 8, n_levels):
                    y = float(basis_row(s, r, v, a) @ coeffs.as_array())
                    pts.append((s, r, v, a))
                    vals.append(inverse_logit(y))
    return pts, vals


class TestFit:
    def test_noiseless_recovery(self):
        truth = RsmCoefficients(
            (-2.0, -0.5, -0.2, -0.05, 0.6, -0.01, 0.002, 0.03, -0.004, 0.01,
             0.001, -0.002, 0.003, 0.0005, -0.02)
        )
        pts, vals = synthetic_surface_samples(truth)
        report = fit_rsm(pts, vals)
        assert np.abs(report.coefficients.as_array() - truth.as_array()).max() < 1e-8
        assert report.r_square == pytest.approx(1.0, abs=1e-12)
        assert report.n_clamped == 0

    def test_idempotent_refit(self):
        truth = RsmCoefficients(
            (-2.0, -0.5, -0.2, -0.05, 0.6, -0.01, 0.002, 0.03, -0.004, 0.01,
             0.001, -0.002, 0.003, 0.0005, -0.02)
        )
        pts, vals = synthetic_surface_samples(truth)
        first = fit_rsm(pts, vals)
        assert first.n_clamped == 0  # predictions stay inside the clamp band
        refit = fit_rsm(
            pts, [eval_rsm(first.coefficients, *p) for p in pts]
        )
        assert np.abs(
            refit.coefficients.as_array() - first.coefficients.as_array()
        ).max() < 1e-10

    def test_single_point_design_rejected(self):
        pts = [(5, 5, 4, 3.0)] * 40
        with pytest.raises(SingularDesignError):
            fit_rsm(pts, [0.1] * 40)

    def test_rank_deficiency_names_terms(self):
        # slots pinned to one level: every slots-bearing term is unidentified
        pts = [(5, r, v, a) for r in (1, 5, 9) for v in (2, 6, 10) for a in (1, 3, 5)]
        with pytest.raises(SingularDesignError) as err:
            fit_rsm(pts, [0.05] * len(pts))
        assert "slots" in str(err.value)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_rsm([((1, 1, 2, 1.0))] * 10, [0.1] * 10)

    def test_value_domain_checked(self):
        pts, vals = synthetic_surface_samples(BUILTIN_COEFFICIENTS, n_levels=2)
        vals = list(vals)
        vals[0] = 1.0
        with pytest.raises(ValueError):
            fit_rsm(pts, vals)

    def test_clamp_counted(self):
        truth = RsmCoefficients(
            (-2.0, -0.5, -0.2, -0.05, 0.6, -0.01, 0.002, 0.03, -0.004, 0.01,
             0.001, -0.002, 0.003, 0.0005, -0.02)
        )
        pts, vals = synthetic_surface_samples(truth)
        vals = list(vals)
        vals[0] = 0.0
        vals[1] = 5e-10
        report = fit_rsm(pts, vals)
        assert report.n_clamped == 2

    def test_report_validation(self):
        with pytest.raises(ValueError):
            FitReport(BUILTIN_COEFFICIENTS, 1.2, 0.5, 0.1, 0.1, 10)
        with pytest.raises(ValueError):
            FitReport(BUILTIN_COEFFICIENTS, 0.9, 0.5, -0.1, 0.1, 10)


class TestCoefficientSerialization:
    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "coeffs.csv"
        BUILTIN_COEFFICIENTS.to_csv(str(path))
        loaded = RsmCoefficients.from_csv(str(path))
        assert loaded == BUILTIN_COEFFICIENTS

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            RsmCoefficients.from_csv(str(path))

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            RsmCoefficients((1.0, 2.0))
        with pytest.raises(ValueError):
            RsmCoefficients((float("nan"),) * 15)


class TestDesignGrid:
    def test_reference_bounds_at_unit_stride(self):
        slots, storage, recharge, arrivals = DesignGrid().axis_values()
        assert slots == list(range(1, 16))
        assert storage == list(range(1, 16))
        assert recharge == list(range(2, 11))
        assert arrivals[0] == 0.25 and arrivals[-1] == 30.0
        assert len(arrivals) == 120
        assert DesignGrid().size == 243000

    def test_default_cli_stride_thins_arrivals(self):
        grid = DesignGrid(strides=(1, 1, 4, 1))
        _, _, _, arrivals = grid.axis_values()
        assert arrivals[:3] == [0.25, 1.25, 2.25]
        assert grid.size == 15 * 15 * 9 * len(arrivals)

    def test_points_match_size(self):
        grid = DesignGrid(strides=(4, 4, 16, 4))
        assert len(list(grid.points())) == grid.size
