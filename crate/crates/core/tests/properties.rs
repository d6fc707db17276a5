use declab_core::fock::{cm_operators, coherent_state, DensityMatrix};
use declab_core::grid::{build_rhs, GridDensity, GridSpec};
use declab_core::grwp::{csl_f, qmsl_density_eigenvalue, Point};
use declab_core::lindblad::build_generator;
use declab_core::oracles::{
    decoherence_time, entropy_poly, first_moments, moment_derivatives, second_moments, DecoherenceQuery, DecoherenceRegime, InitialMoments,
    Moments,
};
use declab_core::quadrature::CompensatedSum;
use declab_core::spectrum::{
    integral_i_full_line_quadrature, integral_i_quadrature, integral_i_residue, planck_occupation, LorentzianSpectrum, ThermalParams,
};
use declab_core::units::{from_engine_units, to_engine_units, UnitSystem};
use declab_core::{ModelParams, PhysicalConstants, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn random_density(d: usize, seed: u64) -> DensityMatrix {
    let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let a = DMatrix::<C64>::from_fn(d, d, |_, _| C64::new(next(), next()));
    let r = &a * a.adjoint();
    let tr = r.trace();
    DensityMatrix::from_matrix_unchecked(r / tr)
}

fn gaussian_moments(vq: f64, vp: f64, cov: f64, q: f64, p: f64) -> Moments {
    Moments { q, p, q2: vq + q * q, qp: cov + 2.0 * q * p, p2: vp + p * p }
}

/// Five-point central difference.
fn deriv<F: Fn(f64) -> f64>(f: F, t: f64, h: f64) -> f64 {
    (f(t - 2.0 * h) - 8.0 * f(t - h) + 8.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_round_trip(n in 1.0f64..1e6, m in 1e-25f64..1e-20, w in 1e2f64..1e12, lam in 1e-40f64..1e-20,
                       t in 0.1f64..300.0, st in 1e-6f64..1e3, sl in 1e-6f64..1e3, sm in 1e-6f64..1e3) {
        let p = ModelParams::new(n, m, w, lam, 1e-3 / w, t, PhysicalConstants::CGS).unwrap();
        let u = UnitSystem::new(declab_core::UnitKind::DimensionlessEngine, st, sl, sm).unwrap();
        let e = to_engine_units(&p, &u).unwrap();
        let back = from_engine_units(&e, &u).unwrap();
        prop_assert!(rel(back.m, p.m) < 1e-14 && rel(back.omega, p.omega) < 1e-14 && rel(back.lambda, p.lambda) < 1e-14);
        prop_assert!(rel(back.consts.hbar(), p.consts.hbar()) < 1e-14 && rel(back.consts.k_b(), p.consts.k_b()) < 1e-14);
        // every dimensionless group survives
        prop_assert!(rel(e.p(), p.p()) < 1e-12);
        prop_assert!(rel(e.xi(), p.xi()) < 1e-12);
        prop_assert!(rel(e.lambda / e.omega, p.lambda / p.omega) < 1e-12);
        prop_assert!(rel(e.nbar(), p.nbar()) < 1e-12 || p.nbar() < 1e-300);
    }

    #[test]
    fn occupation_is_decreasing_in_frequency(t in 0.01f64..100.0, w in 0.01f64..10.0, k in 1.01f64..5.0) {
        let c = PhysicalConstants::NATURAL;
        let a = planck_occupation(w, t, &c).unwrap();
        let b = planck_occupation(w * k, t, &c).unwrap();
        prop_assert!(a >= 0.0 && b >= 0.0 && b < a);
    }

    #[test]
    fn thermal_integral_grows_with_temperature(xi in 0.2f64..50.0, t in 0.05f64..5.0, k in 1.05f64..3.0) {
        let c = PhysicalConstants::NATURAL;
        let spec = LorentzianSpectrum::new(1.0, 1.0 / xi).unwrap();
        let cold = integral_i_quadrature(&spec, 0.0, 0.01, 1e-10, &c).unwrap();
        let lo = integral_i_quadrature(&spec, t, 0.01, 1e-10, &c).unwrap();
        let hi = integral_i_quadrature(&spec, t * k, 0.01, 1e-10, &c).unwrap();
        prop_assert!(cold <= lo + 1e-9 && lo < hi, "{cold} {lo} {hi}");
    }

    #[test]
    fn residue_series_matches_quadrature(xi in 0.01f64..1.0, ratio in 0.005f64..0.05) {
        let tp = ThermalParams::new(xi / ratio, xi).unwrap();
        let a = integral_i_residue(&tp, 1000).unwrap();
        let b = integral_i_full_line_quadrature(&tp, 1e-12).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
    }

    #[test]
    fn generator_preserves_trace_and_hermiticity(n in 1.0f64..20.0, lam in 0.0f64..0.5, nbar in 0.0f64..3.0, seed in any::<u64>()) {
        let d = 12;
        let p = ModelParams::engine(n, lam, nbar).unwrap();
        let g = build_generator(&p, d).unwrap();
        let rho = random_density(d, seed);
        let out = g.apply(&rho.matrix);
        prop_assert!(out.trace().norm() < 1e-10 * (1.0 + out.norm()));
        prop_assert!((&out - out.adjoint()).norm() < 1e-10 * (1.0 + out.norm()));
    }

    #[test]
    fn closed_forms_solve_their_odes(n in 1.0f64..50.0, lam in 1e-3f64..0.3, nbar in 0.0f64..5.0,
                                     q0 in -2.0f64..2.0, p0 in -2.0f64..2.0, t in 0.1f64..20.0) {
        let p = ModelParams::engine(n, lam, nbar).unwrap();
        let vq = 1.0 / (2.0 * n);
        let vp = 0.5 * n;
        let init = InitialMoments::new(gaussian_moments(vq, vp, 0.0, q0, p0), 1.0).unwrap();
        let at = |t: f64| {
            let (q, pp) = first_moments(t, &p, &init);
            let (q2, qp, p2) = second_moments(t, &p, &init, 1).unwrap();
            Moments { q, p: pp, q2, qp, p2 }
        };
        let g = p.damping();
        let h = 2e-3 / (1.0 + g);
        let m = at(t);
        let rhs = moment_derivatives(&p, &m);
        let pairs = [
            (deriv(|s| at(s).q, t, h), rhs.q, m.q.abs() + m.q2.sqrt()),
            (deriv(|s| at(s).p, t, h), rhs.p, m.p.abs() + m.p2.sqrt()),
            (deriv(|s| at(s).q2, t, h), rhs.q2, m.q2),
            (deriv(|s| at(s).qp, t, h), rhs.qp, m.qp.abs() + (m.q2 * m.p2).sqrt()),
            (deriv(|s| at(s).p2, t, h), rhs.p2, m.p2),
        ];
        for (fd, exact, scale) in pairs {
            // residual relative to the rate scale of the moment
            let tol = 1e-10 * (exact.abs() + scale * (1.0 + g));
            prop_assert!((fd - exact).abs() <= tol, "{fd} vs {exact}, tol {tol}");
        }
    }

    #[test]
    fn low_frequency_is_the_hot_limit(n in 1.0f64..1e3, lam in 1e-6f64..1.0, t in 1.0f64..1e3, dq in 0.01f64..10.0) {
        let p = ModelParams::new(n, 1.0, 1.0, lam, 0.05, t, PhysicalConstants::NATURAL).unwrap();
        let low = decoherence_time(&DecoherenceQuery { params: p, delta_q: dq, regime: DecoherenceRegime::LowFrequency }).unwrap();
        // general form with 1 + 2n replaced by 2k_BT/ℏω
        let dd = n * p.big_m * lam * 2.0 * t / 4.0;
        prop_assert!(rel(low, 1.0 / (dd * dq * dq)) < 1e-12);
    }

    #[test]
    fn entropy_polynomial_is_monotone(vq in 0.01f64..5.0, vp in 0.01f64..5.0, c in -0.9f64..0.9, t1 in 0.0f64..1.0, dt in 1e-4f64..1.0) {
        let p = ModelParams::engine(4.0, 1e-4, 1.0).unwrap();
        // covariance limited by positivity and the uncertainty relation
        let cov = c * 2.0 * (vq * vp).sqrt();
        prop_assume!(vq * vp - 0.25 * cov * cov >= 0.25);
        let init = InitialMoments::new(gaussian_moments(vq, vp, cov, 0.0, 0.0), 1.0).unwrap();
        let a = entropy_poly(t1, &p, &init, 1).unwrap();
        let b = entropy_poly(t1 + dt, &p, &init, 1).unwrap();
        // monotone while the t² term cannot overturn the linear one
        prop_assume!(cov >= 0.0 || (t1 + dt) * cov.abs() / (2.0 * p.big_m) < vq);
        prop_assert!(b > a);
    }

    #[test]
    fn collapse_kernels_are_non_negative(x in prop::array::uniform3(-3.0f64..3.0), pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..8),
                                         alpha in 0.1f64..100.0) {
        let pts: Vec<Point> = pts;
        prop_assert!(qmsl_density_eigenvalue(&x, &pts, alpha) >= 0.0);
        prop_assert!(csl_f(&x, &pts, alpha) >= 0.0);
    }

    #[test]
    fn compensated_sum_is_order_independent(mut xs in prop::collection::vec(-1e10f64..1e10, 1..200)) {
        let a = xs.iter().copied().collect::<CompensatedSum>().value();
        xs.reverse();
        let b = xs.iter().copied().collect::<CompensatedSum>().value();
        let scale: f64 = xs.iter().map(|x| x.abs()).sum();
        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * f64::EPSILON * scale + 1e-300 || (a - b).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn grid_operator_preserves_hermiticity(n_part in 1.0f64..20.0, lam in 0.0f64..0.01, nbar in 0.0f64..2.0,
                                           c in -1.0f64..1.0, sep in 0.0f64..4.0, mom in -1.0f64..1.0) {
        let p = ModelParams::engine(n_part, lam, nbar).unwrap();
        let spec = GridSpec::new(12.0, 128).unwrap();
        let a = GridDensity::cat(spec, c, sep, 1.6).unwrap();
        let b = GridDensity::gaussian(spec, -c, 1.6, mom, 1.0).unwrap();
        let mix = GridDensity { spec, values: a.values.iter().zip(&b.values).map(|(x, y)| x * 0.3 + y * 0.7).collect() };
        let op = build_rhs(&p, spec).unwrap();
        let mut out = vec![C64::new(0.0, 0.0); spec.n * spec.n];
        op.apply(&mix.values, &mut out);
        let d = GridDensity { spec, values: out };
        prop_assert!(d.hermiticity_error() < 1e-12);
        prop_assert!(d.trace().abs() < 1e-8);
    }

    #[test]
    fn coherent_states_have_vacuum_widths(re in -1.5f64..1.5, im in -1.5f64..1.5, n in 1.0f64..30.0) {
        let d = 40;
        let p = ModelParams::engine(n, 0.0, 0.0).unwrap();
        let ops = cm_operators(&p, d).unwrap();
        let psi = coherent_state(C64::new(re, im), d).unwrap();
        let rho = psi.to_density();
        let q = rho.expect(&ops.q).re;
        let q2 = rho.expect(&ops.q.product(&ops.q)).re;
        let pp = rho.expect(&ops.p).re;
        let p2 = rho.expect(&ops.p.product(&ops.p)).re;
        prop_assert!(rel(q2 - q * q, 1.0 / (2.0 * n)) < 1e-9);
        prop_assert!(rel(p2 - pp * pp, 0.5 * n) < 1e-9);
    }
}
