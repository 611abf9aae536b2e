use num_complex::Complex64;
use proptest::prelude::*;

use vsa_core::analysis::{effective_apertures, effective_bandwidth, ResolutionReport};
use vsa_core::correlation::{cross_correlate, cross_correlate_direct, CorrelationMatrix, TraceSet};
use vsa_core::experiment::{ExperimentConfig, PRESET_NAMES};
use vsa_core::io::RawGrid;
use vsa_core::layered::polynomials::{poly_p, poly_p_binomial, weight};
use vsa_core::layered::transition::transition_matrix;
use vsa_core::migration::{migrate_correlations, ImageGrid, MigrationOptions, PsfParams, Regime};
use vsa_core::quadrature::AdaptiveGl;
use vsa_core::rng::stream_rng;
use rand::Rng;

fn psf(regime: Regime, b: f64, length: f64, gamma2_bar: f64, l_loc: f64) -> PsfParams {
    PsfParams {
        regime,
        c0: 1.0,
        lambda0: 1.0,
        a: 20.0,
        b,
        length,
        reflector_depth: 2.0 * length,
        bandwidth: 1.0,
        gamma2_bar,
        l_loc,
    }
}

#[test]
fn polynomials_are_orthonormal() {
    let q = AdaptiveGl::new(16, 1e-15, 1e-13);
    let edges: Vec<f64> = (0..=120).map(|i| i as f64 * 0.25).collect();
    for n in 0..=6 {
        for m in 0..=n {
            let r = q.integrate_panels(&edges, |u| poly_p(n, u) * poly_p(m, u) * weight(u));
            let want = if n == m { 1.0 } else { 0.0 };
            assert!((r.value - want).abs() < 1e-8, "<P{n},P{m}> = {}", r.value);
        }
    }
}

#[test]
fn chapman_kolmogorov_holds_at_small_depth() {
    let n_max = 240;
    let half = transition_matrix(n_max, 0.1).unwrap();
    let full = transition_matrix(n_max, 0.2).unwrap();
    for n in 0..=6 {
        for p in 0..=6 {
            let composed: f64 = (0..=n_max).map(|k| half[n][k] * half[k][p]).sum();
            assert!((composed - full[n][p]).abs() < 1e-6, "({n},{p}): {composed} vs {}", full[n][p]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursion_and_binomial_forms_agree(n in 0usize..12, u in 0.0f64..4.0) {
        let a = poly_p(n, u);
        let b = poly_p_binomial(n, u);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn bandwidth_shrinks_with_depth(b in 0.1f64..5.0, w0 in 1.0f64..20.0, l in 0.0f64..100.0, dl in 0.1f64..50.0, l_loc in 0.5f64..200.0) {
        let b1 = effective_bandwidth(b, w0, l, l_loc).unwrap();
        let b2 = effective_bandwidth(b, w0, l + dl, l_loc).unwrap();
        prop_assert!(b1 <= b + 1e-15);
        prop_assert!(b2 < b1);
        let wide = effective_bandwidth(b, w0, l, 1e12 * l_loc).unwrap();
        prop_assert!((wide - b).abs() < 1e-6 * b);
    }

    #[test]
    fn paraxial_aperture_grows_with_scattering(b in 0.5f64..20.0, l in 1.0f64..100.0, g in 0.0f64..1e-2, dg in 1e-5f64..1e-2) {
        let lo = effective_apertures(&psf(Regime::ParaxialFinite, b, l, g, 1.0)).unwrap();
        let hi = effective_apertures(&psf(Regime::ParaxialFinite, b, l, g + dg, 1.0)).unwrap();
        prop_assert!(lo.b_eff >= b);
        prop_assert!(hi.b_eff > lo.b_eff);
        prop_assert!((hi.a_eff / hi.b_eff - 0.5).abs() < 1e-12);
    }

    #[test]
    fn strong_layered_aperture_grows_with_localization_length(l in 5.0f64..50.0, l_loc in 0.1f64..2.0, f in 1.01f64..3.0) {
        let b = (20.0 * l * l_loc * f).sqrt();
        let lo = effective_apertures(&psf(Regime::LayeredStrong, b, l, 0.0, l_loc)).unwrap();
        let hi = effective_apertures(&psf(Regime::LayeredStrong, b, l, 0.0, l_loc * f)).unwrap();
        prop_assert!(hi.a_eff > lo.a_eff);
        prop_assert!((hi.b_eff / lo.b_eff - f.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fft_and_direct_correlations_agree(seed in any::<u64>(), n in 16usize..200, max_lag in 0usize..12) {
        let recv = vec![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [2.0, 0.0, 1.0]];
        let src = vec![[0.0, 0.0, 0.0], [3.0, 1.0, 0.0]];
        let mut data = TraceSet::zeros(0.1, 0.0, n, src, recv).unwrap();
        let mut rng = stream_rng(seed, 0);
        for v in &mut data.samples {
            *v = rng.random_range(-1.0..1.0);
        }
        let max_lag = max_lag.min(n - 1);
        let a = cross_correlate(&data, max_lag).unwrap();
        let b = cross_correlate_direct(&data, max_lag).unwrap();
        let scale = b.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn migration_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let recv = vec![[-1.0, 0.0, 5.0], [0.0, 0.0, 5.0], [1.5, 0.0, 5.0]];
        let mut c1 = CorrelationMatrix::zeros(0.05, 120, recv.clone());
        let mut c2 = CorrelationMatrix::zeros(0.05, 120, recv);
        let mut rng = stream_rng(seed, 1);
        for v in c1.values.iter_mut().chain(c2.values.iter_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut mix = c1.clone();
        for ((m, a), b) in mix.values.iter_mut().zip(&c1.values).zip(&c2.values) {
            *m = alpha * a + beta * b;
        }
        let grid = ImageGrid::centered([0.0, 0.0, 8.0], [0.2, 1.0, 0.2], [3, 0, 3]).unwrap();
        let opts = MigrationOptions::new(1.0);
        let i1 = migrate_correlations(&c1, &grid, &opts).unwrap().image;
        let i2 = migrate_correlations(&c2, &grid, &opts).unwrap().image;
        let im = migrate_correlations(&mix, &grid, &opts).unwrap().image;
        for ((m, a), b) in im.values.iter().zip(&i1.values).zip(&i2.values) {
            let want: Complex64 = alpha * a + beta * b;
            prop_assert!((m - want).norm() <= 1e-9 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn raw_grids_round_trip_bit_exactly(nx in 1usize..6, ny in 1usize..6, nz in 1usize..6, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 2);
        let values: Vec<f64> = (0..nx * ny * nz).map(|_| rng.random_range(-1e3..1e3)).collect();
        let g = RawGrid::new([nx, ny, nz], [rng.random(), -1.5, 2.0], [0.1, 0.2, 0.3], values).unwrap();
        let back = RawGrid::from_bytes(&g.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), g.to_bytes());
    }

    #[test]
    fn configs_round_trip_through_text(preset in 0usize..4, seed in 0u64..=i64::MAX as u64) {
        let name = PRESET_NAMES[preset];
        let cfg = ExperimentConfig::preset_by_name(name, seed).unwrap();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text, None).unwrap();
        prop_assert_eq!(back.to_toml().unwrap(), text);
        prop_assert_eq!(back.seed, seed);
    }

    #[test]
    fn reports_round_trip_through_text_and_csv(x in 1e-3f64..1e3, y in proptest::option::of(1e-3f64..1e3), d in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let r = ResolutionReport {
            regime: Regime::LayeredWeak,
            b_eff: x,
            a_eff: 0.5 * x,
            bandwidth_eff: 1.0 / x,
            predicted_cross_range: Some(x / 3.0),
            predicted_range: y,
            measured_cross_range: Some(x / 7.0),
            measured_range: y.map(|v| v * 1.1),
            cross_range_rel_error: Some(-0.1),
            range_rel_error: y.map(|_| 0.1),
            diagnostics: [("probe".to_string(), d)].into_iter().collect(),
        };
        prop_assert_eq!(ResolutionReport::from_csv_row(&r.to_csv_row()).unwrap(), r.clone());
        prop_assert_eq!(ResolutionReport::from_text(&r.to_text().unwrap()).unwrap(), r);
    }
}
