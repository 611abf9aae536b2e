//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `VSA_ACCEPTANCE_ONLY=2,5` runs a subset. Failures are reported and the
//! process exits 0 so that workspace test runs complete; set
//! `VSA_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use vsa_core::correlation::{cross_correlate, cross_correlate_direct, TraceSet};
use vsa_core::experiment::{run_experiment, ExperimentConfig, Manifest, RunOutcome, Stage};
use vsa_core::grid::Grid2;
use vsa_core::layered::density::{psi_eff, LayeredGeometry, PsiEffOptions};
use vsa_core::layered::jump::{simulate_ensemble, EnsembleOptions, JumpProcessParams};
use vsa_core::layered::polynomials::{poly_p, weight};
use vsa_core::layered::transition::{transition_matrix, transition_probability};
use vsa_core::medium::{IsotropicMediumSpec, ScreenSampler};
use vsa_core::migration::Regime;
use vsa_core::paraxial::{estimate_moments, gaussian_beam, MomentConfig, PropagationConfig, Propagator, SpectralField};
use vsa_core::quadrature::AdaptiveGl;
use vsa_core::rng::stream_rng;
use vsa_core::stats::linear_fit;
use vsa_core::survey::SourceDensity;
use vsa_core::wave::{fibonacci_sphere, green_3d_imag, source_sum_correlation};

type Outcome = Result<(bool, String), String>;

fn main() {
    let only: Option<Vec<usize>> = std::env::var("VSA_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let suite: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "free-space propagation", free_space_propagation),
        (2, "first-moment damping", first_moment_damping),
        (3, "second-moment decorrelation", second_moment_decorrelation),
        (4, "homogeneous full-illumination imaging", homogeneous_imaging),
        (5, "paraxial cross-range enhancement", paraxial_enhancement),
        (6, "layered transition statistics", layered_statistics),
        (7, "layered strong-scattering truncation function", strong_scattering_truncation),
        (8, "layered range-resolution reduction", layered_range_reduction),
        (9, "Helmholtz-Kirchhoff source sum", helmholtz_kirchhoff),
        (10, "determinism and solver oracles", determinism_and_oracles),
    ];
    let mut failed = 0;
    for (id, title, run) in suite {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!(
            "{} {id:>2} {title}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
        if !pass {
            failed += 1;
        }
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var("VSA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn free_space_propagation() -> Outcome {
    let grid = Grid2::square(512, 0.1).map_err(e)?;
    let (omega, r0, length) = (20.0, 2.0, 20.0);
    let cfg = PropagationConfig::new(1.0, length, 10, 0.0).map_err(e)?;
    let t0 = Instant::now();
    let prop = Propagator::new(&grid, omega, &cfg).map_err(e)?;
    let mut v = SpectralField::from_fn(&grid, omega, 0.0, |x| gaussian_beam(omega, 1.0, r0, x, 0.0)).values;
    prop.run(&mut v, |_| None).map_err(e)?;
    let secs = t0.elapsed().as_secs_f64();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, u) in v.iter().enumerate() {
        let want = gaussian_beam(omega, 1.0, r0, grid.point(i), length);
        num += (u - want).norm_sqr();
        den += want.norm_sqr();
    }
    let err = (num / den).sqrt();
    Ok((err <= 1e-3 && secs < 10.0, format!("512² relative L² error {err:.2e} (≤ 1e-3), {secs:.2} s per frequency")))
}

struct MomentRun {
    omega: f64,
    mean: (f64, f64),
    pairs: Vec<(f64, f64, f64)>,
}

fn moment_runs() -> Result<(IsotropicMediumSpec, Vec<MomentRun>), String> {
    let (length, c0) = (10.0, 1.0);
    let medium = IsotropicMediumSpec::with_gamma0_at_origin(2.8e-3, 2.0, length).map_err(e)?;
    // A resolved near-point source: the beam must be much wider than the
    // scattering blur for the point-source law to hold at the centre.
    let grid = Grid2::square(512, 0.1).map_err(e)?;
    let c = grid.center();
    let offsets = [2usize, 4, 8, 12, 16];
    let pairs: Vec<(usize, usize)> = offsets.iter().map(|&k| (c - k, c + k)).collect();
    let cfg = MomentConfig {
        grid,
        propagation: PropagationConfig::new(c0, length, 10, 0.1).map_err(e)?,
        source_width: 0.15,
        pairs: pairs.clone(),
        batch: 64,
    };
    let mut runs = Vec::new();
    for (j, omega) in [10.0, 10.0 * 2f64.sqrt()].into_iter().enumerate() {
        let m = estimate_moments(omega, grid.point(c), &medium, 500, 100 + j as u64, &cfg).map_err(e)?;
        let pair_stats = (0..pairs.len())
            .map(|k| {
                let dx = grid.point(pairs[k].1)[0] - grid.point(pairs[k].0)[0];
                let (r, se) = m.second_moment_ratio(k);
                let want = (-medium.gamma2([dx, 0.0]) * omega * omega * length / (4.0 * c0 * c0)).exp();
                (dx, (r - want) / se, r / want)
            })
            .collect();
        runs.push(MomentRun {
            omega,
            mean: m.mean_ratio(c),
            pairs: pair_stats,
        });
    }
    Ok((medium, runs))
}

fn moments() -> &'static Result<(IsotropicMediumSpec, Vec<MomentRun>), String> {
    static CELL: std::sync::OnceLock<Result<(IsotropicMediumSpec, Vec<MomentRun>), String>> = std::sync::OnceLock::new();
    CELL.get_or_init(moment_runs)
}

fn first_moment_damping() -> Outcome {
    let (medium, runs) = moments().as_ref().map_err(Clone::clone)?;
    let mut pass = true;
    let mut parts = Vec::new();
    let mut logs = Vec::new();
    for r in runs {
        let want = (-medium.gamma0([0.0, 0.0]) * r.omega * r.omega * medium.length / 8.0).exp();
        let z = (r.mean.0 - want) / r.mean.1;
        pass &= z.abs() <= 3.0;
        logs.push(r.mean.0.ln());
        parts.push(format!("ω={:.2}: {:.4}±{:.4} vs {want:.4} ({z:+.2}σ)", r.omega, r.mean.0, r.mean.1));
    }
    parts.push(format!("log ratio ω² scaling {:.3} (expected 2)", logs[1] / logs[0]));
    Ok((pass, format!("500 realizations; {}", parts.join("; "))))
}

fn second_moment_decorrelation() -> Outcome {
    let (_, runs) = moments().as_ref().map_err(Clone::clone)?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for r in runs {
        for &(dx, z, q) in &r.pairs {
            worst = worst.max(z.abs());
            parts.push(format!("ω={:.2} Δ={dx:.1}: {q:.3} ({z:+.2}σ)", r.omega));
        }
    }
    Ok((worst <= 3.0, format!("ratio/expected at 5 offsets × 2 frequencies, worst {worst:.2}σ; {}", parts.join(", "))))
}

fn run_preset(regime: Regime) -> Result<RunOutcome, String> {
    let dir = tempfile::tempdir().map_err(e)?;
    run_experiment(&ExperimentConfig::preset(regime, 1), dir.path(), Stage::Analyze).map_err(e)
}

fn describe(m: &Manifest, names: &[&str]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for c in m.checks.iter().filter(|c| names.is_empty() || names.contains(&c.name.as_str())) {
        pass &= c.pass;
        let err = if c.name.starts_with("peak") {
            format!("{:.2} voxels", c.error)
        } else {
            format!("{:+.1}%", 100.0 * c.error)
        };
        parts.push(format!("{} {:.4} vs {:.4} ({err}, tol {})", c.name, c.measured, c.predicted, c.tolerance));
    }
    (pass && !parts.is_empty(), parts.join("; "))
}

fn homogeneous_imaging() -> Outcome {
    let out = run_preset(Regime::HomogeneousFull)?;
    Ok(describe(&out.manifest, &[]))
}

fn paraxial_enhancement() -> Outcome {
    let out = run_preset(Regime::ParaxialFinite)?;
    Ok(describe(&out.manifest, &[]))
}

fn layered_range_reduction() -> Outcome {
    let out = run_preset(Regime::LayeredStrong)?;
    let (pass, detail) = describe(&out.manifest, &["range_width", "peak_z"]);
    let (_, others) = describe(&out.manifest, &["cross_range_inv_e", "peak_x1"]);
    Ok((pass, format!("{detail}; not gated here: {others}")))
}

fn layered_statistics() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;

    let q = AdaptiveGl::new(16, 1e-15, 1e-13);
    let edges: Vec<f64> = (0..=120).map(|i| i as f64 * 0.25).collect();
    let mut ortho: f64 = 0.0;
    for n in 0..=6 {
        for m in 0..=n {
            let r = q.integrate_panels(&edges, |u| poly_p(n, u) * poly_p(m, u) * weight(u));
            ortho = ortho.max((r.value - if n == m { 1.0 } else { 0.0 }).abs());
        }
    }
    pass &= ortho < 1e-8;
    parts.push(format!("orthonormality {ortho:.1e}"));

    let n_max = 400;
    let mut rows: f64 = 0.0;
    for z in [0.1, 0.2] {
        let t = transition_matrix(n_max, z).map_err(e)?;
        for p in 0..=6 {
            rows = rows.max(((0..=n_max).map(|n| t[n][p]).sum::<f64>() - 1.0).abs());
        }
    }
    pass &= rows <= 1e-8;
    parts.push(format!("row sums (z̃ ≤ 0.2, p ≤ 6, n ≤ {n_max}) {rows:.1e}"));

    let half = transition_matrix(n_max, 0.1).map_err(e)?;
    let full = transition_matrix(n_max, 0.2).map_err(e)?;
    let mut ck: f64 = 0.0;
    for n in 0..=6 {
        for p in 0..=6 {
            let composed: f64 = (0..=n_max).map(|k| half[n][k] * half[k][p]).sum();
            ck = ck.max((composed - full[n][p]).abs());
        }
    }
    pass &= ck <= 1e-6;
    parts.push(format!("Chapman-Kolmogorov {ck:.1e}"));

    // z̃ = γω²L/(4c0²) = 1 along the vertical ray.
    let omega = 2.0 * std::f64::consts::PI;
    let params = JumpProcessParams {
        omega,
        kappa: 0.0,
        gamma: 4.0 / (omega * omega * 10.0),
        c0: 1.0,
        length: 10.0,
        n_max: 400,
    };
    let t0 = Instant::now();
    let ens = simulate_ensemble(&params, 100_000, 21, EnsembleOptions::default()).map_err(e)?;
    let secs = t0.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    for n in 0..=5u32 {
        let (f, se) = ens.state_frequency(n);
        let p = transition_probability(n as usize, 0, params.scaled_length()).map_err(e)?.value;
        worst = worst.max((f - p).abs() / se);
    }
    pass &= worst <= 3.0 && secs < 300.0;
    parts.push(format!("Gillespie vs quadrature at z̃=1, n ≤ 5: worst {worst:.2}σ; 10⁵ paths in {secs:.1} s"));
    Ok((pass, parts.join("; ")))
}

fn strong_scattering_truncation() -> Outcome {
    let omega0 = 2.0 * std::f64::consts::PI;
    let (l, ly, l_loc, b) = (40.0, 60.0, 5.0, 3.0);
    let gamma = 4.0 / (l_loc * omega0 * omega0);
    let geom = LayeredGeometry {
        slab: l,
        reflector_depth: ly,
    };
    let source = SourceDensity::Gaussian { b };
    let opts = PsiEffOptions {
        n_paths: 20_000,
        n_max: 1600,
        seed: 3,
    };
    let b_eff = 2.0 * ly * (l_loc / l).sqrt();
    let a_pred = b_eff * (ly - l) / ly;

    let (mut x2, mut logs) = (Vec::new(), Vec::new());
    for k in 1..=12 {
        let x = 0.25 * k as f64;
        let p = psi_eff(omega0, [x, 0.0], [0.0, 0.0], &source, gamma, 1.0, &geom, &opts).map_err(e)?;
        if p.value > 0.0 && p.value > 3.0 * p.stderr {
            x2.push(x * x);
            logs.push(p.value.ln());
        }
    }
    if x2.len() < 3 {
        return Ok((false, format!("only {} receivers see a resolvable Ψ_eff", x2.len())));
    }
    let (slope, _, _) = linear_fit(&x2, &logs);
    let a_fit = if slope < 0.0 { (-1.0 / slope).sqrt() } else { f64::INFINITY };
    let a_err = (a_fit - a_pred) / a_pred;

    let (mut w2, mut wlogs) = (Vec::new(), Vec::new());
    for k in -3..=3 {
        let omega = omega0 * (1.0 + 0.05 * k as f64);
        let p = psi_eff(omega, [0.25, 0.0], [0.0, 0.0], &source, gamma, 1.0, &geom, &opts).map_err(e)?;
        if p.value > 0.0 {
            w2.push(omega * omega);
            wlogs.push(p.value.ln());
        }
    }
    let (wslope, _, _) = linear_fit(&w2, &wlogs);
    let wpred = -l / (4.0 * l_loc * omega0 * omega0);
    let w_err = (wslope - wpred) / wpred;
    Ok((
        a_err.abs() <= 0.2 && w_err.abs() <= 0.2,
        format!(
            "fitted a_eff {a_fit:.3} vs {a_pred:.3} ({:+.1}%) from {} receivers; ω² slope {wslope:.4} vs {wpred:.4} ({:+.1}%)",
            100.0 * a_err,
            x2.len(),
            100.0 * w_err
        ),
    ))
}

fn helmholtz_kirchhoff() -> Outcome {
    let (omega, c0, radius) = (2.0 * std::f64::consts::PI, 1.0, 30.0);
    let lambda = 2.0 * std::f64::consts::PI * c0 / omega;
    let n = 60_000;
    let src = fibonacci_sphere(n, radius, [0.0; 3]);
    let area = 4.0 * std::f64::consts::PI * radius * radius / n as f64;
    let base = [0.3, -0.2, 0.5];
    let dir = [0.6, 0.0, 0.8];
    let rec: Vec<[f64; 3]> = (0..=24)
        .map(|k| {
            let s = 3.0 * lambda * k as f64 / 24.0;
            [base[0] + s * dir[0], base[1] + s * dir[1], base[2] + s * dir[2]]
        })
        .collect();
    let c = source_sum_correlation(omega, c0, &rec, &src, area).map_err(e)?;
    let peak = c[0].re;
    let im0 = green_3d_imag(omega, c0, rec[0], rec[0]);
    let mut shape: f64 = 0.0;
    for qp in 0..rec.len() {
        let want = green_3d_imag(omega, c0, rec[0], rec[qp]) / im0;
        let got: Complex64 = c[qp] / peak;
        shape = shape.max((got - want).norm());
    }
    let scale = peak / (c0 / omega * im0);
    Ok((
        shape <= 0.1,
        format!("max shape error {shape:.2e} over offsets ≤ 3λ0 (≤ 0.1); amplitude ratio to (c0/ω)Im Ĝ {scale:.4}"),
    ))
}

fn determinism_and_oracles() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();

    let recv = vec![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [2.5, 0.0, 1.0], [4.0, 0.0, 1.0]];
    let src = vec![[0.0, 0.0, 0.0], [3.0, 1.0, 0.0], [-2.0, 0.5, 0.0]];
    let mut data = TraceSet::zeros(0.01, 0.0, 3000, src, recv).map_err(e)?;
    let mut rng = stream_rng(77, 0);
    for v in &mut data.samples {
        *v = rng.random_range(-1.0..1.0);
    }
    let a = cross_correlate(&data, 400).map_err(e)?;
    let b = cross_correlate_direct(&data, 400).map_err(e)?;
    let scale = b.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale;
    pass &= diff <= 1e-10;
    parts.push(format!("FFT vs direct correlation {diff:.1e}"));

    let grid = Grid2::square(256, 0.25).map_err(e)?;
    let medium = IsotropicMediumSpec::with_gamma0_at_origin(0.05, 2.0, 1.0).map_err(e)?;
    let cfg = PropagationConfig::new(1.0, 0.5, 1, 0.0).map_err(e)?;
    let sampler = ScreenSampler::new(&medium, &grid, cfg.dz).map_err(e)?;
    let prop = Propagator::new(&grid, 15.0, &cfg).map_err(e)?;
    let mut v = SpectralField::point_source(&grid, 15.0, [1.0, -2.0], 1.0).values;
    let norm = |v: &[Complex64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut unitarity: f64 = 0.0;
    for step in 0..50u64 {
        let before = norm(&v);
        prop.run(&mut v, |_| Some(sampler.sample(5, step))).map_err(e)?;
        unitarity = unitarity.max((norm(&v) / before - 1.0).abs());
    }
    pass &= unitarity <= 1e-12;
    parts.push(format!("unitarity {unitarity:.1e} per step"));

    let mut layered = ExperimentConfig::preset(Regime::LayeredWeak, 8);
    layered.numerics.layered.as_mut().ok_or("layered numerics")?.n_paths = 300;
    let mut paraxial = ExperimentConfig::preset(Regime::ParaxialFinite, 8);
    paraxial.numerics.n_realizations = 2;
    paraxial.numerics.paraxial.as_mut().ok_or("paraxial numerics")?.grid_n = 128;
    let mut identical = true;
    let mut files = 0;
    for cfg in [layered, paraxial] {
        let mut sets = Vec::new();
        for threads in [1, 2] {
            let dir = tempfile::tempdir().map_err(e)?;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(e)?;
            let out = pool.install(|| run_experiment(&cfg, dir.path(), Stage::Analyze)).map_err(e)?;
            sets.push(out.manifest.artifacts.iter().map(|a| (a.file.clone(), a.sha256.clone())).collect::<Vec<_>>());
        }
        files += sets[0].len();
        identical &= !sets[0].is_empty() && sets[0] == sets[1];
    }
    pass &= identical;
    parts.push(format!(
        "{files} artifacts {} across 1 and 2 threads",
        if identical { "bit-identical" } else { "differ" }
    ));
    Ok((pass, parts.join("; ")))
}
