//! The regime pipelines: simulate → correlate → migrate → analyze, with
//! every intermediate written to disk and recorded in a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::analysis::{
    effective_apertures, effective_bandwidth, measure_psf, profile_width, relative_error, Apertures, PsfMeasurement,
    ResolutionReport, WidthMode,
};
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::io::{emit_grid, sha256_file, GridFormat, RawGrid};
use crate::layered::{synthesize_layered_correlations, LayeredSurvey};
use crate::migration::{migrate_correlations, theoretical_psf, ImageGrid, MigrationOptions, Regime};
use crate::passive::{synthesize_paraxial_correlations, ParaxialSurvey};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Simulate,
    Correlate,
    Migrate,
    Analyze,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Correlate => "correlate",
            Stage::Migrate => "migrate",
            Stage::Analyze => "analyze",
        }
    }
}

/// One tolerance gate. `error` is relative for widths and in voxels for
/// peak positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub predicted: f64,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn relative(name: &str, measured: f64, predicted: f64, tolerance: f64) -> Self {
        let error = relative_error(measured, predicted);
        Self {
            name: name.into(),
            measured,
            predicted,
            error,
            tolerance,
            pass: error.abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    /// File name inside the output directory.
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub preset: Regime,
    pub config_hash: String,
    pub seed: u64,
    pub derived_seeds: BTreeMap<String, u64>,
    pub requested_stage: Stage,
    pub completed_stages: Vec<Stage>,
    /// `complete` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifacts: Vec<ArtifactRecord>,
    pub checks: Vec<Check>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub report: Option<ResolutionReport>,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn all_checks_pass(&self) -> bool {
        self.manifest.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.manifest.checks.iter().find(|c| c.name == name)
    }
}

/// SHA-256 of the canonical config text.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(cfg.to_toml()?.as_bytes())))
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl Runner<'_> {
    fn record(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
        self.manifest.artifacts.push(ArtifactRecord {
            name: name.into(),
            file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            sha256: sha256_file(path)?,
            bytes,
        });
        Ok(())
    }

    fn text(&mut self, name: &str, file: &str, text: &str) -> Result<()> {
        let path = self.dir.join(file);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record(name, &path)
    }

    fn grid(&mut self, name: &str, grid: &RawGrid, formats: &[GridFormat]) -> Result<()> {
        let mut all = vec![GridFormat::Raw];
        all.extend(formats.iter().filter(|&&f| f != GridFormat::Raw));
        for f in all {
            let path = self.dir.join(format!("{name}.{}", f.extension()));
            for (i, p) in emit_grid(grid, &path, f, self.cfg.output.slice)?.iter().enumerate() {
                let label = if i == 0 { format!("{name}.{}", f.extension()) } else { format!("{name}.{}.sidecar", f.extension()) };
                self.record(&label, p)?;
            }
        }
        Ok(())
    }

    fn log(&self, msg: &str) {
        eprintln!("[{:>7.1}s] {msg}", self.started.elapsed().as_secs_f64());
    }

    fn write_manifest(&self) -> Result<()> {
        let text = toml::to_string(&self.manifest).map_err(|e| Error::Format(e.to_string()))?;
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Correlations of the main run and, for `paraxial-finite`, of the
/// homogeneous reference.
struct Simulated {
    main: CorrelationMatrix,
    reference: Option<CorrelationMatrix>,
    diagnostics: BTreeMap<String, f64>,
}

struct Images {
    main: ImageGrid,
    reference: Option<ImageGrid>,
    full: Option<(ImageGrid, ImageGrid)>,
    masked: usize,
}

/// Runs the preset pipeline of `cfg` up to and including `until`.
///
/// On failure a manifest marked `failed` with the artifacts written so far is
/// left in `out_dir` and the error names the stage.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, until: Stage) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut derived_seeds = BTreeMap::new();
    match cfg.preset {
        Regime::ParaxialFinite => {
            derived_seeds.insert("medium".to_string(), derive_seed(cfg.seed, 1));
        }
        Regime::LayeredWeak | Regime::LayeredStrong => {
            derived_seeds.insert("psi_eff".to_string(), derive_seed(cfg.seed, 0));
        }
        Regime::HomogeneousFull => {}
    }
    let mut run = Runner {
        cfg,
        dir: out_dir.to_path_buf(),
        manifest: Manifest {
            preset: cfg.preset,
            config_hash: config_hash(cfg)?,
            seed: cfg.seed,
            derived_seeds,
            requested_stage: until,
            completed_stages: Vec::new(),
            status: "running".into(),
            failed_stage: None,
            error: None,
            artifacts: Vec::new(),
            checks: Vec::new(),
        },
        started: Instant::now(),
    };
    let mut stage = Stage::Simulate;
    let result = pipeline(&mut run, until, &mut stage);
    match result {
        Ok(report) => {
            run.manifest.status = "complete".into();
            run.write_manifest()?;
            run.log(&format!("done: {} artifacts in {}", run.manifest.artifacts.len(), out_dir.display()));
            Ok(RunOutcome {
                manifest: run.manifest,
                report,
                out_dir: out_dir.to_path_buf(),
            })
        }
        Err(e) => {
            run.manifest.status = "failed".into();
            run.manifest.failed_stage = Some(stage);
            run.manifest.error = Some(e.to_string());
            run.write_manifest()?;
            Err(e.in_stage(stage.name()))
        }
    }
}

fn pipeline(run: &mut Runner, until: Stage, stage: &mut Stage) -> Result<Option<ResolutionReport>> {
    let cfg = run.cfg;
    run.text("config", "config.toml", &cfg.to_toml()?)?;

    *stage = Stage::Simulate;
    run.log(&format!("simulate: preset {}", cfg.preset.name()));
    let sim = simulate(run)?;
    run.manifest.completed_stages.push(Stage::Simulate);
    if until == Stage::Simulate {
        return Ok(None);
    }

    *stage = Stage::Correlate;
    run.log("correlate");
    run.grid("correlations", &RawGrid::from_correlations(&sim.main)?, &[])?;
    if let Some(r) = &sim.reference {
        run.grid("correlations_reference", &RawGrid::from_correlations(r)?, &[])?;
    }
    run.manifest.completed_stages.push(Stage::Correlate);
    if until == Stage::Correlate {
        return Ok(None);
    }

    *stage = Stage::Migrate;
    run.log("migrate");
    let images = migrate(run, &sim)?;
    run.manifest.completed_stages.push(Stage::Migrate);
    if until == Stage::Migrate {
        return Ok(None);
    }

    *stage = Stage::Analyze;
    run.log("analyze");
    let (report, checks) = analyze(cfg, &images, sim.diagnostics)?;
    run.text("report", "report.toml", &report.to_text()?)?;
    run.text(
        "report_csv",
        "report.csv",
        &format!("{}\n{}\n", ResolutionReport::csv_header(), report.to_csv_row()),
    )?;
    for c in &checks {
        run.log(&format!(
            "check {}: measured {:.5} predicted {:.5} error {:+.4} (tol {}) {}",
            c.name,
            c.measured,
            c.predicted,
            c.error,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        ));
    }
    run.manifest.checks = checks;
    run.manifest.completed_stages.push(Stage::Analyze);
    Ok(Some(report))
}

fn paraxial_survey(cfg: &ExperimentConfig, homogeneous: bool) -> Result<ParaxialSurvey> {
    let p = cfg.paraxial_numerics()?;
    let mut medium = cfg.isotropic_medium()?;
    let mut n_realizations = cfg.numerics.n_realizations;
    if homogeneous {
        medium = crate::medium::IsotropicMediumSpec::homogeneous(medium.ell_c, medium.length)?;
        n_realizations = 1;
    }
    Ok(ParaxialSurvey {
        receivers: cfg.geometry.array.positions()?,
        reflector: cfg.geometry.reflector,
        source: cfg.geometry.source,
        pulse: cfg.pulse,
        frequencies: cfg.numerics.frequencies,
        medium,
        c0: cfg.geometry.c0,
        grid: Grid2::square(p.grid_n, p.dx)?,
        n_steps: p.n_steps,
        absorbing_margin: p.absorbing_margin,
        point_cutoff: p.point_cutoff,
        n_realizations,
        seed: derive_seed(cfg.seed, 1),
        lags: cfg.numerics.lags,
        gate_margin: cfg.numerics.gate_margin,
    })
}

/// `(q·N_q + q', ω, re/im)` grid of cross spectra.
fn spectra_grid(spectra: &[num_complex::Complex64], omegas: &[f64], nq: usize) -> Result<RawGrid> {
    let nw = omegas.len();
    let dw = if nw > 1 { omegas[1] - omegas[0] } else { 1.0 };
    let values = spectra.iter().flat_map(|c| [c.re, c.im]).collect();
    RawGrid::new([nq * nq, nw, 2], [0.0, omegas[0], 0.0], [1.0, dw, 1.0], values)
}

fn simulate(run: &mut Runner) -> Result<Simulated> {
    let cfg = run.cfg;
    let mut diagnostics = BTreeMap::new();
    let nq = cfg.geometry.array.positions()?.len();
    diagnostics.insert("n_frequencies".into(), cfg.numerics.frequencies.n as f64);
    diagnostics.insert("alias_period".into(), cfg.numerics.frequencies.alias_period(&cfg.pulse)?);
    match cfg.preset {
        Regime::HomogeneousFull | Regime::ParaxialFinite => {
            let main = synthesize_paraxial_correlations(&paraxial_survey(cfg, false)?)?;
            run.grid("spectra", &spectra_grid(&main.spectra, &main.omegas, nq)?, &[])?;
            let reference = if cfg.preset == Regime::ParaxialFinite {
                run.log("simulate: homogeneous reference");
                let r = synthesize_paraxial_correlations(&paraxial_survey(cfg, true)?)?;
                run.grid("spectra_reference", &spectra_grid(&r.spectra, &r.omegas, nq)?, &[])?;
                Some(r.correlations)
            } else {
                None
            };
            Ok(Simulated {
                main: main.correlations,
                reference,
                diagnostics,
            })
        }
        Regime::LayeredWeak | Regime::LayeredStrong => {
            let survey = LayeredSurvey {
                receivers: cfg.geometry.array.positions()?,
                reflector: cfg.geometry.reflector,
                source: cfg.geometry.source,
                pulse: cfg.pulse,
                medium: cfg.layered_medium()?,
                frequencies: cfg.numerics.frequencies,
                lags: cfg.numerics.lags,
                psi: cfg.psi_options()?,
                gate_margin: cfg.numerics.gate_margin,
            };
            let out = synthesize_layered_correlations(&survey)?;
            let nw = out.omegas.len();
            let dw = if nw > 1 { out.omegas[1] - out.omegas[0] } else { 1.0 };
            let psi: Vec<f64> = out.psi.iter().flat_map(|row| row.iter().flat_map(|p| [p.value, p.stderr])).collect();
            run.grid("psi_eff", &RawGrid::new([nq, nw, 2], [0.0, out.omegas[0], 0.0], [1.0, dw, 1.0], psi)?, &[])?;
            let killed = out.psi.iter().flatten().map(|p| p.killed_fraction).sum::<f64>() / (nq * nw) as f64;
            let caps = out.psi.iter().flatten().map(|p| p.cap_hits).sum::<usize>();
            diagnostics.insert("psi_mean_killed_fraction".into(), killed);
            diagnostics.insert("psi_cap_hits".into(), caps as f64);
            Ok(Simulated {
                main: out.correlations,
                reference: None,
                diagnostics,
            })
        }
    }
}

fn migrate(run: &mut Runner, sim: &Simulated) -> Result<Images> {
    let cfg = run.cfg;
    let spec = cfg.numerics.image;
    let grid = ImageGrid::centered(cfg.geometry.reflector.position(), spec.spacing, spec.half)?;
    let mut opts = MigrationOptions::new(cfg.geometry.c0);
    opts.secondary = cfg.numerics.secondary.clone();
    let formats = cfg.output.formats.clone();
    let main = migrate_correlations(&sim.main.analytic(), &grid, &opts)?;
    let mut masked = main.masked_count();
    run.grid("image", &RawGrid::from_image(&main.image)?, &formats)?;
    let reference = match &sim.reference {
        Some(r) => {
            let m = migrate_correlations(&r.analytic(), &grid, &opts)?;
            masked += m.masked_count();
            run.grid("image_reference", &RawGrid::from_image(&m.image)?, &formats)?;
            Some(m.image)
        }
        None => None,
    };
    // With a secondary subset, also keep the full double-sum images.
    let full = match (&opts.secondary, &sim.reference) {
        (Some(_), Some(r)) => {
            let all = MigrationOptions::new(cfg.geometry.c0);
            let a = migrate_correlations(&sim.main.analytic(), &grid, &all)?;
            let b = migrate_correlations(&r.analytic(), &grid, &all)?;
            masked += a.masked_count() + b.masked_count();
            run.grid("image_full", &RawGrid::from_image(&a.image)?, &[])?;
            run.grid("image_full_reference", &RawGrid::from_image(&b.image)?, &[])?;
            Some((a.image, b.image))
        }
        _ => None,
    };
    Ok(Images {
        main: main.image,
        reference,
        full,
        masked,
    })
}

fn width(m: &PsfMeasurement, axis: usize) -> Result<f64> {
    m.widths[axis].ok_or_else(|| Error::Measurement(format!("image axis {axis} has a single voxel")))
}

/// Width of the closed-form PSF sampled on the image's `x1` axis.
fn sampled_theory_width(cfg: &ExperimentConfig, image: &ImageGrid, mode: WidthMode) -> Result<f64> {
    let params = cfg.psf_params()?;
    let c = cfg.geometry.reflector.position();
    let line: Vec<f64> = (0..image.dims[0])
        .map(|i| theoretical_psf(&params, [image.origin[0] + i as f64 * image.spacing[0] - c[0], 0.0], 0.0).map(|v| v.norm()))
        .collect::<Result<_>>()?;
    let (w, _) = profile_width(&line, image.dims[0] / 2, mode)?;
    Ok(w * image.spacing[0])
}

fn peak_checks(cfg: &ExperimentConfig, m: &PsfMeasurement, image: &ImageGrid) -> Vec<Check> {
    let target = cfg.geometry.reflector.position();
    let names = ["peak_x1", "peak_x2", "peak_z"];
    (0..3)
        .filter(|&k| image.dims[k] > 1)
        .map(|k| {
            let off = (m.peak_position[k] - target[k]).abs() / image.spacing[k];
            Check {
                name: names[k].into(),
                measured: m.peak_position[k],
                predicted: target[k],
                error: off,
                tolerance: cfg.tolerances.peak_voxels,
                pass: off <= cfg.tolerances.peak_voxels,
            }
        })
        .collect()
}

fn analyze(cfg: &ExperimentConfig, images: &Images, mut diagnostics: BTreeMap<String, f64>) -> Result<(ResolutionReport, Vec<Check>)> {
    let params = cfg.psf_params()?;
    let c0 = cfg.geometry.c0;
    let gap = params.gap();
    let tol = cfg.tolerances;
    diagnostics.insert("masked_voxels".into(), images.masked as f64);
    let apertures = match cfg.preset {
        Regime::LayeredStrong => {
            // Reported from the strong-scattering law even when the source
            // aperture is too small for the analysis precondition.
            let ratio = params.b * params.b / (params.length * params.l_loc);
            diagnostics.insert("layered_aperture_ratio".into(), ratio);
            match effective_apertures(&params) {
                Ok(a) => a,
                Err(_) => {
                    let b_eff = 2.0 * params.reflector_depth * (params.l_loc / params.length).sqrt();
                    Apertures {
                        b_eff,
                        a_eff: b_eff * gap / params.reflector_depth,
                    }
                }
            }
        }
        _ => effective_apertures(&params)?,
    };
    let bandwidth_eff = match cfg.preset {
        Regime::LayeredWeak | Regime::LayeredStrong => {
            effective_bandwidth(params.bandwidth, params.omega0(), params.length, params.l_loc)?
        }
        _ => params.bandwidth,
    };
    let mut checks = Vec::new();
    let mut report = ResolutionReport {
        regime: cfg.preset,
        b_eff: apertures.b_eff,
        a_eff: apertures.a_eff,
        bandwidth_eff,
        predicted_cross_range: None,
        predicted_range: None,
        measured_cross_range: None,
        measured_range: None,
        cross_range_rel_error: None,
        range_rel_error: None,
        diagnostics: BTreeMap::new(),
    };
    let set_cross = |report: &mut ResolutionReport, measured: f64, predicted: f64| {
        report.measured_cross_range = Some(measured);
        report.predicted_cross_range = Some(predicted);
        report.cross_range_rel_error = Some(relative_error(measured, predicted));
    };
    let set_range = |report: &mut ResolutionReport, checks: &mut Vec<Check>, measured: f64, predicted: f64| {
        report.measured_range = Some(measured);
        report.predicted_range = Some(predicted);
        report.range_rel_error = Some(relative_error(measured, predicted));
        if let Some(t) = tol.range {
            checks.push(Check::relative("range_width", measured, predicted, t));
        }
    };
    match cfg.preset {
        Regime::HomogeneousFull | Regime::LayeredWeak => {
            let m = measure_psf(&images.main, [WidthMode::FirstZero, WidthMode::FirstZero, WidthMode::InvE], [1.0; 3])?;
            checks.extend(peak_checks(cfg, &m, &images.main));
            let predicted = params.rayleigh_cross_range();
            let measured = width(&m, 0)?;
            set_cross(&mut report, measured, predicted);
            checks.push(Check::relative("cross_range_first_zero", measured, predicted, tol.cross_range));
            if images.main.dims[2] > 1 {
                set_range(&mut report, &mut checks, width(&m, 2)?, c0 / bandwidth_eff);
            }
        }
        Regime::ParaxialFinite => {
            let reference = images.reference.as_ref().ok_or_else(|| Error::numerical("missing reference image"))?;
            let modes = [WidthMode::InvE; 3];
            let m = measure_psf(&images.main, modes, [1.0; 3])?;
            let r = measure_psf(reference, modes, [1.0; 3])?;
            checks.extend(peak_checks(cfg, &m, &images.main));
            let (w, w_ref) = (width(&m, 0)?, width(&r, 0)?);
            // 1/e half-width of the a_eff Gaussian factor.
            let predicted = 2.0 * c0 * gap / (params.omega0() * apertures.a_eff);
            set_cross(&mut report, w, predicted);
            let ratio_pred = params.b / apertures.b_eff;
            checks.push(Check::relative("cross_range_ratio", w / w_ref, ratio_pred, tol.cross_range));
            diagnostics.insert("reference_cross_range".into(), w_ref);
            diagnostics.insert("reference_predicted_cross_range".into(), 2.0 * c0 * params.reflector_depth / (params.omega0() * params.b));
            diagnostics.insert("measured_width_ratio".into(), w / w_ref);
            diagnostics.insert("predicted_width_ratio".into(), ratio_pred);
            if let Some((full, full_ref)) = &images.full {
                let f = width(&measure_psf(full, modes, [1.0; 3])?, 0)?;
                let fr = width(&measure_psf(full_ref, modes, [1.0; 3])?, 0)?;
                diagnostics.insert("full_migration_cross_range".into(), f);
                diagnostics.insert("full_migration_reference_cross_range".into(), fr);
                diagnostics.insert("full_migration_width_ratio".into(), f / fr);
            }
        }
        Regime::LayeredStrong => {
            let m = measure_psf(&images.main, [WidthMode::InvE; 3], [1.0; 3])?;
            checks.extend(peak_checks(cfg, &m, &images.main));
            let measured = width(&m, 0)?;
            let predicted = sampled_theory_width(cfg, &images.main, WidthMode::InvE)?;
            set_cross(&mut report, measured, predicted);
            checks.push(Check::relative("cross_range_inv_e", measured, predicted, tol.cross_range));
            if images.main.dims[2] > 1 {
                set_range(&mut report, &mut checks, width(&m, 2)?, c0 / bandwidth_eff);
            }
            diagnostics.insert("homogeneous_range".into(), c0 / params.bandwidth);
        }
    }
    report.diagnostics = diagnostics;
    Ok((report, checks))
}
