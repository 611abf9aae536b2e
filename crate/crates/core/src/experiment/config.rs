//! Experiment configuration, presets and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{GridFormat, Slice};
use crate::layered::PsiEffOptions;
use crate::medium::{IsotropicMediumSpec, LayeredMediumSpec};
use crate::migration::{PsfParams, Regime};
use crate::pulse::{FrequencySampling, GaussianPulse};
use crate::survey::{ArrayLayout, LagGrid, Reflector, SourceDensity};

pub const PRESET_NAMES: [&str; 4] = ["homogeneous-full", "paraxial-finite", "layered-weak", "layered-strong"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Regime pipeline to run; also the preset supplying defaults.
    pub preset: Regime,
    pub seed: u64,
    pub geometry: Geometry,
    pub pulse: GaussianPulse,
    pub medium: MediumConfig,
    pub numerics: Numerics,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub c0: f64,
    /// Slab thickness `L`; receivers sit at depth `L`.
    pub slab: f64,
    pub reflector: Reflector,
    pub array: ArrayLayout,
    pub source: SourceDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MediumConfig {
    Homogeneous,
    /// Isotropic Gaussian-correlated slab, set by `γ0(0)` and `ℓc`.
    Paraxial { gamma0_origin: f64, ell_c: f64 },
    /// Randomly layered slab, set by the localization length at `ω0`.
    Layered { l_loc: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub frequencies: FrequencySampling,
    pub lags: LagGrid,
    pub gate_margin: f64,
    pub image: ImageSpec,
    /// Medium realizations averaged (paraxial pipelines).
    pub n_realizations: usize,
    /// Restrict the secondary receiver index in migration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraxial: Option<ParaxialNumerics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layered: Option<LayeredNumerics>,
}

/// Search grid centred on the reflector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSpec {
    pub spacing: [f64; 3],
    /// Voxels on each side of the centre, per axis `(x1, x2, z)`.
    pub half: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaxialNumerics {
    pub grid_n: usize,
    pub dx: f64,
    pub n_steps: usize,
    pub absorbing_margin: f64,
    pub point_cutoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayeredNumerics {
    pub n_paths: usize,
    pub n_max: u32,
}

/// Relative tolerances of the `run --check` gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Cross-range width (the width ratio for `paraxial-finite`).
    pub cross_range: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    /// Allowed peak offset from the reflector, in voxels.
    pub peak_voxels: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Image formats; raw correlations and images are always written.
    pub formats: Vec<GridFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<Slice>,
}

fn paraxial_base(seed: u64) -> ExperimentConfig {
    let omega0 = 8.0 * std::f64::consts::PI;
    ExperimentConfig {
        preset: Regime::HomogeneousFull,
        seed,
        geometry: Geometry {
            c0: 1.0,
            slab: 50.0,
            reflector: Reflector {
                lateral: [0.0, 0.0],
                depth: 100.0,
                reflectivity: 1.0,
            },
            array: ArrayLayout::Line { n: 20, aperture: 16.0 },
            source: SourceDensity::Uniform,
        },
        pulse: GaussianPulse {
            omega0,
            bandwidth: 0.1 * omega0,
        },
        medium: MediumConfig::Homogeneous,
        numerics: Numerics {
            frequencies: FrequencySampling { n: 40, span: 4.0 },
            lags: LagGrid { dtau: 0.02, max_lag: 5600 },
            gate_margin: 1.5,
            image: ImageSpec {
                spacing: [0.05, 1.0, 0.025],
                half: [80, 0, 60],
            },
            n_realizations: 1,
            secondary: None,
            paraxial: Some(ParaxialNumerics {
                grid_n: 256,
                dx: 0.4,
                n_steps: 25,
                absorbing_margin: 0.1,
                point_cutoff: 0.8,
            }),
            layered: None,
        },
        tolerances: Tolerances {
            cross_range: 0.10,
            range: Some(0.15),
            peak_voxels: 0.5,
        },
        output: OutputConfig {
            dir: PathBuf::from("out/homogeneous-full"),
            formats: vec![GridFormat::Raw],
            slice: None,
        },
    }
}

fn layered_base(seed: u64) -> ExperimentConfig {
    let omega0 = 2.0 * std::f64::consts::PI;
    ExperimentConfig {
        preset: Regime::LayeredWeak,
        seed,
        geometry: Geometry {
            c0: 1.0,
            slab: 40.0,
            reflector: Reflector {
                lateral: [0.0, 0.0],
                depth: 60.0,
                reflectivity: 1.0,
            },
            array: ArrayLayout::Line { n: 20, aperture: 20.0 },
            source: SourceDensity::Box { b: 30.0 },
        },
        pulse: GaussianPulse {
            omega0,
            bandwidth: 0.25 * omega0,
        },
        medium: MediumConfig::Layered { l_loc: 80.0 },
        numerics: Numerics {
            frequencies: FrequencySampling { n: 30, span: 3.5 },
            lags: LagGrid { dtau: 0.01, max_lag: 13_000 },
            gate_margin: 2.0,
            image: ImageSpec {
                spacing: [0.025, 1.0, 0.01],
                half: [80, 0, 150],
            },
            n_realizations: 1,
            secondary: None,
            paraxial: None,
            layered: Some(LayeredNumerics { n_paths: 2000, n_max: 200 }),
        },
        tolerances: Tolerances {
            cross_range: 0.15,
            range: Some(0.15),
            peak_voxels: 0.5,
        },
        output: OutputConfig {
            dir: PathBuf::from("out/layered-weak"),
            formats: vec![GridFormat::Raw],
            slice: None,
        },
    }
}

impl ExperimentConfig {
    /// The shipped preset for `regime`.
    pub fn preset(regime: Regime, seed: u64) -> Self {
        match regime {
            Regime::HomogeneousFull => paraxial_base(seed),
            Regime::ParaxialFinite => {
                let mut c = paraxial_base(seed);
                c.preset = regime;
                c.geometry.source = SourceDensity::Gaussian { b: 7.5 };
                c.medium = MediumConfig::Paraxial {
                    gamma0_origin: 5.4e-3,
                    ell_c: 2.0,
                };
                c.numerics.frequencies = FrequencySampling { n: 5, span: 0.5 };
                c.numerics.n_realizations = 16;
                c.numerics.image.half = [80, 0, 0];
                c.numerics.secondary = Some(vec![9, 10]);
                c.tolerances = Tolerances {
                    cross_range: 0.20,
                    range: None,
                    peak_voxels: 0.5,
                };
                c.output.dir = PathBuf::from("out/paraxial-finite");
                c
            }
            Regime::LayeredWeak => layered_base(seed),
            Regime::LayeredStrong => {
                let mut c = layered_base(seed);
                c.preset = regime;
                c.geometry.source = SourceDensity::Gaussian { b: 3.0 };
                c.pulse.bandwidth = 0.5 * c.pulse.omega0;
                c.medium = MediumConfig::Layered { l_loc: 5.0 };
                c.numerics.frequencies = FrequencySampling { n: 30, span: 2.0 };
                c.numerics.image = ImageSpec {
                    spacing: [0.1, 1.0, 0.01],
                    half: [120, 0, 150],
                };
                c.numerics.layered = Some(LayeredNumerics { n_paths: 5000, n_max: 200 });
                c.tolerances = Tolerances {
                    cross_range: 0.20,
                    range: Some(0.15),
                    peak_voxels: 0.5,
                };
                c.output.dir = PathBuf::from("out/layered-strong");
                c
            }
        }
    }

    pub fn preset_by_name(name: &str, seed: u64) -> Result<Self> {
        Ok(Self::preset(parse_regime(name)?, seed))
    }

    /// Parses a config file. Keys present override the named preset; the
    /// seed must come from the file or `seed_override`.
    pub fn from_toml(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        let name = user
            .get("preset")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::config("config must name a preset"))?;
        let has_seed = user.contains_key("seed");
        let seed = match (seed_override, user.get("seed")) {
            (Some(s), _) => s,
            (None, Some(v)) => {
                let s = v.as_integer().filter(|&s| s >= 0).ok_or_else(|| Error::config("seed must be a non-negative integer"))?;
                s as u64
            }
            (None, None) => return Err(Error::config("seed is mandatory: set `seed` in the config or pass --seed")),
        };
        let base = Self::preset_by_name(name, seed)?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::config(e.to_string()))?;
        merge(&mut merged, user);
        if seed_override.is_some() || !has_seed {
            merged.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form: every field, fixed key order.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn omega0(&self) -> f64 {
        self.pulse.omega0
    }

    pub fn lambda0(&self) -> f64 {
        self.pulse.wavelength(self.geometry.c0)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if !(g.c0 > 0.0 && g.slab > 0.0) {
            return Err(Error::config("c0 and slab thickness must be > 0"));
        }
        if !(g.reflector.depth > g.slab) {
            return Err(Error::config("the reflector must lie below the slab"));
        }
        self.pulse.validate()?;
        self.numerics.frequencies.validate()?;
        g.array.positions()?;
        let n = &self.numerics;
        if n.n_realizations == 0 {
            return Err(Error::config("n_realizations must be at least 1"));
        }
        if !(n.gate_margin > 0.0) || !(n.lags.dtau > 0.0) || n.lags.max_lag == 0 {
            return Err(Error::config("gate margin, lag step and lag count must be > 0"));
        }
        if n.image.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config("image spacing must be > 0"));
        }
        let t = &self.tolerances;
        if !(t.cross_range > 0.0 && t.peak_voxels > 0.0 && t.range.map_or(true, |r| r > 0.0)) {
            return Err(Error::config("tolerances must be > 0"));
        }
        if let Some(s) = &n.secondary {
            let nq = g.array.positions()?.len();
            if s.is_empty() || s.iter().any(|&q| q >= nq) {
                return Err(Error::config("secondary receiver subset is empty or out of range"));
            }
        }
        match (self.preset, self.medium) {
            (Regime::HomogeneousFull, MediumConfig::Homogeneous) => self.paraxial_numerics().map(|_| ()),
            (Regime::ParaxialFinite, MediumConfig::Paraxial { .. }) => {
                self.isotropic_medium()?;
                if g.source.aperture().is_none() {
                    return Err(Error::config("paraxial-finite needs a finite source aperture (box or gaussian)"));
                }
                self.paraxial_numerics().map(|_| ())
            }
            (Regime::LayeredWeak | Regime::LayeredStrong, MediumConfig::Layered { .. }) => {
                self.layered_medium()?;
                self.layered_numerics()?;
                self.psf_params()?.validate()
            }
            (r, m) => Err(Error::config(format!("preset {} cannot use medium {m:?}", r.name()))),
        }
    }

    pub fn paraxial_numerics(&self) -> Result<ParaxialNumerics> {
        self.numerics
            .paraxial
            .ok_or_else(|| Error::config(format!("preset {} needs [numerics.paraxial]", self.preset.name())))
    }

    pub fn layered_numerics(&self) -> Result<LayeredNumerics> {
        self.numerics
            .layered
            .ok_or_else(|| Error::config(format!("preset {} needs [numerics.layered]", self.preset.name())))
    }

    pub fn isotropic_medium(&self) -> Result<IsotropicMediumSpec> {
        match self.medium {
            MediumConfig::Homogeneous => IsotropicMediumSpec::homogeneous(1.0, self.geometry.slab),
            MediumConfig::Paraxial { gamma0_origin, ell_c } => {
                IsotropicMediumSpec::with_gamma0_at_origin(gamma0_origin, ell_c, self.geometry.slab)
            }
            MediumConfig::Layered { .. } => Err(Error::config("a layered medium has no isotropic spec")),
        }
    }

    pub fn layered_medium(&self) -> Result<LayeredMediumSpec> {
        match self.medium {
            MediumConfig::Layered { l_loc } => {
                LayeredMediumSpec::with_localization_length(l_loc, self.omega0(), self.geometry.slab, self.geometry.c0)
            }
            _ => Err(Error::config("not a layered medium")),
        }
    }

    pub fn psi_options(&self) -> Result<PsiEffOptions> {
        let l = self.layered_numerics()?;
        Ok(PsiEffOptions {
            n_paths: l.n_paths,
            n_max: l.n_max,
            seed: crate::rng::derive_seed(self.seed, 0),
        })
    }

    /// Source aperture used by the resolution laws; a uniform density counts
    /// as the full propagation grid width.
    pub fn source_aperture(&self) -> f64 {
        match (self.geometry.source.aperture(), self.numerics.paraxial) {
            (Some(b), _) => b,
            (None, Some(p)) => p.grid_n as f64 * p.dx,
            (None, None) => f64::INFINITY,
        }
    }

    pub fn psf_params(&self) -> Result<PsfParams> {
        let (gamma2_bar, l_loc) = match self.medium {
            MediumConfig::Homogeneous => (0.0, f64::INFINITY),
            MediumConfig::Paraxial { .. } => (self.isotropic_medium()?.gamma2_bar(), f64::INFINITY),
            MediumConfig::Layered { l_loc } => (0.0, l_loc),
        };
        Ok(PsfParams {
            regime: self.preset,
            c0: self.geometry.c0,
            lambda0: self.lambda0(),
            a: self.geometry.array.aperture(),
            b: self.source_aperture(),
            length: self.geometry.slab,
            reflector_depth: self.geometry.reflector.depth,
            bandwidth: self.pulse.bandwidth,
            gamma2_bar,
            l_loc,
        })
    }
}

pub fn parse_regime(name: &str) -> Result<Regime> {
    match name {
        "homogeneous-full" => Ok(Regime::HomogeneousFull),
        "paraxial-finite" => Ok(Regime::ParaxialFinite),
        "layered-weak" => Ok(Regime::LayeredWeak),
        "layered-strong" => Ok(Regime::LayeredStrong),
        other => Err(Error::config(format!("unknown preset {other:?}; expected one of {}", PRESET_NAMES.join(", ")))),
    }
}

/// One-line description of each preset.
pub fn preset_summary(regime: Regime) -> &'static str {
    match regime {
        Regime::HomogeneousFull => "homogeneous slab, sources everywhere: Rayleigh cross-range and c0/B range",
        Regime::ParaxialFinite => "Gaussian source aperture behind an isotropic random slab: cross-range shrinks by b/b_eff",
        Regime::LayeredWeak => "box source aperture above a weakly scattering layered slab (L < L_loc)",
        Regime::LayeredStrong => "small source aperture above a strongly scattering layered slab: range width c0/B_eff",
    }
}

/// Recursively overlays `over` onto `base`; tables merge, other values replace.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                // A different tagged variant replaces the table wholesale.
                let kind_changed = matches!((b.get("kind"), o.get("kind")), (Some(x), Some(y)) if x != y);
                if kind_changed {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
