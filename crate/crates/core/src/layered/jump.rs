//! Exact event-driven simulation of the jump Markov process behind the
//! layered spectral density.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Fraction of capped paths above which a run is flagged.
pub const CAP_WARNING_FRACTION: f64 = 1e-3;
/// Doublings of the state cap tried before a path is counted as capped.
pub const MAX_CAP_DOUBLINGS: u32 = 6;

/// Velocity `c0/√(1−κ²c0²)` of the mode with horizontal slowness `κ`.
pub fn mode_velocity(kappa: f64, c0: f64) -> Result<f64> {
    let s = kappa * c0;
    if !(s.abs() < 1.0) {
        return Err(Error::domain(format!("evanescent mode: κ·c0 = {s} must be < 1")));
    }
    Ok(c0 / (1.0 - s * s).sqrt())
}

/// Horizontal slowness of the ray from a receiver offset by `lateral` to a
/// point `depth` below it.
pub fn ray_slowness(lateral: f64, depth: f64, c0: f64) -> f64 {
    lateral / (c0 * lateral.hypot(depth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpProcessParams {
    pub omega: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub c0: f64,
    pub length: f64,
    pub n_max: u32,
}

impl JumpProcessParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 10 {
            return Err(Error::config(format!("state cap n_max must be >= 10, got {}", self.n_max)));
        }
        if !(self.gamma >= 0.0) || !(self.length > 0.0) || !(self.c0 > 0.0) || !(self.omega > 0.0) {
            return Err(Error::config("jump process needs γ >= 0, L > 0, c0 > 0 and ω > 0"));
        }
        mode_velocity(self.kappa, self.c0)?;
        Ok(())
    }

    pub fn mode_velocity(&self) -> Result<f64> {
        mode_velocity(self.kappa, self.c0)
    }

    /// Rate prefactor `γc0(κ)²ω²/(4c0⁴)` that turns depth into scaled depth.
    pub fn rate_prefactor(&self) -> f64 {
        let ck = mode_velocity(self.kappa, self.c0).unwrap_or(f64::INFINITY);
        self.gamma * ck * ck * self.omega * self.omega / (4.0 * self.c0.powi(4))
    }

    /// Scaled slab thickness `z̃ = rate·L`.
    pub fn scaled_length(&self) -> f64 {
        self.rate_prefactor() * self.length
    }
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    /// `(depth, new state)` at every jump, depth in physical units.
    pub jumps: Vec<(f64, u32)>,
    pub final_state: u32,
    /// `∫₀^L N(z) dz` in physical units.
    pub integral: f64,
    /// Whether the cap had to be raised for this path.
    pub cap_hit: bool,
}

/// Outcome of a path in scaled units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PathOutcome {
    pub final_state: u32,
    /// `∫ N dz̃`; `f64::INFINITY` when the path was stopped for exceeding `kill_above`.
    pub area: f64,
    pub cap_hit: bool,
    pub capped: bool,
}

/// Gillespie simulation from `N(0)=0` over scaled length `l`.
///
/// When the state would exceed `cap` the path is replayed from the same
/// stream with a doubled cap; after `MAX_CAP_DOUBLINGS` the state is held at
/// the cap and the path is reported as capped.
pub(crate) fn simulate_scaled(
    seed: u64,
    stream: u64,
    l: f64,
    cap: u32,
    kill_above: f64,
    mut jumps: Option<&mut Vec<(f64, u32)>>,
) -> PathOutcome {
    let mut cap_now = cap;
    let mut doublings = 0;
    loop {
        let mut rng = stream_rng(seed, stream);
        if let Some(j) = jumps.as_deref_mut() {
            j.clear();
        }
        let hard = doublings >= MAX_CAP_DOUBLINGS;
        match run_once(&mut rng, l, cap_now, kill_above, hard, jumps.as_deref_mut()) {
            Some((state, area, capped)) => {
                return PathOutcome {
                    final_state: state,
                    area,
                    cap_hit: doublings > 0 || capped,
                    capped,
                }
            }
            None => {
                cap_now = cap_now.saturating_mul(2);
                doublings += 1;
            }
        }
    }
}

fn run_once(
    rng: &mut ChaCha8Rng,
    l: f64,
    cap: u32,
    kill_above: f64,
    hard_cap: bool,
    mut jumps: Option<&mut Vec<(f64, u32)>>,
) -> Option<(u32, f64, bool)> {
    let mut z = 0.0;
    let mut n: u32 = 0;
    let mut area = 0.0;
    let mut capped = false;
    loop {
        let nf = n as f64;
        let up = (nf + 1.0) * (nf + 1.0);
        let down = nf * nf;
        let total = up + down;
        let u: f64 = rng.random();
        let hold = -(1.0 - u).ln() / total;
        if z + hold >= l {
            area += nf * (l - z);
            if area > kill_above {
                return Some((n, f64::INFINITY, capped));
            }
            return Some((n, area, capped));
        }
        area += nf * hold;
        if area > kill_above {
            return Some((n, f64::INFINITY, capped));
        }
        z += hold;
        let v: f64 = rng.random();
        if v * total < up {
            if n >= cap {
                if !hard_cap {
                    return None;
                }
                capped = true;
                continue;
            }
            n += 1;
        } else {
            n -= 1;
        }
        if let Some(j) = jumps.as_deref_mut() {
            j.push((z, n));
        }
    }
}

/// A single path in physical units, with its jump record.
pub fn simulate_jump_process(params: &JumpProcessParams, seed: u64) -> Result<JumpPath> {
    params.validate()?;
    let rate = params.rate_prefactor();
    if rate == 0.0 {
        return Ok(JumpPath {
            jumps: Vec::new(),
            final_state: 0,
            integral: 0.0,
            cap_hit: false,
        });
    }
    let mut jumps = Vec::new();
    let out = simulate_scaled(seed, 0, rate * params.length, params.n_max, f64::INFINITY, Some(&mut jumps));
    Ok(JumpPath {
        jumps: jumps.into_iter().map(|(z, n)| (z / rate, n)).collect(),
        final_state: out.final_state,
        integral: out.area / rate,
        cap_hit: out.cap_hit,
    })
}

/// Summary of many independent paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpEnsemble {
    pub final_states: Vec<u32>,
    /// `∫₀^L N dz` per path (physical units); infinite for killed paths.
    pub integrals: Vec<f64>,
    /// Paths that needed a raised cap.
    pub cap_hits: usize,
    /// Paths still capped after all doublings.
    pub capped: usize,
    pub n_paths: usize,
}

impl JumpEnsemble {
    pub fn cap_hit_fraction(&self) -> f64 {
        self.cap_hits as f64 / self.n_paths as f64
    }

    /// Empirical `P(N(L)=n)` and its binomial standard error.
    pub fn state_frequency(&self, n: u32) -> (f64, f64) {
        let k = self.final_states.iter().filter(|&&s| s == n).count() as f64;
        let m = self.n_paths as f64;
        let p = k / m;
        (p, (p * (1.0 - p) / m).sqrt())
    }
}

/// Path ensemble options.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleOptions {
    /// Stop paths once `∫N dz̃` exceeds this (scaled units).
    pub kill_above: f64,
    /// Escalate the cap-hit warning into an error.
    pub strict: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            kill_above: f64::INFINITY,
            strict: false,
        }
    }
}

/// `n_paths` independent paths; path `i` uses stream `i` of `seed`.
pub fn simulate_ensemble(params: &JumpProcessParams, n_paths: usize, seed: u64, opts: EnsembleOptions) -> Result<JumpEnsemble> {
    params.validate()?;
    let rate = params.rate_prefactor();
    let l = rate * params.length;
    let outcomes: Vec<PathOutcome> = if rate == 0.0 {
        vec![
            PathOutcome {
                final_state: 0,
                area: 0.0,
                cap_hit: false,
                capped: false
            };
            n_paths
        ]
    } else {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| simulate_scaled(seed, i, l, params.n_max, opts.kill_above, None))
            .collect()
    };
    let cap_hits = outcomes.iter().filter(|o| o.cap_hit).count();
    let capped = outcomes.iter().filter(|o| o.capped).count();
    let ens = JumpEnsemble {
        final_states: outcomes.iter().map(|o| o.final_state).collect(),
        integrals: outcomes
            .iter()
            .map(|o| if rate == 0.0 { 0.0 } else { o.area / rate })
            .collect(),
        cap_hits,
        capped,
        n_paths,
    };
    if ens.cap_hit_fraction() > CAP_WARNING_FRACTION {
        let msg = format!(
            "{} of {} paths reached the state cap {} (fraction {:.2e} > {CAP_WARNING_FRACTION:.0e})",
            cap_hits,
            n_paths,
            params.n_max,
            ens.cap_hit_fraction()
        );
        if opts.strict {
            return Err(Error::numerical(msg));
        }
        log_warning(&msg);
    }
    Ok(ens)
}

pub(crate) fn log_warning(msg: &str) {
    eprintln!("warning: {msg}");
}
