//! Randomly layered slab: transition probabilities of the jump process,
//! its path simulation, the spectral density `U`, the truncation function
//! `Ψ_eff` and the limiting ps cross-correlation built from them.

pub mod density;
pub mod jump;
pub mod polynomials;
pub mod synthesis;
pub mod transition;

pub use density::{
    localization_length, psi_eff, spectral_density, LayeredGeometry, PsiEffOptions, PsiEstimate, SpectralDensityEstimate, XiBins,
};
pub use jump::{mode_velocity, simulate_ensemble, simulate_jump_process, EnsembleOptions, JumpEnsemble, JumpPath, JumpProcessParams};
pub use synthesis::{synthesize_layered_correlations, LayeredSurvey, LayeredSynthesis};
pub use transition::{transition_matrix, transition_probability, TransitionProbability};
