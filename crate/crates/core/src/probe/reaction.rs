use serde::{Deserialize, Serialize};

use super::ProbeError;

/// How a feature pair is turned into a reaction value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactionMode {
    /// `ln(1 + max(0, opt)) - ln(1 + max(0, orig))`.
    #[default]
    LogRelative,
    /// Plain difference `opt - orig` (scale-dependent ablation).
    Absolute,
}

/// Log-relative change of one feature; negative inputs are clamped to zero.
#[inline]
pub fn log_relative(orig: f64, opt: f64) -> f64 {
    opt.max(0.0).ln_1p() - orig.max(0.0).ln_1p()
}

/// Per-feature reaction of an optimized feature vector against the original.
pub fn reaction(orig: &[f64], opt: &[f64], mode: ReactionMode) -> Result<Vec<f64>, ProbeError> {
    if orig.len() != opt.len() {
        return Err(ProbeError::DimensionMismatch {
            expected: orig.len(),
            actual: opt.len(),
        });
    }
    Ok(orig
        .iter()
        .zip(opt)
        .map(|(&o, &p)| match mode {
            ReactionMode::LogRelative => log_relative(o, p),
            ReactionMode::Absolute => p - o,
        })
        .collect())
}
