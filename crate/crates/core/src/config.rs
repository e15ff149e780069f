//! Pipeline hyperparameters.

use crate::error::{DwdError, Result};

/// Every knob shared across encoding, decoding, losses and training.
///
/// Energy cones have peak value `e_max` and radius `marker_radius` pixels;
/// the decoder cuts the energy surface at `cut_level`. The three loss
/// weights and the optimizer scalars follow the training setup; `crop_size`
/// is the square patch side used for random crops and `target_interline`
/// is the staff-spacing every input page is rescaled to.
#[derive(Debug, Clone, PartialEq)]
pub struct DwdConfig {
    pub e_max: u32,
    pub marker_radius: u32,
    pub cut_level: u32,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub learning_rate: f64,
    pub decay_rate: f64,
    /// EMA momentum for the per-loss running means.
    pub loss_momentum: f64,
    pub crop_size: usize,
    pub target_interline: f64,
}

impl Default for DwdConfig {
    fn default() -> Self {
        DwdConfig {
            e_max: 8,
            marker_radius: 3,
            cut_level: 4, // ceil(e_max / 2)
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            learning_rate: 0.001,
            decay_rate: 0.995,
            loss_momentum: 0.99,
            crop_size: 128,
            target_interline: 10.0,
        }
    }
}

impl DwdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.e_max == 0 {
            return Err(DwdError::validation("e_max must be positive"));
        }
        if self.marker_radius == 0 {
            return Err(DwdError::validation("marker_radius must be >= 1"));
        }
        if self.cut_level < 1 || self.cut_level > self.e_max {
            return Err(DwdError::validation(format!(
                "cut_level {} outside [1, {}]",
                self.cut_level, self.e_max
            )));
        }
        let ws = [self.w1, self.w2, self.w3];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DwdError::validation("loss weights must be >= 0"));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(DwdError::validation("loss weights must not all be zero"));
        }
        if !(self.learning_rate > 0.0) || !(self.decay_rate > 0.0 && self.decay_rate < 1.0) {
            return Err(DwdError::validation(
                "learning_rate must be > 0 and decay_rate in (0, 1)",
            ));
        }
        if !(self.loss_momentum > 0.0 && self.loss_momentum < 1.0) {
            return Err(DwdError::validation("loss_momentum must be in (0, 1)"));
        }
        if self.crop_size == 0 {
            return Err(DwdError::validation("crop_size must be >= 1"));
        }
        if !(self.target_interline > 0.0) {
            return Err(DwdError::validation("target_interline must be > 0"));
        }
        Ok(())
    }

    /// Number of energy head channels: one bin per level `0..=e_max`, so the
    /// zero (background) level gets an explicit bin.
    pub fn energy_bins(&self) -> usize {
        self.e_max as usize + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        DwdConfig::default().validate().unwrap();
    }

    #[test]
    fn cut_level_bounds_enforced() {
        let mut cfg = DwdConfig::default();
        cfg.cut_level = 0;
        assert!(cfg.validate().is_err());
        cfg.cut_level = cfg.e_max + 1;
        assert!(cfg.validate().is_err());
        cfg.cut_level = cfg.e_max;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn all_zero_weights_rejected() {
        let cfg = DwdConfig {
            w1: 0.0,
            w2: 0.0,
            w3: 0.0,
            ..DwdConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
