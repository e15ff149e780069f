//! The three prediction losses and their running-mean-weighted total.
//!
//! Logits and predictions are channel-first tensors `[C, H, W]`. The energy
//! loss is a per-pixel categorical cross-entropy over the quantized bins,
//! averaged over all pixels. The class loss is the same cross-entropy
//! restricted to pixels where the (ground-truth) energy is positive; the
//! bounding-box loss is a mean-squared difference under the same mask.
//! Cross-entropies use the log-sum-exp stabilized form, so values are
//! reproducible to full double precision.
//!
//! Each loss has a `*_grad` twin returning the analytic gradient with
//! respect to the prediction; the autodiff tape calls straight into these
//! kernels.

use crate::config::DwdConfig;
use crate::error::{DwdError, Result};
use crate::maps::{BBoxMap, ClassMap, EnergyMap, QuantizedEnergyMap};
use crate::tensor::Tensor;

/// Exponentially smoothed magnitudes of the three losses.
///
/// The first update seeds each mean with the observed loss; later updates
/// apply `v <- momentum * v + (1 - momentum) * loss`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMeans {
    v_e: f64,
    v_c: f64,
    v_b: f64,
    momentum: f64,
    initialized: bool,
}

impl RunningMeans {
    pub fn new(momentum: f64) -> Self {
        RunningMeans {
            v_e: 0.0,
            v_c: 0.0,
            v_b: 0.0,
            momentum,
            initialized: false,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn values(&self) -> (f64, f64, f64) {
        (self.v_e, self.v_c, self.v_b)
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Restore a snapshot (checkpoint resume).
    pub fn restore(momentum: f64, v_e: f64, v_c: f64, v_b: f64, initialized: bool) -> Self {
        RunningMeans {
            v_e,
            v_c,
            v_b,
            momentum,
            initialized,
        }
    }
}

/// EMA update of the running means; the first call initializes them to the
/// observed losses.
pub fn update_means(means: &mut RunningMeans, loss_e: f64, loss_c: f64, loss_b: f64) {
    if !means.initialized {
        means.v_e = loss_e;
        means.v_c = loss_c;
        means.v_b = loss_b;
        means.initialized = true;
        return;
    }
    let m = means.momentum;
    means.v_e = m * means.v_e + (1.0 - m) * loss_e;
    means.v_c = m * means.v_c + (1.0 - m) * loss_c;
    means.v_b = m * means.v_b + (1.0 - m) * loss_b;
}

/// Weighted total `w1*le/v_e + w2*lc/v_c + w3*lb/v_b`.
///
/// Reads the means without updating them. A zero-weight term is skipped
/// outright; a zero or uninitialized mean under a nonzero weight is a
/// numeric error.
pub fn total_loss(
    loss_e: f64,
    loss_c: f64,
    loss_b: f64,
    means: &RunningMeans,
    cfg: &DwdConfig,
) -> Result<f64> {
    let coeffs = total_loss_coefficients(means, cfg)?;
    Ok(coeffs.0 * loss_e + coeffs.1 * loss_c + coeffs.2 * loss_b)
}

/// The per-term multipliers `w_k / v_k` used by both `total_loss` and the
/// training graph (where the means act as constants).
pub fn total_loss_coefficients(means: &RunningMeans, cfg: &DwdConfig) -> Result<(f64, f64, f64)> {
    if !means.initialized {
        return Err(DwdError::Numeric(
            "running means must be initialized before weighting".into(),
        ));
    }
    let term = |w: f64, v: f64, name: &str| -> Result<f64> {
        if w == 0.0 {
            return Ok(0.0);
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(DwdError::Numeric(format!(
                "running mean {} = {} cannot normalize its loss",
                name, v
            )));
        }
        Ok(w / v)
    };
    Ok((
        term(cfg.w1, means.v_e, "v_e")?,
        term(cfg.w2, means.v_c, "v_c")?,
        term(cfg.w3, means.v_b, "v_b")?,
    ))
}

fn check_logits_shape(pred: &Tensor, channels: usize, h: usize, w: usize) -> Result<()> {
    if pred.shape() != [channels, h, w] {
        return Err(DwdError::validation(format!(
            "prediction shape {:?} does not match [{}, {}, {}]",
            pred.shape(),
            channels,
            h,
            w
        )));
    }
    Ok(())
}

/// Per-pixel cross-entropy between softmaxed logits and per-pixel target
/// channel indices. `mask = None` averages over all pixels; otherwise only
/// pixels with `mask > 0` contribute (0 on an empty mask).
///
/// Returns the loss and, when `grad` is set, d(loss)/d(logits).
fn softmax_ce_kernel(
    logits: &Tensor,
    target_idx: impl Fn(usize) -> usize,
    mask: Option<&[f64]>,
    grad: bool,
) -> (f64, Option<Tensor>) {
    let channels = logits.shape()[0];
    let (h, w) = (logits.shape()[1], logits.shape()[2]);
    let hw = h * w;
    let active: Vec<usize> = match mask {
        None => (0..hw).collect(),
        Some(m) => (0..hw).filter(|p| m[*p] > 0.0).collect(),
    };
    let mut dlogits = grad.then(|| Tensor::zeros(logits.shape()));
    if active.is_empty() {
        return (0.0, dlogits);
    }
    let inv_n = 1.0 / active.len() as f64;
    let data = logits.data();
    let mut total = 0.0;
    for &p in &active {
        let t = target_idx(p);
        // stabilized log-sum-exp over the channel axis (stride hw)
        let mut max = f64::NEG_INFINITY;
        for c in 0..channels {
            max = max.max(data[c * hw + p]);
        }
        let mut sum = 0.0;
        for c in 0..channels {
            sum += (data[c * hw + p] - max).exp();
        }
        let lse = max + sum.ln();
        total += lse - data[t * hw + p];
        if let Some(d) = dlogits.as_mut() {
            let dd = d.data_mut();
            for c in 0..channels {
                let softmax = (data[c * hw + p] - max).exp() / sum;
                dd[c * hw + p] = (softmax - if c == t { 1.0 } else { 0.0 }) * inv_n;
            }
        }
    }
    (total * inv_n, dlogits)
}

/// Cross-entropy between predicted energy-bin logits and the one-hot
/// quantized target, averaged over every pixel.
pub fn energy_loss(pred_logits: &Tensor, target: &QuantizedEnergyMap) -> Result<f64> {
    energy_loss_grad(pred_logits, target, false).map(|(l, _)| l)
}

pub fn energy_loss_grad(
    pred_logits: &Tensor,
    target: &QuantizedEnergyMap,
    grad: bool,
) -> Result<(f64, Option<Tensor>)> {
    check_logits_shape(pred_logits, target.bins(), target.height(), target.width())?;
    let w = target.width();
    Ok(softmax_ce_kernel(
        pred_logits,
        |p| target.bin_index(p / w, p % w),
        None,
        grad,
    ))
}

/// Cross-entropy between class logits and the class map, averaged over
/// pixels where `mask > 0` only.
pub fn class_loss(pred_logits: &Tensor, target: &ClassMap, mask: &EnergyMap) -> Result<f64> {
    class_loss_grad(pred_logits, target, mask, false).map(|(l, _)| l)
}

pub fn class_loss_grad(
    pred_logits: &Tensor,
    target: &ClassMap,
    mask: &EnergyMap,
    grad: bool,
) -> Result<(f64, Option<Tensor>)> {
    let (h, w) = (target.height(), target.width());
    if mask.height() != h || mask.width() != w {
        return Err(DwdError::validation("class target and mask differ in size"));
    }
    let channels = pred_logits.shape().first().copied().unwrap_or(0);
    check_logits_shape(pred_logits, channels.max(1), h, w)?;
    if let Some(&max_label) = target.labels().iter().max() {
        if (max_label as usize) >= channels {
            return Err(DwdError::validation(format!(
                "class id {} needs more than {} logit channels",
                max_label, channels
            )));
        }
    }
    Ok(softmax_ce_kernel(
        pred_logits,
        |p| target.labels()[p] as usize,
        Some(mask.values()),
        grad,
    ))
}

/// Mean squared difference over foreground pixels and both channels;
/// 0 on an empty mask.
pub fn bbox_loss(pred: &Tensor, target: &BBoxMap, mask: &EnergyMap) -> Result<f64> {
    bbox_loss_grad(pred, target, mask, false).map(|(l, _)| l)
}

pub fn bbox_loss_grad(
    pred: &Tensor,
    target: &BBoxMap,
    mask: &EnergyMap,
    grad: bool,
) -> Result<(f64, Option<Tensor>)> {
    let (h, w) = (target.height(), target.width());
    if mask.height() != h || mask.width() != w {
        return Err(DwdError::validation("bbox target and mask differ in size"));
    }
    check_logits_shape(pred, 2, h, w)?;
    let hw = h * w;
    let mut dpred = grad.then(|| Tensor::zeros(pred.shape()));
    let active: Vec<usize> = (0..hw).filter(|p| mask.values()[*p] > 0.0).collect();
    if active.is_empty() {
        return Ok((0.0, dpred));
    }
    // mean over foreground pixels and the two channels
    let inv_n = 1.0 / (active.len() * 2) as f64;
    let data = pred.data();
    let mut total = 0.0;
    for &p in &active {
        let (tw, th) = target.get(p / w, p % w);
        let dw = data[p] - tw;
        let dh = data[hw + p] - th;
        total += dw * dw + dh * dh;
        if let Some(d) = dpred.as_mut() {
            let dd = d.data_mut();
            dd[p] = 2.0 * dw * inv_n;
            dd[hw + p] = 2.0 * dh * inv_n;
        }
    }
    Ok((total * inv_n, dpred))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q_target(h: usize, w: usize, bins: usize, idx: &[usize]) -> QuantizedEnergyMap {
        QuantizedEnergyMap::from_bin_indices(h, w, bins, idx).unwrap()
    }

    #[test]
    fn near_delta_prediction_has_near_zero_energy_loss() {
        let target = q_target(1, 2, 3, &[1, 2]);
        let mut logits = Tensor::zeros(&[3, 1, 2]);
        let d = logits.data_mut();
        d.fill(-50.0);
        d[1 * 2 + 0] = 50.0; // channel 1, pixel 0
        d[2 * 2 + 1] = 50.0; // channel 2, pixel 1
        let l = energy_loss(&logits, &target).unwrap();
        assert!(l < 1e-9, "loss {}", l);
    }

    #[test]
    fn uniform_logits_give_ln_bin_count() {
        let target = q_target(2, 2, 9, &[0, 3, 8, 5]);
        let logits = Tensor::zeros(&[9, 2, 2]);
        let l = energy_loss(&logits, &target).unwrap();
        assert!((l - 9.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn energy_loss_is_permutation_symmetric() {
        let target_a = q_target(1, 2, 4, &[1, 3]);
        let target_b = q_target(1, 2, 4, &[3, 1]);
        let logits_a = Tensor::from_vec(&[4, 1, 2], vec![0.3, -0.7, 1.1, 0.2, -0.1, 0.9, 2.0, -1.5]).unwrap();
        // swap the two pixels in every channel
        let mut swapped = logits_a.data().to_vec();
        for c in 0..4 {
            swapped.swap(c * 2, c * 2 + 1);
        }
        let logits_b = Tensor::from_vec(&[4, 1, 2], swapped).unwrap();
        let la = energy_loss(&logits_a, &target_a).unwrap();
        let lb = energy_loss(&logits_b, &target_b).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn energy_loss_rejects_shape_mismatch() {
        let target = q_target(1, 2, 3, &[0, 1]);
        let logits = Tensor::zeros(&[4, 1, 2]);
        assert!(energy_loss(&logits, &target).is_err());
    }

    #[test]
    fn fully_masked_class_loss_is_zero() {
        let target = ClassMap::zeros(2, 2);
        let mask = EnergyMap::zeros(2, 2);
        let logits = Tensor::from_vec(&[3, 2, 2], (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(class_loss(&logits, &target, &mask).unwrap(), 0.0);
    }

    #[test]
    fn background_perturbations_leave_class_loss_unchanged() {
        let target = ClassMap::from_labels(1, 3, vec![2, 0, 0]).unwrap();
        let mask = EnergyMap::from_values(1, 3, vec![3.0, 0.0, 0.0]).unwrap();
        let logits = Tensor::from_vec(&[3, 1, 3], vec![0.1; 9]).unwrap();
        let base = class_loss(&logits, &target, &mask).unwrap();
        let mut perturbed = logits.clone();
        for c in 0..3 {
            perturbed.data_mut()[c * 3 + 1] = 99.0;
            perturbed.data_mut()[c * 3 + 2] = -7.5;
        }
        assert_eq!(class_loss(&perturbed, &target, &mask).unwrap(), base);
    }

    #[test]
    fn single_pixel_uniform_class_loss_is_ln_k() {
        let target = ClassMap::from_labels(1, 1, vec![4]).unwrap();
        let mask = EnergyMap::from_values(1, 1, vec![1.0]).unwrap();
        let logits = Tensor::zeros(&[6, 1, 1]);
        let l = class_loss(&logits, &target, &mask).unwrap();
        assert!((l - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn class_loss_rejects_label_overflow() {
        let target = ClassMap::from_labels(1, 1, vec![6]).unwrap();
        let mask = EnergyMap::from_values(1, 1, vec![1.0]).unwrap();
        let logits = Tensor::zeros(&[6, 1, 1]);
        assert!(class_loss(&logits, &target, &mask).is_err());
    }

    #[test]
    fn bbox_loss_identity_is_zero() {
        let mut target = BBoxMap::zeros(1, 2);
        target.set(0, 0, (4.0, 6.0));
        let mask = EnergyMap::from_values(1, 2, vec![2.0, 0.0]).unwrap();
        let pred = Tensor::from_vec(&[2, 1, 2], vec![4.0, 0.0, 6.0, 0.0]).unwrap();
        assert_eq!(bbox_loss(&pred, &target, &mask).unwrap(), 0.0);
    }

    #[test]
    fn bbox_loss_matches_hand_mse() {
        let mut target = BBoxMap::zeros(1, 1);
        target.set(0, 0, (4.0, 6.0));
        let mask = EnergyMap::from_values(1, 1, vec![1.0]).unwrap();
        let pred = Tensor::from_vec(&[2, 1, 1], vec![5.0, 8.0]).unwrap();
        let l = bbox_loss(&pred, &target, &mask).unwrap();
        assert!((l - 2.5).abs() < 1e-15); // (1 + 4) / 2
    }

    #[test]
    fn background_perturbations_leave_bbox_loss_unchanged() {
        let mut target = BBoxMap::zeros(1, 2);
        target.set(0, 0, (4.0, 6.0));
        let mask = EnergyMap::from_values(1, 2, vec![1.0, 0.0]).unwrap();
        let pred = Tensor::from_vec(&[2, 1, 2], vec![4.5, 0.0, 5.5, 0.0]).unwrap();
        let base = bbox_loss(&pred, &target, &mask).unwrap();
        let mut perturbed = pred.clone();
        perturbed.data_mut()[1] = -123.0;
        perturbed.data_mut()[3] = 456.0;
        assert_eq!(bbox_loss(&perturbed, &target, &mask).unwrap(), base);
    }

    #[test]
    fn empty_mask_bbox_loss_is_zero() {
        let target = BBoxMap::zeros(2, 2);
        let mask = EnergyMap::zeros(2, 2);
        let pred = Tensor::from_vec(&[2, 2, 2], vec![1.0; 8]).unwrap();
        assert_eq!(bbox_loss(&pred, &target, &mask).unwrap(), 0.0);
    }

    #[test]
    fn first_update_seeds_the_means() {
        let mut m = RunningMeans::new(0.9);
        update_means(&mut m, 2.0, 3.0, 4.0);
        assert_eq!(m.values(), (2.0, 3.0, 4.0));
    }

    #[test]
    fn ema_update_matches_hand_value() {
        let mut m = RunningMeans::new(0.9);
        update_means(&mut m, 2.0, 1.0, 1.0);
        update_means(&mut m, 4.0, 1.0, 1.0);
        let (ve, _, _) = m.values();
        assert!((ve - 2.2).abs() < 1e-15);
    }

    #[test]
    fn constant_losses_are_an_ema_fixed_point() {
        let mut m = RunningMeans::new(0.97);
        for _ in 0..500 {
            update_means(&mut m, 5.0, 7.0, 9.0);
        }
        let (ve, vc, vb) = m.values();
        assert!((ve - 5.0).abs() < 1e-12);
        assert!((vc - 7.0).abs() < 1e-12);
        assert!((vb - 9.0).abs() < 1e-12);
    }

    #[test]
    fn total_loss_all_ones_is_three() {
        let cfg = DwdConfig::default();
        let mut m = RunningMeans::new(0.99);
        update_means(&mut m, 1.0, 1.0, 1.0);
        assert_eq!(total_loss(1.0, 1.0, 1.0, &m, &cfg).unwrap(), 3.0);
    }

    #[test]
    fn total_loss_single_term_arithmetic() {
        let cfg = DwdConfig {
            w1: 1.0,
            w2: 0.0,
            w3: 0.0,
            ..DwdConfig::default()
        };
        let m = RunningMeans::restore(0.99, 4.0, 1.0, 1.0, true);
        assert_eq!(total_loss(2.0, 9.0, 9.0, &m, &cfg).unwrap(), 0.5);
    }

    #[test]
    fn total_loss_is_scale_invariant_per_term() {
        let cfg = DwdConfig::default();
        let m1 = RunningMeans::restore(0.99, 2.0, 3.0, 4.0, true);
        let m2 = RunningMeans::restore(0.99, 20.0, 3.0, 4.0, true);
        let a = total_loss(1.5, 2.5, 3.5, &m1, &cfg).unwrap();
        let b = total_loss(15.0, 2.5, 3.5, &m2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_mean_under_nonzero_weight_is_a_numeric_error() {
        let cfg = DwdConfig::default();
        let m = RunningMeans::restore(0.99, 0.0, 1.0, 1.0, true);
        assert!(matches!(
            total_loss(1.0, 1.0, 1.0, &m, &cfg),
            Err(DwdError::Numeric(_))
        ));
    }

    #[test]
    fn uninitialized_means_are_rejected() {
        let cfg = DwdConfig::default();
        let m = RunningMeans::new(0.99);
        assert!(total_loss(1.0, 1.0, 1.0, &m, &cfg).is_err());
    }
}
