//! Detection recovery from dense maps.
//!
//! The pipeline cuts the energy surface at a fixed level, binarizes, labels
//! the 4-connected components, then reads one detection per component: the
//! center of gravity of its pixels, a majority vote over the class map and
//! the arithmetic mean of the bounding-box map. Confidence is the peak
//! energy inside the component divided by `e_max`.

use crate::ccl::{label_components, BinaryMask, ComponentLabeling};
use crate::config::DwdConfig;
use crate::error::{DwdError, Result};
use crate::maps::{BBoxMap, ClassMap, Detection, EnergyMap};

/// Foreground mask: pixels with `energy >= cut_level`.
pub fn cut_and_binarize(energy: &EnergyMap, cut_level: u32, e_max: u32) -> Result<BinaryMask> {
    if cut_level < 1 || cut_level > e_max {
        return Err(DwdError::validation(format!(
            "cut_level {} outside [1, {}]",
            cut_level, e_max
        )));
    }
    let cut = cut_level as f64;
    let data = energy.values().iter().map(|v| *v >= cut).collect();
    Ok(BinaryMask::new(energy.height(), energy.width(), data))
}

/// Center of gravity of each component's pixel set, fractional coordinates.
pub fn component_centers(lab: &ComponentLabeling) -> Vec<(f64, f64)> {
    let n = lab.component_count() as usize;
    let mut sum_i = vec![0.0f64; n];
    let mut sum_j = vec![0.0f64; n];
    let mut count = vec![0usize; n];
    let w = lab.width();
    for (p, &l) in lab.labels().iter().enumerate() {
        if l > 0 {
            let k = (l - 1) as usize;
            sum_i[k] += (p / w) as f64;
            sum_j[k] += (p % w) as f64;
            count[k] += 1;
        }
    }
    (0..n)
        .map(|k| (sum_i[k] / count[k] as f64, sum_j[k] / count[k] as f64))
        .collect()
}

/// Majority class per component over the class map, ignoring background
/// pixels. Ties break toward the smallest class id; a component whose
/// pixels are all background votes class 0.
pub fn vote_classes(lab: &ComponentLabeling, classes: &ClassMap) -> Result<Vec<u32>> {
    if lab.height() != classes.height() || lab.width() != classes.width() {
        return Err(DwdError::validation(format!(
            "labeling {}x{} vs class map {}x{}",
            lab.height(),
            lab.width(),
            classes.height(),
            classes.width()
        )));
    }
    let n = lab.component_count() as usize;
    let mut counts: Vec<std::collections::BTreeMap<u32, usize>> = vec![Default::default(); n];
    for (p, &l) in lab.labels().iter().enumerate() {
        if l > 0 {
            let class = classes.labels()[p];
            if class != 0 {
                *counts[(l - 1) as usize].entry(class).or_insert(0) += 1;
            }
        }
    }
    // BTreeMap iteration is ascending by class id, so keeping the first
    // maximum implements the smallest-id tie-break.
    Ok(counts
        .iter()
        .map(|m| {
            let mut best = 0u32;
            let mut best_count = 0usize;
            for (&class, &c) in m {
                if c > best_count {
                    best = class;
                    best_count = c;
                }
            }
            best
        })
        .collect())
}

/// Arithmetic mean of the bounding-box map over each component.
pub fn average_bboxes(lab: &ComponentLabeling, boxes: &BBoxMap) -> Result<Vec<(f64, f64)>> {
    if lab.height() != boxes.height() || lab.width() != boxes.width() {
        return Err(DwdError::validation(format!(
            "labeling {}x{} vs bbox map {}x{}",
            lab.height(),
            lab.width(),
            boxes.height(),
            boxes.width()
        )));
    }
    let n = lab.component_count() as usize;
    let mut sum_w = vec![0.0f64; n];
    let mut sum_h = vec![0.0f64; n];
    let mut count = vec![0usize; n];
    let w = lab.width();
    for (p, &l) in lab.labels().iter().enumerate() {
        if l > 0 {
            let k = (l - 1) as usize;
            let (bw, bh) = boxes.get(p / w, p % w);
            sum_w[k] += bw;
            sum_h[k] += bh;
            count[k] += 1;
        }
    }
    Ok((0..n)
        .map(|k| (sum_w[k] / count[k] as f64, sum_h[k] / count[k] as f64))
        .collect())
}

/// Full decode: cut, label, centers, class vote, box average.
///
/// Components that vote background or average to a zero-area box are
/// dropped. Detections come back sorted by confidence, descending; the sort
/// is stable so ties keep component (raster) order.
pub fn decode(
    energy: &EnergyMap,
    classes: &ClassMap,
    boxes: &BBoxMap,
    cfg: &DwdConfig,
) -> Result<Vec<Detection>> {
    if energy.height() != classes.height()
        || energy.width() != classes.width()
        || energy.height() != boxes.height()
        || energy.width() != boxes.width()
    {
        return Err(DwdError::validation("decode inputs differ in dimensions"));
    }
    let mask = cut_and_binarize(energy, cfg.cut_level, cfg.e_max)?;
    let lab = label_components(&mask);
    let centers = component_centers(&lab);
    let votes = vote_classes(&lab, classes)?;
    let dims = average_bboxes(&lab, boxes)?;

    // peak energy per component for the confidence score
    let n = lab.component_count() as usize;
    let mut peak = vec![0.0f64; n];
    let w = lab.width();
    for (p, &l) in lab.labels().iter().enumerate() {
        if l > 0 {
            let k = (l - 1) as usize;
            peak[k] = peak[k].max(energy.values()[p]);
        }
    }

    let mut dropped = 0usize;
    let mut detections: Vec<Detection> = Vec::with_capacity(n);
    for k in 0..n {
        let (width, height) = dims[k];
        if votes[k] == 0 || !(width > 0.0) || !(height > 0.0) {
            dropped += 1;
            continue;
        }
        detections.push(Detection {
            class_id: votes[k],
            center_i: centers[k].0,
            center_j: centers[k].1,
            width,
            height,
            confidence: (peak[k] / cfg.e_max as f64).clamp(0.0, 1.0),
        });
    }
    if dropped > 0 {
        log::debug!("decode dropped {} background/degenerate components", dropped);
    }
    detections.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
    Ok(detections)
}
