//! Ground-truth map synthesis.
//!
//! Given a page's annotations this module produces the three dense targets:
//! an energy surface with conical peaks of height `e_max` and radius
//! `marker_radius` at object centers (zero elsewhere), a class map holding
//! the class of the nearest center wherever energy is positive, and a
//! bounding-box map holding that center's `(width, height)` there.
//!
//! Pixels are sampled at integer lattice points, no half-pixel offset. When
//! several cones overlap, a pixel takes the maximum energy over centers.
//! Nearest-center ties are broken toward the lowest annotation index, which
//! keeps the encoder deterministic under list permutation except on exact
//! ties. Cones are only evaluated inside the `(2r+1)^2` window around each
//! center, so a page costs `O(|annotations| * r^2)`.

use crate::config::DwdConfig;
use crate::error::{DwdError, Result};
use crate::maps::{Annotation, BBoxMap, ClassMap, EnergyMap, QuantizedEnergyMap};

fn validate_annotations(annotations: &[Annotation], h: usize, w: usize) -> Result<()> {
    for (idx, a) in annotations.iter().enumerate() {
        if !a.in_page(h, w) {
            return Err(DwdError::validation(format!(
                "annotation {}: center ({}, {}) outside {}x{} page",
                idx, a.center_i, a.center_j, h, w
            )));
        }
    }
    // Two boxes sharing the exact same center cannot be told apart by the
    // decoder; reject them outright.
    for i in 0..annotations.len() {
        for j in (i + 1)..annotations.len() {
            if annotations[i].center_i == annotations[j].center_i
                && annotations[i].center_j == annotations[j].center_j
            {
                return Err(DwdError::validation(format!(
                    "annotations {} and {} share the exact center ({}, {})",
                    i, j, annotations[i].center_i, annotations[i].center_j
                )));
            }
        }
    }
    Ok(())
}

/// Lattice window covering all pixels within Euclidean distance `r` of a
/// (possibly fractional) center, clipped to the page.
fn window(center: f64, r: f64, limit: usize) -> std::ops::RangeInclusive<usize> {
    let lo = (center - r).ceil().max(0.0) as usize;
    let hi = (center + r).floor().min(limit as f64 - 1.0).max(0.0) as usize;
    lo..=hi
}

/// Energy surface: per pixel the maximum over centers of
/// `e_max * (1 - dist / r)`, floored at zero.
pub fn synthesize_energy(
    annotations: &[Annotation],
    h: usize,
    w: usize,
    cfg: &DwdConfig,
) -> Result<EnergyMap> {
    cfg.validate()?;
    validate_annotations(annotations, h, w)?;
    let r = cfg.marker_radius as f64;
    let e_max = cfg.e_max as f64;
    let mut map = EnergyMap::zeros(h, w);
    for a in annotations {
        for i in window(a.center_i, r, h) {
            for j in window(a.center_j, r, w) {
                let di = i as f64 - a.center_i;
                let dj = j as f64 - a.center_j;
                let d = (di * di + dj * dj).sqrt();
                let v = e_max * (1.0 - d / r);
                if v > map.get(i, j) {
                    map.set(i, j, v);
                }
            }
        }
    }
    Ok(map)
}

/// Quantize to one-hot bins: `round(value)` clipped to `[0, e_max]`,
/// rounding half up.
pub fn quantize_energy(m: &EnergyMap, cfg: &DwdConfig) -> QuantizedEnergyMap {
    let bins = cfg.energy_bins();
    let idx: Vec<usize> = m
        .values()
        .iter()
        .map(|v| (v.round().clamp(0.0, cfg.e_max as f64)) as usize)
        .collect();
    QuantizedEnergyMap::from_bin_indices(m.height(), m.width(), bins, &idx)
        .expect("indices clipped to bin range")
}

/// Index of the annotation nearest to pixel `(i, j)` by Euclidean distance.
/// Ties go to the lowest annotation index.
fn nearest_center(annotations: &[Annotation], i: usize, j: usize) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (idx, a) in annotations.iter().enumerate() {
        let di = i as f64 - a.center_i;
        let dj = j as f64 - a.center_j;
        let d2 = di * di + dj * dj;
        // Strict improvement only: equal distance keeps the earlier index.
        if best.map_or(true, |(bd, _)| d2 < bd) {
            best = Some((d2, idx));
        }
    }
    best.map(|(_, idx)| idx)
}

/// Class of the nearest center wherever `energy > 0`, background elsewhere.
pub fn synthesize_class_map(annotations: &[Annotation], energy: &EnergyMap) -> ClassMap {
    let (h, w) = (energy.height(), energy.width());
    let mut map = ClassMap::zeros(h, w);
    for p in 0..h * w {
        if energy.values()[p] > 0.0 {
            if let Some(idx) = nearest_center(annotations, p / w, p % w) {
                map.set(p / w, p % w, annotations[idx].class_id);
            }
        }
    }
    map
}

/// `(width, height)` of the nearest center wherever `energy > 0`,
/// `(0, 0)` elsewhere.
pub fn synthesize_bbox_map(annotations: &[Annotation], energy: &EnergyMap) -> BBoxMap {
    let (h, w) = (energy.height(), energy.width());
    let mut map = BBoxMap::zeros(h, w);
    for p in 0..h * w {
        if energy.values()[p] > 0.0 {
            if let Some(idx) = nearest_center(annotations, p / w, p % w) {
                let a = &annotations[idx];
                map.set(p / w, p % w, (a.width, a.height));
            }
        }
    }
    map
}

/// All four targets for one page.
pub fn encode_page(
    annotations: &[Annotation],
    h: usize,
    w: usize,
    cfg: &DwdConfig,
) -> Result<(EnergyMap, QuantizedEnergyMap, ClassMap, BBoxMap)> {
    let energy = synthesize_energy(annotations, h, w, cfg)?;
    let quantized = quantize_energy(&energy, cfg);
    let classes = synthesize_class_map(annotations, &energy);
    let boxes = synthesize_bbox_map(annotations, &energy);
    Ok((energy, quantized, classes, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(e_max: u32, r: u32) -> DwdConfig {
        DwdConfig {
            e_max,
            marker_radius: r,
            cut_level: (e_max + 1) / 2,
            ..DwdConfig::default()
        }
    }

    fn ann(class: u32, ci: f64, cj: f64, w: f64, h: f64) -> Annotation {
        Annotation::new(class, ci, cj, w, h).unwrap()
    }

    #[test]
    fn single_cone_values_match_direct_evaluation() {
        let c = cfg(8, 4);
        let a = vec![ann(1, 10.0, 10.0, 4.0, 6.0)];
        let e = synthesize_energy(&a, 24, 24, &c).unwrap();
        assert_eq!(e.get(10, 10), 8.0);
        assert_eq!(e.get(10, 12), 4.0); // 8 * (1 - 2/4)
        assert_eq!(e.get(10, 14), 0.0); // distance 4 = r
    }

    #[test]
    fn overlapping_cones_take_the_maximum() {
        let c = cfg(8, 4);
        let a = vec![ann(1, 5.0, 5.0, 2.0, 2.0), ann(2, 5.0, 8.0, 2.0, 2.0)];
        let e = synthesize_energy(&a, 16, 16, &c).unwrap();
        // max(8*(1-1/4), 8*(1-2/4)) = 6
        assert_eq!(e.get(5, 6), 6.0);
    }

    #[test]
    fn center_outside_page_is_rejected() {
        let c = cfg(8, 3);
        let a = vec![ann(1, 50.0, 5.0, 2.0, 2.0)];
        assert!(matches!(
            synthesize_energy(&a, 16, 16, &c),
            Err(DwdError::Validation(_))
        ));
    }

    #[test]
    fn shared_exact_center_is_rejected() {
        let c = cfg(8, 3);
        let a = vec![ann(1, 5.0, 5.0, 2.0, 2.0), ann(2, 5.0, 5.0, 4.0, 4.0)];
        assert!(matches!(
            synthesize_energy(&a, 16, 16, &c),
            Err(DwdError::Validation(_))
        ));
    }

    #[test]
    fn quantization_rounds_half_up_and_clips() {
        let c = cfg(8, 3);
        let e = EnergyMap::from_values(1, 3, vec![0.0, 3.6, 8.0]).unwrap();
        let q = quantize_energy(&e, &c);
        assert_eq!(q.bin_index(0, 0), 0);
        assert_eq!(q.bin_index(0, 1), 4);
        assert_eq!(q.bin_index(0, 2), 8);
        // explicit half-up cases
        let e = EnergyMap::from_values(1, 2, vec![2.5, 3.5]).unwrap();
        let q = quantize_energy(&e, &c);
        assert_eq!(q.bin_index(0, 0), 3);
        assert_eq!(q.bin_index(0, 1), 4);
    }

    #[test]
    fn class_map_background_matches_energy_zero() {
        let c = cfg(8, 3);
        let a = vec![ann(7, 8.0, 8.0, 4.0, 6.0)];
        let e = synthesize_energy(&a, 16, 16, &c).unwrap();
        let m = synthesize_class_map(&a, &e);
        for p in 0..16 * 16 {
            let (i, j) = (p / 16, p % 16);
            if e.values()[p] > 0.0 {
                assert_eq!(m.get(i, j), 7);
            } else {
                assert_eq!(m.get(i, j), 0);
            }
        }
    }

    #[test]
    fn class_tie_breaks_to_lowest_annotation_index() {
        let c = cfg(8, 4);
        // pixel (5,6) is equidistant (distance 1) from both centers
        let a = vec![ann(3, 5.0, 5.0, 2.0, 2.0), ann(5, 5.0, 7.0, 2.0, 2.0)];
        let e = synthesize_energy(&a, 16, 16, &c).unwrap();
        let m = synthesize_class_map(&a, &e);
        assert!(e.get(5, 6) > 0.0);
        assert_eq!(m.get(5, 6), 3);
    }

    #[test]
    fn bbox_map_carries_nearest_dims_with_tie_break() {
        let c = cfg(8, 4);
        let a = vec![ann(1, 5.0, 5.0, 4.0, 6.0), ann(2, 5.0, 7.0, 10.0, 2.0)];
        let e = synthesize_energy(&a, 16, 16, &c).unwrap();
        let b = synthesize_bbox_map(&a, &e);
        assert_eq!(b.get(5, 6), (4.0, 6.0)); // tie at distance 1 -> index 0
        assert_eq!(b.get(5, 5), (4.0, 6.0));
        assert_eq!(b.get(5, 7), (10.0, 2.0));
        assert_eq!(b.get(0, 0), (0.0, 0.0));
    }

    #[test]
    fn single_object_bbox_map_is_constant_on_cone() {
        let c = cfg(8, 3);
        let a = vec![ann(4, 8.0, 8.0, 4.0, 6.0)];
        let e = synthesize_energy(&a, 16, 16, &c).unwrap();
        let b = synthesize_bbox_map(&a, &e);
        for p in 0..16 * 16 {
            let (i, j) = (p / 16, p % 16);
            if e.values()[p] > 0.0 {
                assert_eq!(b.get(i, j), (4.0, 6.0));
            } else {
                assert_eq!(b.get(i, j), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn support_sets_coincide_across_maps() {
        let c = cfg(8, 3);
        let a = vec![
            ann(1, 4.0, 4.0, 3.0, 3.0),
            ann(2, 4.0, 11.5, 5.0, 2.0),
            ann(3, 12.25, 7.75, 2.0, 7.0),
        ];
        let (e, q, cm, bm) = encode_page(&a, 18, 18, &c).unwrap();
        for p in 0..18 * 18 {
            let (i, j) = (p / 18, p % 18);
            let fg = e.values()[p] > 0.0;
            assert_eq!(cm.get(i, j) != 0, fg);
            assert_eq!(bm.get(i, j) != (0.0, 0.0), fg);
            if fg {
                let (bw, bh) = bm.get(i, j);
                assert!(bw > 0.0 && bh > 0.0);
            }
            // quantized bin 0 exactly where energy rounds to 0
            assert_eq!(q.bin_index(i, j), e.values()[p].round() as usize);
        }
    }

    #[test]
    fn energy_decays_monotonically_along_rays() {
        let c = cfg(8, 4);
        let a = vec![ann(1, 10.0, 10.0, 2.0, 2.0)];
        let e = synthesize_energy(&a, 21, 21, &c).unwrap();
        for (di, dj) in [(0i64, 1i64), (1, 0), (1, 1), (-1, 1)] {
            let mut prev = f64::INFINITY;
            for t in 0..10 {
                let i = (10 + di * t) as usize;
                let j = (10 + dj * t) as usize;
                if i < 21 && j < 21 {
                    let v = e.get(i, j);
                    assert!(v <= prev, "ray ({},{}) increased at t={}", di, dj, t);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn permutation_changes_nothing_without_ties() {
        let c = cfg(8, 3);
        let a = vec![
            ann(1, 4.0, 4.25, 3.0, 3.0),
            ann(2, 4.0, 11.5, 5.0, 2.0),
            ann(3, 12.0, 7.75, 2.0, 7.0),
        ];
        let mut rev = a.clone();
        rev.reverse();
        let e1 = synthesize_energy(&a, 18, 18, &c).unwrap();
        let e2 = synthesize_energy(&rev, 18, 18, &c).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(
            synthesize_class_map(&a, &e1),
            synthesize_class_map(&rev, &e2)
        );
        assert_eq!(
            synthesize_bbox_map(&a, &e1),
            synthesize_bbox_map(&rev, &e2)
        );
    }

    #[test]
    fn rounded_centers_are_strict_local_maxima() {
        let c = cfg(8, 3);
        // generic fractional centers far enough apart (> 2r)
        let a = vec![ann(1, 5.3, 5.7, 2.0, 2.0), ann(2, 14.8, 13.1, 2.0, 2.0)];
        let e = synthesize_energy(&a, 20, 20, &c).unwrap();
        let bound = 8.0 * (1.0 - std::f64::consts::SQRT_2 / (2.0 * 3.0));
        for ann in &a {
            let ri = ann.center_i.round() as usize;
            let rj = ann.center_j.round() as usize;
            let v = e.get(ri, rj);
            assert!(v >= bound, "peak {} below bound {}", v, bound);
            for (ni, nj) in [(ri - 1, rj), (ri + 1, rj), (ri, rj - 1), (ri, rj + 1)] {
                assert!(e.get(ni, nj) < v);
            }
        }
    }
}
