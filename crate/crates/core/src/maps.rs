//! Raster and record types shared across the pipeline.
//!
//! All rasters use `(i, j) = (row, column)` with the origin at the top-left
//! corner. Bounding boxes are stored as center plus `(width, height)`;
//! corner form is derived where needed, never stored. Every type here is an
//! immutable value object once constructed and is safe to share across
//! threads.

use crate::error::{DwdError, Result};

/// One ground-truth symbol: class, center and box extent, all in pixels.
///
/// `class_id` 0 is reserved for background, so real symbols are 1-based.
/// Centers may be fractional; page-bound checks happen where the owning
/// page dimensions are known.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub class_id: u32,
    pub center_i: f64,
    pub center_j: f64,
    pub width: f64,
    pub height: f64,
}

impl Annotation {
    pub fn new(class_id: u32, center_i: f64, center_j: f64, width: f64, height: f64) -> Result<Self> {
        if class_id == 0 {
            return Err(DwdError::validation("class_id 0 is reserved for background"));
        }
        if !(width > 0.0) || !(height > 0.0) {
            return Err(DwdError::validation(format!(
                "box dimensions must be positive, got {}x{}",
                width, height
            )));
        }
        if !center_i.is_finite() || !center_j.is_finite() {
            return Err(DwdError::validation("center coordinates must be finite"));
        }
        Ok(Annotation {
            class_id,
            center_i,
            center_j,
            width,
            height,
        })
    }

    pub fn in_page(&self, h: usize, w: usize) -> bool {
        self.center_i >= 0.0
            && self.center_i < h as f64
            && self.center_j >= 0.0
            && self.center_j < w as f64
    }
}

/// A decoded object with its ranking confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_id: u32,
    pub center_i: f64,
    pub center_j: f64,
    pub width: f64,
    pub height: f64,
    pub confidence: f64,
}

/// Grayscale page with intensities in `[0, 1]` and its staff spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct PageImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    pub interline: f64,
}

impl PageImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>, interline: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(DwdError::validation("page dimensions must be >= 1"));
        }
        if pixels.len() != height * width {
            return Err(DwdError::validation(format!(
                "pixel buffer length {} does not match {}x{}",
                pixels.len(),
                height,
                width
            )));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DwdError::validation("intensities must lie in [0, 1]"));
        }
        Ok(PageImage {
            height,
            width,
            pixels,
            interline,
        })
    }

    /// Uniform page of the given intensity.
    pub fn filled(height: usize, width: usize, value: f64, interline: f64) -> Result<Self> {
        PageImage::new(height, width, vec![value; height * width], interline)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.pixels[i * self.width + j] = v.clamp(0.0, 1.0);
    }
}

/// Dense energy surface: conical peaks of height `e_max` at object centers.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl EnergyMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        EnergyMap {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(DwdError::validation("energy buffer length mismatch"));
        }
        Ok(EnergyMap {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.width + j] = v;
    }

    /// Count of foreground (energy > 0) pixels.
    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }
}

/// One-hot quantized energy: `bins = e_max + 1` indicator channels per pixel.
///
/// Stored pixel-major (`[i][j][bin]`), exactly the on-disk layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedEnergyMap {
    height: usize,
    width: usize,
    bins: usize,
    data: Vec<u8>,
}

impl QuantizedEnergyMap {
    pub fn from_bin_indices(height: usize, width: usize, bins: usize, idx: &[usize]) -> Result<Self> {
        if idx.len() != height * width {
            return Err(DwdError::validation("bin index buffer length mismatch"));
        }
        let mut data = vec![0u8; height * width * bins];
        for (p, &b) in idx.iter().enumerate() {
            if b >= bins {
                return Err(DwdError::validation(format!(
                    "bin index {} out of range for {} bins",
                    b, bins
                )));
            }
            data[p * bins + b] = 1;
        }
        Ok(QuantizedEnergyMap {
            height,
            width,
            bins,
            data,
        })
    }

    pub fn from_onehot(height: usize, width: usize, bins: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * bins {
            return Err(DwdError::validation("one-hot buffer length mismatch"));
        }
        for p in 0..height * width {
            let px = &data[p * bins..(p + 1) * bins];
            if px.iter().map(|v| *v as usize).sum::<usize>() != 1
                || px.iter().any(|v| *v > 1)
            {
                return Err(DwdError::validation(format!(
                    "pixel {} is not one-hot across bins",
                    p
                )));
            }
        }
        Ok(QuantizedEnergyMap {
            height,
            width,
            bins,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Index of the hot bin at `(i, j)`.
    pub fn bin_index(&self, i: usize, j: usize) -> usize {
        let base = (i * self.width + j) * self.bins;
        self.data[base..base + self.bins]
            .iter()
            .position(|v| *v == 1)
            .expect("one-hot invariant")
    }

    /// Collapse back to a scalar energy map (bin index as energy level).
    pub fn collapse(&self) -> EnergyMap {
        let mut values = vec![0.0; self.height * self.width];
        for p in 0..values.len() {
            let base = p * self.bins;
            let bin = self.data[base..base + self.bins]
                .iter()
                .position(|v| *v == 1)
                .expect("one-hot invariant");
            values[p] = bin as f64;
        }
        EnergyMap {
            height: self.height,
            width: self.width,
            values,
        }
    }
}

/// Per-pixel class ids, 0 = background.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl ClassMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        ClassMap {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    pub fn from_labels(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(DwdError::validation("label buffer length mismatch"));
        }
        Ok(ClassMap {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.labels[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u32) {
        self.labels[i * self.width + j] = v;
    }
}

/// Per-pixel `(width, height)` of the nearest object, `(0, 0)` on background.
///
/// Channel pairs are interleaved: the buffer is `[i][j][{w, h}]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BBoxMap {
    height: usize,
    width: usize,
    dims: Vec<f64>,
}

impl BBoxMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        BBoxMap {
            height,
            width,
            dims: vec![0.0; height * width * 2],
        }
    }

    pub fn from_dims(height: usize, width: usize, dims: Vec<f64>) -> Result<Self> {
        if dims.len() != height * width * 2 {
            return Err(DwdError::validation("bbox buffer length mismatch"));
        }
        Ok(BBoxMap {
            height,
            width,
            dims,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> &[f64] {
        &self.dims
    }

    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        let base = (i * self.width + j) * 2;
        (self.dims[base], self.dims[base + 1])
    }

    pub fn set(&mut self, i: usize, j: usize, wh: (f64, f64)) {
        let base = (i * self.width + j) * 2;
        self.dims[base] = wh.0;
        self.dims[base + 1] = wh.1;
    }
}
