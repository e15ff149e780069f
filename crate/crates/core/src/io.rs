//! File formats: binary map files, annotation/detection text files, PNG pages.
//!
//! Map files carry the magic `DWDM`, a dtype tag, a rank byte, `rank`
//! little-endian u32 shape entries, then the row-major payload in little
//! endian. Round-trips are bitwise lossless.
//!
//! Annotation files are UTF-8 text with `#` comments. The first record is a
//! header `page H W interline`; every following line is one symbol
//! `class_id center_i center_j width height`. Detection files append a
//! trailing confidence column.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{DwdError, Result};
use crate::maps::{Annotation, BBoxMap, ClassMap, Detection, EnergyMap, PageImage, QuantizedEnergyMap};

const MAP_MAGIC: &[u8; 4] = b"DWDM";

const DTYPE_F64: u8 = 1;
const DTYPE_U32: u8 = 2;
const DTYPE_U8: u8 = 3;

/// Raster types that serialize to the `DWDM` container.
pub trait MapCodec: Sized {
    fn dtype() -> u8;
    fn shape(&self) -> Vec<u32>;
    fn encode_payload(&self, out: &mut Vec<u8>);
    fn decode_payload(shape: &[u32], payload: &[u8]) -> std::result::Result<Self, String>;
}

fn f64_payload(values: &[f64], out: &mut Vec<u8>) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn f64_from_payload(payload: &[u8]) -> Vec<f64> {
    payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

impl MapCodec for EnergyMap {
    fn dtype() -> u8 {
        DTYPE_F64
    }

    fn shape(&self) -> Vec<u32> {
        vec![self.height() as u32, self.width() as u32]
    }

    fn encode_payload(&self, out: &mut Vec<u8>) {
        f64_payload(self.values(), out);
    }

    fn decode_payload(shape: &[u32], payload: &[u8]) -> std::result::Result<Self, String> {
        let [h, w] = shape else {
            return Err(format!("expected rank 2, got rank {}", shape.len()));
        };
        EnergyMap::from_values(*h as usize, *w as usize, f64_from_payload(payload))
            .map_err(|e| e.to_string())
    }
}

impl MapCodec for BBoxMap {
    fn dtype() -> u8 {
        DTYPE_F64
    }

    fn shape(&self) -> Vec<u32> {
        vec![self.height() as u32, self.width() as u32, 2]
    }

    fn encode_payload(&self, out: &mut Vec<u8>) {
        f64_payload(self.dims(), out);
    }

    fn decode_payload(shape: &[u32], payload: &[u8]) -> std::result::Result<Self, String> {
        let [h, w, c] = shape else {
            return Err(format!("expected rank 3, got rank {}", shape.len()));
        };
        if *c != 2 {
            return Err(format!("expected 2 channels, got {}", c));
        }
        BBoxMap::from_dims(*h as usize, *w as usize, f64_from_payload(payload))
            .map_err(|e| e.to_string())
    }
}

impl MapCodec for ClassMap {
    fn dtype() -> u8 {
        DTYPE_U32
    }

    fn shape(&self) -> Vec<u32> {
        vec![self.height() as u32, self.width() as u32]
    }

    fn encode_payload(&self, out: &mut Vec<u8>) {
        out.reserve(self.labels().len() * 4);
        for v in self.labels() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn decode_payload(shape: &[u32], payload: &[u8]) -> std::result::Result<Self, String> {
        let [h, w] = shape else {
            return Err(format!("expected rank 2, got rank {}", shape.len()));
        };
        let labels = payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ClassMap::from_labels(*h as usize, *w as usize, labels).map_err(|e| e.to_string())
    }
}

impl MapCodec for QuantizedEnergyMap {
    fn dtype() -> u8 {
        DTYPE_U8
    }

    fn shape(&self) -> Vec<u32> {
        vec![
            self.height() as u32,
            self.width() as u32,
            self.bins() as u32,
        ]
    }

    fn encode_payload(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.data());
    }

    fn decode_payload(shape: &[u32], payload: &[u8]) -> std::result::Result<Self, String> {
        let [h, w, b] = shape else {
            return Err(format!("expected rank 3, got rank {}", shape.len()));
        };
        QuantizedEnergyMap::from_onehot(*h as usize, *w as usize, *b as usize, payload.to_vec())
            .map_err(|e| e.to_string())
    }
}

fn dtype_size(dtype: u8) -> usize {
    match dtype {
        DTYPE_F64 => 8,
        DTYPE_U32 => 4,
        _ => 1,
    }
}

pub fn save_map<T: MapCodec>(map: &T, path: &Path) -> Result<()> {
    let shape = map.shape();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAP_MAGIC);
    bytes.push(T::dtype());
    bytes.push(shape.len() as u8);
    for d in &shape {
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    map.encode_payload(&mut bytes);
    write_atomic(path, &bytes)
}

pub fn load_map<T: MapCodec>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| DwdError::io(path, e))?;
    let fail = |reason: String| DwdError::format(path, reason);
    if bytes.len() < 6 {
        return Err(fail("file shorter than header".into()));
    }
    if &bytes[0..4] != MAP_MAGIC {
        return Err(fail("bad magic, not a DWDM map file".into()));
    }
    let dtype = bytes[4];
    if dtype != T::dtype() {
        return Err(fail(format!(
            "dtype tag {} does not match requested map type (expected {})",
            dtype,
            T::dtype()
        )));
    }
    let rank = bytes[5] as usize;
    let header_len = 6 + rank * 4;
    if bytes.len() < header_len {
        return Err(fail("truncated shape header".into()));
    }
    let shape: Vec<u32> = (0..rank)
        .map(|k| {
            let off = 6 + k * 4;
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
        })
        .collect();
    let count: usize = shape.iter().map(|d| *d as usize).product();
    let expected = header_len + count * dtype_size(dtype);
    if bytes.len() != expected {
        return Err(fail(format!(
            "payload length {} does not match shape {:?} (expected file length {})",
            bytes.len() - header_len,
            shape,
            expected
        )));
    }
    T::decode_payload(&shape, &bytes[header_len..]).map_err(|reason| fail(reason))
}

/// Page dimensions and interline from an annotation file header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageMeta {
    pub height: usize,
    pub width: usize,
    pub interline: f64,
}

fn parse_header(path: &Path, line_no: usize, line: &str) -> Result<PageMeta> {
    let parse = |reason: &str| DwdError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        reason: reason.to_string(),
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "page" {
        return Err(parse("expected header 'page H W interline'"));
    }
    let height: usize = fields[1].parse().map_err(|_| parse("bad page height"))?;
    let width: usize = fields[2].parse().map_err(|_| parse("bad page width"))?;
    let interline: f64 = fields[3].parse().map_err(|_| parse("bad interline"))?;
    if height == 0 || width == 0 || !(interline > 0.0) {
        return Err(DwdError::validation(format!(
            "{}:{}: page header values must be positive",
            path.display(),
            line_no
        )));
    }
    Ok(PageMeta {
        height,
        width,
        interline,
    })
}

fn parse_record(path: &Path, line_no: usize, line: &str, trailing_conf: bool) -> Result<(Annotation, f64)> {
    let parse = |reason: String| DwdError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        reason,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    let expected = if trailing_conf { 6 } else { 5 };
    if fields.len() != expected {
        return Err(parse(format!(
            "expected {} fields, got {}",
            expected,
            fields.len()
        )));
    }
    let class_id: u32 = fields[0]
        .parse()
        .map_err(|_| parse(format!("bad class id '{}'", fields[0])))?;
    let nums: Vec<f64> = fields[1..]
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| parse(format!("bad number '{}'", f)))
        })
        .collect::<Result<_>>()?;
    let ann = Annotation::new(class_id, nums[0], nums[1], nums[2], nums[3]).map_err(|e| {
        DwdError::validation(format!("{}:{}: {}", path.display(), line_no, e))
    })?;
    let conf = if trailing_conf { nums[4] } else { 1.0 };
    Ok((ann, conf))
}

/// Load an annotation file: header line plus one symbol per record.
///
/// Symbols must lie inside the header's page bounds.
pub fn load_annotations(path: &Path) -> Result<(Vec<Annotation>, PageMeta)> {
    let text = fs::read_to_string(path).map_err(|e| DwdError::io(path, e))?;
    let mut meta: Option<PageMeta> = None;
    let mut annotations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match meta {
            None => meta = Some(parse_header(path, line_no, line)?),
            Some(m) => {
                let (ann, _) = parse_record(path, line_no, line, false)?;
                if !ann.in_page(m.height, m.width) {
                    return Err(DwdError::validation(format!(
                        "{}:{}: center ({}, {}) outside {}x{} page",
                        path.display(),
                        line_no,
                        ann.center_i,
                        ann.center_j,
                        m.height,
                        m.width
                    )));
                }
                annotations.push(ann);
            }
        }
    }
    let meta = meta.ok_or_else(|| DwdError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: "missing 'page H W interline' header".into(),
    })?;
    Ok((annotations, meta))
}

pub fn save_annotations(path: &Path, meta: &PageMeta, annotations: &[Annotation]) -> Result<()> {
    let mut text = String::new();
    header_line(&mut text, meta);
    for a in annotations {
        text.push_str(&format!(
            "{} {} {} {} {}\n",
            a.class_id, a.center_i, a.center_j, a.width, a.height
        ));
    }
    write_atomic(path, text.as_bytes())
}

/// Load a detection file (annotation format plus confidence column).
pub fn load_detections(path: &Path) -> Result<(Vec<Detection>, PageMeta)> {
    let text = fs::read_to_string(path).map_err(|e| DwdError::io(path, e))?;
    let mut meta: Option<PageMeta> = None;
    let mut detections = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match meta {
            None => meta = Some(parse_header(path, line_no, line)?),
            Some(_) => {
                let (ann, conf) = parse_record(path, line_no, line, true)?;
                detections.push(Detection {
                    class_id: ann.class_id,
                    center_i: ann.center_i,
                    center_j: ann.center_j,
                    width: ann.width,
                    height: ann.height,
                    confidence: conf,
                });
            }
        }
    }
    let meta = meta.ok_or_else(|| DwdError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: "missing 'page H W interline' header".into(),
    })?;
    Ok((detections, meta))
}

pub fn save_detections(path: &Path, meta: &PageMeta, detections: &[Detection]) -> Result<()> {
    let mut text = String::new();
    header_line(&mut text, meta);
    for d in detections {
        text.push_str(&format!(
            "{} {} {} {} {} {}\n",
            d.class_id, d.center_i, d.center_j, d.width, d.height, d.confidence
        ));
    }
    write_atomic(path, text.as_bytes())
}

fn header_line(out: &mut String, meta: &PageMeta) {
    out.push_str(&format!(
        "page {} {} {}\n",
        meta.height, meta.width, meta.interline
    ));
}

/// Write an 8-bit grayscale PNG.
pub fn save_page_png(page: &PageImage, path: &Path) -> Result<()> {
    let mut img = image::GrayImage::new(page.width() as u32, page.height() as u32);
    for i in 0..page.height() {
        for j in 0..page.width() {
            let v = (page.get(i, j) * 255.0).round().clamp(0.0, 255.0) as u8;
            img.put_pixel(j as u32, i as u32, image::Luma([v]));
        }
    }
    img.save(path)
        .map_err(|e| DwdError::format(path, format!("png encode failed: {}", e)))
}

/// Read an 8-bit grayscale PNG; `interline` comes from the companion
/// annotation file, not the image.
pub fn load_page_png(path: &Path, interline: f64) -> Result<PageImage> {
    let img = image::open(path)
        .map_err(|e| DwdError::format(path, format!("png decode failed: {}", e)))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    PageImage::new(h, w, pixels, interline)
}

/// Write via a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dwd".into())
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| DwdError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| DwdError::io(&tmp, e))?;
    f.sync_all().ok();
    drop(f);
    fs::rename(&tmp, path).map_err(|e| DwdError::io(path, e))
}
