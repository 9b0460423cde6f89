//! Post-processing of segmentation probability maps: thresholding, connected
//! components, lung-field extraction with anatomical side assignment, the
//! lung crop box and the scalar score derived from a pneumothorax map.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::Rect;

#[derive(Debug, Error, PartialEq)]
pub enum SegError {
    #[error("probability map is empty")]
    EmptyMap,
    #[error("map buffer length {actual} does not match {width}x{height}")]
    LengthMismatch { width: usize, height: usize, actual: usize },
    #[error("map value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },
}

/// Per-pixel probabilities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ProbMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, SegError> {
        if values.len() != width * height {
            return Err(SegError::LengthMismatch { width, height, actual: values.len() });
        }
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(SegError::ValueOutOfRange { index, value });
        }
        Ok(Self { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, values }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask length must equal width*height");
        Self { width, height, bits }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Tight bounding box of the set pixels, if any.
    pub fn bbox(&self) -> Option<Rect> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let b = bounds.get_or_insert((x, y, x, y));
                    b.0 = b.0.min(x);
                    b.1 = b.1.min(y);
                    b.2 = b.2.max(x);
                    b.3 = b.3.max(y);
                }
            }
        }
        bounds.map(|(x0, y0, x1, y1)| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

/// Set iff the value is at least `t`.
pub fn threshold_map(m: &ProbMap, t: f32) -> BinaryMask {
    BinaryMask {
        width: m.width,
        height: m.height,
        bits: m.values.iter().map(|&v| v >= t).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub pixels: usize,
    pub bbox: Rect,
    pub centroid: (f64, f64),
}

/// 4-connected labelling. Returns the label image (`0` = background, `k` =
/// index `k-1` into the returned components) and components in the canonical
/// order: pixel count descending, then `bbox.y0`, then `bbox.x0`.
fn label_components(mask: &BinaryMask) -> (Vec<usize>, Vec<Component>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0usize; w * h];
    let mut found = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = found.len() + 1;
        labels[start] = label;
        queue.push_back(start);
        let (mut n, mut sx, mut sy) = (0usize, 0usize, 0usize);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            n += 1;
            sx += x;
            sy += y;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if mask.bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        found.push(Component {
            pixels: n,
            bbox: Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            centroid: (sx as f64 / n as f64, sy as f64 / n as f64),
        });
    }

    let mut order: Vec<usize> = (0..found.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&found[a], &found[b]);
        cb.pixels
            .cmp(&ca.pixels)
            .then(ca.bbox.y0.cmp(&cb.bbox.y0))
            .then(ca.bbox.x0.cmp(&cb.bbox.x0))
    });
    let mut remap = vec![0usize; found.len() + 1];
    for (rank, &old) in order.iter().enumerate() {
        remap[old + 1] = rank + 1;
    }
    for l in labels.iter_mut() {
        *l = remap[*l];
    }
    let sorted = order.into_iter().map(|i| found[i].clone()).collect();
    (labels, sorted)
}

pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    label_components(mask).1
}

/// Lung extraction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LungFieldParams {
    pub mask_threshold: f32,
    /// Components smaller than this fraction of the image area are discarded.
    pub min_area_frac: f64,
    /// A lone component wider than this fraction of the image is split in two.
    pub split_width_frac: f64,
}

impl Default for LungFieldParams {
    fn default() -> Self {
        Self { mask_threshold: 0.5, min_area_frac: 0.01, split_width_frac: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lung {
    pub mask: BinaryMask,
    pub bbox: Rect,
}

/// Lung geometry in image coordinates. The patient's right lung appears on
/// the image left.
#[derive(Debug, Clone, PartialEq)]
pub struct LungFields {
    pub patient_right: Lung,
    pub patient_left: Lung,
    pub combined_bbox: Rect,
    pub degraded: bool,
}

impl LungFields {
    fn from_lungs(a: Lung, b: Lung, degraded: bool) -> Self {
        // order by bbox center so the side invariant holds for any shape
        let (right, left) = if (a.bbox.center_x(), a.bbox.x0) <= (b.bbox.center_x(), b.bbox.x0) {
            (a, b)
        } else {
            (b, a)
        };
        let combined_bbox = right.bbox.union(&left.bbox);
        Self { patient_right: right, patient_left: left, combined_bbox, degraded }
    }

    /// Fallback geometry: the image's left half is the patient's right lung.
    pub fn image_halves(width: usize, height: usize) -> Self {
        let split = (width / 2).max(1).min(width);
        let right_bbox = Rect::new(0, 0, split, height);
        let left_bbox = if split < width {
            Rect::new(split, 0, width - split, height)
        } else {
            Rect::new(0, 0, width, height)
        };
        let right = Lung { mask: BinaryMask::from_fn(width, height, |x, _| x < split), bbox: right_bbox };
        let left = Lung { mask: BinaryMask::from_fn(width, height, |x, _| x >= split), bbox: left_bbox };
        let combined_bbox = right_bbox.union(&left_bbox);
        Self { patient_right: right, patient_left: left, combined_bbox, degraded: true }
    }
}

fn component_mask(labels: &[usize], label: usize, w: usize, h: usize) -> BinaryMask {
    BinaryMask::new(w, h, labels.iter().map(|&l| l == label).collect())
}

/// Split a single wide component at the emptiest column in the middle third
/// of its bounding box. Pixels in the split column are dropped.
fn split_component(mask: &BinaryMask, bbox: Rect) -> Option<(Lung, Lung)> {
    let third = bbox.w / 3;
    let (mut lo, mut hi) = (bbox.x0 + third, bbox.x0 + (2 * bbox.w) / 3);
    if lo >= hi {
        lo = bbox.x0 + bbox.w / 2;
        hi = lo + 1;
    }
    let center = bbox.center_x();
    let column = (lo..hi)
        .map(|x| {
            let count = (bbox.y0..bbox.y1()).filter(|&y| mask.get(x, y)).count();
            (x, count)
        })
        .min_by(|a, b| {
            a.1.cmp(&b.1)
                .then((a.0 as f64 + 0.5 - center).abs().total_cmp(&(b.0 as f64 + 0.5 - center).abs()))
                .then(a.0.cmp(&b.0))
        })?
        .0;
    let (w, h) = (mask.width, mask.height);
    let right = BinaryMask::from_fn(w, h, |x, y| x < column && mask.get(x, y));
    let left = BinaryMask::from_fn(w, h, |x, y| x > column && mask.get(x, y));
    let rb = right.bbox()?;
    let lb = left.bbox()?;
    Some((Lung { mask: right, bbox: rb }, Lung { mask: left, bbox: lb }))
}

pub fn extract_lung_fields(m: &ProbMap) -> Result<LungFields, SegError> {
    extract_lung_fields_with(m, &LungFieldParams::default())
}

pub fn extract_lung_fields_with(m: &ProbMap, params: &LungFieldParams) -> Result<LungFields, SegError> {
    if m.is_empty() {
        return Err(SegError::EmptyMap);
    }
    let (w, h) = (m.width, m.height);
    let mask = threshold_map(m, params.mask_threshold);
    let (labels, comps) = label_components(&mask);
    let min_area = params.min_area_frac * (w * h) as f64;
    let kept: Vec<usize> = comps
        .iter()
        .enumerate()
        .filter(|(_, c)| c.pixels as f64 >= min_area)
        .map(|(i, _)| i)
        .collect();

    match kept.as_slice() {
        [a, b, ..] => {
            let la = Lung { mask: component_mask(&labels, a + 1, w, h), bbox: comps[*a].bbox };
            let lb = Lung { mask: component_mask(&labels, b + 1, w, h), bbox: comps[*b].bbox };
            Ok(LungFields::from_lungs(la, lb, false))
        }
        [only] if comps[*only].bbox.w as f64 > params.split_width_frac * w as f64 => {
            let single = component_mask(&labels, only + 1, w, h);
            match split_component(&single, comps[*only].bbox) {
                Some((r, l)) => Ok(LungFields::from_lungs(r, l, false)),
                None => Ok(LungFields::image_halves(w, h)),
            }
        }
        _ => Ok(LungFields::image_halves(w, h)),
    }
}

/// Union of both lung boxes grown by `margin_frac` of its own width/height on
/// each side, clamped to the image.
pub fn lung_crop_box(lf: &LungFields, margin_frac: f64, imgw: usize, imgh: usize) -> Rect {
    let u = lf.patient_right.bbox.union(&lf.patient_left.bbox);
    let mx = (margin_frac * u.w as f64).round() as usize;
    let my = (margin_frac * u.h as f64).round() as usize;
    let x0 = u.x0.saturating_sub(mx).min(imgw.saturating_sub(1));
    let y0 = u.y0.saturating_sub(my).min(imgh.saturating_sub(1));
    let x1 = (u.x1() + mx).min(imgw).max(x0 + 1);
    let y1 = (u.y1() + my).min(imgh).max(y0 + 1);
    Rect::new(x0, y0, x1 - x0, y1 - y0)
}

/// Maximum of the 3x3 mean-filtered map (zero padding outside the map).
pub fn seg_score(m: &ProbMap) -> Result<f64, SegError> {
    if m.is_empty() {
        return Err(SegError::EmptyMap);
    }
    let (w, h) = (m.width as isize, m.height as isize);
    let mut best = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0f64;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        sum += m.get(nx as usize, ny as usize) as f64;
                    }
                }
            }
            best = best.max(sum / 9.0);
        }
    }
    Ok(best.clamp(0.0, 1.0))
}
