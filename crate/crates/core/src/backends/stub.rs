use crate::imaging::{ImageGray, Rect};
use crate::study::PtxLocation;

use super::{Backend, BackendError, ModelId, StudyContext, Tensor};

/// Horizontal centers of the synthetic lungs as fractions of the image width
/// (patient right first).
pub(crate) const LUNG_CENTERS_X: [f64; 2] = [0.28, 0.72];
pub(crate) const LUNG_CENTER_Y: f64 = 0.55;
pub(crate) const LUNG_WIDTH: f64 = 0.30;
pub(crate) const LUNG_HEIGHT: f64 = 0.55;

/// Synthetic lung rectangle in pixel indices; `which` is 0 for the
/// patient's right lung (image left), 1 for the left lung. Edges are the
/// continuous bounds rounded to the nearest pixel boundary.
pub fn stub_lung_rect(which: usize, w: usize, h: usize) -> Rect {
    let cx = LUNG_CENTERS_X[which] * w as f64;
    let cy = LUNG_CENTER_Y * h as f64;
    let (hw, hh) = (LUNG_WIDTH * w as f64 / 2.0, LUNG_HEIGHT * h as f64 / 2.0);
    let x0 = ((cx - hw).round() as usize).min(w);
    let x1 = ((cx + hw).round() as usize).min(w);
    let y0 = ((cy - hh).round() as usize).min(h);
    let y1 = ((cy + hh).round() as usize).min(h);
    Rect::new(x0, y0, x1 - x0, y1 - y0)
}

fn contains(r: Rect, x: usize, y: usize) -> bool {
    x >= r.x0 && x < r.x1() && y >= r.y0 && y < r.y1()
}

pub(crate) fn in_stub_lung(which: usize, x: usize, y: usize, w: usize, h: usize) -> bool {
    contains(stub_lung_rect(which, w, h), x, y)
}

/// Apex = upper half of the synthetic lung's rows, base = the rest.
pub(crate) fn stub_region_rect(loc: PtxLocation, w: usize, h: usize) -> Rect {
    let (which, apex) = match loc {
        PtxLocation::RightApex => (0, true),
        PtxLocation::LeftApex => (1, true),
        PtxLocation::RightBase => (0, false),
        PtxLocation::LeftBase => (1, false),
    };
    let r = stub_lung_rect(which, w, h);
    let upper = r.h / 2;
    if apex {
        Rect::new(r.x0, r.y0, r.w, upper)
    } else {
        Rect::new(r.x0, r.y0 + upper, r.w, r.h - upper)
    }
}

pub(crate) fn in_stub_region(loc: PtxLocation, x: usize, y: usize, w: usize, h: usize) -> bool {
    contains(stub_region_rect(loc, w, h), x, y)
}

/// Two rectangular lungs centered at (0.28W, 0.55H) and (0.72W, 0.55H),
/// each 0.30W x 0.55H; 1.0 inside, 0.0 outside. Row-major.
pub fn stub_lung_map(w: usize, h: usize) -> Vec<f32> {
    let (right, left) = (stub_lung_rect(0, w, h), stub_lung_rect(1, w, h));
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let inside = contains(right, x, y) || contains(left, x, y);
            out.push(if inside { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Label-free deterministic backend: synthetic lungs, frontal view, an empty
/// pneumothorax map, no tubes, and the image mean for the pneumothorax
/// classifiers.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

impl Backend for StubBackend {
    fn infer(&self, _ctx: &StudyContext<'_>, model: ModelId, img: &ImageGray) -> Result<Tensor, BackendError> {
        let (w, h) = (img.width(), img.height());
        Ok(match model {
            ModelId::View => Tensor::scalar(1.0),
            ModelId::LungSeg => Tensor { shape: vec![h, w], data: stub_lung_map(w, h) },
            ModelId::PtxSeg => Tensor { shape: vec![h, w], data: vec![0.0; w * h] },
            ModelId::PtxFull | ModelId::PtxPatch => Tensor::scalar(img.mean() as f32),
            ModelId::Tube => Tensor { shape: vec![2], data: vec![0.0, 0.0] },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lung_blobs_match_definition() {
        let (w, h) = (100, 100);
        let m = stub_lung_map(w, h);
        let at = |x: usize, y: usize| m[y * w + x];
        // right lung: columns 13..43, rows 28..83 (27.5 rounds away from zero)
        assert_eq!(stub_lung_rect(0, w, h), Rect::new(13, 28, 30, 55));
        assert_eq!(stub_lung_rect(1, w, h), Rect::new(57, 28, 30, 55));
        assert_eq!(at(13, 55), 1.0);
        assert_eq!(at(12, 55), 0.0);
        assert_eq!(at(42, 55), 1.0);
        assert_eq!(at(43, 55), 0.0);
        assert_eq!(at(28, 27), 0.0);
        assert_eq!(at(28, 28), 1.0);
        assert_eq!(at(28, 82), 1.0);
        assert_eq!(at(28, 83), 0.0);
        assert_eq!(at(57, 55), 1.0);
        assert_eq!(at(86, 55), 1.0);
        assert_eq!(at(87, 55), 0.0);
        assert_eq!(at(50, 55), 0.0);
        assert_eq!(m.iter().filter(|&&v| v == 1.0).count(), 2 * 30 * 55);
    }
}
