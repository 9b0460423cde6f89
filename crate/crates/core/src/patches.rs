//! Apical and basilar patch extraction for the regional classifier.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{crop, resize_bilinear, ImageError, ImageGray, Rect};
use crate::segpost::LungFields;

/// Fraction of the lung bounding-box height taken by each of the apex and
/// base patches.
pub const PATCH_HEIGHT_FRAC: f64 = 0.4;
pub const MIN_LUNG_EXTENT: usize = 4;
pub const MIN_PATCH_SIZE: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("degenerate {side} lung box {bbox:?}")]
    DegenerateLung { side: &'static str, bbox: Rect },
    #[error("patch output size {0} is below the minimum of {MIN_PATCH_SIZE}")]
    InvalidSize(usize),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Patient-relative patch location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchTag {
    RightApex,
    LeftApex,
    RightBase,
    LeftBase,
}

impl PatchTag {
    pub const ALL: [PatchTag; 4] =
        [PatchTag::RightApex, PatchTag::LeftApex, PatchTag::RightBase, PatchTag::LeftBase];

    pub fn as_str(&self) -> &'static str {
        match self {
            PatchTag::RightApex => "right_apex",
            PatchTag::LeftApex => "left_apex",
            PatchTag::RightBase => "right_base",
            PatchTag::LeftBase => "left_base",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub tag: PatchTag,
    pub source_rect: Rect,
    pub image: ImageGray,
}

/// Apex and base rectangles for one lung box, clamped to the image.
pub fn apex_base_rects(bbox: Rect, img_w: usize, img_h: usize) -> (Rect, Rect) {
    let ph = (PATCH_HEIGHT_FRAC * bbox.h as f64).round() as usize;
    let clamp = |r: Rect| {
        let x0 = r.x0.min(img_w - 1);
        let y0 = r.y0.min(img_h - 1);
        Rect::new(x0, y0, r.w.min(img_w - x0).max(1), r.h.min(img_h - y0).max(1))
    };
    let apex = clamp(Rect::new(bbox.x0, bbox.y0, bbox.w, ph));
    let base = clamp(Rect::new(bbox.x0, bbox.y0 + bbox.h - ph, bbox.w, ph));
    (apex, base)
}

/// Four patches in the fixed order `[RightApex, LeftApex, RightBase, LeftBase]`.
pub fn extract_patches(
    img: &ImageGray,
    lf: &LungFields,
    out_size: usize,
) -> Result<[Patch; 4], PatchError> {
    if out_size < MIN_PATCH_SIZE {
        return Err(PatchError::InvalidSize(out_size));
    }
    for (side, lung) in [("right", &lf.patient_right), ("left", &lf.patient_left)] {
        let b = lung.bbox;
        if b.w < MIN_LUNG_EXTENT || b.h < MIN_LUNG_EXTENT {
            return Err(PatchError::DegenerateLung { side, bbox: b });
        }
    }
    let (w, h) = (img.width(), img.height());
    let (right_apex, right_base) = apex_base_rects(lf.patient_right.bbox, w, h);
    let (left_apex, left_base) = apex_base_rects(lf.patient_left.bbox, w, h);

    let make = |tag: PatchTag, rect: Rect| -> Result<Patch, PatchError> {
        let image = resize_bilinear(&crop(img, rect)?, out_size, out_size)?;
        Ok(Patch { tag, source_rect: rect, image })
    };
    Ok([
        make(PatchTag::RightApex, right_apex)?,
        make(PatchTag::LeftApex, left_apex)?,
        make(PatchTag::RightBase, right_base)?,
        make(PatchTag::LeftBase, left_base)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segpost::{BinaryMask, Lung};

    fn fields(right: Rect, left: Rect, w: usize, h: usize) -> LungFields {
        LungFields {
            patient_right: Lung { mask: BinaryMask::empty(w, h), bbox: right },
            patient_left: Lung { mask: BinaryMask::empty(w, h), bbox: left },
            combined_bbox: right.union(&left),
            degraded: false,
        }
    }

    #[test]
    fn forty_percent_split() {
        let img = ImageGray::filled(200, 200, 0.3).unwrap();
        let lf = fields(Rect::new(10, 50, 60, 100), Rect::new(120, 50, 60, 100), 200, 200);
        let ps = extract_patches(&img, &lf, 16).unwrap();
        assert_eq!(ps[0].source_rect, Rect::new(10, 50, 60, 40));
        assert_eq!(ps[2].source_rect, Rect::new(10, 110, 60, 40));
        // rows 40..59 of the lung box belong to neither patch
        assert_eq!(ps[0].source_rect.y1() - 50, 40);
        assert_eq!(ps[2].source_rect.y0 - 50, 60);
        assert!(ps.iter().all(|p| p.image.width() == 16 && p.image.height() == 16));
    }

    #[test]
    fn order_and_sides() {
        let img = ImageGray::filled(100, 80, 0.5).unwrap();
        let lf = fields(Rect::new(10, 10, 30, 60), Rect::new(60, 10, 30, 60), 100, 80);
        let ps = extract_patches(&img, &lf, 8).unwrap();
        let tags: Vec<_> = ps.iter().map(|p| p.tag).collect();
        assert_eq!(tags, PatchTag::ALL.to_vec());
        assert!(ps[0].source_rect.x0 < ps[1].source_rect.x0);
    }

    #[test]
    fn degeneracy_boundary() {
        let img = ImageGray::filled(50, 50, 0.5).unwrap();
        let lf = fields(Rect::new(0, 0, 10, 5), Rect::new(20, 0, 10, 5), 50, 50);
        let ps = extract_patches(&img, &lf, 8).unwrap();
        assert_eq!(ps[0].source_rect.h, 2);
        assert_eq!(ps[2].source_rect, Rect::new(0, 3, 10, 2));

        let lf = fields(Rect::new(0, 0, 10, 3), Rect::new(20, 0, 10, 5), 50, 50);
        assert!(matches!(
            extract_patches(&img, &lf, 8),
            Err(PatchError::DegenerateLung { side: "right", .. })
        ));
        let lf = fields(Rect::new(0, 0, 10, 10), Rect::new(20, 0, 10, 10), 50, 50);
        assert_eq!(extract_patches(&img, &lf, 7), Err(PatchError::InvalidSize(7)));
    }
}
