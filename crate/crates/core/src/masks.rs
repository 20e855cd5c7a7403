//! Object templates used for event-domain detection: the signed event-based
//! mask (most recent event polarity per pixel) and the binary edge-based mask
//! (Sobel edges of the image crop), both over a slightly enlarged version of
//! the detection's bounding box.

use crate::error::{Error, Result};
use crate::refine;
use crate::types::{BBox, Event, GrayImage, PixelRect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskKind {
    /// Values in {-1, 0, +1}: polarity of the most recent event per pixel.
    EventBased,
    /// Values in {0, +1}: binarized image edges.
    EdgeBased,
}

impl std::str::FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "event" | "event_based" => Ok(MaskKind::EventBased),
            "edge" | "edge_based" => Ok(MaskKind::EdgeBased),
            other => Err(Error::Config(format!("unknown mask kind {other:?}"))),
        }
    }
}

/// Sparse object template stored densely over its (enlarged) bounding box.
#[derive(Debug, Clone)]
pub struct EventMask {
    pub kind: MaskKind,
    /// Enlarged box in sensor pixels.
    pub rect: PixelRect,
    /// Row-major, rect.w x rect.h.
    values: Vec<i8>,
    /// Microseconds; the tracking instant the mask was built at.
    pub created_t: u64,
    nonzero: usize,
}

impl EventMask {
    pub fn new(kind: MaskKind, rect: PixelRect, values: Vec<i8>, created_t: u64) -> Result<Self> {
        if values.len() != rect.pixel_count() {
            return Err(Error::Value(format!(
                "mask values length {} does not match rect {}x{}",
                values.len(),
                rect.w,
                rect.h
            )));
        }
        let mut nonzero = 0;
        for &v in &values {
            let ok = match kind {
                MaskKind::EventBased => (-1..=1).contains(&v),
                MaskKind::EdgeBased => (0..=1).contains(&v),
            };
            if !ok {
                return Err(Error::Value(format!("mask value {v} out of range for {kind:?}")));
            }
            if v != 0 {
                nonzero += 1;
            }
        }
        if nonzero == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Self { kind, rect, values, created_t, nonzero })
    }

    pub fn width(&self) -> u32 {
        self.rect.w
    }

    pub fn height(&self) -> u32 {
        self.rect.h
    }

    #[inline]
    pub fn value(&self, x: u32, y: u32) -> i8 {
        self.values[y as usize * self.rect.w as usize + x as usize]
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn nonzero_count(&self) -> usize {
        self.nonzero
    }
}

/// Grow a box by `factor` of its own dimension on every side, then clamp to
/// the sensor rectangle.
pub fn enlarge_bbox(bbox: &BBox, factor: f64, sensor_w: u32, sensor_h: u32) -> Result<BBox> {
    if bbox.width <= 0.0 || bbox.height <= 0.0 {
        return Err(Error::Value(format!(
            "cannot enlarge degenerate bbox {}x{}",
            bbox.width, bbox.height
        )));
    }
    if factor < 0.0 {
        return Err(Error::Value(format!("enlargement factor must be >= 0, got {factor}")));
    }
    let left = (bbox.left - factor * bbox.width).max(0.0);
    let top = (bbox.top - factor * bbox.height).max(0.0);
    let right = (bbox.right() + factor * bbox.width).min(sensor_w as f64);
    let bottom = (bbox.bottom() + factor * bbox.height).min(sensor_h as f64);
    if right <= left || bottom <= top {
        return Err(Error::Value("bbox lies entirely outside the sensor".into()));
    }
    Ok(BBox::new(left, top, right - left, bottom - top))
}

/// Build the signed event template: for each pixel of the enlarged box the
/// polarity of its most recent event (ties go to the later event in stream
/// order), 0 where no event occurred.
pub fn build_event_mask(events: &[Event], rect: &PixelRect, t_now: u64) -> Result<EventMask> {
    let mut values = vec![0i8; rect.pixel_count()];
    let mut latest = vec![0u64; rect.pixel_count()];
    let mut seen = vec![false; rect.pixel_count()];
    for e in events {
        if !rect.contains(e.x, e.y) {
            continue;
        }
        let idx = (e.y as u32 - rect.y) as usize * rect.w as usize + (e.x as u32 - rect.x) as usize;
        if !seen[idx] || e.t >= latest[idx] {
            seen[idx] = true;
            latest[idx] = e.t;
            values[idx] = e.polarity.sign();
        }
    }
    EventMask::new(MaskKind::EventBased, *rect, values, t_now)
}

/// Build the binary edge template from the image crop under the enlarged box:
/// 3x3 Sobel gradient magnitude (|gx| + |gy|), max-normalized, Otsu-binarized.
pub fn build_edge_mask(image: &GrayImage, rect: &PixelRect, t_now: u64) -> Result<EventMask> {
    let crop = image.crop(rect)?;
    let magnitude = sobel_magnitude(&crop);
    let max = *magnitude.iter().max().unwrap_or(&0);
    if max == 0 {
        return Err(Error::EmptyMask);
    }
    let pixels: Vec<u8> = magnitude.iter().map(|&m| (m as u64 * 255 / max as u64) as u8).collect();
    let gray = GrayImage { width: rect.w, height: rect.h, pixels };
    let (_, foreground) = refine::otsu_threshold(&gray).ok_or(Error::EmptyMask)?;
    let values: Vec<i8> = foreground.iter().map(|&f| if f { 1 } else { 0 }).collect();
    EventMask::new(MaskKind::EdgeBased, *rect, values, t_now)
}

/// |gx| + |gy| under the 3x3 Sobel operator with replicate-edge padding.
fn sobel_magnitude(image: &GrayImage) -> Vec<u32> {
    let (w, h) = (image.width as i64, image.height as i64);
    let at = |x: i64, y: i64| -> i64 {
        image.get(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32) as i64
    };
    let mut out = Vec::with_capacity(image.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
            out.push((gx.abs() + gy.abs()) as u32);
        }
    }
    out
}
