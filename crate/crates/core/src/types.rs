//! Shared domain types: events, boxes, images, detections, manifests.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Sign of the brightness change carried by an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }

    /// Decode the 0/1 file encoding.
    pub fn from_encoded(v: i64) -> Result<Self> {
        match v {
            0 => Ok(Polarity::Negative),
            1 => Ok(Polarity::Positive),
            other => Err(Error::Value(format!("polarity must be 0 or 1, got {other}"))),
        }
    }

    pub fn encoded(self) -> u8 {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Negative => Polarity::Positive,
            Polarity::Positive => Polarity::Negative,
        }
    }
}

/// One asynchronous brightness change from the dynamic vision sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: u64,
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    pub polarity: Polarity,
}

/// Axis-aligned bounding box in pixel coordinates (left, top, width, height).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self { left, top, width, height }
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width.max(0.0) * self.height.max(0.0)
    }

    pub fn centroid(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    /// Midpoint of the right edge; for a vehicle driving towards the sensor's
    /// right this is the point closest to its front.
    pub fn center_right(&self) -> (f64, f64) {
        (self.left + self.width, self.top + self.height / 2.0)
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let left = self.left.max(other.left);
        let top = self.top.max(other.top);
        let right = self.right().min(other.right());
        let bottom = self.bottom().min(other.bottom());
        if right > left && bottom > top {
            Some(BBox::new(left, top, right - left, bottom - top))
        } else {
            None
        }
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.left >= self.left
            && other.top >= self.top
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersects_sensor(&self, width: u32, height: u32) -> bool {
        self.width > 0.0
            && self.height > 0.0
            && self.left < width as f64
            && self.top < height as f64
            && self.right() > 0.0
            && self.bottom() > 0.0
    }
}

/// Integer pixel rectangle, always inside the sensor it was clamped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    /// Rasterize a float bbox: outward-rounded, clamped to the sensor.
    /// Returns `None` when nothing of the box lies on the sensor.
    pub fn from_bbox(bbox: &BBox, sensor_w: u32, sensor_h: u32) -> Option<Self> {
        let x0 = bbox.left.floor().max(0.0) as u32;
        let y0 = bbox.top.floor().max(0.0) as u32;
        let x1 = (bbox.right().ceil().max(0.0) as u64).min(sensor_w as u64) as u32;
        let y1 = (bbox.bottom().ceil().max(0.0) as u64).min(sensor_h as u64) as u32;
        if x1 > x0 && y1 > y0 {
            Some(PixelRect { x: x0, y: y0, w: x1 - x0, h: y1 - y0 })
        } else {
            None
        }
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        let (x, y) = (x as u32, y as u32);
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub fn to_bbox(&self) -> BBox {
        BBox::new(self.x as f64, self.y as f64, self.w as f64, self.h as f64)
    }

    pub fn pixel_count(&self) -> usize {
        self.w as usize * self.h as usize
    }
}

/// One record produced by a frame-based object detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame_index: u32,
    /// Microseconds.
    pub t: u64,
    pub class_label: String,
    pub confidence: f64,
    pub bbox: BBox,
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![0; width as usize * height as usize] }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Value(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.pixels[y as usize * self.width as usize + x as usize] = v;
    }

    /// Copy out a sub-rectangle. The rect must lie within the image.
    pub fn crop(&self, rect: &PixelRect) -> Result<GrayImage> {
        if rect.x + rect.w > self.width || rect.y + rect.h > self.height {
            return Err(Error::Value(format!(
                "crop {rect:?} exceeds image {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(rect.pixel_count());
        for row in rect.y..rect.y + rect.h {
            let start = row as usize * self.width as usize + rect.x as usize;
            pixels.extend_from_slice(&self.pixels[start..start + rect.w as usize]);
        }
        Ok(GrayImage { width: rect.w, height: rect.h, pixels })
    }
}

/// One image frame entry in a sequence manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_index: u32,
    pub t_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
}

/// Description of one recorded sequence: sensor geometry, the frame schedule,
/// and where the event/detection files live (paths relative to the manifest).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub sensor_width: u32,
    pub sensor_height: u32,
    pub frame_rate: f64,
    pub frames: Vec<FrameEntry>,
    pub events_path: PathBuf,
    pub detections_path: PathBuf,
}

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        if self.frame_rate <= 0.0 {
            return Err(Error::Config(format!("frame_rate must be > 0, got {}", self.frame_rate)));
        }
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err(Error::Config("sensor dimensions must be nonzero".into()));
        }
        for pair in self.frames.windows(2) {
            if pair[1].t_us <= pair[0].t_us {
                return Err(Error::Config(format!(
                    "frame timestamps must be strictly increasing ({} then {})",
                    pair[0].t_us, pair[1].t_us
                )));
            }
        }
        Ok(())
    }
}
