//! Event-guided bounding-box refinement: convert the region's events to a
//! temporally weighted grayscale image, blur, Otsu-threshold, and fit a tight
//! box to the dominant foreground component.
//!
//! Every failure path returns the input detection unchanged; refinement never
//! errors and never moves the box outside the enlarged region.

use crate::detector::Detection;
use crate::masks;
use crate::types::{BBox, GrayImage, PixelRect};
use crate::windowing::WindowFrame;

#[derive(Debug, Clone)]
pub struct RefineConfig {
    /// Minimum sum of temporally weighted event magnitudes inside the
    /// enlarged box for refinement to run at all.
    pub min_weight_sum: f64,
    /// Components smaller than this many pixels are ignored.
    pub min_component_area: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { min_weight_sum: 3.0, min_component_area: 9 }
    }
}

/// Render the region's events as a grayscale image: per pixel the temporal
/// weight of its most recent event with polarity dropped, max-normalized to
/// 0..=255 (truncating). `None` when the region holds no events.
pub fn events_to_gray(window: &WindowFrame, rect: &PixelRect) -> Option<GrayImage> {
    let mut weight = vec![0.0f64; rect.pixel_count()];
    let mut latest = vec![0u64; rect.pixel_count()];
    let mut seen = vec![false; rect.pixel_count()];
    let mut any = false;
    for e in window.events {
        if !rect.contains(e.x, e.y) {
            continue;
        }
        let idx = (e.y as u32 - rect.y) as usize * rect.w as usize + (e.x as u32 - rect.x) as usize;
        if !seen[idx] || e.t >= latest[idx] {
            seen[idx] = true;
            latest[idx] = e.t;
            weight[idx] = window.weight_at(e.t);
            any = true;
        }
    }
    if !any {
        return None;
    }
    let max = weight.iter().cloned().fold(0.0f64, f64::max);
    let pixels = weight.iter().map(|w| (w / max * 255.0) as u8).collect();
    Some(GrayImage { width: rect.w, height: rect.h, pixels })
}

/// 3x3 averaging blur with replicate-edge padding; each output pixel is the
/// rounded mean of its nine (padded) neighbors.
pub fn box_blur3(image: &GrayImage) -> GrayImage {
    let (w, h) = (image.width as i64, image.height as i64);
    let mut out = GrayImage::new(image.width, image.height);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0u32;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let sx = (x + dx).clamp(0, w - 1) as u32;
                    let sy = (y + dy).clamp(0, h - 1) as u32;
                    sum += image.get(sx, sy) as u32;
                }
            }
            out.set(x as u32, y as u32, (sum as f64 / 9.0).round() as u8);
        }
    }
    out
}

/// Otsu's threshold: the T in 0..=255 maximizing the between-class variance
/// of the histogram split at T (background <= T < foreground). Returns the
/// smallest T among equal maxima together with the foreground mask.
/// `None` when the image has zero variance (all pixels equal).
pub fn otsu_threshold(image: &GrayImage) -> Option<(u8, Vec<bool>)> {
    let mut histogram = [0u64; 256];
    for &p in &image.pixels {
        histogram[p as usize] += 1;
    }
    let total: u64 = image.pixels.len() as u64;
    let total_sum: u64 = histogram.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();

    let mut best: Option<(u8, f64)> = None;
    let mut w0 = 0u64;
    let mut s0 = 0u64;
    for t in 0..256usize {
        w0 += histogram[t];
        s0 += t as u64 * histogram[t];
        let w1 = total - w0;
        if w0 == 0 {
            continue;
        }
        if w1 == 0 {
            break;
        }
        let variance = between_class_variance(w0, w1, s0, total_sum - s0);
        if best.map_or(true, |(_, v)| variance > v) {
            best = Some((t as u8, variance));
        }
    }
    let (threshold, _) = best?;
    let mask = image.pixels.iter().map(|&p| p > threshold).collect();
    Some((threshold, mask))
}

/// Between-class variance of a histogram split, from exact integer
/// class weights and intensity sums.
pub fn between_class_variance(w0: u64, w1: u64, s0: u64, s1: u64) -> f64 {
    let mu0 = s0 as f64 / w0 as f64;
    let mu1 = s1 as f64 / w1 as f64;
    w0 as f64 * w1 as f64 * (mu0 - mu1) * (mu0 - mu1)
}

struct Component {
    area: usize,
    min_x: u32,
    min_y: u32,
    max_x: u32,
    max_y: u32,
}

/// Label 8-connected foreground components in row-major scan order.
fn connected_components(mask: &[bool], w: u32, h: u32) -> Vec<Component> {
    let (w, h) = (w as usize, h as usize);
    let mut labels = vec![0usize; mask.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let label = components.len() + 1;
        let mut comp = Component { area: 0, min_x: u32::MAX, min_y: u32::MAX, max_x: 0, max_y: 0 };
        stack.push(start);
        labels[start] = label;
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            comp.area += 1;
            comp.min_x = comp.min_x.min(x as u32);
            comp.max_x = comp.max_x.max(x as u32);
            comp.min_y = comp.min_y.min(y as u32);
            comp.max_y = comp.max_y.max(y as u32);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if mask[nidx] && labels[nidx] == 0 {
                        labels[nidx] = label;
                        stack.push(nidx);
                    }
                }
            }
        }
        components.push(comp);
    }
    components
}

/// Tight bounding box of the largest 8-connected foreground component, in
/// mask-local coordinates. Ties go to the component encountered first in
/// row-major order. `None` when no component reaches `min_area`.
pub fn best_fit_bbox(mask: &[bool], w: u32, h: u32, min_area: usize) -> Option<PixelRect> {
    let components = connected_components(mask, w, h);
    let best =
        components.iter().filter(|c| c.area >= min_area).fold(None::<&Component>, |best, c| {
            match best {
                Some(b) if b.area >= c.area => Some(b),
                _ => Some(c),
            }
        })?;
    Some(PixelRect {
        x: best.min_x,
        y: best.min_y,
        w: best.max_x - best.min_x + 1,
        h: best.max_y - best.min_y + 1,
    })
}

/// Refine a detection's box against the window's events. The pipeline is
/// gated on the sum of temporally weighted event magnitudes inside the
/// enlarged box; on any abort the input comes back unchanged.
pub fn refine_bbox(
    detection: &Detection,
    window: &WindowFrame,
    config: &RefineConfig,
    enlargement: f64,
    sensor_w: u32,
    sensor_h: u32,
) -> Detection {
    let enlarged = match masks::enlarge_bbox(&detection.bbox, enlargement, sensor_w, sensor_h) {
        Ok(b) => b,
        Err(_) => return detection.clone(),
    };
    let rect = match PixelRect::from_bbox(&enlarged, sensor_w, sensor_h) {
        Some(r) => r,
        None => return detection.clone(),
    };

    let weight_sum: f64 = window
        .events
        .iter()
        .filter(|e| rect.contains(e.x, e.y))
        .map(|e| window.weight_at(e.t))
        .sum();
    if weight_sum < config.min_weight_sum {
        return detection.clone();
    }

    let gray = match events_to_gray(window, &rect) {
        Some(g) => g,
        None => return detection.clone(),
    };
    let blurred = box_blur3(&gray);
    let (_, foreground) = match otsu_threshold(&blurred) {
        Some(r) => r,
        None => return detection.clone(),
    };
    let local = match best_fit_bbox(&foreground, rect.w, rect.h, config.min_component_area) {
        Some(b) => b,
        None => return detection.clone(),
    };

    let mut refined = detection.clone();
    refined.bbox = BBox::new(
        (rect.x + local.x) as f64,
        (rect.y + local.y) as f64,
        local.w as f64,
        local.h as f64,
    );
    refined
}
