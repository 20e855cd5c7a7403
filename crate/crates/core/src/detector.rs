//! Inter-frame event-based object detection: slide an object's mask over the
//! temporally weighted event field inside a search region, take the argmax of
//! the correlation scores, and accept it when it clears the score threshold.
//! Recovery of frame-detector misses is the same procedure behind an elevated
//! threshold.

use crate::error::{Error, Result};
use crate::masks::{EventMask, MaskKind};
use crate::types::{BBox, PixelRect};
use crate::windowing::WindowFrame;

#[derive(Debug, Clone)]
pub struct DetectorConfig {
    /// Search region margin around the last known box, per side.
    pub margin_px: u32,
    /// Normalized correlation score an inter-frame detection must reach.
    pub score_threshold: f64,
    /// Multiplier applied to the threshold for recovery of missed frame
    /// detections.
    pub recovery_multiplier: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { margin_px: 16, score_threshold: 0.10, recovery_multiplier: 2.0 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.score_threshold <= 0.0 {
            return Err(Error::Config("score_threshold must be > 0".into()));
        }
        if self.recovery_multiplier < 1.0 {
            return Err(Error::Config("recovery_multiplier must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionSource {
    Frame,
    Event,
    Recovered,
}

/// A located object at one tracking instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    /// Normalized correlation score; absent for frame-detector output.
    pub score: Option<f64>,
    pub source: DetectionSource,
    /// Microseconds.
    pub t: u64,
}

/// The last known box expanded by the margin on every side, clamped to the
/// sensor. `None` when nothing of it lies on the sensor.
pub fn search_region(
    last_bbox: &BBox,
    margin_px: u32,
    sensor_w: u32,
    sensor_h: u32,
) -> Option<PixelRect> {
    let m = margin_px as f64;
    let expanded = BBox::new(
        last_bbox.left - m,
        last_bbox.top - m,
        last_bbox.width + 2.0 * m,
        last_bbox.height + 2.0 * m,
    );
    PixelRect::from_bbox(&expanded, sensor_w, sensor_h)
}

/// Temporally weighted event field over a region: per pixel the weight of its
/// most recent event, signed by polarity when `signed` is set, 0 where no
/// event occurred.
#[derive(Debug, Clone)]
pub struct WeightedField {
    pub rect: PixelRect,
    /// Row-major, rect.w x rect.h.
    pub values: Vec<f64>,
}

impl WeightedField {
    #[inline]
    pub fn value(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.rect.w as usize + x as usize]
    }
}

pub fn build_weighted_field(
    window: &WindowFrame,
    region: &PixelRect,
    signed: bool,
) -> WeightedField {
    let mut values = vec![0.0f64; region.pixel_count()];
    let mut latest = vec![0u64; region.pixel_count()];
    let mut seen = vec![false; region.pixel_count()];
    for e in window.events {
        if !region.contains(e.x, e.y) {
            continue;
        }
        let idx =
            (e.y as u32 - region.y) as usize * region.w as usize + (e.x as u32 - region.x) as usize;
        if !seen[idx] || e.t >= latest[idx] {
            seen[idx] = true;
            latest[idx] = e.t;
            let w = window.weight_at(e.t);
            values[idx] = if signed { w * e.polarity.sign() as f64 } else { w };
        }
    }
    WeightedField { rect: *region, values }
}

/// Correlation scores over every placement of the mask inside the field.
/// Placement (u, v) is the mask's top-left offset within the field; scores
/// are normalized by the mask's nonzero cell count.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    /// Placements along x: field_w - mask_w + 1.
    pub width: u32,
    /// Placements along y: field_h - mask_h + 1.
    pub height: u32,
    scores: Vec<f64>,
    nonzero_cells: usize,
}

impl CostMatrix {
    #[inline]
    pub fn score(&self, u: u32, v: u32) -> f64 {
        self.scores[v as usize * self.width as usize + u as usize]
    }

    /// Raw (unnormalized) correlation sum at a placement.
    pub fn raw_score(&self, u: u32, v: u32) -> f64 {
        self.score(u, v) * self.nonzero_cells as f64
    }

    /// Best placement and its normalized score. Ties break towards the
    /// smallest v, then the smallest u.
    pub fn argmax(&self) -> (u32, u32, f64) {
        let mut best = (0u32, 0u32, f64::NEG_INFINITY);
        for v in 0..self.height {
            for u in 0..self.width {
                let s = self.score(u, v);
                if s > best.2 {
                    best = (u, v, s);
                }
            }
        }
        best
    }
}

/// Exhaustive sliding-window correlation of a mask against a field: at each
/// placement the sum over mask cells of mask x field, divided by the mask's
/// nonzero cell count.
pub fn correlate(mask: &EventMask, field: &WeightedField) -> Result<CostMatrix> {
    let (mw, mh) = (mask.width(), mask.height());
    let (fw, fh) = (field.rect.w, field.rect.h);
    if mw > fw || mh > fh {
        return Err(Error::Size(format!(
            "mask {mw}x{mh} does not fit inside field {fw}x{fh}"
        )));
    }
    // Zero cells contribute nothing to the sum; enumerate the nonzero ones
    // once, in row-major order so accumulation order matches a plain loop.
    let mut cells: Vec<(u32, u32, f64)> = Vec::with_capacity(mask.nonzero_count());
    for y in 0..mh {
        for x in 0..mw {
            let v = mask.value(x, y);
            if v != 0 {
                cells.push((x, y, v as f64));
            }
        }
    }

    let width = fw - mw + 1;
    let height = fh - mh + 1;
    let norm = mask.nonzero_count() as f64;
    let mut scores = Vec::with_capacity(width as usize * height as usize);
    for v in 0..height {
        for u in 0..width {
            let mut sum = 0.0f64;
            for &(x, y, m) in &cells {
                sum += m * field.value(u + x, v + y);
            }
            scores.push(sum / norm);
        }
    }
    Ok(CostMatrix { width, height, scores, nonzero_cells: mask.nonzero_count() })
}

/// Locate a tracked object in an event-only window. Returns `None` when the
/// best score misses the threshold, the region cannot hold the mask, or the
/// region holds no events.
pub fn detect_inter_frame(
    mask: &EventMask,
    window: &WindowFrame,
    last_bbox: &BBox,
    config: &DetectorConfig,
    sensor_w: u32,
    sensor_h: u32,
) -> Option<Detection> {
    detect_with_threshold(
        mask,
        window,
        last_bbox,
        config,
        config.score_threshold,
        DetectionSource::Event,
        sensor_w,
        sensor_h,
    )
}

/// Try to recover an object the frame detector missed, at an elevated
/// threshold.
pub fn recover_missed(
    mask: &EventMask,
    window: &WindowFrame,
    last_bbox: &BBox,
    config: &DetectorConfig,
    sensor_w: u32,
    sensor_h: u32,
) -> Option<Detection> {
    detect_with_threshold(
        mask,
        window,
        last_bbox,
        config,
        config.score_threshold * config.recovery_multiplier,
        DetectionSource::Recovered,
        sensor_w,
        sensor_h,
    )
}

#[allow(clippy::too_many_arguments)]
fn detect_with_threshold(
    mask: &EventMask,
    window: &WindowFrame,
    last_bbox: &BBox,
    config: &DetectorConfig,
    threshold: f64,
    source: DetectionSource,
    sensor_w: u32,
    sensor_h: u32,
) -> Option<Detection> {
    let region = search_region(last_bbox, config.margin_px, sensor_w, sensor_h)?;
    if mask.width() > region.w || mask.height() > region.h {
        return None;
    }
    let signed = mask.kind == MaskKind::EventBased;
    let field = build_weighted_field(window, &region, signed);
    let scores = correlate(mask, &field).ok()?;
    let (u, v, score) = scores.argmax();
    if score >= threshold {
        Some(Detection {
            bbox: BBox::new(
                (region.x + u) as f64,
                (region.y + v) as f64,
                mask.width() as f64,
                mask.height() as f64,
            ),
            score: Some(score),
            source,
            t: window.t_now,
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks;
    use crate::types::{Event, Polarity};
    use proptest::prelude::*;

    fn window<'a>(events: &'a [Event], t_now: u64) -> WindowFrame<'a> {
        WindowFrame {
            index: 1,
            t_now,
            events,
            image: None,
            frame_detections: None,
            interval_us: 50_000,
            min_weight: 0.05,
        }
    }

    fn ev(t: u64, x: u16, y: u16, p: Polarity) -> Event {
        Event { t, x, y, polarity: p }
    }

    fn mask_from_values(w: u32, h: u32, values: Vec<i8>) -> EventMask {
        EventMask::new(MaskKind::EventBased, PixelRect { x: 0, y: 0, w, h }, values, 0).unwrap()
    }

    fn field_from_values(w: u32, h: u32, values: Vec<f64>) -> WeightedField {
        WeightedField { rect: PixelRect { x: 0, y: 0, w, h }, values }
    }

    #[test]
    fn field_keeps_newest_event_per_pixel() {
        let events = vec![
            ev(10_000, 3, 3, Polarity::Positive),
            ev(50_000, 3, 3, Polarity::Negative),
        ];
        let w = window(&events, 50_000);
        let region = PixelRect { x: 0, y: 0, w: 8, h: 8 };
        let signed = build_weighted_field(&w, &region, true);
        assert_eq!(signed.value(3, 3), -1.0);
        let unsigned = build_weighted_field(&w, &region, false);
        assert_eq!(unsigned.value(3, 3), 1.0);
        assert_eq!(unsigned.value(0, 0), 0.0);
    }

    #[test]
    fn field_drops_sign_when_unsigned() {
        let events = vec![ev(50_000, 2, 2, Polarity::Negative)];
        let w = window(&events, 50_000);
        let region = PixelRect { x: 0, y: 0, w: 4, h: 4 };
        assert_eq!(build_weighted_field(&w, &region, false).value(2, 2), 1.0);
        assert_eq!(build_weighted_field(&w, &region, true).value(2, 2), -1.0);
    }

    #[test]
    fn correlate_1x1_finds_unique_max() {
        let mask = mask_from_values(1, 1, vec![1]);
        let mut values = vec![0.0; 8 * 8];
        values[2 * 8 + 4] = 0.9;
        let field = field_from_values(8, 8, values);
        let scores = correlate(&mask, &field).unwrap();
        assert_eq!(scores.argmax(), (4, 2, 0.9));
    }

    #[test]
    fn correlate_matches_embedded_patch() {
        // A 3x3 all-positive mask over a field with a unit patch at (5,5).
        let mask = mask_from_values(3, 3, vec![1; 9]);
        let mut values = vec![0.0; 12 * 12];
        for dy in 0..3 {
            for dx in 0..3 {
                values[(5 + dy) * 12 + 5 + dx] = 1.0;
            }
        }
        let field = field_from_values(12, 12, values);
        let scores = correlate(&mask, &field).unwrap();
        let (u, v, s) = scores.argmax();
        assert_eq!((u, v), (5, 5));
        assert!((s - 1.0).abs() < 1e-12);
        assert!((scores.raw_score(u, v) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn correlate_zero_field_and_size_error() {
        let mask = mask_from_values(3, 3, vec![1; 9]);
        let field = field_from_values(5, 5, vec![0.0; 25]);
        let scores = correlate(&mask, &field).unwrap();
        assert_eq!(scores.width, 3);
        assert_eq!(scores.height, 3);
        assert_eq!(scores.argmax().2, 0.0);

        let small = field_from_values(2, 2, vec![0.0; 4]);
        assert!(matches!(correlate(&mask, &small), Err(Error::Size(_))));
    }

    #[test]
    fn argmax_tiebreak_is_row_major_first_hit() {
        let mask = mask_from_values(1, 1, vec![1]);
        let field = field_from_values(3, 3, vec![0.5; 9]);
        let scores = correlate(&mask, &field).unwrap();
        assert_eq!(scores.argmax(), (0, 0, 0.5));
    }

    #[test]
    fn detect_requires_threshold_inclusive() {
        // One event at the mask's only nonzero cell gives score 1.0.
        let events = vec![ev(50_000, 10, 10, Polarity::Positive)];
        let w = window(&events, 50_000);
        let rect = PixelRect { x: 8, y: 8, w: 5, h: 5 };
        let mask = masks::build_event_mask(&events, &rect, 50_000).unwrap();
        let last = rect.to_bbox();

        let cfg = DetectorConfig { score_threshold: 1.0, ..Default::default() };
        let det = detect_inter_frame(&mask, &w, &last, &cfg, 240, 180);
        // Score equals the threshold exactly: accepted.
        let det = det.expect("score == threshold must be accepted");
        assert_eq!(det.source, DetectionSource::Event);
        assert_eq!(det.score, Some(1.0));

        let cfg = DetectorConfig { score_threshold: 1.0 + 1e-9, ..Default::default() };
        assert!(detect_inter_frame(&mask, &w, &last, &cfg, 240, 180).is_none());
    }

    #[test]
    fn detect_tracks_a_displaced_rectangle() {
        // Mask built from a hollow rectangle of positive events; the next
        // window sees the same pattern shifted 3 px right.
        let mut past = Vec::new();
        let mut current = Vec::new();
        for y in 40..60u16 {
            for x in 30..60u16 {
                let on_edge = y == 40 || y == 59 || x == 30 || x == 59;
                if !on_edge {
                    continue;
                }
                past.push(ev(48_000, x, y, Polarity::Positive));
                current.push(ev(52_000, x + 3, y, Polarity::Positive));
            }
        }
        let rect = PixelRect { x: 30, y: 40, w: 30, h: 20 };
        let mask = masks::build_event_mask(&past, &rect, 48_000).unwrap();
        let w = window(&current, 52_000);
        let det = detect_inter_frame(
            &mask,
            &w,
            &rect.to_bbox(),
            &DetectorConfig::default(),
            240,
            180,
        )
        .expect("detection");
        assert_eq!(det.bbox, BBox::new(33.0, 40.0, 30.0, 20.0));
    }

    #[test]
    fn detect_none_on_empty_window() {
        let events = vec![ev(1_000, 10, 10, Polarity::Positive)];
        let rect = PixelRect { x: 8, y: 8, w: 5, h: 5 };
        let mask = masks::build_event_mask(&events, &rect, 1_000).unwrap();
        let empty: Vec<Event> = Vec::new();
        let w = window(&empty, 60_000);
        assert!(detect_inter_frame(
            &mask,
            &w,
            &rect.to_bbox(),
            &DetectorConfig::default(),
            240,
            180
        )
        .is_none());
    }

    #[test]
    fn recovery_threshold_is_elevated() {
        // Build a mask of 4 cells; arrange events so exactly 3 of 4 cells
        // match at weight 1 => score 0.75.
        let seed = vec![
            ev(1_000, 10, 10, Polarity::Positive),
            ev(1_000, 11, 10, Polarity::Positive),
            ev(1_000, 10, 11, Polarity::Positive),
            ev(1_000, 11, 11, Polarity::Positive),
        ];
        let rect = PixelRect { x: 10, y: 10, w: 2, h: 2 };
        let mask = masks::build_event_mask(&seed, &rect, 1_000).unwrap();
        let current = vec![
            ev(60_000, 10, 10, Polarity::Positive),
            ev(60_000, 11, 10, Polarity::Positive),
            ev(60_000, 10, 11, Polarity::Positive),
        ];
        let w = window(&current, 60_000);
        // theta = 0.5, rho = 2.0: inter-frame accepts 0.75 >= 0.5 but
        // recovery demands 1.0.
        let cfg = DetectorConfig {
            margin_px: 4,
            score_threshold: 0.5,
            recovery_multiplier: 2.0,
        };
        assert!(detect_inter_frame(&mask, &w, &rect.to_bbox(), &cfg, 240, 180).is_some());
        assert!(recover_missed(&mask, &w, &rect.to_bbox(), &cfg, 240, 180).is_none());
        // A lower multiplier lets the same score through, tagged Recovered.
        let cfg = DetectorConfig { recovery_multiplier: 1.5, ..cfg };
        let rec = recover_missed(&mask, &w, &rect.to_bbox(), &cfg, 240, 180).unwrap();
        assert_eq!(rec.source, DetectionSource::Recovered);
    }

    proptest! {
        #[test]
        fn scaling_field_scales_scores_and_keeps_argmax(
            mask_vals in proptest::collection::vec(-1i8..=1, 9),
            field_vals in proptest::collection::vec(0.0f64..1.0, 36),
            scale in 0.1f64..8.0,
        ) {
            prop_assume!(mask_vals.iter().any(|&v| v != 0));
            let mask = mask_from_values(3, 3, mask_vals);
            let field = field_from_values(6, 6, field_vals.clone());
            let scaled = field_from_values(
                6,
                6,
                field_vals.iter().map(|v| v * scale).collect(),
            );
            let a = correlate(&mask, &field).unwrap();
            let b = correlate(&mask, &scaled).unwrap();
            for v in 0..a.height {
                for u in 0..a.width {
                    prop_assert!((b.score(u, v) - a.score(u, v) * scale).abs() < 1e-9);
                }
            }
            let (ua, va, _) = a.argmax();
            let (ub, vb, _) = b.argmax();
            // Scaling may reorder exact ties only through float rounding;
            // scores at the two argmaxes must still agree.
            prop_assert!((a.score(ub, vb) - a.score(ua, va)).abs() < 1e-9);
        }
    }
}
