//! Stateful multi-object tracker: Euclidean association of detections to
//! tracks, birth/death lifecycle, and the per-window pipeline (frame
//! detections -> recovery -> inter-frame detection -> refinement).

use crate::assignment;
use crate::detector::{self, Detection, DetectionSource, DetectorConfig};
use crate::error::{Error, Result};
use crate::masks::{self, EventMask, MaskKind};
use crate::refine::{self, RefineConfig};
use crate::stream_io::TrackSnapshot;
use crate::types::{BBox, DetectionRecord};
use crate::windowing::WindowFrame;

#[derive(Debug, Clone)]
pub struct TrackerConfig {
    /// Association gate: centroid pairs further apart than this stay
    /// unmatched.
    pub max_distance_px: f64,
    /// Consecutive windows without a detection before a track is dropped.
    pub max_disappeared: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { max_distance_px: 50.0, max_disappeared: 16 }
    }
}

/// Everything the per-window pipeline needs, including the ablation switches
/// that compose the evaluation modes.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub tracker: TrackerConfig,
    pub detector: DetectorConfig,
    pub refine: RefineConfig,
    pub mask_kind: MaskKind,
    /// Box enlargement factor used for mask construction and refinement.
    pub bbox_enlargement: f64,
    pub refine_enabled: bool,
    pub recovery_enabled: bool,
    pub inter_frame_enabled: bool,
    pub sensor_width: u32,
    pub sensor_height: u32,
}

impl EngineConfig {
    pub fn new(sensor_width: u32, sensor_height: u32) -> Self {
        Self {
            tracker: TrackerConfig::default(),
            detector: DetectorConfig::default(),
            refine: RefineConfig::default(),
            mask_kind: MaskKind::EventBased,
            bbox_enlargement: 0.10,
            refine_enabled: false,
            recovery_enabled: false,
            inter_frame_enabled: false,
            sensor_width,
            sensor_height,
        }
    }

    fn masks_needed(&self) -> bool {
        self.inter_frame_enabled || self.recovery_enabled
    }
}

/// One tracked object.
#[derive(Debug, Clone)]
pub struct Track {
    /// Unique, assigned in creation order, never reused.
    pub id: u32,
    pub bbox: BBox,
    /// Microseconds of the last successful detection.
    pub last_seen_t: u64,
    /// Consecutive windows without a detection.
    pub disappeared_count: u32,
    /// Template for event-domain detection; absent while the object cannot
    /// produce one (e.g. motionless, or no image for an edge mask).
    pub mask: Option<EventMask>,
    /// (window index, box, source) per window the track was detected in.
    pub history: Vec<(u32, BBox, DetectionSource)>,
}

/// Result of associating detections to tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    /// (track index, detection index, centroid distance).
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

fn centroid_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.centroid();
    let (bx, by) = b.centroid();
    (ax - bx).hypot(ay - by)
}

// Any gated pair costs more than every feasible assignment combined, so the
// solver only crosses the gate when forced, and those pairs are broken after.
const GATE_PENALTY: f64 = 1e9;

/// Optimal (Hungarian) assignment between track boxes and detection boxes by
/// centroid distance; pairs beyond `max_distance` are broken and reported
/// unmatched on both sides.
pub fn associate(tracks: &[BBox], detections: &[BBox], max_distance: f64) -> Association {
    let costs = assignment::CostMatrix::from_fn(tracks.len(), detections.len(), |t, d| {
        let dist = centroid_distance(&tracks[t], &detections[d]);
        if dist <= max_distance {
            dist
        } else {
            GATE_PENALTY
        }
    });
    let solved = assignment::solve(&costs);
    let mut pairs = Vec::new();
    let mut matched_dets = vec![false; detections.len()];
    let mut unmatched_tracks = Vec::new();
    for (t, d) in solved.iter().enumerate() {
        match d {
            Some(d) => {
                let dist = centroid_distance(&tracks[t], &detections[*d]);
                if dist <= max_distance {
                    pairs.push((t, *d, dist));
                    matched_dets[*d] = true;
                } else {
                    unmatched_tracks.push(t);
                }
            }
            None => unmatched_tracks.push(t),
        }
    }
    let unmatched_detections =
        (0..detections.len()).filter(|&d| !matched_dets[d]).collect();
    Association { pairs, unmatched_tracks, unmatched_detections }
}

/// The tracker's mutable state across a run.
pub struct Tracker {
    config: EngineConfig,
    tracks: Vec<Track>,
    next_id: u32,
    last_window: Option<u32>,
}

impl Tracker {
    pub fn new(config: EngineConfig) -> Self {
        Self { config, tracks: Vec::new(), next_id: 1, last_window: None }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advance by one window frame; windows must arrive in schedule order.
    /// Returns one snapshot per track detected in this window.
    pub fn step(&mut self, window: &WindowFrame) -> Result<Vec<TrackSnapshot>> {
        if let Some(last) = self.last_window {
            if window.index <= last {
                return Err(Error::Value(format!(
                    "window {} presented after window {last}",
                    window.index
                )));
            }
        }
        self.last_window = Some(window.index);

        let snapshots = if window.has_image() {
            self.step_image_window(window)
        } else {
            self.step_event_window(window)
        };

        let max_disappeared = self.config.tracker.max_disappeared;
        self.tracks.retain(|t| t.disappeared_count <= max_disappeared);
        Ok(snapshots)
    }

    fn step_image_window(&mut self, window: &WindowFrame) -> Vec<TrackSnapshot> {
        let detections = window.frame_detections.clone().unwrap_or_default();
        let track_boxes: Vec<BBox> = self.tracks.iter().map(|t| t.bbox).collect();
        let det_boxes: Vec<BBox> = detections.iter().map(|d| d.bbox).collect();
        let assoc = associate(&track_boxes, &det_boxes, self.config.tracker.max_distance_px);

        let mut snapshots = Vec::new();
        for &(ti, di, _) in &assoc.pairs {
            let record = &detections[di];
            let snapshot = self.apply_frame_detection(ti, record, window);
            snapshots.push(snapshot);
        }

        // Frame detections take precedence; only tracks the frame detector
        // missed go through event-based recovery.
        for &ti in &assoc.unmatched_tracks {
            if self.config.recovery_enabled {
                if let Some(mask) = self.tracks[ti].mask.clone() {
                    let recovered = detector::recover_missed(
                        &mask,
                        window,
                        &self.tracks[ti].bbox,
                        &self.config.detector,
                        self.config.sensor_width,
                        self.config.sensor_height,
                    );
                    if let Some(det) = recovered {
                        let det = self.maybe_refine(det, window);
                        snapshots.push(self.apply_event_detection(ti, det, window));
                        continue;
                    }
                }
            }
            self.tracks[ti].disappeared_count += 1;
        }

        for &di in &assoc.unmatched_detections {
            let record = &detections[di];
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                id,
                bbox: record.bbox,
                last_seen_t: window.t_now,
                disappeared_count: 0,
                mask: None,
                history: Vec::new(),
            });
            let ti = self.tracks.len() - 1;
            let snapshot = self.apply_frame_detection(ti, record, window);
            snapshots.push(snapshot);
        }

        snapshots
    }

    fn step_event_window(&mut self, window: &WindowFrame) -> Vec<TrackSnapshot> {
        // With inter-frame detection disabled the tracker only sees images;
        // event-only windows pass through without aging anyone.
        if !self.config.inter_frame_enabled {
            return Vec::new();
        }
        let mut snapshots = Vec::new();
        for ti in 0..self.tracks.len() {
            let mask = match self.tracks[ti].mask.clone() {
                Some(m) => m,
                None => {
                    // No template to correlate: the track only ages.
                    self.tracks[ti].disappeared_count += 1;
                    continue;
                }
            };
            let found = detector::detect_inter_frame(
                &mask,
                window,
                &self.tracks[ti].bbox,
                &self.config.detector,
                self.config.sensor_width,
                self.config.sensor_height,
            );
            match found {
                Some(det) => {
                    let det = self.maybe_refine(det, window);
                    snapshots.push(self.apply_event_detection(ti, det, window));
                }
                None => self.tracks[ti].disappeared_count += 1,
            }
        }
        snapshots
    }

    /// Update a track from a frame detection: rebuild its mask from the raw
    /// detection box, then store the (optionally refined) box.
    fn apply_frame_detection(
        &mut self,
        ti: usize,
        record: &DetectionRecord,
        window: &WindowFrame,
    ) -> TrackSnapshot {
        let mask = if self.config.masks_needed() {
            self.build_mask(&record.bbox, window)
        } else {
            None
        };
        let det = Detection {
            bbox: record.bbox,
            score: None,
            source: DetectionSource::Frame,
            t: window.t_now,
        };
        let det = self.maybe_refine(det, window);
        let track = &mut self.tracks[ti];
        track.mask = mask;
        track.bbox = det.bbox;
        track.last_seen_t = window.t_now;
        track.disappeared_count = 0;
        track.history.push((window.index, det.bbox, DetectionSource::Frame));
        TrackSnapshot {
            window: window.index,
            track_id: track.id,
            bbox: det.bbox,
            confidence: record.confidence,
        }
    }

    /// Update a track from an event-domain detection (inter-frame or
    /// recovered). The mask is kept as-is: masks are only regenerated from
    /// frame detections.
    fn apply_event_detection(
        &mut self,
        ti: usize,
        det: Detection,
        window: &WindowFrame,
    ) -> TrackSnapshot {
        let track = &mut self.tracks[ti];
        track.bbox = det.bbox;
        track.last_seen_t = window.t_now;
        track.disappeared_count = 0;
        track.history.push((window.index, det.bbox, det.source));
        TrackSnapshot {
            window: window.index,
            track_id: track.id,
            bbox: det.bbox,
            confidence: det.score.unwrap_or(1.0),
        }
    }

    fn maybe_refine(&self, det: Detection, window: &WindowFrame) -> Detection {
        if !self.config.refine_enabled {
            return det;
        }
        refine::refine_bbox(
            &det,
            window,
            &self.config.refine,
            self.config.bbox_enlargement,
            self.config.sensor_width,
            self.config.sensor_height,
        )
    }

    /// Build the configured mask kind over the enlarged detection box.
    /// `None` when construction fails (no events inside, constant image
    /// crop, or no image at all); the object then rides on frame detections
    /// until a mask can be built.
    fn build_mask(&self, bbox: &BBox, window: &WindowFrame) -> Option<EventMask> {
        let enlarged = masks::enlarge_bbox(
            bbox,
            self.config.bbox_enlargement,
            self.config.sensor_width,
            self.config.sensor_height,
        )
        .ok()?;
        let rect = crate::types::PixelRect::from_bbox(
            &enlarged,
            self.config.sensor_width,
            self.config.sensor_height,
        )?;
        match self.config.mask_kind {
            MaskKind::EventBased => {
                masks::build_event_mask(window.events, &rect, window.t_now).ok()
            }
            MaskKind::EdgeBased => {
                let image = window.image.as_ref()?;
                masks::build_edge_mask(image, &rect, window.t_now).ok()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Event, Polarity};

    fn frame_window<'a>(
        index: u32,
        t_now: u64,
        events: &'a [Event],
        boxes: &[(f64, f64, f64, f64)],
    ) -> WindowFrame<'a> {
        let detections = boxes
            .iter()
            .map(|&(l, t, w, h)| DetectionRecord {
                frame_index: index,
                t: t_now,
                class_label: "car".into(),
                confidence: 0.9,
                bbox: BBox::new(l, t, w, h),
            })
            .collect();
        WindowFrame {
            index,
            t_now,
            events,
            image: None,
            frame_detections: Some(detections),
            interval_us: 50_000,
            min_weight: 0.05,
        }
    }

    fn event_window<'a>(index: u32, t_now: u64, events: &'a [Event]) -> WindowFrame<'a> {
        WindowFrame {
            index,
            t_now,
            events,
            image: None,
            frame_detections: None,
            interval_us: 50_000,
            min_weight: 0.05,
        }
    }

    fn config() -> EngineConfig {
        EngineConfig::new(240, 180)
    }

    #[test]
    fn associate_examples() {
        // One track, one detection 2 px apart.
        let tracks = [BBox::new(45.0, 45.0, 10.0, 10.0)];
        let dets = [BBox::new(47.0, 45.0, 10.0, 10.0)];
        let a = associate(&tracks, &dets, 50.0);
        assert_eq!(a.pairs.len(), 1);
        assert!((a.pairs[0].2 - 2.0).abs() < 1e-12);

        // Optimal beats greedy: tracks at x=0 and x=10, detections at 9 and 1.
        let tracks = [BBox::new(-5.0, -5.0, 10.0, 10.0), BBox::new(5.0, -5.0, 10.0, 10.0)];
        let dets = [BBox::new(4.0, -5.0, 10.0, 10.0), BBox::new(-4.0, -5.0, 10.0, 10.0)];
        let a = associate(&tracks, &dets, 50.0);
        let mut pairs: Vec<(usize, usize)> = a.pairs.iter().map(|&(t, d, _)| (t, d)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);

        // Gate: everything too far apart.
        let far = [BBox::new(200.0, 0.0, 10.0, 10.0)];
        let a = associate(&tracks[..1], &far, 50.0);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_tracks, vec![0]);
        assert_eq!(a.unmatched_detections, vec![0]);
    }

    #[test]
    fn empty_scene_produces_nothing() {
        let mut tracker = Tracker::new(config());
        let events: Vec<Event> = Vec::new();
        for i in 1..=5 {
            let w = frame_window(i, i as u64 * 41_667, &events, &[]);
            assert!(tracker.step(&w).unwrap().is_empty());
        }
        assert!(tracker.tracks().is_empty());
    }

    #[test]
    fn ids_are_stable_and_never_reused() {
        let mut tracker = Tracker::new(config());
        let cfg_max = tracker.config.tracker.max_disappeared;
        let events: Vec<Event> = Vec::new();
        // Birth.
        let w = frame_window(1, 41_667, &events, &[(10.0, 10.0, 20.0, 20.0)]);
        let snaps = tracker.step(&w).unwrap();
        assert_eq!(snaps[0].track_id, 1);
        // Miss long enough to die.
        for i in 0..=cfg_max {
            let w = frame_window(2 + i, (2 + i as u64) * 41_667, &events, &[]);
            tracker.step(&w).unwrap();
        }
        assert!(tracker.tracks().is_empty());
        // A new object gets a fresh id, not the dead one.
        let idx = 3 + cfg_max;
        let w = frame_window(idx, idx as u64 * 41_667, &events, &[(10.0, 10.0, 20.0, 20.0)]);
        let snaps = tracker.step(&w).unwrap();
        assert_eq!(snaps[0].track_id, 2);
    }

    #[test]
    fn out_of_order_window_is_rejected() {
        let mut tracker = Tracker::new(config());
        let events: Vec<Event> = Vec::new();
        let w = frame_window(5, 1000, &events, &[]);
        tracker.step(&w).unwrap();
        let w = frame_window(5, 2000, &events, &[]);
        assert!(tracker.step(&w).is_err());
    }

    #[test]
    fn history_is_strictly_increasing_per_window() {
        let mut tracker = Tracker::new(config());
        let events: Vec<Event> = Vec::new();
        for i in 1..=4u32 {
            let w = frame_window(i, i as u64 * 41_667, &events, &[(10.0, 10.0, 20.0, 20.0)]);
            tracker.step(&w).unwrap();
        }
        let track = &tracker.tracks()[0];
        assert_eq!(track.history.len(), 4);
        for pair in track.history.windows(2) {
            assert!(pair[1].0 > pair[0].0);
        }
    }

    #[test]
    fn event_only_windows_are_noops_without_inter_frame() {
        let mut tracker = Tracker::new(config());
        let events: Vec<Event> = Vec::new();
        let w = frame_window(1, 41_667, &events, &[(10.0, 10.0, 20.0, 20.0)]);
        tracker.step(&w).unwrap();
        for i in 2..=40 {
            let w = event_window(i, i as u64 * 2_604, &events);
            assert!(tracker.step(&w).unwrap().is_empty());
        }
        // Still alive: baseline mode never ages tracks between images.
        assert_eq!(tracker.tracks().len(), 1);
        assert_eq!(tracker.tracks()[0].disappeared_count, 0);
    }

    fn rectangle_events(t: u64, left: u16, top: u16, w: u16, h: u16) -> Vec<Event> {
        let mut events = Vec::new();
        for y in top..top + h {
            for x in left..left + w {
                let on_edge = y == top || y == top + h - 1 || x == left || x == left + w - 1;
                if on_edge {
                    events.push(Event { t, x, y, polarity: Polarity::Positive });
                }
            }
        }
        events
    }

    #[test]
    fn inter_frame_detection_follows_motion() {
        let mut cfg = config();
        cfg.inter_frame_enabled = true;
        let mut tracker = Tracker::new(cfg);

        let seed_events = rectangle_events(40_000, 40, 60, 30, 20);
        let w = frame_window(1, 41_667, &seed_events, &[(40.0, 60.0, 30.0, 20.0)]);
        tracker.step(&w).unwrap();
        assert!(tracker.tracks()[0].mask.is_some());

        // Object shifts right 2px; only events tell.
        let moved = rectangle_events(43_000, 42, 60, 30, 20);
        let w = event_window(2, 44_271, &moved);
        let snaps = tracker.step(&w).unwrap();
        assert_eq!(snaps.len(), 1);
        let track = &tracker.tracks()[0];
        assert_eq!(track.history.last().unwrap().2, DetectionSource::Event);
        // The detected box is mask-sized (enlarged), centered on the moved
        // rectangle: its left edge tracks the motion.
        let (cx, _) = track.bbox.centroid();
        assert!((cx - 57.0).abs() <= 1.5, "centroid x {cx}");
    }

    #[test]
    fn frame_detection_preempts_recovery_and_recovery_fills_misses() {
        let mut cfg = config();
        cfg.inter_frame_enabled = true;
        cfg.recovery_enabled = true;
        let mut tracker = Tracker::new(cfg);

        let seed_events = rectangle_events(40_000, 40, 60, 30, 20);
        let w = frame_window(1, 41_667, &seed_events, &[(40.0, 60.0, 30.0, 20.0)]);
        tracker.step(&w).unwrap();
        let id = tracker.tracks()[0].id;

        // Next image window: the detector misses, but events are dense.
        let moved = rectangle_events(82_000, 41, 60, 30, 20);
        let w = frame_window(2, 83_333, &moved, &[]);
        let snaps = tracker.step(&w).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].track_id, id);
        assert_eq!(
            tracker.tracks()[0].history.last().unwrap().2,
            DetectionSource::Recovered
        );

        // A frame detection the window after: the track re-associates and the
        // history records Frame, not an event source.
        let again = rectangle_events(124_000, 42, 60, 30, 20);
        let w = frame_window(3, 125_000, &again, &[(42.0, 60.0, 30.0, 20.0)]);
        let snaps = tracker.step(&w).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].track_id, id);
        assert_eq!(tracker.tracks()[0].history.last().unwrap().2, DetectionSource::Frame);
    }
}
