//! End-to-end orchestration: a serialized run configuration, the ablation
//! mode grid, sequence loading, the tracking loop, the distance-validation
//! run, and the wall-clock latency fixture behind the bench command.

use crate::detector::{self, DetectorConfig};
use crate::error::{Error, Result};
use crate::geometry::{self, DistanceCalib, DistortionModel, PerspectiveMatrix};
use crate::masks::{self, MaskKind};
use crate::refine::{self, RefineConfig};
use crate::series::{self, ErrorReport, Sos, TimeSeries};
use crate::stream_io::{self, DetectionFilter, TrackSnapshot};
use crate::tracker::{EngineConfig, Tracker, TrackerConfig};
use crate::types::{DetectionRecord, Event, GrayImage, PixelRect, SequenceManifest};
use crate::windowing::{self, WindowConfig, WindowFrame};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// The ablation mode grid: `baseline` is single-modal tracking-by-detection;
/// A* modes use the event-based mask, B* modes the edge-based mask; 1 enables
/// refinement only, 2 recovery only, 3 both. All masked modes run inter-frame
/// detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Baseline,
    A1,
    A2,
    A3,
    B1,
    B2,
    B3,
}

impl Mode {
    pub fn all() -> [Mode; 7] {
        [Mode::Baseline, Mode::A1, Mode::A2, Mode::A3, Mode::B1, Mode::B2, Mode::B3]
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::A1 => "A1",
            Mode::A2 => "A2",
            Mode::A3 => "A3",
            Mode::B1 => "B1",
            Mode::B2 => "B2",
            Mode::B3 => "B3",
        }
    }

    /// The switch combination this mode stands for:
    /// (mask kind, inter-frame, refinement, recovery).
    pub fn switches(self) -> (MaskKind, bool, bool, bool) {
        match self {
            Mode::Baseline => (MaskKind::EventBased, false, false, false),
            Mode::A1 => (MaskKind::EventBased, true, true, false),
            Mode::A2 => (MaskKind::EventBased, true, false, true),
            Mode::A3 => (MaskKind::EventBased, true, true, true),
            Mode::B1 => (MaskKind::EdgeBased, true, true, false),
            Mode::B2 => (MaskKind::EdgeBased, true, false, true),
            Mode::B3 => (MaskKind::EdgeBased, true, true, true),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "*" => Ok(Mode::Baseline),
            "a1" => Ok(Mode::A1),
            "a2" => Ok(Mode::A2),
            "a3" => Ok(Mode::A3),
            "b1" => Ok(Mode::B1),
            "b2" => Ok(Mode::B2),
            "b3" => Ok(Mode::B3),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected baseline or A1..A3 / B1..B3"
            ))),
        }
    }
}

fn default_rate() -> f64 {
    24.0
}
fn default_interval() -> f64 {
    50.0
}
fn default_min_weight() -> f64 {
    0.05
}
fn default_mode() -> String {
    "baseline".into()
}
fn default_enlargement() -> f64 {
    0.10
}
fn default_margin() -> u32 {
    16
}
fn default_threshold() -> f64 {
    0.10
}
fn default_recovery_multiplier() -> f64 {
    2.0
}
fn default_min_weight_sum() -> f64 {
    3.0
}
fn default_min_component_area() -> usize {
    9
}
fn default_max_distance() -> f64 {
    50.0
}
fn default_min_confidence() -> f64 {
    0.5
}

/// One serialized configuration drives a whole run; flags may override the
/// mode and rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_rate")]
    pub tracking_rate_hz: f64,
    #[serde(default = "default_interval")]
    pub interval_ms: f64,
    #[serde(default = "default_min_weight")]
    pub min_weight: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_enlargement")]
    pub bbox_enlargement: f64,
    #[serde(default = "default_margin")]
    pub margin_px: u32,
    #[serde(default = "default_threshold")]
    pub score_threshold: f64,
    #[serde(default = "default_recovery_multiplier")]
    pub recovery_multiplier: f64,
    #[serde(default = "default_min_weight_sum")]
    pub min_weight_sum: f64,
    #[serde(default = "default_min_component_area")]
    pub min_component_area: usize,
    #[serde(default = "default_max_distance")]
    pub max_distance_px: f64,
    /// Windows a track survives undetected; defaults to one frame period of
    /// windows (round(k / frame rate)).
    #[serde(default)]
    pub max_disappeared: Option<u32>,
    #[serde(default = "default_min_confidence")]
    pub min_confidence: f64,
    /// Lowercase class labels kept by the detection filter.
    #[serde(default)]
    pub accepted_classes: Option<Vec<String>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn parsed_mode(&self) -> Result<Mode> {
        self.mode.parse()
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            tracking_rate_hz: self.tracking_rate_hz,
            interval_ms: self.interval_ms,
            min_weight: self.min_weight,
        }
    }

    pub fn detection_filter(&self) -> DetectionFilter {
        let mut filter = DetectionFilter { min_confidence: self.min_confidence, ..Default::default() };
        if let Some(classes) = &self.accepted_classes {
            filter.accepted_classes = classes.iter().map(|c| c.to_lowercase()).collect();
        }
        filter
    }

    pub fn engine_config(&self, manifest: &SequenceManifest) -> Result<EngineConfig> {
        let mode = self.parsed_mode()?;
        let (mask_kind, inter_frame, refine_on, recovery) = mode.switches();
        let max_disappeared = self.max_disappeared.unwrap_or_else(|| {
            (self.tracking_rate_hz / manifest.frame_rate).round().max(1.0) as u32
        });
        let cfg = EngineConfig {
            tracker: TrackerConfig { max_distance_px: self.max_distance_px, max_disappeared },
            detector: DetectorConfig {
                margin_px: self.margin_px,
                score_threshold: self.score_threshold,
                recovery_multiplier: self.recovery_multiplier,
            },
            refine: RefineConfig {
                min_weight_sum: self.min_weight_sum,
                min_component_area: self.min_component_area,
            },
            mask_kind,
            bbox_enlargement: self.bbox_enlargement,
            refine_enabled: refine_on,
            recovery_enabled: recovery,
            inter_frame_enabled: inter_frame,
            sensor_width: manifest.sensor_width,
            sensor_height: manifest.sensor_height,
        };
        cfg.detector.validate()?;
        Ok(cfg)
    }
}

/// A fully loaded input sequence.
pub struct LoadedSequence {
    pub manifest: SequenceManifest,
    pub events: Vec<Event>,
    pub detections_by_frame: BTreeMap<u32, Vec<DetectionRecord>>,
    /// Per manifest frame entry, when an image path was given.
    pub images: Vec<Option<GrayImage>>,
}

/// Read the manifest and every file it references; paths resolve relative to
/// the manifest's directory. Detections that do not intersect the sensor are
/// dropped.
pub fn load_sequence(config: &RunConfig) -> Result<LoadedSequence> {
    let manifest = stream_io::load_manifest(&config.manifest)?;
    let base = config.manifest.parent().unwrap_or(Path::new("."));

    let events_path = base.join(&manifest.events_path);
    let events_text = std::fs::read_to_string(&events_path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", events_path.display())))
    })?;
    let events = stream_io::parse_events(&events_text)?;
    for e in &events {
        if e.x >= manifest.sensor_width as u16 || e.y >= manifest.sensor_height as u16 {
            return Err(Error::Value(format!(
                "event at ({}, {}) outside the {}x{} sensor",
                e.x, e.y, manifest.sensor_width, manifest.sensor_height
            )));
        }
    }

    let det_path = base.join(&manifest.detections_path);
    let det_text = std::fs::read_to_string(&det_path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", det_path.display())))
    })?;
    let mut detections_by_frame = stream_io::parse_detections(&det_text, &config.detection_filter())?;
    for records in detections_by_frame.values_mut() {
        records.retain(|r| r.bbox.intersects_sensor(manifest.sensor_width, manifest.sensor_height));
    }

    let mut images = Vec::with_capacity(manifest.frames.len());
    for frame in &manifest.frames {
        match &frame.image_path {
            Some(rel) => {
                let path = base.join(rel);
                let bytes = std::fs::read(&path).map_err(|e| {
                    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
                })?;
                images.push(Some(stream_io::load_frame(&bytes)?));
            }
            None => images.push(None),
        }
    }

    Ok(LoadedSequence { manifest, events, detections_by_frame, images })
}

/// Run the tracking loop over a loaded sequence. Returns the per-window track
/// snapshots, MOT-ready.
pub fn run_tracking_loaded(
    sequence: &LoadedSequence,
    window_config: &WindowConfig,
    engine: EngineConfig,
) -> Result<Vec<TrackSnapshot>> {
    let span_end = sequence.events.last().map(|e| e.t).unwrap_or(0);
    let slots = windowing::plan_windows(window_config, &sequence.manifest, span_end)?;
    let interval_us = window_config.interval_us();
    let mut tracker = Tracker::new(engine);
    let mut snapshots = Vec::new();
    for slot in &slots {
        let events = windowing::slice_window(&sequence.events, slot.t_now, interval_us);
        let (image, frame_detections) = match slot.frame {
            Some(fi) => {
                let entry = &sequence.manifest.frames[fi];
                let dets = sequence
                    .detections_by_frame
                    .get(&entry.frame_index)
                    .cloned()
                    .unwrap_or_default();
                (sequence.images[fi].clone(), Some(dets))
            }
            None => (None, None),
        };
        let window = WindowFrame {
            index: slot.index,
            t_now: slot.t_now,
            events,
            image,
            frame_detections,
            interval_us,
            min_weight: window_config.min_weight,
        };
        snapshots.extend(tracker.step(&window)?);
    }
    Ok(snapshots)
}

/// Load inputs per the configuration and run tracking.
pub fn run_tracking(config: &RunConfig) -> Result<Vec<TrackSnapshot>> {
    let sequence = load_sequence(config)?;
    let engine = config.engine_config(&sequence.manifest)?;
    run_tracking_loaded(&sequence, &config.window_config(), engine)
}

/// On-disk calibration bundle for the distance pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub distortion: DistortionModel,
    /// Row-major 3x3 perspective matrix.
    pub perspective: [[f64; 3]; 3],
    pub distance: DistanceCalib,
}

impl CalibrationFile {
    pub fn load(path: &Path) -> Result<CalibrationFile> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let calib: CalibrationFile = serde_json::from_str(&text)?;
        calib.distortion.validate()?;
        calib.matrix().validate()?;
        calib.distance.validate()?;
        Ok(calib)
    }

    pub fn matrix(&self) -> PerspectiveMatrix {
        PerspectiveMatrix { m: self.perspective }
    }
}

/// Ground-truth handling options for a distance run.
#[derive(Debug, Clone, Default)]
pub struct DistanceOptions {
    /// Resample the ground truth to this rate before comparing; `None`
    /// consumes it as-is.
    pub resample_hz: Option<f64>,
    /// Zero-phase IIR cascade applied after resampling.
    pub sections: Vec<Sos>,
    /// Clock offset added to every ground-truth timestamp.
    pub sync_offset_s: f64,
    /// Matching tolerance; defaults to half the tracking period.
    pub tolerance_s: Option<f64>,
}

/// Outcome of a distance-validation run.
pub struct DistanceRun {
    pub report: ErrorReport,
    /// The predicted (t_seconds, meters) series that was evaluated.
    pub predicted: Vec<(f64, f64)>,
    /// Track id the series was taken from.
    pub track_id: u32,
}

/// Convert the tracker output into a distance series (the single-object
/// validation convention: the track with the most snapshots wins, ties to the
/// smaller id) and evaluate it against the ground-truth range series.
pub fn run_distance(
    snapshots: &[TrackSnapshot],
    window_config: &WindowConfig,
    manifest: &SequenceManifest,
    calibration: &CalibrationFile,
    gt: &TimeSeries,
    options: &DistanceOptions,
) -> Result<DistanceRun> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for s in snapshots {
        *counts.entry(s.track_id).or_default() += 1;
    }
    let track_id = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(id, _)| *id)
        .ok_or_else(|| Error::Value("tracking produced no output to validate".into()))?;

    let t0 = manifest
        .frames
        .first()
        .ok_or_else(|| Error::Config("manifest has no frames".into()))?
        .t_us;
    let step = 1e6 / window_config.tracking_rate_hz;
    let matrix = calibration.matrix();
    let mut predicted = Vec::new();
    for s in snapshots.iter().filter(|s| s.track_id == track_id) {
        let t_us = t0 + ((s.window - 1) as f64 * step).round() as u64;
        let d = geometry::track_to_distance(
            &s.bbox,
            &calibration.distortion,
            &matrix,
            &calibration.distance,
        )?;
        predicted.push((t_us as f64 / 1e6, d));
    }
    let pred_series = TimeSeries::new(predicted.clone())?;

    let gt_series = match options.resample_hz {
        Some(rate) => series::preprocess_groundtruth(
            gt,
            rate,
            &options.sections,
            options.sync_offset_s,
        )?,
        None if options.sync_offset_s != 0.0 || !options.sections.is_empty() => {
            let mut values: Vec<f64> = gt.samples().iter().map(|(_, v)| *v).collect();
            series::filtfilt(&options.sections, &mut values);
            TimeSeries::new(
                gt.samples()
                    .iter()
                    .zip(values)
                    .map(|(&(t, _), v)| (t + options.sync_offset_s, v))
                    .collect(),
            )?
        }
        None => gt.clone(),
    };

    let tolerance = options
        .tolerance_s
        .unwrap_or(0.5 / window_config.tracking_rate_hz);
    let report = series::distance_error_metrics(&pred_series, &gt_series, tolerance);
    Ok(DistanceRun { report, predicted, track_id })
}

/// Wall-clock statistics for one pipeline stage.
#[derive(Debug, Clone, Copy)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
}

/// Deterministic single-object workload for latency measurement: a mask-sized
/// object at the sensor center, a realistic event load in the search region,
/// and the previous window's events to build the mask from.
pub struct LatencyFixture {
    pub mask: masks::EventMask,
    pub mask_rect: PixelRect,
    pub window_events: Vec<Event>,
    pub detector: DetectorConfig,
    pub refine: RefineConfig,
    pub sensor_width: u32,
    pub sensor_height: u32,
    pub t_now: u64,
    interval_us: u64,
}

impl LatencyFixture {
    /// `mask_w` x `mask_h` object, `margin_px` search margin, roughly
    /// `events_in_region` events inside the region per window.
    pub fn new(mask_w: u32, mask_h: u32, margin_px: u32, events_in_region: usize) -> Self {
        use rand::{Rng, SeedableRng};
        let (sensor_width, sensor_height) = (240u32, 180u32);
        let left = (sensor_width - mask_w) / 2;
        let top = (sensor_height - mask_h) / 2;
        let mask_rect = PixelRect { x: left, y: top, w: mask_w, h: mask_h };
        let region = detector::search_region(
            &mask_rect.to_bbox(),
            margin_px,
            sensor_width,
            sensor_height,
        )
        .expect("fixture region on sensor");

        let interval_us = 50_000u64;
        let t_prev = 50_000u64;
        let t_now = t_prev + 2_604; // one 384 Hz step later
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let mut seed_events = Vec::new();
        let mut window_events = Vec::new();
        for _ in 0..events_in_region {
            let x = region.x as u16 + rng.random_range(0..region.w as u16);
            let y = region.y as u16 + rng.random_range(0..region.h as u16);
            let polarity =
                if rng.random::<bool>() { crate::types::Polarity::Positive } else { crate::types::Polarity::Negative };
            let age: u64 = rng.random_range(0..interval_us);
            seed_events.push(Event { t: t_prev - age, x, y, polarity });
            // The current window sees the same texture shifted 2 px right.
            let moved_x = (x + 2).min(sensor_width as u16 - 1);
            window_events.push(Event { t: t_now - age.min(t_now), x: moved_x, y, polarity });
        }
        seed_events.sort_by_key(|e| e.t);
        window_events.sort_by_key(|e| e.t);
        let mask = masks::build_event_mask(&seed_events, &mask_rect, t_prev)
            .expect("fixture mask has events");

        Self {
            mask,
            mask_rect,
            window_events,
            detector: DetectorConfig { margin_px, ..Default::default() },
            refine: RefineConfig::default(),
            sensor_width,
            sensor_height,
            t_now,
            interval_us,
        }
    }

    pub fn window(&self) -> WindowFrame<'_> {
        WindowFrame {
            index: 2,
            t_now: self.t_now,
            events: &self.window_events,
            image: None,
            frame_detections: None,
            interval_us: self.interval_us,
            min_weight: 0.05,
        }
    }

    /// Mask generation stage: build the event mask over the enlarged box.
    pub fn run_mask_generation(&self) -> usize {
        let window = self.window();
        masks::build_event_mask(window.events, &self.mask_rect, self.t_now)
            .map(|m| m.nonzero_count())
            .unwrap_or(0)
    }

    /// Event-based detection stage: weighted field, correlation, argmax.
    pub fn run_detection(&self) -> Option<f64> {
        let window = self.window();
        detector::detect_inter_frame(
            &self.mask,
            &window,
            &self.mask_rect.to_bbox(),
            &self.detector,
            self.sensor_width,
            self.sensor_height,
        )
        .and_then(|d| d.score)
    }

    /// Refinement stage on a detection at the object's position.
    pub fn run_refinement(&self) -> f64 {
        let window = self.window();
        let det = detector::Detection {
            bbox: self.mask_rect.to_bbox(),
            score: None,
            source: detector::DetectionSource::Frame,
            t: self.t_now,
        };
        let refined = refine::refine_bbox(
            &det,
            &window,
            &self.refine,
            0.10,
            self.sensor_width,
            self.sensor_height,
        );
        refined.bbox.width
    }

    /// Measure one stage: `warmup` unmeasured runs, then `reps` timed ones.
    pub fn measure(&self, stage: impl Fn(&Self) -> f64, warmup: usize, reps: usize) -> LatencyStats {
        for _ in 0..warmup {
            std::hint::black_box(stage(self));
        }
        let mut samples_ms = Vec::with_capacity(reps);
        for _ in 0..reps {
            let start = std::time::Instant::now();
            std::hint::black_box(stage(self));
            samples_ms.push(start.elapsed().as_secs_f64() * 1e3);
        }
        samples_ms.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
        let mean_ms = samples_ms.iter().sum::<f64>() / reps as f64;
        let median_ms = samples_ms[reps / 2];
        LatencyStats { mean_ms, median_ms }
    }
}
