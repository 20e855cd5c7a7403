//! Window-frame schedule for a tracking rate `k` and event-history interval,
//! plus the temporal weighting of events inside a window.
//!
//! The schedule advances in steps of `1/k` seconds; each window holds the most
//! recent `interval_ms` of events, and an image frame whenever the manifest
//! schedule delivered one since the previous window.

use crate::error::{Error, Result};
use crate::types::{DetectionRecord, Event, GrayImage, SequenceManifest};

#[derive(Debug, Clone)]
pub struct WindowConfig {
    /// Tracking rate k in Hz; the schedule step is 1/k.
    pub tracking_rate_hz: f64,
    /// Event history carried by each window, in milliseconds.
    pub interval_ms: f64,
    /// Floor for the temporal weight of the oldest events.
    pub min_weight: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { tracking_rate_hz: 24.0, interval_ms: 50.0, min_weight: 0.05 }
    }
}

impl WindowConfig {
    pub fn interval_us(&self) -> u64 {
        (self.interval_ms * 1000.0).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.tracking_rate_hz <= 0.0 {
            return Err(Error::Config("tracking_rate_hz must be > 0".into()));
        }
        if self.interval_ms <= 0.0 {
            return Err(Error::Config("interval_ms must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.min_weight) || self.min_weight == 0.0 {
            return Err(Error::Config("min_weight must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One planned tracking instant: when it fires and which manifest frame (if
/// any) it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSlot {
    /// 1-based position in the schedule.
    pub index: u32,
    /// Microseconds.
    pub t_now: u64,
    /// Index into `manifest.frames` assigned to this window.
    pub frame: Option<usize>,
}

/// The unit of processing at one tracking instant: the window's event slice
/// plus any image/detections that arrived since the previous instant.
#[derive(Debug)]
pub struct WindowFrame<'a> {
    pub index: u32,
    /// Microseconds.
    pub t_now: u64,
    /// Events with t in (t_now - interval, t_now], ordered.
    pub events: &'a [Event],
    pub image: Option<GrayImage>,
    pub frame_detections: Option<Vec<DetectionRecord>>,
    pub interval_us: u64,
    pub min_weight: f64,
}

impl WindowFrame<'_> {
    /// Temporal weight of an event timestamp within this window.
    pub fn weight_at(&self, event_t: u64) -> f64 {
        temporal_weight(event_t, self.t_now, self.interval_us, self.min_weight)
    }

    pub fn has_image(&self) -> bool {
        self.frame_detections.is_some()
    }
}

/// Plan the moving window schedule over `[first frame, span_end]`.
///
/// Window `i` (1-based) fires at `t0 + round((i-1) * 1e6 / k)` microseconds
/// with `t0` the first manifest frame timestamp. Each manifest frame is
/// assigned to the first window whose instant is at or after the frame
/// timestamp, so a window carries at most the one frame that arrived since
/// the previous instant.
pub fn plan_windows(
    config: &WindowConfig,
    manifest: &SequenceManifest,
    span_end: u64,
) -> Result<Vec<WindowSlot>> {
    config.validate()?;
    if config.tracking_rate_hz < manifest.frame_rate {
        return Err(Error::Config(format!(
            "tracking rate {} Hz is below the frame rate {} Hz",
            config.tracking_rate_hz, manifest.frame_rate
        )));
    }
    let first = manifest
        .frames
        .first()
        .ok_or_else(|| Error::Config("manifest has no frames".into()))?;
    let t0 = first.t_us;
    let step = 1e6 / config.tracking_rate_hz;
    let end = span_end.max(manifest.frames.last().map(|f| f.t_us).unwrap_or(t0)).max(t0);

    let mut slots = Vec::new();
    let mut frame_cursor = 0usize;
    let mut i: u64 = 0;
    loop {
        let t_now = t0 + (i as f64 * step).round() as u64;
        let index = (i + 1) as u32;
        let mut frame = None;
        if frame_cursor < manifest.frames.len() && manifest.frames[frame_cursor].t_us <= t_now {
            frame = Some(frame_cursor);
            frame_cursor += 1;
            if frame_cursor < manifest.frames.len() && manifest.frames[frame_cursor].t_us <= t_now
            {
                return Err(Error::Config(format!(
                    "two manifest frames fall inside window {index}; frame spacing is tighter \
                     than the tracking step"
                )));
            }
        }
        slots.push(WindowSlot { index, t_now, frame });
        if t_now >= end && frame_cursor >= manifest.frames.len() {
            break;
        }
        i += 1;
    }
    Ok(slots)
}

/// Slice the events with t in `(t_now - interval, t_now]` out of a stream
/// sorted by timestamp. Binary search at both boundaries.
pub fn slice_window(events: &[Event], t_now: u64, interval_us: u64) -> &[Event] {
    let lo_t = t_now.saturating_sub(interval_us);
    let lo = events.partition_point(|e| e.t <= lo_t);
    // When the interval start underflows to 0 the boundary event at t=0 is
    // still inside the window (no event precedes time zero).
    let lo = if interval_us > t_now { 0 } else { lo };
    let hi = events.partition_point(|e| e.t <= t_now);
    &events[lo..hi]
}

/// Linear temporal weight with a floor: newest events weigh 1, an event of
/// age `interval_us` would weigh 0 but is clamped at `min_weight`.
///
/// The event must lie inside the window `(t_now - interval, t_now]`.
pub fn temporal_weight(event_t: u64, t_now: u64, interval_us: u64, min_weight: f64) -> f64 {
    assert!(
        event_t <= t_now && t_now - event_t < interval_us,
        "event t={event_t} outside window (t_now={t_now}, interval={interval_us})"
    );
    let age = (t_now - event_t) as f64 / interval_us as f64;
    (1.0 - age).max(min_weight)
}
