//! Re-execution of stimulation traces on a (possibly different) hierarchy.
//!
//! Each touch step's view path is resolved on the replay-time hierarchy and
//! the recorded relative position is rescaled into the resolved view's
//! bounds. The first step whose view cannot be found ends the run; the score
//! is the fraction of steps executed before it.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::GestureDispatcher;
use crate::event::{serialize_event_log, EventType, InputEvent};
use crate::trace::{DumpTimeline, FocusSource, StimulationStep, StimulationTrace};
use crate::view::{resolve_path, PathNotFound, Rect, ViewHierarchy, ViewNode};

/// Device node of the touchscreen sink.
pub const TOUCH_DEVICE: &str = "/dev/input/event1";
/// Device node of the keyboard sink.
pub const KEY_DEVICE: &str = "/dev/input/event2";

/// Ordered per-device event queues standing in for the emulator's input
/// devices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSinkSet {
    pub touch: Vec<InputEvent>,
    pub key: Vec<InputEvent>,
}

impl InputSinkSet {
    pub fn emit(&mut self, event: InputEvent) {
        match event.event_type {
            EventType::Touch => self.touch.push(event),
            EventType::Key => self.key.push(event),
        }
    }

    /// Writes `event1.csv` (touchscreen) and `event2.csv` (keyboard) in the
    /// event-log format.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("event1.csv"), serialize_event_log(&self.touch))?;
        fs::write(dir.join("event2.csv"), serialize_event_log(&self.key))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    /// Neither the target path nor the consumer path resolves.
    PathNotFound { segment: usize },
    /// No hierarchy is known for this step.
    FocusUnavailable,
    /// The touch missed every view at recording time.
    NoRecordedTarget,
    DegenerateBounds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayFailure {
    pub step: usize,
    pub reason: FailureReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    /// A view consumed the touch at recording time, but at the replayed
    /// point only the activity does.
    ConsumerMismatch,
    /// The target path failed; the consumer path was used instead.
    ConsumerFallback,
    /// Raw replay: the unmodified point misses the view the path names.
    OffTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayWarning {
    pub step: usize,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub mode: ReplayMode,
    pub total_steps: usize,
    pub executed_steps: usize,
    pub score: f64,
    pub failure: Option<ReplayFailure>,
    pub warnings: Vec<ReplayWarning>,
    pub emitted: InputSinkSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    Views,
    Raw,
}

impl ReplayReport {
    fn finish(mode: ReplayMode, total_steps: usize, executed_steps: usize, failure: Option<ReplayFailure>, warnings: Vec<ReplayWarning>, emitted: InputSinkSet) -> Self {
        let score = if total_steps == 0 {
            1.0
        } else {
            executed_steps as f64 / total_steps as f64
        };
        ReplayReport {
            mode,
            total_steps,
            executed_steps,
            score,
            failure,
            warnings,
            emitted,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn warnings_of(&self, kind: WarningKind) -> Vec<usize> {
        self.warnings.iter().filter(|w| w.kind == kind).map(|w| w.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    /// Emitted timestamps are recorded timestamps divided by this factor.
    pub speed: f64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions { speed: 1.0 }
    }
}

impl ReplayOptions {
    fn timestamp(&self, t: u64) -> u64 {
        if self.speed == 1.0 {
            t
        } else {
            (t as f64 / self.speed).round() as u64
        }
    }
}

/// Hierarchy of the focused window at replay time, per step.
pub trait ReplayFocus {
    fn focused_for(&self, step_index: usize, step: &StimulationStep) -> Option<&ViewHierarchy>;
}

impl ReplayFocus for ViewHierarchy {
    fn focused_for(&self, _: usize, _: &StimulationStep) -> Option<&ViewHierarchy> {
        Some(self)
    }
}

impl ReplayFocus for DumpTimeline {
    fn focused_for(&self, _: usize, step: &StimulationStep) -> Option<&ViewHierarchy> {
        self.focused_at(step.event.timestamp)
    }
}

/// One hierarchy per step index; steps past the end use the last one.
#[derive(Debug, Clone)]
pub struct PerStepFocus(pub Vec<ViewHierarchy>);

impl ReplayFocus for PerStepFocus {
    fn focused_for(&self, step_index: usize, _: &StimulationStep) -> Option<&ViewHierarchy> {
        self.0.get(step_index).or(self.0.last())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RescaleError {
    #[error("target bounds have zero width or height")]
    DegenerateBounds,
    #[error("step carries no view binding")]
    NotATouchStep,
}

/// Maps a relative position into `bounds`, rounding to the nearest pixel.
pub fn rescale_point(ratio: [f64; 2], bounds: &Rect) -> Result<(u32, u32), RescaleError> {
    if bounds.is_degenerate() {
        return Err(RescaleError::DegenerateBounds);
    }
    let x = bounds.left as f64 + ratio[0] * bounds.width() as f64;
    let y = bounds.top as f64 + ratio[1] * bounds.height() as f64;
    Ok((x.round().max(0.0) as u32, y.round().max(0.0) as u32))
}

pub fn rescale_event(step: &StimulationStep, target: &ViewNode) -> Result<InputEvent, RescaleError> {
    let binding = step.touch.as_ref().ok_or(RescaleError::NotATouchStep)?;
    let (x, y) = rescale_point(binding.ratio, &target.bounds)?;
    Ok(InputEvent { x, y, ..step.event })
}

enum Resolution<'h> {
    Target(&'h ViewNode),
    Consumer(&'h ViewNode),
}

fn resolve_step<'h>(h: &'h ViewHierarchy, step: &StimulationStep) -> Result<Resolution<'h>, FailureReason> {
    let binding = step.touch.as_ref().ok_or(FailureReason::NoRecordedTarget)?;
    match resolve_path(h, &binding.target_path) {
        Ok(node) => Ok(Resolution::Target(node)),
        Err(PathNotFound(segment)) => binding
            .consumer
            .view_path()
            .and_then(|p| resolve_path(h, p).ok())
            .map(Resolution::Consumer)
            .ok_or(FailureReason::PathNotFound { segment }),
    }
}

/// Re-executes `trace`, stopping at the first step whose view cannot be
/// resolved. Failures are reported, never returned as errors.
pub fn replay_trace(trace: &StimulationTrace, focus: &impl ReplayFocus, opts: &ReplayOptions) -> ReplayReport {
    let mut sinks = InputSinkSet::default();
    let mut warnings = Vec::new();
    let mut failure = None;
    let mut gestures = GestureDispatcher::new();
    let mut executed = 0;

    for (i, step) in trace.steps.iter().enumerate() {
        let timestamp = opts.timestamp(step.event.timestamp);
        if !step.event.is_touch() {
            sinks.emit(InputEvent { timestamp, ..step.event });
            executed += 1;
            continue;
        }
        let outcome = (|| {
            let h = focus.focused_for(i, step).ok_or(FailureReason::FocusUnavailable)?;
            let node = match resolve_step(h, step)? {
                Resolution::Target(node) => node,
                Resolution::Consumer(node) => {
                    warnings.push(ReplayWarning { step: i, kind: WarningKind::ConsumerFallback });
                    node
                }
            };
            let event = rescale_event(step, node).map_err(|_| FailureReason::DegenerateBounds)?;
            Ok((h, event))
        })();
        match outcome {
            Ok((h, event)) => {
                sinks.emit(InputEvent { timestamp, ..event });
                let now = gestures.dispatch(h, &event);
                let recorded_view = step.touch.as_ref().is_some_and(|b| !b.consumer.is_activity());
                if recorded_view && now.is_activity() {
                    warnings.push(ReplayWarning { step: i, kind: WarningKind::ConsumerMismatch });
                }
                executed += 1;
            }
            Err(reason) => {
                failure = Some(ReplayFailure { step: i, reason });
                break;
            }
        }
    }
    ReplayReport::finish(ReplayMode::Views, trace.steps.len(), executed, failure, warnings, sinks)
}

/// Baseline that re-injects the recorded absolute coordinates unchanged.
///
/// Every step is executed. When the recorded target path still resolves on
/// the replay hierarchy and the raw point falls outside it, the step gets an
/// [`WarningKind::OffTarget`] warning.
pub fn replay_raw(trace: &StimulationTrace, focus: &impl ReplayFocus, opts: &ReplayOptions) -> ReplayReport {
    let mut sinks = InputSinkSet::default();
    let mut warnings = Vec::new();
    for (i, step) in trace.steps.iter().enumerate() {
        let event = InputEvent {
            timestamp: opts.timestamp(step.event.timestamp),
            ..step.event
        };
        sinks.emit(event);
        let target = step
            .touch
            .as_ref()
            .zip(focus.focused_for(i, step))
            .and_then(|(b, h)| resolve_path(h, &b.target_path).ok());
        if let Some(node) = target {
            if !node.bounds.contains(event.x as i64, event.y as i64) {
                warnings.push(ReplayWarning { step: i, kind: WarningKind::OffTarget });
            }
        }
    }
    let n = trace.steps.len();
    ReplayReport::finish(ReplayMode::Raw, n, n, None, warnings, sinks)
}
