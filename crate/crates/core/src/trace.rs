//! Stimulation traces: input events bound to the views they hit.
//!
//! A trace file is JSON lines. The first line is a header
//! `{"format":"puppet-trace","version":1,"app_id":..,"screen":{..}}`; every
//! following line is one [`StimulationStep`]. Field order is fixed by the
//! struct definitions, so a parsed trace re-serializes byte-identically.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{ConsumptionResult, GestureDispatcher};
use crate::event::{EventAction, InputEvent};
use crate::view::{self, compute_ratio, locate_target, parse_hierarchy_dump, DumpError, Rect, Screen, ViewHierarchy, ViewPath};

pub const TRACE_FORMAT: &str = "puppet-trace";
pub const TRACE_VERSION: u32 = 1;

const RATIO_TOLERANCE: f64 = 1e-9;

/// View binding of a touch step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchBinding {
    /// Deepest-rightmost view containing the touch.
    pub target_path: ViewPath,
    /// Who consumed the touch under dispatch (gesture-captured for Move/Up).
    pub consumer: ConsumptionResult,
    /// Touch position relative to `recorded_bounds`.
    pub ratio: [f64; 2],
    /// Bounds of the target view at recording time.
    pub recorded_bounds: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulationStep {
    pub event: InputEvent,
    pub activity_name: String,
    pub activity_hash: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub touch: Option<TouchBinding>,
    /// Set on touch steps whose point fell outside every view.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_target: bool,
}

impl StimulationStep {
    fn check(&self) -> Result<(), &'static str> {
        self.event.check()?;
        match (&self.touch, self.event.is_touch()) {
            (Some(_), false) => return Err("key step carries a view binding"),
            (None, true) if !self.no_target => return Err("touch step without view binding"),
            (Some(_), true) if self.no_target => return Err("flagged step carries a view binding"),
            _ => {}
        }
        if !self.event.is_touch() && self.no_target {
            return Err("key step flagged as unresolved");
        }
        if let Some(t) = &self.touch {
            let (rx, ry) = compute_ratio(&t.recorded_bounds, self.event.x as i64, self.event.y as i64)
                .map_err(|_| "event point not inside recorded bounds")?;
            if (rx - t.ratio[0]).abs() > RATIO_TOLERANCE || (ry - t.ratio[1]).abs() > RATIO_TOLERANCE {
                return Err("ratio disagrees with recorded bounds");
            }
            if t.target_path.is_empty() {
                return Err("empty target path");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulationTrace {
    pub app_id: String,
    pub source_screen: Screen,
    pub steps: Vec<StimulationStep>,
}

impl StimulationTrace {
    pub fn new(app_id: impl Into<String>, source_screen: Screen) -> Self {
        StimulationTrace {
            app_id: app_id.into(),
            source_screen,
            steps: Vec::new(),
        }
    }

    /// Indices of touch steps recorded without a target view.
    pub fn flagged_steps(&self) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.no_target)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Hierarchy of the focused window over time.
pub trait FocusSource {
    fn focused_at(&self, timestamp: u64) -> Option<&ViewHierarchy>;
}

impl FocusSource for ViewHierarchy {
    fn focused_at(&self, _timestamp: u64) -> Option<&ViewHierarchy> {
        Some(self)
    }
}

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: dump file name is not <timestamp_ms>.hier")]
    BadName { path: PathBuf },
    #[error("{path}: {source}")]
    Dump { path: PathBuf, source: DumpError },
}

/// Hierarchy dumps keyed by the timestamp at which they were taken. The dump
/// in effect at time `t` is the latest one taken at or before `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DumpTimeline {
    dumps: BTreeMap<u64, ViewHierarchy>,
}

impl DumpTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, timestamp: u64, h: ViewHierarchy) {
        self.dumps.insert(timestamp, h);
    }

    pub fn len(&self) -> usize {
        self.dumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dumps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &ViewHierarchy)> {
        self.dumps.iter().map(|(&t, h)| (t, h))
    }

    /// Loads every `<timestamp_ms>.hier` file of a directory. Files with
    /// other extensions are ignored.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, TimelineError> {
        let dir = dir.as_ref();
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| TimelineError::Io { path, source }
        };
        let mut timeline = DumpTimeline::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("hier") {
                continue;
            }
            let timestamp = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| TimelineError::BadName { path: path.clone() })?;
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let h = parse_hierarchy_dump(&text).map_err(|source| TimelineError::Dump { path, source })?;
            timeline.insert(timestamp, h);
        }
        Ok(timeline)
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (t, h) in &self.dumps {
            fs::write(dir.join(format!("{t}.hier")), view::serialize_hierarchy_dump(h))?;
        }
        Ok(())
    }
}

impl FocusSource for DumpTimeline {
    fn focused_at(&self, timestamp: u64) -> Option<&ViewHierarchy> {
        self.dumps.range(..=timestamp).next_back().map(|(_, h)| h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("no focused-window hierarchy available at t={0}ms")]
    FocusUnavailable(u64),
}

/// Correlates input events with the focused hierarchy.
///
/// Touch steps whose point lies outside every view are kept with
/// `no_target` set (see [`StimulationTrace::flagged_steps`]).
pub fn record_trace(
    events: &[InputEvent],
    focus: &impl FocusSource,
    app_id: &str,
) -> Result<StimulationTrace, RecordError> {
    let mut steps = Vec::with_capacity(events.len());
    let mut screen = None;
    let mut gestures = GestureDispatcher::new();
    for event in events {
        let h = focus
            .focused_at(event.timestamp)
            .ok_or(RecordError::FocusUnavailable(event.timestamp))?;
        screen.get_or_insert(h.screen);
        let mut step = StimulationStep {
            event: *event,
            activity_name: h.activity_name.clone(),
            activity_hash: h.activity_hash,
            touch: None,
            no_target: false,
        };
        if event.is_touch() {
            let (x, y) = (event.x as i64, event.y as i64);
            let consumer = gestures.dispatch(h, event);
            match locate_target(&h.root, x, y) {
                Some(indices) => {
                    let node = h.root.descend(&indices).expect("address from same tree");
                    match compute_ratio(&node.bounds, x, y) {
                        Ok((rx, ry)) => {
                            step.touch = Some(TouchBinding {
                                target_path: ViewPath::from_indices(&h.root, &indices),
                                consumer,
                                ratio: [rx, ry],
                                recorded_bounds: node.bounds,
                            })
                        }
                        Err(_) => step.no_target = true,
                    }
                }
                None => step.no_target = true,
            }
            if step.no_target {
                log::warn!("touch at ({x},{y}) t={}ms hits no view", event.timestamp);
            }
        }
        steps.push(step);
    }
    Ok(StimulationTrace {
        app_id: app_id.to_string(),
        source_screen: screen.unwrap_or(Screen { width: 0, height: 0 }),
        steps,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceHeader {
    format: String,
    version: u32,
    app_id: String,
    screen: Screen,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceParseError {
    #[error("unsupported trace version {0}")]
    UnsupportedVersion(u64),
    #[error("line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
}

pub fn serialize_trace(t: &StimulationTrace) -> String {
    let header = TraceHeader {
        format: TRACE_FORMAT.to_string(),
        version: TRACE_VERSION,
        app_id: t.app_id.clone(),
        screen: t.source_screen,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for step in &t.steps {
        out.push_str(&serde_json::to_string(step).expect("step serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<StimulationTrace, TraceParseError> {
    let malformed = |line: usize, reason: String| TraceParseError::MalformedTrace { line, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| malformed(1, "missing header".into()))?;
    let raw: serde_json::Value = serde_json::from_str(first).map_err(|e| malformed(1, e.to_string()))?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(TRACE_FORMAT) {
        return Err(malformed(1, "not a trace header".into()));
    }
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == TRACE_VERSION as u64 => {}
        Some(v) => return Err(TraceParseError::UnsupportedVersion(v)),
        None => return Err(malformed(1, "missing version".into())),
    }
    let header: TraceHeader = serde_json::from_value(raw).map_err(|e| malformed(1, e.to_string()))?;
    let mut trace = StimulationTrace::new(header.app_id, header.screen);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let step: StimulationStep = serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
        step.check().map_err(|r| malformed(line_no, r.to_string()))?;
        if trace.steps.last().is_some_and(|p| p.event.timestamp > step.event.timestamp) {
            return Err(malformed(line_no, "timestamp goes backwards".into()));
        }
        trace.steps.push(step);
    }
    Ok(trace)
}

/// Number of Down events in the trace, a proxy for distinct taps.
pub fn count_gestures(t: &StimulationTrace) -> usize {
    t.steps
        .iter()
        .filter(|s| s.event.is_touch() && s.event.action == EventAction::Down)
        .count()
}
