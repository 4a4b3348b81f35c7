//! Input events: the RFB client-to-server input messages and the CSV event log.
//!
//! Wire layout (big-endian, RFC 6143 section 7.5):
//!
//! ```text
//! KeyEvent     [u8 type=4][u8 down-flag][2 bytes padding][u32 keysym]
//! PointerEvent [u8 type=5][u8 button-mask][u16 x][u16 y]
//! ```
//!
//! Event log: one event per line, `timestamp,event_type,action,x,y,key_code`.
//! Lines starting with `#` and blank lines are skipped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KEY_EVENT_TYPE: u8 = 4;
pub const POINTER_EVENT_TYPE: u8 = 5;
pub const KEY_EVENT_LEN: usize = 8;
pub const POINTER_EVENT_LEN: usize = 6;

const PRIMARY_BUTTON: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventType {
    Touch = 0,
    Key = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventAction {
    Up = 0,
    Down = 1,
    Move = 2,
}

impl EventType {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EventType::Touch),
            1 => Some(EventType::Key),
            _ => None,
        }
    }
}

impl EventAction {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EventAction::Up),
            1 => Some(EventAction::Down),
            2 => Some(EventAction::Move),
            _ => None,
        }
    }
}

/// One timestamped pointer or key event, as seen by the recorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputEvent {
    /// Milliseconds since session start, client clock.
    pub timestamp: u64,
    pub event_type: EventType,
    pub action: EventAction,
    pub x: u32,
    pub y: u32,
    /// Keysym; always 0 for touch events.
    pub key_code: u32,
}

impl InputEvent {
    pub fn touch(timestamp: u64, action: EventAction, x: u32, y: u32) -> Self {
        InputEvent {
            timestamp,
            event_type: EventType::Touch,
            action,
            x,
            y,
            key_code: 0,
        }
    }

    pub fn key(timestamp: u64, down: bool, key_code: u32) -> Self {
        InputEvent {
            timestamp,
            event_type: EventType::Key,
            action: if down { EventAction::Down } else { EventAction::Up },
            x: 0,
            y: 0,
            key_code,
        }
    }

    pub fn is_touch(&self) -> bool {
        self.event_type == EventType::Touch
    }

    /// Checks the per-event field constraints (not timestamp ordering).
    pub fn check(&self) -> Result<(), &'static str> {
        match self.event_type {
            EventType::Touch if self.key_code != 0 => Err("touch event with non-zero key_code"),
            EventType::Key if self.x != 0 || self.y != 0 => Err("key event with non-zero coordinates"),
            EventType::Key if self.action == EventAction::Move => Err("move action on a key event"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for InputEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.timestamp, self.event_type as u8, self.action as u8, self.x, self.y, self.key_code
        )
    }
}

impl FromStr for InputEvent {
    type Err = &'static str;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut cols = line.split(',').map(str::trim);
        let mut next = || cols.next().ok_or("expected 6 columns");
        let timestamp: u64 = next()?.parse().map_err(|_| "bad timestamp")?;
        let event_type = next()?
            .parse::<u8>()
            .ok()
            .and_then(EventType::from_code)
            .ok_or("bad event_type")?;
        let action = next()?
            .parse::<u8>()
            .ok()
            .and_then(EventAction::from_code)
            .ok_or("bad action")?;
        let x: u32 = next()?.parse().map_err(|_| "bad x")?;
        let y: u32 = next()?.parse().map_err(|_| "bad y")?;
        let key_code: u32 = next()?.parse().map_err(|_| "bad key_code")?;
        if cols.next().is_some() {
            return Err("expected 6 columns");
        }
        let event = InputEvent {
            timestamp,
            event_type,
            action,
            x,
            y,
            key_code,
        };
        event.check()?;
        Ok(event)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RfbMessage {
    PointerEvent { button_mask: u8, x: u16, y: u16 },
    KeyEvent { down: bool, key: u32 },
}

impl RfbMessage {
    pub fn encoded_len(&self) -> usize {
        match self {
            RfbMessage::PointerEvent { .. } => POINTER_EVENT_LEN,
            RfbMessage::KeyEvent { .. } => KEY_EVENT_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("empty input")]
    Empty,
    #[error("unknown RFB message type {0}")]
    UnknownMessageType(u8),
    #[error("truncated message: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
}

/// Decodes one message from the front of `bytes`, returning it together with
/// the number of bytes consumed.
pub fn decode_rfb(bytes: &[u8]) -> Result<(RfbMessage, usize), DecodeError> {
    let &kind = bytes.first().ok_or(DecodeError::Empty)?;
    let needed = match kind {
        KEY_EVENT_TYPE => KEY_EVENT_LEN,
        POINTER_EVENT_TYPE => POINTER_EVENT_LEN,
        other => return Err(DecodeError::UnknownMessageType(other)),
    };
    if bytes.len() < needed {
        return Err(DecodeError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let msg = if kind == KEY_EVENT_TYPE {
        // The down-flag is a boolean byte; any non-zero value reads as pressed,
        // but only 0/1 re-encode byte-exactly.
        RfbMessage::KeyEvent {
            down: bytes[1] != 0,
            key: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
        }
    } else {
        RfbMessage::PointerEvent {
            button_mask: bytes[1],
            x: u16::from_be_bytes([bytes[2], bytes[3]]),
            y: u16::from_be_bytes([bytes[4], bytes[5]]),
        }
    };
    Ok((msg, needed))
}

/// Decodes a back-to-back stream of input messages.
pub fn decode_rfb_stream(mut bytes: &[u8]) -> Result<Vec<RfbMessage>, DecodeError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (msg, used) = decode_rfb(bytes)?;
        out.push(msg);
        bytes = &bytes[used..];
    }
    Ok(out)
}

pub fn encode_rfb(msg: &RfbMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.encoded_len());
    match *msg {
        RfbMessage::PointerEvent { button_mask, x, y } => {
            out.push(POINTER_EVENT_TYPE);
            out.push(button_mask);
            out.extend_from_slice(&x.to_be_bytes());
            out.extend_from_slice(&y.to_be_bytes());
        }
        RfbMessage::KeyEvent { down, key } => {
            out.push(KEY_EVENT_TYPE);
            out.push(down as u8);
            out.extend_from_slice(&[0, 0]);
            out.extend_from_slice(&key.to_be_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TranslateError {
    /// Pointer motion with the primary button up in both masks (hover). The
    /// recorder emits nothing for it.
    #[error("pointer hover without primary button; nothing to record")]
    Ignored,
}

/// Turns one RFB message into a recorded input event.
///
/// Only button bit 0 (the primary touch) is tracked; `prev_mask` is the mask
/// of the previous pointer message in the session.
pub fn rfb_to_input_event(
    msg: &RfbMessage,
    prev_mask: u8,
    timestamp: u64,
) -> Result<InputEvent, TranslateError> {
    match *msg {
        RfbMessage::KeyEvent { down, key } => Ok(InputEvent::key(timestamp, down, key)),
        RfbMessage::PointerEvent { button_mask, x, y } => {
            if button_mask & !PRIMARY_BUTTON != 0 {
                log::warn!("ignoring non-primary pointer buttons in mask {button_mask:#04x}");
            }
            let was = prev_mask & PRIMARY_BUTTON != 0;
            let now = button_mask & PRIMARY_BUTTON != 0;
            let action = match (was, now) {
                (false, true) => EventAction::Down,
                (true, false) => EventAction::Up,
                (true, true) => EventAction::Move,
                (false, false) => return Err(TranslateError::Ignored),
            };
            Ok(InputEvent::touch(timestamp, action, x as u32, y as u32))
        }
    }
}

/// Stateful wrapper around [`rfb_to_input_event`] that remembers the last
/// pointer mask of a session.
#[derive(Debug, Default, Clone)]
pub struct PointerTracker {
    prev_mask: u8,
}

impl PointerTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, msg: &RfbMessage, timestamp: u64) -> Option<InputEvent> {
        let out = rfb_to_input_event(msg, self.prev_mask, timestamp).ok();
        if let RfbMessage::PointerEvent { button_mask, .. } = *msg {
            self.prev_mask = button_mask;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventLogError {
    #[error("line {line}: malformed event ({reason})")]
    MalformedLine { line: usize, reason: &'static str },
    #[error("line {0}: timestamp goes backwards")]
    NonMonotonicTimestamp(usize),
}

pub fn parse_event_log(text: &str) -> Result<Vec<InputEvent>, EventLogError> {
    let mut events: Vec<InputEvent> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let event: InputEvent = line.parse().map_err(|reason| EventLogError::MalformedLine {
            line: line_no,
            reason,
        })?;
        if events.last().is_some_and(|prev| prev.timestamp > event.timestamp) {
            return Err(EventLogError::NonMonotonicTimestamp(line_no));
        }
        events.push(event);
    }
    Ok(events)
}

pub fn serialize_event_log(events: &[InputEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&event.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GestureWarning {
    /// A touch Down at this index is followed by another Down (or the end of
    /// the log) without an Up in between.
    UnterminatedDown(usize),
    /// A Move or Up at this index arrived with no gesture open.
    OrphanEvent(usize),
}

/// Checks Down/Up pairing of touch events. Truncated logs are legal, so
/// problems are reported rather than rejected.
pub fn validate_gestures(events: &[InputEvent]) -> Vec<GestureWarning> {
    let mut warnings = Vec::new();
    let mut open: Option<usize> = None;
    for (i, event) in events.iter().enumerate().filter(|(_, e)| e.is_touch()) {
        match event.action {
            EventAction::Down => {
                if let Some(start) = open.replace(i) {
                    warnings.push(GestureWarning::UnterminatedDown(start));
                }
            }
            EventAction::Move => {
                if open.is_none() {
                    warnings.push(GestureWarning::OrphanEvent(i));
                }
            }
            EventAction::Up => {
                if open.take().is_none() {
                    warnings.push(GestureWarning::OrphanEvent(i));
                }
            }
        }
    }
    if let Some(start) = open {
        warnings.push(GestureWarning::UnterminatedDown(start));
    }
    warnings
}
