//! Record and re-execute UI stimulation traces across similar Android-style
//! applications.
//!
//! The pipeline has three stages:
//!
//! - **recording**: low-level input events (decoded from RFB client messages or
//!   read from an event log) are correlated with dumps of the focused window's
//!   view hierarchy. Each touch is bound to the deepest-rightmost view that
//!   contains it, the view that would consume it, and the touch position
//!   relative to the target view's bounds.
//! - **replay**: a recorded trace is re-executed on a different hierarchy by
//!   resolving each view path again and rescaling the relative position into
//!   the new bounds. Events are written to per-device input sinks and the run
//!   is scored by the fraction of steps re-executed.
//! - **similarity**: screenshots are fingerprinted with a 64-bit DCT
//!   perceptual hash and indexed in an exact multi-vantage-point tree, so the
//!   app whose UI is closest to an unseen one can be located and its trace
//!   reused. DBSCAN clustering and parameter-sweep metrics support choosing
//!   the hamming threshold.
//!
//! [`corpus`] produces deterministic synthetic fixtures for all three stages.

pub mod corpus;
pub mod dispatch;
pub mod event;
pub mod replay;
pub mod similarity;
pub mod trace;
pub mod view;

pub use dispatch::{dispatch_touch, ConsumedVia, ConsumptionResult, GestureDispatcher};
pub use event::{
    decode_rfb, encode_rfb, parse_event_log, rfb_to_input_event, serialize_event_log,
    EventAction, EventType, InputEvent, RfbMessage,
};
pub use replay::{replay_raw, replay_trace, rescale_event, InputSinkSet, ReplayOptions, ReplayReport};
pub use similarity::{
    dbscan, hamming, homogeneity, phash, sweep, ClusterSet, GrayImage, PerceptualHash,
    SimilarityIndex,
};
pub use trace::{parse_trace, record_trace, serialize_trace, DumpTimeline, StimulationStep, StimulationTrace};
pub use view::{
    compute_ratio, find_target_view, parse_hierarchy_dump, resolve_path, Policy, Rect,
    ViewHierarchy, ViewNode, ViewPath,
};
