//! Touch dispatch as the Android touch system performs it, minus
//! interception, cancellation and multi-pointer support.
//!
//! The activity hands the event to the root view. A view group offers it to
//! its children in reverse order (topmost first), recursing into each child
//! that contains the point and stopping at the first subtree that consumes.
//! If no child consumes, the view tries its touch listener, then its own
//! handler, and otherwise passes the event back to its parent. When the root
//! passes, the activity consumes the event itself.

use serde::{Deserialize, Serialize};

use crate::event::{EventAction, InputEvent};
use crate::view::{Policy, ViewHierarchy, ViewNode, ViewPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsumedVia {
    Listener,
    #[serde(rename = "self")]
    SelfHandler,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConsumptionResult {
    View { path: ViewPath, via: ConsumedVia },
    Activity,
}

impl ConsumptionResult {
    pub fn view_path(&self) -> Option<&ViewPath> {
        match self {
            ConsumptionResult::View { path, .. } => Some(path),
            ConsumptionResult::Activity => None,
        }
    }

    pub fn is_activity(&self) -> bool {
        matches!(self, ConsumptionResult::Activity)
    }
}

fn try_consume(node: &ViewNode) -> Option<ConsumedVia> {
    match node.policy {
        Policy::ConsumeByListener => Some(ConsumedVia::Listener),
        Policy::ConsumeBySelf => Some(ConsumedVia::SelfHandler),
        Policy::Pass => None,
    }
}

fn dispatch_node(node: &ViewNode, x: i64, y: i64, trail: &mut Vec<usize>) -> Option<ConsumedVia> {
    for (i, child) in node.children.iter().enumerate().rev() {
        if !child.bounds.contains(x, y) {
            continue;
        }
        trail.push(i);
        if let Some(via) = dispatch_node(child, x, y, trail) {
            return Some(via);
        }
        trail.pop();
    }
    try_consume(node)
}

/// Child-index address of the consuming view plus how it consumed, or `None`
/// when the activity ends up consuming.
pub fn dispatch_indices(root: &ViewNode, x: i64, y: i64) -> Option<(Vec<usize>, ConsumedVia)> {
    if !root.bounds.contains(x, y) {
        return None;
    }
    let mut trail = Vec::new();
    dispatch_node(root, x, y, &mut trail).map(|via| (trail, via))
}

pub fn dispatch_touch(h: &ViewHierarchy, x: i64, y: i64) -> ConsumptionResult {
    match dispatch_indices(&h.root, x, y) {
        Some((indices, via)) => ConsumptionResult::View {
            path: ViewPath::from_indices(&h.root, &indices),
            via,
        },
        None => ConsumptionResult::Activity,
    }
}

/// Gesture-aware dispatch: the consumer is decided when the Down arrives and
/// Move/Up events of the same gesture go to it without re-dispatching.
#[derive(Debug, Default, Clone)]
pub struct GestureDispatcher {
    captured: Option<ConsumptionResult>,
}

impl GestureDispatcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dispatch(&mut self, h: &ViewHierarchy, event: &InputEvent) -> ConsumptionResult {
        self.dispatch_at(h, event.action, event.x as i64, event.y as i64)
    }

    pub fn dispatch_at(&mut self, h: &ViewHierarchy, action: EventAction, x: i64, y: i64) -> ConsumptionResult {
        match action {
            EventAction::Down => {
                let result = dispatch_touch(h, x, y);
                self.captured = Some(result.clone());
                result
            }
            EventAction::Move => match &self.captured {
                Some(result) => result.clone(),
                None => dispatch_touch(h, x, y),
            },
            EventAction::Up => self.captured.take().unwrap_or_else(|| dispatch_touch(h, x, y)),
        }
    }
}
