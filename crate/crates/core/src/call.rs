//! Tool calls as they arrive from a computer-use orchestrator.
//!
//! Pixel coordinates use a top-left origin with x growing rightward and y
//! growing downward.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pool::ModelPool;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CallError {
    #[error("target ({x}, {y}) lies outside the {width}x{height} screenshot")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("action description is empty")]
    EmptyDescription,
    #[error("routing needs at least two models, pool has {0}")]
    PoolTooSmall(usize),
    #[error("history timestamps must strictly increase (saw {previous} then {next})")]
    HistoryOutOfOrder { previous: u64, next: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActionType {
    #[default]
    Click,
    Type,
    Scroll,
}

impl ActionType {
    /// Gerund used when rendering memories, e.g. "Clicking (580, 290)".
    pub fn gerund(self) -> &'static str {
        match self {
            ActionType::Click => "Clicking",
            ActionType::Type => "Typing at",
            ActionType::Scroll => "Scrolling at",
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionType::Click => "click",
            ActionType::Type => "type",
            ActionType::Scroll => "scroll",
        })
    }
}

impl FromStr for ActionType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "click" => Ok(ActionType::Click),
            "type" => Ok(ActionType::Type),
            "scroll" => Ok(ActionType::Scroll),
            other => Err(format!("unknown action type {other:?}")),
        }
    }
}

/// Pixel position on a screenshot. Deserializes from `{"x", "y"}`,
/// `[x, y]` or `"x,y"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Point { x, y }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl FromStr for Point {
    type Err = String;
    /// Parses `"x,y"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (x, y) = s.split_once(',').ok_or_else(|| format!("expected \"x,y\", got {s:?}"))?;
        let x = x.trim().parse().map_err(|_| format!("bad x coordinate in {s:?}"))?;
        let y = y.trim().parse().map_err(|_| format!("bad y coordinate in {s:?}"))?;
        Ok(Point { x, y })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PointRepr {
    Fields { x: u32, y: u32 },
    Pair(u32, u32),
    Text(String),
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match PointRepr::deserialize(d)? {
            PointRepr::Fields { x, y } | PointRepr::Pair(x, y) => Ok(Point { x, y }),
            PointRepr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Tri-state outcome of a prior action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActionResult {
    Success,
    Failure,
    #[default]
    Unknown,
}

impl From<Option<bool>> for ActionResult {
    fn from(flag: Option<bool>) -> Self {
        match flag {
            Some(true) => ActionResult::Success,
            Some(false) => ActionResult::Failure,
            None => ActionResult::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub description: String,
    pub coords: Point,
    #[serde(default)]
    pub result: ActionResult,
    pub timestamp: u64,
}

/// One action request. The screenshot is shared so that calls can be cloned
/// cheaply between pipeline stages.
#[derive(Debug, Clone)]
pub struct ToolCall {
    pub screenshot: Arc<RgbImage>,
    /// Oldest first.
    pub history: Vec<ActionRecord>,
    pub action_type: ActionType,
    /// The orchestrator's provisional target, used to place the crop.
    pub coords: Point,
    pub description: String,
    pub app_id: String,
    pub session_id: String,
}

/// A tool call whose invariants have been checked.
#[derive(Debug, Clone)]
pub struct ValidatedCall(ToolCall);

impl ValidatedCall {
    pub fn call(&self) -> &ToolCall {
        &self.0
    }

    pub fn into_inner(self) -> ToolCall {
        self.0
    }
}

impl std::ops::Deref for ValidatedCall {
    type Target = ToolCall;
    fn deref(&self) -> &ToolCall {
        &self.0
    }
}

pub fn validate_tool_call(call: ToolCall, pool: &ModelPool) -> Result<ValidatedCall, CallError> {
    if pool.len() < 2 {
        return Err(CallError::PoolTooSmall(pool.len()));
    }
    let (width, height) = call.screenshot.dimensions();
    if call.coords.x >= width || call.coords.y >= height {
        return Err(CallError::OutOfBounds {
            x: call.coords.x,
            y: call.coords.y,
            width,
            height,
        });
    }
    if call.description.trim().is_empty() {
        return Err(CallError::EmptyDescription);
    }
    for pair in call.history.windows(2) {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(CallError::HistoryOutOfOrder {
                previous: pair[0].timestamp,
                next: pair[1].timestamp,
            });
        }
    }
    Ok(ValidatedCall(call))
}
