//! Label taxonomy and the stage-specific views of it.

use core::fmt;
use core::str::FromStr;

use alloc::string::ToString;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expert annotation of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawLabel {
    Rubbish,
    Healthy,
    Unhealthy,
    /// Healthy and unhealthy cells in the same patch. Train-only.
    Both,
}

impl RawLabel {
    pub const ALL: [RawLabel; 4] = [RawLabel::Rubbish, RawLabel::Healthy, RawLabel::Unhealthy, RawLabel::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            RawLabel::Rubbish => "rubbish",
            RawLabel::Healthy => "healthy",
            RawLabel::Unhealthy => "unhealthy",
            RawLabel::Both => "both",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// The label the cascade is scored against; `None` for [`RawLabel::Both`].
    pub fn final_label(self) -> Option<FinalLabel> {
        match self {
            RawLabel::Rubbish => Some(FinalLabel::Rubbish),
            RawLabel::Healthy => Some(FinalLabel::Healthy),
            RawLabel::Unhealthy => Some(FinalLabel::Unhealthy),
            RawLabel::Both => None,
        }
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exact lowercase spelling only.
impl FromStr for RawLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rubbish" => Ok(RawLabel::Rubbish),
            "healthy" => Ok(RawLabel::Healthy),
            "unhealthy" => Ok(RawLabel::Unhealthy),
            "both" => Ok(RawLabel::Both),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage1Label {
    Rubbish,
    Suitable,
}

impl Stage1Label {
    pub fn code(self) -> char {
        match self {
            Stage1Label::Rubbish => 'R',
            Stage1Label::Suitable => 'S',
        }
    }
}

/// Multi-label target of the second stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stage2Target {
    pub healthy: bool,
    pub unhealthy: bool,
}

/// Binary decision taken by the second stage for one fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage2Label {
    Healthy,
    Unhealthy,
}

impl Stage2Label {
    pub fn code(self) -> char {
        match self {
            Stage2Label::Healthy => 'H',
            Stage2Label::Unhealthy => 'U',
        }
    }
}

/// Everything the cascade can output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalLabel {
    Rubbish,
    Healthy,
    Unhealthy,
}

impl FinalLabel {
    pub const ALL: [FinalLabel; 3] = [FinalLabel::Rubbish, FinalLabel::Healthy, FinalLabel::Unhealthy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FinalLabel::Rubbish => "rubbish",
            FinalLabel::Healthy => "healthy",
            FinalLabel::Unhealthy => "unhealthy",
        }
    }
}

impl From<Stage2Label> for FinalLabel {
    fn from(label: Stage2Label) -> Self {
        match label {
            Stage2Label::Healthy => FinalLabel::Healthy,
            Stage2Label::Unhealthy => FinalLabel::Unhealthy,
        }
    }
}

impl fmt::Display for FinalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
}

impl Stage {
    pub const ALL: [Stage; 2] = [Stage::Stage1, Stage::Stage2];

    /// Number of probabilities a record of this stage carries.
    pub fn width(self) -> usize {
        match self {
            Stage::Stage1 => 1,
            Stage::Stage2 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stage1" => Ok(Stage::Stage1),
            "stage2" => Ok(Stage::Stage2),
            other => Err(Error::UnknownStage(other.to_string())),
        }
    }
}

/// Healthy, unhealthy and both are all suitable for diagnosis.
pub fn map_stage1_label(raw: RawLabel) -> Stage1Label {
    match raw {
        RawLabel::Rubbish => Stage1Label::Rubbish,
        RawLabel::Healthy | RawLabel::Unhealthy | RawLabel::Both => Stage1Label::Suitable,
    }
}

pub fn map_stage2_target(raw: RawLabel) -> Result<Stage2Target> {
    match raw {
        RawLabel::Rubbish => Err(Error::RubbishHasNoStage2Target),
        RawLabel::Healthy => Ok(Stage2Target { healthy: true, unhealthy: false }),
        RawLabel::Unhealthy => Ok(Stage2Target { healthy: false, unhealthy: true }),
        RawLabel::Both => Ok(Stage2Target { healthy: true, unhealthy: true }),
    }
}
