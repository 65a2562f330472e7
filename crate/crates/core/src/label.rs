use std::fmt;

use serde::{Deserialize, Serialize};

/// Binary disk class. The numeric encoding follows the dataset: 0 failed, 1 functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Failed = 0,
    Functional = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Failed, Label::Functional];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Failed),
            1 => Some(Label::Functional),
            _ => None,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Failed => Label::Functional,
            Label::Functional => Label::Failed,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Label::from_index(v as usize).ok_or_else(|| format!("label must be 0 or 1, got {v}"))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

/// Anything usable as a labeled training or calibration example.
pub trait Labeled<T> {
    fn features(&self) -> &[T];
    fn label(&self) -> Label;
}

impl<T> Labeled<T> for (Vec<T>, Label) {
    fn features(&self) -> &[T] {
        &self.0
    }

    fn label(&self) -> Label {
        self.1
    }
}

impl<T, L: Labeled<T>> Labeled<T> for &L {
    fn features(&self) -> &[T] {
        (*self).features()
    }

    fn label(&self) -> Label {
        (*self).label()
    }
}
