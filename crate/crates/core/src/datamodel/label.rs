use std::fmt;
use std::str::FromStr;

use crate::error::{validation_err, Error, Result};

/// On-disk code for a frame without a valid annotation.
pub const MISSING_CODE: u8 = 255;

/// The eight expression categories, in their fixed index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Expression {
    Neutral = 0,
    Anger = 1,
    Disgust = 2,
    Fear = 3,
    Happiness = 4,
    Sadness = 5,
    Surprise = 6,
    Other = 7,
}

impl Expression {
    pub const ALL: [Expression; 8] = [
        Expression::Neutral,
        Expression::Anger,
        Expression::Disgust,
        Expression::Fear,
        Expression::Happiness,
        Expression::Sadness,
        Expression::Surprise,
        Expression::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Expression> {
        Self::ALL.get(i).copied()
    }

    /// Decodes a file label byte; `255` is a missing label.
    pub fn decode(code: u8) -> Result<Option<Expression>> {
        match code {
            MISSING_CODE => Ok(None),
            c if (c as usize) < Self::ALL.len() => Ok(Some(Self::ALL[c as usize])),
            c => Err(Error::Corruption(format!("label code {c} outside 0..=7 and 255"))),
        }
    }

    pub fn encode(label: Option<Expression>) -> u8 {
        label.map_or(MISSING_CODE, |e| e as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            Expression::Neutral => "Neutral",
            Expression::Anger => "Anger",
            Expression::Disgust => "Disgust",
            Expression::Fear => "Fear",
            Expression::Happiness => "Happiness",
            Expression::Sadness => "Sadness",
            Expression::Surprise => "Surprise",
            Expression::Other => "Other",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(i) = s.parse::<usize>() {
            return Expression::from_index(i).ok_or_else(|| validation_err!("label index {i} out of range"));
        }
        Expression::ALL
            .iter()
            .copied()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| validation_err!("unknown expression {s:?}"))
    }
}
