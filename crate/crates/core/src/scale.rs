use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear super-resolution factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Scale {
    X2,
    X4,
    X8,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::X2, Scale::X4, Scale::X8];

    pub fn factor(self) -> usize {
        match self {
            Scale::X2 => 2,
            Scale::X4 => 4,
            Scale::X8 => 8,
        }
    }

    /// Number of 2x upsampling stages.
    pub fn stages(self) -> usize {
        self.factor().trailing_zeros() as usize
    }
}

impl TryFrom<u32> for Scale {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        match v {
            2 => Ok(Scale::X2),
            4 => Ok(Scale::X4),
            8 => Ok(Scale::X8),
            other => Err(Error::InvalidArgument(format!(
                "scale must be one of 2, 4, 8; got {other}"
            ))),
        }
    }
}

impl From<Scale> for u32 {
    fn from(s: Scale) -> u32 {
        s.factor() as u32
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x", self.factor())
    }
}
