//! Model names accepted in configuration files and written to reports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelKind {
    Persistence,
    Clearsky,
    SmartPersistence,
    Cliper,
    ExpSmoothing,
    Artu,
    Comb,
    Ar,
    Rar,
    Elm,
    Qr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 11] = [
        ModelKind::Persistence,
        ModelKind::Clearsky,
        ModelKind::SmartPersistence,
        ModelKind::Cliper,
        ModelKind::ExpSmoothing,
        ModelKind::Artu,
        ModelKind::Comb,
        ModelKind::Ar,
        ModelKind::Rar,
        ModelKind::Elm,
        ModelKind::Qr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Persistence => "P",
            ModelKind::Clearsky => "CS",
            ModelKind::SmartPersistence => "SP",
            ModelKind::Cliper => "CLIPER",
            ModelKind::ExpSmoothing => "ES",
            ModelKind::Artu => "ARTU",
            ModelKind::Comb => "COMB",
            ModelKind::Ar => "AR",
            ModelKind::Rar => "rAR",
            ModelKind::Elm => "ELM",
            ModelKind::Qr => "QR",
        }
    }

    /// Models that emit a quantile forecast alongside the point forecast.
    pub fn is_probabilistic(self) -> bool {
        matches!(self, ModelKind::Elm | ModelKind::Qr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model `{s}`")))
    }
}

impl TryFrom<String> for ModelKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModelKind> for String {
    fn from(m: ModelKind) -> String {
        m.name().to_string()
    }
}
