use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] pnlab_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl LabError {
    pub fn kind(&self) -> String {
        match self {
            Self::Config(_) => "config".into(),
            Self::Io(_) => "io".into(),
            Self::Output(_) => "output".into(),
            Self::Core(e) => {
                let dbg = format!("{e:?}");
                let end = dbg.find(|c: char| !c.is_alphanumeric()).unwrap_or(dbg.len());
                format!("core.{}", &dbg[..end])
            }
        }
    }

    /// Structured form written to manifests and stderr.
    pub fn to_json(&self) -> Value {
        json!({ "kind": self.kind(), "message": self.to_string() })
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        Self::Output(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        Self::Output(e.to_string())
    }
}
