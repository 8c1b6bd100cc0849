//! Exit codes and the machine-readable error line.

use std::fmt;

use c2g::augment::AugmentError;
use c2g::compressor::CompressError;
use c2g::container::ContainerError;
use c2g::ingest::IngestError;
use c2g::model::ModelError;
use c2g::nn::NnError;
use c2g::preview::PreviewError;
use c2g::synth::SynthError;
use c2g::train::TrainError;
use serde::Serialize;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Bad invocation: flags, config keys or config values.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Usage,
    Data,
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => EXIT_USAGE,
            Self::Data => EXIT_DATA,
            Self::Internal => EXIT_INTERNAL,
        }
    }
}

/// Usage if any cause is a [`UsageError`], data if any cause comes from
/// reading or processing inputs, internal otherwise.
pub fn classify(err: &anyhow::Error) -> Kind {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return Kind::Usage;
    }
    let data = err.chain().any(|e| {
        e.is::<std::io::Error>()
            || e.is::<serde_json::Error>()
            || e.is::<IngestError>()
            || e.is::<ContainerError>()
            || e.is::<CompressError>()
            || e.is::<ModelError>()
            || e.is::<AugmentError>()
            || e.is::<SynthError>()
            || e.is::<TrainError>()
            || e.is::<NnError>()
            || e.is::<PreviewError>()
    });
    if data {
        Kind::Data
    } else {
        Kind::Internal
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: Kind,
    code: i32,
    message: &'a str,
    causes: Vec<String>,
}

pub fn error_json(kind: Kind, message: &str, causes: Vec<String>) -> String {
    serde_json::to_string(&ErrorLine {
        error: ErrorBody {
            kind,
            code: kind.exit_code(),
            message,
            causes,
        },
    })
    .expect("error line serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn classification_follows_the_cause_chain() {
        let usage = anyhow::Error::new(UsageError("bad".into())).context("while loading");
        assert_eq!(classify(&usage), Kind::Usage);
        let io: anyhow::Result<()> = Err(std::io::Error::other("gone")).context("reading x");
        assert_eq!(classify(&io.unwrap_err()), Kind::Data);
        assert_eq!(classify(&anyhow::anyhow!("bug")), Kind::Internal);
    }

    #[test]
    fn error_line_is_json() {
        let line = error_json(Kind::Data, "no such file", vec!["a".into()]);
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"]["code"], 3);
        assert_eq!(v["error"]["kind"], "data");
    }
}
