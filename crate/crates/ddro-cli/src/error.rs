use std::path::PathBuf;

use ddro::DdroError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ddro(#[from] DdroError),

    #[error("invalid {field}: {message}")]
    Usage { field: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CliError {
    pub fn usage(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Usage {
            field: field.into(),
            message: message.into(),
        }
    }

    /// 2 for bad inputs, 1 for numeric failures and I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Ddro(e) if e.is_validation() => 2,
            CliError::Ddro(_) => 1,
            CliError::Usage { .. } | CliError::Json { .. } => 2,
            CliError::Io { .. } => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_inputs_from_failures() {
        assert_eq!(CliError::from(DdroError::validation("alpha", "out of range")).exit_code(), 2);
        assert_eq!(CliError::from(DdroError::SupportBoxRequired).exit_code(), 2);
        assert_eq!(CliError::from(DdroError::numeric("stalled")).exit_code(), 1);
        assert_eq!(CliError::usage("eps", "missing").exit_code(), 2);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::Io { path: "x.csv".into(), source: io }.exit_code(), 1);
        let json = serde_json::from_str::<f64>("nope").unwrap_err();
        assert_eq!(CliError::Json { path: "p.json".into(), source: json }.exit_code(), 2);
    }

    #[test]
    fn usage_message_names_the_field() {
        assert_eq!(CliError::usage("nb", "must be positive").to_string(), "invalid nb: must be positive");
    }
}
