use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("class {class} has no training examples")]
    MissingClass { class: usize },

    #[error("{}: {message}", location(path, *offset, *line))]
    Format {
        path: Option<PathBuf>,
        offset: Option<u64>,
        line: Option<usize>,
        message: String,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(path: &Option<PathBuf>, offset: Option<u64>, line: Option<usize>) -> String {
    let mut out = match path {
        Some(p) => p.display().to_string(),
        None => "<input>".to_string(),
    };
    if let Some(o) = offset {
        out.push_str(&format!(" at byte {o}"));
    }
    if let Some(l) = line {
        out.push_str(&format!(" line {l}"));
    }
    out
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format_at_offset(path: Option<PathBuf>, offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            path,
            offset: Some(offset),
            line: None,
            message: msg.into(),
        }
    }

    pub(crate) fn format_at_line(path: Option<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            path,
            offset: None,
            line: Some(line),
            message: msg.into(),
        }
    }
}
