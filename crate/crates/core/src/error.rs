use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input lies outside the domain of a projection or transform.
    #[error("domain error: {0}")]
    Domain(String),

    /// A coordinate or value is outside its permitted range.
    #[error("range error: {0}")]
    Range(String),

    /// A configuration document or parameter is invalid; `field` names the offender.
    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },

    /// The request is well-formed but too large to serve (e.g. exhaustive enumeration).
    #[error("refused: {0}")]
    TooLarge(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Parses a JSON document, reporting type and unknown-field errors as configuration
    /// errors that name the offending path (e.g. `srois[2].dP`).
    pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() || field == "." {
                Error::Json(inner)
            } else {
                Error::config(field, inner.to_string())
            }
        })
    }

    /// True for errors caused by user-supplied configuration rather than runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_))
    }
}
