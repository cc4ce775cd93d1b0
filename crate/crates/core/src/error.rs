use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid feature space: {0}")]
    InvalidFeatureSpace(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("feature index {index} out of bounds for {count} features")]
    FeatureIndex { index: usize, count: usize },

    #[error("output index {index} out of bounds for {count} outputs")]
    OutputIndex { index: usize, count: usize },

    #[error("unknown feature '{0}'")]
    UnknownFeature(String),

    #[error("feature '{0}' is categorical; a numeric feature is required")]
    CategoricalFeature(String),

    #[error("degenerate output range: {0}")]
    DegenerateRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    #[error("predictor failed: {0}")]
    Predictor(String),

    #[error("singular weighted system: {0}")]
    Singular(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than by
    /// the model or the data at run time.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidFeatureSpace(_)
                | Error::InvalidInstance(_)
                | Error::FeatureIndex { .. }
                | Error::OutputIndex { .. }
                | Error::UnknownFeature(_)
                | Error::CategoricalFeature(_)
                | Error::InvalidArgument(_)
                | Error::UnknownMethod(_)
                | Error::MissingColumn(_)
        )
    }
}
