use muse_autograd::GraphError;

#[derive(Debug, thiserror::Error)]
pub enum MuseError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: si_sdr term {si_sdr_term}, ce term {ce_term}")]
    NonFinite { epoch: usize, batch: usize, si_sdr_term: f64, ce_term: f64 },
}

pub type Result<T> = std::result::Result<T, MuseError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MuseError::Invalid(msg.into()))
}
