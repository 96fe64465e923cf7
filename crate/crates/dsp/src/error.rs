use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("invalid frequency: {0} Hz")]
    InvalidFrequency(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid augmentation: {0}")]
    InvalidAugment(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;
