use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported image shape: {0}")]
    UnsupportedShape(String),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("duplicate tensor name {0:?}")]
    DuplicateTensor(String),
    #[error("incompatible checkpoints: {0}")]
    IncompatibleCheckpoints(String),
    #[error("interpolation weight {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("unknown label value {value} for scheme {scheme}")]
    UnknownLabel { value: u32, scheme: &'static str },
    #[error("empty mask")]
    EmptyMask,
    #[error("mask has {voxels} voxels, fewer than {k} components")]
    TooFewVoxels { voxels: usize, k: usize },
    #[error("missing parameters for class {0}")]
    MissingParams(u16),
    #[error("gamma must be positive, got {0}")]
    InvalidGamma(f64),
    #[error("invalid relaxometry: {0}")]
    InvalidRelaxometry(String),
    #[error("invalid sequence parameters: {0}")]
    InvalidSequence(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("empty sample")]
    EmptySample,
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable identifier used in machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Format(_) => "FormatError",
            Error::UnsupportedDatatype(_) => "UnsupportedDatatype",
            Error::UnsupportedShape(_) => "UnsupportedShape",
            Error::TruncatedFile(_) => "TruncatedFile",
            Error::DuplicateTensor(_) => "DuplicateTensor",
            Error::IncompatibleCheckpoints(_) => "IncompatibleCheckpoints",
            Error::InvalidAlpha(_) => "InvalidAlpha",
            Error::Geometry(_) => "GeometryError",
            Error::InvalidVolume(_) => "InvalidVolume",
            Error::UnknownLabel { .. } => "UnknownLabel",
            Error::EmptyMask => "EmptyMask",
            Error::TooFewVoxels { .. } => "TooFewVoxels",
            Error::MissingParams(_) => "MissingParams",
            Error::InvalidGamma(_) => "InvalidGamma",
            Error::InvalidRelaxometry(_) => "InvalidRelaxometry",
            Error::InvalidSequence(_) => "InvalidSequence",
            Error::InvalidRange(_) => "InvalidRange",
            Error::EmptySample => "EmptySample",
            Error::Config(_) => "ConfigError",
        }
    }
}
