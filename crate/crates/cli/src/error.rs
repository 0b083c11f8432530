use thiserror::Error;
use valmetric_core::dataset::DatasetError;
use valmetric_core::features::FeatureError;
use valmetric_core::pipeline::PipelineError;
use valmetric_core::regress::RegressError;
use valmetric_core::series::SeriesError;
use valmetric_core::studies::StudyError;
use valmetric_core::universe::UniverseError;
use valmetric_service::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 3,
            ErrorKind::Data => 4,
            ErrorKind::Numerical => 5,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

fn classify<E: std::fmt::Display>(kind: ErrorKind, e: E) -> CliError {
    CliError {
        kind,
        message: e.to_string(),
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        classify(ErrorKind::Data, e)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        classify(ErrorKind::Data, e)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        classify(ErrorKind::Data, e)
    }
}

impl From<UniverseError> for CliError {
    fn from(e: UniverseError) -> Self {
        let kind = match e {
            UniverseError::InvalidConfig(_) | UniverseError::Resolution { .. } => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        classify(kind, e)
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        let kind = match e {
            FeatureError::InvalidThreshold(_) | FeatureError::InvalidFraction(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        classify(kind, e)
    }
}

impl From<RegressError> for CliError {
    fn from(e: RegressError) -> Self {
        let kind = match e {
            RegressError::NoConvergence { .. } | RegressError::ZeroLabelVariance => ErrorKind::Numerical,
            RegressError::InvalidAlpha(_) | RegressError::InvalidPenalty(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        classify(kind, e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Feature(e) => e.into(),
            PipelineError::Regress(e) => e.into(),
            PipelineError::InvalidConfig(_) => classify(ErrorKind::Config, e),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Invalid(_) => classify(ErrorKind::Config, e),
            StudyError::Repeat {
                parameter,
                value,
                repeat,
                source,
            } => CliError::from(source).context(&format!("{parameter} = {value}, repeat {repeat}")),
            StudyError::Universe(e) => e.into(),
            StudyError::Feature(e) => e.into(),
            StudyError::Pipeline(e) => e.into(),
            StudyError::Dataset(e) => e.into(),
            StudyError::Csv(_) => classify(ErrorKind::Data, e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        classify(ErrorKind::Data, e)
    }
}
