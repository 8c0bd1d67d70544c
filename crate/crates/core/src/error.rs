use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not skew-symmetric (‖S + Sᵀ‖ = {0:e})")]
    NotSkew(f64),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown frame {0}")]
    UnknownFrame(String),
    #[error("unsupported model schema `{0}`")]
    Schema(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("state dimension {got} does not match model dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("failed to parse model document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("model I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("mass matrix solve failed (condition number {condition:e})")]
    MassMatrix { condition: f64 },
    #[error("non-finite state after integration step")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("task Jacobian is rank deficient (singular values {singular_values:?})")]
    Singular { singular_values: Vec<f64> },
    #[error("null-space inertia Z M Zᵀ is ill-conditioned (condition number {condition:e})")]
    Conditioning { condition: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("send index regression on {stream}: expected {expected}, got {got}")]
    IndexRegression {
        stream: &'static str,
        expected: u64,
        got: u64,
    },
    #[error("invalid delay profile: {0}")]
    Profile(String),
}

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<crate::robot::StepError> for TeleopError {
    fn from(e: crate::robot::StepError) -> Self {
        match e {
            crate::robot::StepError::Model(e) => TeleopError::Model(e),
            crate::robot::StepError::Dynamics(e) => TeleopError::Dynamics(e),
        }
    }
}
