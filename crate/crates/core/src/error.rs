use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse {what} from token {token:?}")]
    Parse { what: &'static str, token: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("model does not match data: {0}")]
    SpecMismatch(String),

    #[error("estimation did not converge after {iterations} iterations (relative gradient {gradient:.3e}): {message}")]
    NonConvergence {
        iterations: usize,
        gradient: f64,
        message: String,
        best: Vec<f64>,
    },

    #[error("singular Hessian at the optimum ({0}); consider dropping or fixing parameters")]
    SingularHessian(String),

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("{component} failed: {source}")]
    Component {
        component: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_component(self, component: impl Into<String>) -> Self {
        Error::Component {
            component: component.into(),
            source: Box::new(self),
        }
    }
}
