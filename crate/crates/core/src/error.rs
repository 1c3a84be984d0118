use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised by the kernels, generators, solvers and oracles.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("triangular matrix is singular: |r[{index},{index}]| below 1e-300")]
    SingularTriangular { index: usize },
    #[error("linear system is singular: pivot {index} below 1e-300")]
    SingularSystem { index: usize },
    #[error("matrix is not positive definite: pivot {index} is {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric: relative asymmetry {0:e}")]
    NotSymmetric(f64),
    #[error("matrix is numerically rank deficient: sigma_min / sigma_max = {0:e}")]
    RankDeficient(f64),
    #[error("columns are not orthonormal: ||Q^T Q - I||_F = {0:e}")]
    NotOrthonormal(f64),

    #[error("residual direction underflowed after {attempts} attempts")]
    DegenerateResidual { attempts: usize },
    #[error("sketch is rank deficient: min |diag(R_s)| = {min_diag:e}, tolerance {tolerance:e}")]
    RankDeficientSketch { min_diag: f64, tolerance: f64 },
    #[error("eta undefined: kappa(R_s) * epsilon = {0:e} >= 1")]
    EtaUndefined(f64),
    #[error("computed solution is zero")]
    ZeroSolution,
    #[error("perturbation hypothesis violated: kappa(R_s) * epsilon = {0:e} >= 1")]
    HypothesisViolated(f64),

    #[error("matrix market parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the arithmetic itself, as opposed to bad input or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularTriangular { .. }
                | Error::SingularSystem { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NotSymmetric(_)
                | Error::RankDeficient(_)
                | Error::NotOrthonormal(_)
                | Error::DegenerateResidual { .. }
                | Error::RankDeficientSketch { .. }
                | Error::EtaUndefined(_)
                | Error::ZeroSolution
                | Error::HypothesisViolated(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Parse { .. })
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimensions(_) => "InvalidDimensions",
            Error::NonFinite { .. } => "NonFinite",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::SingularTriangular { .. } => "SingularTriangular",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NotSymmetric(_) => "NotSymmetric",
            Error::RankDeficient(_) => "RankDeficient",
            Error::NotOrthonormal(_) => "NotOrthonormal",
            Error::DegenerateResidual { .. } => "DegenerateResidual",
            Error::RankDeficientSketch { .. } => "RankDeficientSketch",
            Error::EtaUndefined(_) => "EtaUndefined",
            Error::ZeroSolution => "ZeroSolution",
            Error::HypothesisViolated(_) => "HypothesisViolated",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
