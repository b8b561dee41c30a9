use thiserror::Error;

/// Errors raised while sampling fractional Gaussian noise.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FgnError {
    #[error("Hurst index must lie in the open interval (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("covariance matrix is numerically degenerate: {0}")]
    NumericalDegeneracy(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FouError {
    #[error("invalid fOU parameter: {0}")]
    InvalidParameter(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error(transparent)]
    Fgn(#[from] FgnError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HurstError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QgvError {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("input too short: {0}")]
    TooShort(String),
    #[error("insufficient variation: {0}")]
    InsufficientVariation(String),
    #[error("filter inconsistency: {0}")]
    FilterInconsistency(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MortalityError {
    #[error("invalid cohort series: {0}")]
    InvalidSeries(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Hurst(#[from] HurstError),
    #[error(transparent)]
    Qgv(#[from] QgvError),
    #[error(transparent)]
    Fou(#[from] FouError),
    #[error(transparent)]
    Fgn(#[from] FgnError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("gap in requested window, missing years {missing:?}")]
    Gap { missing: Vec<i32> },
    #[error(transparent)]
    Mortality(#[from] MortalityError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// Any error produced by this crate, tagged by the module that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Fgn(#[from] FgnError),
    #[error(transparent)]
    Fou(#[from] FouError),
    #[error(transparent)]
    Hurst(#[from] HurstError),
    #[error(transparent)]
    Qgv(#[from] QgvError),
    #[error(transparent)]
    Mortality(#[from] MortalityError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl Error {
    /// Name of the module where the error originated, following wrapped
    /// errors down to their source.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Fgn(_) => "fgn",
            Error::Fou(FouError::Fgn(_)) => "fgn",
            Error::Fou(_) => "fou",
            Error::Hurst(_) => "hurst",
            Error::Qgv(_) => "qgv",
            Error::Mortality(e) => mortality_origin(e),
            Error::Data(DataError::Mortality(e)) => mortality_origin(e),
            Error::Data(_) => "data",
        }
    }

    /// Short machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Fgn(e) => fgn_kind(e),
            Error::Fou(e) => fou_kind(e),
            Error::Hurst(e) => hurst_kind(e),
            Error::Qgv(e) => qgv_kind(e),
            Error::Mortality(e) => mortality_kind(e),
            Error::Data(e) => match e {
                DataError::Parse(_) => "parse",
                DataError::NotFound(_) => "not_found",
                DataError::Gap { .. } => "gap",
                DataError::Mortality(m) => mortality_kind(m),
                DataError::Io(_) => "io",
            },
        }
    }
}

fn mortality_origin(e: &MortalityError) -> &'static str {
    match e {
        MortalityError::Hurst(_) => "hurst",
        MortalityError::Qgv(_) => "qgv",
        MortalityError::Fou(FouError::Fgn(_)) | MortalityError::Fgn(_) => "fgn",
        MortalityError::Fou(_) => "fou",
        _ => "mortality",
    }
}

fn fgn_kind(e: &FgnError) -> &'static str {
    match e {
        FgnError::InvalidHurst(_) => "invalid_hurst",
        FgnError::InvalidArgument(_) => "invalid_argument",
        FgnError::NumericalDegeneracy(_) => "numerical_degeneracy",
    }
}

fn fou_kind(e: &FouError) -> &'static str {
    match e {
        FouError::InvalidParameter(_) => "invalid_parameter",
        FouError::Quadrature(_) => "quadrature",
        FouError::Fgn(f) => fgn_kind(f),
    }
}

fn hurst_kind(e: &HurstError) -> &'static str {
    match e {
        HurstError::InsufficientData(_) => "insufficient_data",
        HurstError::InvalidArgument(_) => "invalid_argument",
        HurstError::NumericalDegeneracy(_) => "numerical_degeneracy",
    }
}

fn qgv_kind(e: &QgvError) -> &'static str {
    match e {
        QgvError::InvalidFilter(_) => "invalid_filter",
        QgvError::TooShort(_) => "too_short",
        QgvError::InsufficientVariation(_) => "insufficient_variation",
        QgvError::FilterInconsistency(_) => "filter_inconsistency",
        QgvError::InvalidArgument(_) => "invalid_argument",
    }
}

fn mortality_kind(e: &MortalityError) -> &'static str {
    match e {
        MortalityError::InvalidSeries(_) => "invalid_series",
        MortalityError::InvalidArgument(_) => "invalid_argument",
        MortalityError::Hurst(h) => hurst_kind(h),
        MortalityError::Qgv(q) => qgv_kind(q),
        MortalityError::Fou(f) => fou_kind(f),
        MortalityError::Fgn(f) => fgn_kind(f),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_follows_wrapped_source() {
        let e: Error = MortalityError::from(QgvError::InsufficientVariation("v".into())).into();
        assert_eq!(e.module(), "qgv");
        assert_eq!(e.kind(), "insufficient_variation");
        let e: Error = FouError::from(FgnError::InvalidHurst(1.5)).into();
        assert_eq!(e.module(), "fgn");
        let e: Error = DataError::Gap {
            missing: vec![1960],
        }
        .into();
        assert_eq!(e.module(), "data");
        assert_eq!(e.kind(), "gap");
    }
}
