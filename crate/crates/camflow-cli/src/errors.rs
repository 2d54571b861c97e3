//! CLI error type and the exit-code classification of library errors.
//!
//! The contract is total: usage problems exit 1, data/format problems
//! exit 2, numerical failures exit 3. Success is 0 (including `--help`
//! and `--version`).

use std::fmt;

use camflow::basis::BasisError;
use camflow::evaluation::EvalError;
use camflow::geometry::GeometryError;
use camflow::imaging::ImagingError;
use camflow::io::FloError;
use camflow::robustfit::FitError;
use camflow::synth::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, flag combinations, config values: exit 1.
    Usage,
    /// Unreadable, malformed, or mutually inconsistent data: exit 2.
    Data,
    /// The computation itself failed (degeneracy, non-finite): exit 3.
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Usage,
            msg: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Data,
            msg: msg.into(),
        }
    }

    pub fn code(&self) -> i32 {
        match self.kind {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Numeric => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.msg)
    }
}

fn geometry_kind(e: &GeometryError) -> Kind {
    match e {
        // Shape and cardinality problems are bad input data.
        GeometryError::EmptyGrid { .. }
        | GeometryError::LengthMismatch { .. }
        | GeometryError::GridMismatch { .. }
        | GeometryError::PairLengthMismatch { .. }
        | GeometryError::TooFewPairs { .. }
        | GeometryError::TooFewSamples { .. }
        | GeometryError::TooManySamples { .. } => Kind::Data,
        // Everything else is the math failing on plausible data.
        _ => Kind::Numeric,
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        Self {
            kind: geometry_kind(&e),
            msg: e.to_string(),
        }
    }
}

impl From<FloError> for CliError {
    fn from(e: FloError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<BasisError> for CliError {
    fn from(e: BasisError) -> Self {
        let kind = match &e {
            BasisError::InvalidSpec(_) => Kind::Usage,
            BasisError::Geometry(g) => geometry_kind(g),
            BasisError::Flo(_)
            | BasisError::Io { .. }
            | BasisError::Manifest { .. }
            | BasisError::ChecksumMismatch { .. } => Kind::Data,
            BasisError::DegenerateGrid { .. }
            | BasisError::RankDeficient { .. }
            | BasisError::SamplingExhausted { .. } => Kind::Numeric,
        };
        Self {
            kind,
            msg: e.to_string(),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        let kind = match &e {
            FitError::BadConfig(_) => Kind::Usage,
            FitError::Geometry(g) => geometry_kind(g),
            FitError::WeightLength { .. }
            | FitError::GridMismatch { .. }
            | FitError::ShapeMismatch { .. }
            | FitError::EmptyValidSet
            | FitError::NotEnoughValidPixels { .. } => Kind::Data,
            FitError::RankDeficient | FitError::NonFiniteNll => Kind::Numeric,
        };
        Self {
            kind,
            msg: e.to_string(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let kind = match &e {
            EvalError::Geometry(g) => geometry_kind(g),
            _ => Kind::Data,
        };
        Self {
            kind,
            msg: e.to_string(),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let kind = match &e {
            SynthError::Geometry(g) => geometry_kind(g),
            _ => Kind::Data,
        };
        Self {
            kind,
            msg: e.to_string(),
        }
    }
}
