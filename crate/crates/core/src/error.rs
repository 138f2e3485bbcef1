use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error("invalid Fock specification: {0}")]
    InvalidSpec(String),

    #[error("incompatible operands: {0}")]
    Mismatch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("matrix is not hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not antisymmetric")]
    NotAntisymmetric,

    #[error("singular matrix")]
    Singular,

    #[error("non-finite value encountered")]
    NonFinite,

    #[error("operation requires bosonic statistics")]
    RequiresBose,

    #[error("cutoff too small in mode {mode}: need at least {required}")]
    CutoffTooSmall { mode: usize, required: usize },

    #[error("degree {degree} exceeds cap {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error("composition requires an even argument")]
    OddArgument,

    #[error("need {required} derivatives, got {supplied}")]
    InsufficientDerivatives { required: usize, supplied: usize },

    #[error("tolerance {tol:e} not reached (achieved {achieved:e}){hint}")]
    Tolerance {
        tol: f64,
        achieved: f64,
        hint: String,
    },

    #[error("spectral gap {gap:e} below threshold at s = {s}")]
    GapCollapse { gap: f64, s: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("generator has an eigenvalue with real part {re:e}")]
    NonImaginarySpectrum { re: f64 },

    #[error("symbol mass at grid boundary {mass:e} exceeds {limit:e}")]
    BoundaryMass { mass: f64, limit: f64 },

    #[error("window {window} gives resolution {resolution:e}, coarser than requested {requested:e}")]
    WindowTooShort {
        window: f64,
        resolution: f64,
        requested: f64,
    },

    #[error("state does not commute with the Hamiltonian (defect {defect:e})")]
    NotStationary { defect: f64 },

    #[error("zero vector")]
    ZeroVector,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    /// True for failures of a numerical target (tolerance, step control, aliasing),
    /// as opposed to rejected inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Tolerance { .. }
                | Error::GapCollapse { .. }
                | Error::StepUnderflow { .. }
                | Error::BoundaryMass { .. }
                | Error::NonFinite
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::ModeOutOfRange { .. } => "mode_out_of_range",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Mismatch(_) => "mismatch",
            Error::Dimension(_) => "dimension",
            Error::InvalidDensity(_) => "invalid_density",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::NotAntisymmetric => "not_antisymmetric",
            Error::Singular => "singular",
            Error::NonFinite => "non_finite",
            Error::RequiresBose => "requires_bose",
            Error::CutoffTooSmall { .. } => "cutoff_too_small",
            Error::DegreeCap { .. } => "degree_cap",
            Error::OddArgument => "odd_argument",
            Error::InsufficientDerivatives { .. } => "insufficient_derivatives",
            Error::Tolerance { .. } => "tolerance",
            Error::GapCollapse { .. } => "gap_collapse",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::NonImaginarySpectrum { .. } => "non_imaginary_spectrum",
            Error::BoundaryMass { .. } => "boundary_mass",
            Error::WindowTooShort { .. } => "window_too_short",
            Error::NotStationary { .. } => "not_stationary",
            Error::ZeroVector => "zero_vector",
            Error::Parse(_) => "parse",
            Error::Invalid(_) => "invalid",
        }
    }
}
