use thiserror::Error;

/// Every failure mode of the laboratory, with a stable machine-readable code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("permutation pair is reducible")]
    ReduciblePermutation,
    #[error("length vector has a non-positive entry at index {0}")]
    NonPositiveLength(usize),
    #[error("point lies outside the interval domain")]
    OutOfDomain,
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("equal last lengths: Keane condition violated at this step")]
    TieAtStep,
    #[error("suspension vector left the admissible cone beyond tolerance")]
    InvalidTau,
    #[error("rejection sampling budget exceeded after {0} draws")]
    RejectionBudgetExceeded(usize),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("point sits on a tower floor boundary")]
    OnBoundary,
    #[error("stable norms are not decaying; series tail unusable")]
    NonDecayingTail,
    #[error("frame collapsed during orthonormalization")]
    FrameDegenerate,
    #[error("singular value gap too small at horizon {0}")]
    GapTooSmall(usize),
    #[error("unstable flag did not resolve")]
    FlagUnresolved,
    #[error("evaluation at a logarithmic singularity")]
    AtSingularity,
    #[error("pullback estimates are not converging")]
    NoConvergence,
    #[error("transfer function diagnostic unbounded (sup grew past {0})")]
    UnboundedDiagnostic(f64),
    #[error("no admissible singularity with nonzero constant for tower construction")]
    TowerConstructionFailed,
    #[error("starting point outside the good set for this time horizon")]
    OutsideGoodSet,
    #[error("no visits to the reference window")]
    EmptyDenominator,
    #[error("deviation series needs at least 8 points spanning 3 decades")]
    InsufficientRange,
    #[error("point count too deep for the recorded path")]
    DepthExceeded,
    #[error("internal consistency check failed: {0}")]
    InternalInconsistency(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing upstream artifact: {0}")]
    MissingUpstream(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable code for machine consumption (CLI artifacts and exit paths).
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            ReduciblePermutation => "reducible_permutation",
            NonPositiveLength(_) => "non_positive_length",
            OutOfDomain => "out_of_domain",
            PrecisionExhausted(_) => "precision_exhausted",
            TieAtStep => "tie_at_step",
            InvalidTau => "invalid_tau",
            RejectionBudgetExceeded(_) => "rejection_budget_exceeded",
            BudgetExceeded(_) => "budget_exceeded",
            OnBoundary => "on_boundary",
            NonDecayingTail => "non_decaying_tail",
            FrameDegenerate => "frame_degenerate",
            GapTooSmall(_) => "gap_too_small",
            FlagUnresolved => "flag_unresolved",
            AtSingularity => "at_singularity",
            NoConvergence => "no_convergence",
            UnboundedDiagnostic(_) => "unbounded_diagnostic",
            TowerConstructionFailed => "tower_construction_failed",
            OutsideGoodSet => "outside_good_set",
            EmptyDenominator => "empty_denominator",
            InsufficientRange => "insufficient_range",
            DepthExceeded => "depth_exceeded",
            InternalInconsistency(_) => "internal_inconsistency",
            ConfigInvalid(_) => "config_invalid",
            MissingUpstream(_) => "missing_upstream",
            Io(_) => "io",
            Json(_) => "json",
        }
    }

    /// CLI exit code: 2 config, 3 numerical, 4 budget.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            ConfigInvalid(_) | MissingUpstream(_) => 2,
            BudgetExceeded(_) | RejectionBudgetExceeded(_) | DepthExceeded => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
