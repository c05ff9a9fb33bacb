use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Breitenlohner-Freedman bound violated: (n-1)^2 + 4 m^2 = {value} <= 0 (n = {n}, m^2 = {mass_sq})")]
    BfViolation { n: usize, mass_sq: f64, value: f64 },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("boundary symbol rejected: {0}")]
    HypothesisViolation(String),

    #[error("Frobenius fit residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    FitDiverged { residual: f64, threshold: f64 },

    #[error("bracket search exhausted for l = {ell}: {detail}")]
    BracketExhausted { ell: usize, detail: String },

    #[error("degenerate or skipped root for l = {ell} near omega^2 = {omega_sq}")]
    DegenerateRoot { ell: usize, omega_sq: f64 },

    #[error("negative mode at l = {ell}: omega^2 = {omega_sq}")]
    NegativeMode { ell: usize, omega_sq: f64 },

    #[error("quadrature self-estimate {estimate:.3e} exceeds tolerance {tolerance:.3e}")]
    GridTooCoarse { estimate: f64, tolerance: f64 },

    #[error("cutoff window not resolved: {0}")]
    WindowTooNarrow(String),

    #[error("wavepacket dispersed at t = {time:.4}: localized fraction {fraction:.3}")]
    PacketDispersed { time: f64, fraction: f64 },

    #[error("CFL violation: dtau = {dtau:.3e} > limit {limit:.3e}")]
    CflViolation { dtau: f64, limit: f64 },

    #[error("boundary closure diverged at tau = {tau:.4}")]
    ClosureDiverged { tau: f64 },

    #[error("window overlap: {0}")]
    WindowOverlap(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// Strips any stage wrapper.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
