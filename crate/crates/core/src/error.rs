use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A measure, schedule, set function or experiment is misconfigured.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical evaluation did not reach its tolerance within budget.
    #[error("evaluation error: {message} (best estimate {estimate:e}, error bound {bound:e})")]
    Evaluation {
        message: String,
        estimate: f64,
        bound: f64,
    },

    #[error("enumeration budget of {budget} cubes exceeded at level {level}")]
    Budget { budget: usize, level: u32 },

    /// The descendant supremum of a set function cannot be certified finite.
    #[error("set function diverges: per-level tail factor {factor:.6} >= 1 ({regime})")]
    Divergent { factor: f64, regime: CriticalRegime },

    /// An operation's precondition does not hold for the given input.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Adaptive subdivision ran out of depth with bad cubes left.
    #[error("subdivision did not terminate within depth {depth}; deepest bad cube at level {level} with value {value:e}")]
    NoTermination { depth: u32, level: u32, value: f64 },

    #[error("io error: {0}")]
    Io(String),

    /// An experiment task failed; `task` names the stage.
    #[error("{task}: {source}")]
    Task { task: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_task(self, task: &str) -> Error {
        Error::Task {
            task: task.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, below any task context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Task { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

/// Classification of a set function whose tail factor is not below one,
/// read off the heaviest-cube chain `sup_Q ν(Q)^b Λ(Q)^a` over levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalRegime {
    /// Chain values grow without bound: no continuous Sobolev embedding.
    NotContinuous,
    /// Chain values stay bounded away from zero: embedding continuous, not compact.
    NotCompact,
    /// Chain values vanish, but too slowly to certify a geometric tail.
    Subgeometric,
    /// No chain probe available (e.g. the model gave no decay information).
    Unknown,
}

impl std::fmt::Display for CriticalRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CriticalRegime::NotContinuous => {
                "dim_inf(nu) <= d-2 with unbounded chain: Sobolev space does not embed continuously into L2(nu)"
            }
            CriticalRegime::NotCompact => {
                "dim_inf(nu) <= d-2 with non-vanishing chain: embedding into L2(nu) is not compact"
            }
            CriticalRegime::Subgeometric => {
                "dim_inf(nu) <= d-2: chain vanishes only sub-geometrically, condition dim_inf(nu) > d-2 fails"
            }
            CriticalRegime::Unknown => "no certified decay modulus for this model",
        };
        f.write_str(s)
    }
}
