use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("queue is unstable: arrival rate {rho} >= service rate {mu}")]
    Unstable { rho: f64, mu: f64 },
    #[error("node has {rho} bit/s of offered traffic but no service")]
    Starvation { rho: f64 },
    #[error("structural error: {0}")]
    Structure(String),
    #[error("enumeration of {count} assignments exceeds the cap of {cap}; raise the cap to proceed")]
    EnumerationCap { count: u128, cap: u128 },
    #[error("parse error in {file}: {msg}")]
    Parse { file: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
