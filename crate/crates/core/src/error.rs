use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid curve or grid geometry.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// The normals meeting at a corner cancel out.
    #[error("degenerate corner at ({x}, {y}): normals sum to zero")]
    DegenerateCorner { x: f64, y: f64 },
    /// Ray tangent to the interface; no refraction is defined.
    #[error("grazing incidence: ray is tangent to the interface")]
    GrazingIncidence,
    /// No usable measurement survived filtering.
    #[error("no valid rays left after filtering")]
    EmptyData,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
