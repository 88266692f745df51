use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(&'static str),
    #[error("degenerate grasp: width must be positive")]
    DegenerateGrasp,
    #[error("angle undefined for zero sin/cos components")]
    UndefinedAngle,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("no valid depth near pixel (x={x}, y={y})")]
    NoDepth { x: f64, y: f64 },
    #[error("invalid extrinsic: {0}")]
    InvalidExtrinsic(&'static str),
}
