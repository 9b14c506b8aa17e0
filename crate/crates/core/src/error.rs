use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported Stevens operator O_{k}^{q}")]
    UnsupportedOperator { k: u32, q: u32 },
    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("field window [{lo}, {hi}] T lies outside the sweep grid [{grid_lo}, {grid_hi}] T")]
    Range { lo: f64, hi: f64, grid_lo: f64, grid_hi: f64 },
    #[error("ground doublet of ion {ion} is not isolated: gap to first excited level {gap:.4} cm^-1 < {required} cm^-1")]
    DoubletIsolation { ion: usize, gap: f64, required: f64 },
    #[error("electronic state not polarized at {field} T: manifold gap {gap:.4} cm^-1 < {required} cm^-1")]
    Polarization { field: f64, gap: f64, required: f64 },
    #[error("rank-deficient fit: {0}")]
    Rank(String),
    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
