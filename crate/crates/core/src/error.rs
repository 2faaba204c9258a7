use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not hermitian: |A - A^H|_F = {defect:.3e}")]
    NotHermitian { defect: f64 },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    /// A transport coefficient has an eigenvalue outside [-1, 1]: the target
    /// PDE propagates faster than the lattice light cone.
    #[error(
        "superluminal coefficient: eigenvalue {eigenvalue:.6} has modulus above 1{}",
        site.map(|s| format!(" at site {s}")).unwrap_or_default()
    )]
    Superluminal { eigenvalue: f64, site: Option<usize> },

    #[error(
        "superluminal coefficient: max |eigenvalue| = {max_abs_eigenvalue:.6} at site {site}; \
         rescale coordinates by a factor of at least {rescale:.6} so the physical light cone fits the lattice"
    )]
    SuperluminalTetrad {
        max_abs_eigenvalue: f64,
        site: usize,
        rescale: f64,
    },

    #[error("degenerate tetrad: e^0_0 = {value:.3e} at site {site} (must be > 0)")]
    DegenerateTetrad { value: f64, site: usize },

    #[error("synthesis failed at site {site}: residual {residual} = {value:.3e} exceeds {bound:.1e}")]
    Synthesis {
        site: usize,
        residual: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("internal consistency check failed: {name} = {value:.3e} exceeds {bound:.1e}")]
    Consistency { name: &'static str, value: f64, bound: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stability limit violated: {0}")]
    Stability(String),

    #[error("malformed QWF data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
