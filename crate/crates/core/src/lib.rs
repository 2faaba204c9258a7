//! Paired quantum walks: synthesis of local coins and encodings from
//! hermitian coefficient fields, lattice evolution, tetrad-driven Dirac
//! coefficients and an independent reference integrator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod lattice;
pub mod matcore;
pub mod oracle;
pub mod qwf;
pub mod relativity;
pub mod sampling;
pub mod scenarios;
pub mod synth;

pub use error::{Error, Result};
pub use grid::Grid;
pub use lattice::{axis_step, evolve, full_step, GroupedField, SpinorField, Trajectory};
pub use matcore::{herm_eig, unitarity_defect, unitary_exp, ComplexMatrix, SpectralPair};
pub use num_complex::Complex64;
pub use oracle::{convergence_order, l2_error, reference_evolve, ConvergenceProblem, ConvergenceReport};
pub use qwf::{Payload, QwfArray};
pub use relativity::{minkowski_tetrad, tetrad_to_coeffs, DiracCoefficients, GammaSet, TetradField};
pub use scenarios::Scenario;
pub use synth::{synthesize_axis, CoefficientField, CoinSet, Residuals, SynthesisData};
