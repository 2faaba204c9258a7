//! Named coefficient presets shared by the command-line driver and tests.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::SpinorField;
use crate::matcore::{sigma_x, sigma_y, sigma_z, ComplexMatrix};
use crate::oracle::{gaussian_packet, CoefficientFn, ConvergenceProblem, InitialFn};
use crate::relativity::{minkowski_tetrad, standard_gammas, tetrad_to_coeffs};
use crate::synth::{split_coefficients, CoefficientField};

pub const PACKET_WIDTH: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// `B1 = sigma_z`, `C = m sigma_x` (zero by default).
    Flat1d,
    /// `B1 = sigma_z`, `C = m sigma_x` with `m = 1` by default.
    FlatMassive1d,
    /// `B1 = 0.5 (1 + 0.3 sin X) sigma_z`, `C = m sigma_x`.
    Curved1d,
    /// `B1 = sigma_x`, `sigma_z` on the two axes, `C = m sigma_y`.
    Flat2d,
    /// Flat Dirac coefficients `B1 = -alpha^i`, `C = -m beta`.
    Minkowski3d,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Flat1d,
        Scenario::FlatMassive1d,
        Scenario::Curved1d,
        Scenario::Flat2d,
        Scenario::Minkowski3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Flat1d => "flat-1d",
            Scenario::FlatMassive1d => "flat-massive-1d",
            Scenario::Curved1d => "curved-1d",
            Scenario::Flat2d => "flat-2d",
            Scenario::Minkowski3d => "minkowski-3d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn ndim(self) -> usize {
        match self {
            Scenario::Flat2d => 2,
            Scenario::Minkowski3d => 3,
            _ => 1,
        }
    }

    pub fn spin_dim(self) -> usize {
        match self {
            Scenario::Minkowski3d => 4,
            _ => 2,
        }
    }

    pub fn default_mass(self) -> f64 {
        match self {
            Scenario::FlatMassive1d | Scenario::Minkowski3d => 1.0,
            _ => 0.0,
        }
    }

    /// `X -> (B1 per axis, C)`.
    pub fn coefficients(self, mass: f64) -> CoefficientFn {
        match self {
            Scenario::Flat1d | Scenario::FlatMassive1d => {
                let c = sigma_x().scale_real(mass);
                Arc::new(move |_| (vec![sigma_z()], c.clone()))
            }
            Scenario::Curved1d => {
                let c = sigma_x().scale_real(mass);
                Arc::new(move |x| (vec![sigma_z().scale_real(0.5 * (1.0 + 0.3 * x[0].sin()))], c.clone()))
            }
            Scenario::Flat2d => {
                let c = sigma_y().scale_real(mass);
                Arc::new(move |_| (vec![sigma_x(), sigma_z()], c.clone()))
            }
            Scenario::Minkowski3d => {
                let g = standard_gammas();
                let b: Vec<ComplexMatrix> = (1..4).map(|i| g.alpha[i].scale_real(-1.0)).collect();
                let c = g.beta.scale_real(-mass);
                Arc::new(move |_| (b.clone(), c.clone()))
            }
        }
    }

    /// One walk field per axis. The Dirac preset goes through the tetrad
    /// route so that it exercises the same code as general tetrads.
    pub fn coefficient_fields(self, dims: &[usize], eps: f64, mass: f64) -> Result<Vec<CoefficientField>> {
        self.check_dims(dims)?;
        if self == Scenario::Minkowski3d {
            return tetrad_to_coeffs(&minkowski_tetrad(dims, eps, mass)?)?.coefficient_fields();
        }
        let f = self.coefficients(mass);
        let grid = crate::grid::Grid::new(dims)?;
        let mut b = vec![Vec::with_capacity(grid.len()); dims.len()];
        let mut c = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let (bs, cc) = f(&grid.position(i, eps));
            for (a, m) in bs.into_iter().enumerate() {
                b[a].push(m);
            }
            c.push(cc);
        }
        split_coefficients(dims, eps, b, &c)
    }

    pub fn check_dims(self, dims: &[usize]) -> Result<()> {
        if dims.len() != self.ndim() {
            return Err(Error::InvalidArgument(format!(
                "scenario {} is {}-dimensional but {} extents were given",
                self.name(),
                self.ndim(),
                dims.len()
            )));
        }
        Ok(())
    }

    /// Unit-norm Gaussian packet centred in the box `[0, eps N)^n`.
    pub fn initial_packet(self, length: f64) -> InitialFn {
        let k = self.spin_dim();
        let chi = vec![Complex64::new(1.0, 0.0); k];
        gaussian_packet(vec![0.5 * length; self.ndim()], PACKET_WIDTH, chi)
    }

    pub fn initial_state(self, dims: &[usize], eps: f64) -> Result<SpinorField> {
        self.check_dims(dims)?;
        let f = self.initial_packet(eps * dims[0] as f64);
        SpinorField::from_fn(dims, self.spin_dim(), eps, |x| f(x))
    }

    /// Walk-versus-reference experiment on `[0, 2 pi)^n`.
    pub fn convergence_problem(self, mass: f64, t_final: f64, reference_sites: usize) -> ConvergenceProblem {
        ConvergenceProblem {
            ndim: self.ndim(),
            spin_dim: self.spin_dim(),
            length: 2.0 * PI,
            t_final,
            reference_sites,
            coefficients: self.coefficients(mass),
            initial: self.initial_packet(2.0 * PI),
        }
    }
}
