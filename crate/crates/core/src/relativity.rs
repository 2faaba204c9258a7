//! Dirac matrices and the map from a tetrad field with mass to the transport
//! fields `B1^(i)` and potential `C` of the Hamiltonian-form Dirac equation.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fd4_real, Grid};
use crate::matcore::{herm_eig, sigma_x, sigma_y, sigma_z, ComplexMatrix};
use crate::synth::{split_coefficients, CoefficientField, CLAMP_TOL};

/// Minkowski metric signature `(+, -, -, -)`.
pub const ETA: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

#[derive(Clone, Debug)]
pub struct GammaSet {
    /// `gamma^0 .. gamma^3`.
    pub gamma: [ComplexMatrix; 4],
    pub beta: ComplexMatrix,
    /// `alpha^mu = gamma^0 gamma^mu`, so `alpha^0 = I`.
    pub alpha: [ComplexMatrix; 4],
    pub gamma5: ComplexMatrix,
}

/// Dirac representation: `beta = diag(1, 1, -1, -1)`.
pub fn standard_gammas() -> GammaSet {
    let z2 = ComplexMatrix::zeros(2, 2);
    let i2 = ComplexMatrix::identity(2);
    let g0 = ComplexMatrix::from_blocks(&i2, &z2, &z2, &(-&i2));
    let spatial = |s: ComplexMatrix| ComplexMatrix::from_blocks(&z2, &s, &(-&s), &z2);
    let gamma = [g0.clone(), spatial(sigma_x()), spatial(sigma_y()), spatial(sigma_z())];
    let alpha = [&g0 * &gamma[0], &g0 * &gamma[1], &g0 * &gamma[2], &g0 * &gamma[3]];
    let gamma5 = (&(&(&gamma[0] * &gamma[1]) * &gamma[2]) * &gamma[3]).scale(Complex64::new(0.0, 1.0));
    GammaSet {
        beta: g0,
        gamma,
        alpha,
        gamma5,
    }
}

/// Tetrad `e^mu_a` per site of a three-dimensional lattice, stored row-major
/// with the spacetime index `mu` as the row.
#[derive(Clone, Debug)]
pub struct TetradField {
    grid: Grid,
    eps: f64,
    mass: f64,
    tetrads: Vec<[f64; 16]>,
}

impl TetradField {
    pub fn new(dims: &[usize], eps: f64, mass: f64, tetrads: Vec<[f64; 16]>) -> Result<Self> {
        let grid = Grid::new(dims)?;
        if grid.ndim() != 3 {
            return Err(Error::InvalidArgument(format!(
                "tetrad fields live on three spatial axes, got {}",
                grid.ndim()
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got {eps}"
            )));
        }
        if !mass.is_finite() {
            return Err(Error::InvalidArgument("mass must be finite".into()));
        }
        if tetrads.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} tetrads, got {}",
                grid.len(),
                tetrads.len()
            )));
        }
        if tetrads.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("tetrad entries must be finite".into()));
        }
        Ok(Self {
            grid,
            eps,
            mass,
            tetrads,
        })
    }

    /// Samples `f(X) -> e` at `X = eps * x`.
    pub fn from_fn(dims: &[usize], eps: f64, mass: f64, f: impl Fn(&[f64]) -> [f64; 16]) -> Result<Self> {
        let grid = Grid::new(dims)?;
        let t = (0..grid.len()).map(|i| f(&grid.position(i, eps))).collect();
        Self::new(dims, eps, mass, t)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> &[usize] {
        self.grid.dims()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn tetrads(&self) -> &[[f64; 16]] {
        &self.tetrads
    }

    /// `e^mu_a` at a site.
    #[inline]
    pub fn e(&self, site: usize, mu: usize, a: usize) -> f64 {
        self.tetrads[site][4 * mu + a]
    }

    fn check_time_frame(&self) -> Result<()> {
        for (site, t) in self.tetrads.iter().enumerate() {
            if !(t[0] > 0.0) {
                return Err(Error::DegenerateTetrad { value: t[0], site });
            }
        }
        Ok(())
    }
}

pub fn minkowski_tetrad(dims: &[usize], eps: f64, mass: f64) -> Result<TetradField> {
    TetradField::from_fn(dims, eps, mass, |_| identity_tetrad())
}

pub fn identity_tetrad() -> [f64; 16] {
    let mut e = [0.0; 16];
    for mu in 0..4 {
        e[5 * mu] = 1.0;
    }
    e
}

/// Static diagonal tetrad with `e^i_i = 1 / (1 + amplitude sin X^1)`.
pub fn diagonal_sine_tetrad(dims: &[usize], eps: f64, mass: f64, amplitude: f64) -> Result<TetradField> {
    TetradField::from_fn(dims, eps, mass, |x| {
        let f = 1.0 / (1.0 + amplitude * x[0].sin());
        let mut e = identity_tetrad();
        for i in 1..4 {
            e[5 * i] = f;
        }
        e
    })
}

/// One Fourier mode `weight * sin(k . X + phase)` added to tetrad entry `(mu, a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TetradMode {
    pub mu: usize,
    pub a: usize,
    pub k: [i32; 3],
    pub phase: f64,
    pub weight: f64,
}

/// Minkowski tetrad plus a sum of smooth periodic modes. The domain of each
/// axis is `n * eps`, so integer wave numbers are periodic when that length
/// is `2 pi`.
pub fn perturbed_tetrad(dims: &[usize], eps: f64, mass: f64, modes: &[TetradMode]) -> Result<TetradField> {
    if let Some(m) = modes.iter().find(|m| m.mu > 3 || m.a > 3) {
        return Err(Error::InvalidArgument(format!(
            "tetrad index ({}, {}) out of range",
            m.mu, m.a
        )));
    }
    let lengths: Vec<f64> = dims.iter().map(|&n| n as f64 * eps).collect();
    TetradField::from_fn(dims, eps, mass, |x| {
        let mut e = identity_tetrad();
        for m in modes {
            let arg: f64 = (0..3)
                .map(|i| 2.0 * std::f64::consts::PI * m.k[i] as f64 * x[i] / lengths[i])
                .sum::<f64>()
                + m.phase;
            e[4 * m.mu + m.a] += m.weight * arg.sin();
        }
        e
    })
}

/// `|g_{mu nu} e^mu_a e^nu_b - eta_ab|_max` for a metric given at one site.
pub fn metric_residual(e: &[f64; 16], g: &[[f64; 4]; 4]) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            let mut s = 0.0;
            for mu in 0..4 {
                for nu in 0..4 {
                    s += g[mu][nu] * e[4 * mu + a] * e[4 * nu + b];
                }
            }
            let want = if a == b { ETA[a] } else { 0.0 };
            worst = worst.max((s - want).abs());
        }
    }
    worst
}

/// `B1^(i) = -sum_j alpha^j e^i_j / e^0_0 - e^i_0 I` for `i = 1, 2, 3`,
/// without the light-cone check.
pub fn transport_coeffs(tetrads: &TetradField, gammas: &GammaSet) -> Result<Vec<Vec<ComplexMatrix>>> {
    tetrads.check_time_frame()?;
    Ok((1..4)
        .map(|i| {
            (0..tetrads.grid.len())
                .map(|site| {
                    let e00 = tetrads.e(site, 0, 0);
                    let mut b = ComplexMatrix::identity(4).scale_real(-tetrads.e(site, i, 0));
                    for j in 1..4 {
                        b = &b - &gammas.alpha[j].scale_real(tetrads.e(site, i, j) / e00);
                    }
                    b
                })
                .collect()
        })
        .collect())
}

/// Fails when some `B1^(i)` has an eigenvalue outside `[-1, 1]`, reporting
/// the largest modulus and the coordinate rescaling that would fix it.
pub fn check_light_cone(b1: &[Vec<ComplexMatrix>]) -> Result<()> {
    let mut worst = 0.0f64;
    let mut worst_site = 0;
    for field in b1 {
        for (site, b) in field.iter().enumerate() {
            let r = herm_eig(b)?.spectral_radius();
            if r > worst {
                worst = r;
                worst_site = site;
            }
        }
    }
    if worst > 1.0 + CLAMP_TOL {
        return Err(Error::SuperluminalTetrad {
            max_abs_eigenvalue: worst,
            site: worst_site,
            rescale: worst,
        });
    }
    Ok(())
}

/// Levi-Civita symbol with `eps_{0123} = +1`.
pub fn levi_civita(i: usize, j: usize, k: usize, l: usize) -> f64 {
    let p = [i, j, k, l];
    if (0..4).any(|a| (a + 1..4).any(|b| p[a] == p[b])) {
        return 0.0;
    }
    let mut inversions = 0;
    for a in 0..4 {
        for b in a + 1..4 {
            if p[a] > p[b] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Real coefficients `S_lambda` of the spin term at one site:
/// `S_lambda = eps_{lambda kappa rho sigma} E^{kappa mu} E^{rho nu} d_mu e^sigma_nu`
/// with `E^{kappa mu} = eta^{kappa a} e^mu_a` and no time derivatives.
pub fn spin_coefficients(tetrads: &TetradField, site: usize) -> Result<[f64; 4]> {
    let grid = &tetrads.grid;
    let h = tetrads.eps;
    // de[mu][sigma][nu] = d_mu e^sigma_nu
    let mut de = [[[0.0f64; 4]; 4]; 4];
    for axis in 0..3 {
        let at = |d: isize| &tetrads.tetrads[grid.shift(site, axis, d)];
        let (m2, m1, c, p1, p2) = (at(-2), at(-1), at(0), at(1), at(2));
        if m2 == c && m1 == c && p1 == c && p2 == c {
            continue;
        }
        if grid.dims()[axis] < 5 {
            return Err(Error::InvalidArgument(format!(
                "grid shorter than stencil: axis {axis} has {} sites",
                grid.dims()[axis]
            )));
        }
        for sigma in 0..4 {
            for nu in 0..4 {
                let k = 4 * sigma + nu;
                de[axis + 1][sigma][nu] = fd4_real(m2[k], m1[k], p1[k], p2[k], h);
            }
        }
    }
    let upper = |kappa: usize, mu: usize| ETA[kappa] * tetrads.e(site, mu, kappa);
    let mut s = [0.0; 4];
    for (lambda, out) in s.iter_mut().enumerate() {
        let mut acc = 0.0;
        for kappa in 0..4 {
            for rho in 0..4 {
                for sigma in 0..4 {
                    let lc = levi_civita(lambda, kappa, rho, sigma);
                    if lc == 0.0 {
                        continue;
                    }
                    for mu in 1..4 {
                        let ek = upper(kappa, mu);
                        if ek == 0.0 {
                            continue;
                        }
                        for nu in 0..4 {
                            acc += lc * ek * upper(rho, nu) * de[mu][sigma][nu];
                        }
                    }
                }
            }
        }
        *out = acc;
    }
    Ok(s)
}

/// `C = -(m / e^0_0) beta + (1 / (4 e^0_0)) sum_lambda gamma5 alpha^lambda S_lambda`.
pub fn connection_coeffs(tetrads: &TetradField, gammas: &GammaSet) -> Result<Vec<ComplexMatrix>> {
    tetrads.check_time_frame()?;
    let g5a: Vec<ComplexMatrix> = gammas.alpha.iter().map(|a| &gammas.gamma5 * a).collect();
    let out: Vec<Result<ComplexMatrix>> = (0..tetrads.grid.len())
        .into_par_iter()
        .map(|site| {
            let e00 = tetrads.e(site, 0, 0);
            let s = spin_coefficients(tetrads, site)?;
            let mut c = gammas.beta.scale_real(-tetrads.mass / e00);
            for (lambda, sl) in s.iter().enumerate() {
                if *sl != 0.0 {
                    c = &c + &g5a[lambda].scale_real(sl / (4.0 * e00));
                }
            }
            Ok(c)
        })
        .collect();
    out.into_iter().collect()
}

/// Externally supplied potential, for couplings the tetrad does not carry.
#[derive(Clone, Debug)]
pub enum COverride {
    Replace(Vec<ComplexMatrix>),
    Add(Vec<ComplexMatrix>),
}

/// Coefficients of the Hamiltonian-form Dirac equation on a lattice.
#[derive(Clone, Debug)]
pub struct DiracCoefficients {
    pub dims: Vec<usize>,
    pub eps: f64,
    /// `B1^(1)`, `B1^(2)`, `B1^(3)` per site.
    pub b1: Vec<Vec<ComplexMatrix>>,
    pub c: Vec<ComplexMatrix>,
}

impl DiracCoefficients {
    /// One walk field per axis, each carrying a third of `C`.
    pub fn coefficient_fields(&self) -> Result<Vec<CoefficientField>> {
        split_coefficients(&self.dims, self.eps, self.b1.clone(), &self.c)
    }
}

pub fn tetrad_to_coeffs(tetrads: &TetradField) -> Result<DiracCoefficients> {
    tetrad_to_coeffs_with(tetrads, None)
}

pub fn tetrad_to_coeffs_with(tetrads: &TetradField, c_override: Option<&COverride>) -> Result<DiracCoefficients> {
    let gammas = standard_gammas();
    let b1 = transport_coeffs(tetrads, &gammas)?;
    check_light_cone(&b1)?;
    let n = tetrads.grid.len();
    let c = match c_override {
        Some(COverride::Replace(c)) => check_override(c, n)?.to_vec(),
        Some(COverride::Add(extra)) => {
            check_override(extra, n)?;
            let computed = connection_coeffs(tetrads, &gammas)?;
            computed.iter().zip(extra).map(|(a, b)| a + b).collect()
        }
        None => connection_coeffs(tetrads, &gammas)?,
    };
    Ok(DiracCoefficients {
        dims: tetrads.dims().to_vec(),
        eps: tetrads.eps,
        b1,
        c,
    })
}

fn check_override(c: &[ComplexMatrix], n: usize) -> Result<&[ComplexMatrix]> {
    if c.len() != n {
        return Err(Error::Shape(format!(
            "potential override has {} samples, expected {n}",
            c.len()
        )));
    }
    for m in c {
        if m.rows() != 4 || m.cols() != 4 {
            return Err(Error::Shape("potential override must be 4x4 per site".into()));
        }
        let defect = m.hermiticity_defect();
        if !(defect <= crate::matcore::HERMITIAN_TOL) {
            return Err(Error::NotHermitian { defect });
        }
    }
    Ok(c)
}
