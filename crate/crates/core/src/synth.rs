//! Coin and encoding synthesis: from hermitian transport and potential
//! fields `B1(x)`, `C(x)` to per-site unitaries `E` and `W'` whose walk has
//! `d_t psi = B1 d_x psi + (1/2)(d_x B1) psi + i C psi` as its continuum limit.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fd4_matrix, Grid};
use crate::matcore::{
    hadamard, herm_eig, sigma_x, sigma_z, unitarity_defect, unitary_exp, ComplexMatrix, SpectralPair, HERMITIAN_TOL,
};

/// Bound for every unitarity and exact-algebra residual.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Bound for quantities assembled from several products (T, W~).
pub const DERIVED_TOL: f64 = 1e-10;
/// Above this, a derived quantity is treated as corrupted input.
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Eigenvalues of B1 within this distance outside [-1, 1] are clamped.
pub const CLAMP_TOL: f64 = 1e-12;

/// Hermitian coefficient samples for the walk along one axis of a lattice.
///
/// `c` is the share of the potential assigned to this axis; see
/// [`split_coefficients`] for the equal split used in several dimensions.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    grid: Grid,
    axis: usize,
    eps: f64,
    spin_dim: usize,
    b1: Vec<ComplexMatrix>,
    c: Vec<ComplexMatrix>,
}

impl CoefficientField {
    pub fn new(dims: &[usize], axis: usize, eps: f64, b1: Vec<ComplexMatrix>, c: Vec<ComplexMatrix>) -> Result<Self> {
        let grid = Grid::new(dims)?;
        if axis >= grid.ndim() {
            return Err(Error::InvalidArgument(format!(
                "axis {axis} out of range for a {}-dimensional lattice",
                grid.ndim()
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got {eps}"
            )));
        }
        for (a, &n) in dims.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "axis {a} has {n} sites; every axis needs an even count of at least 4"
                )));
            }
        }
        if b1.len() != grid.len() || c.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} samples, got {} for B1 and {} for C",
                grid.len(),
                b1.len(),
                c.len()
            )));
        }
        let spin_dim = b1[0].rows();
        if spin_dim == 0 || !spin_dim.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "spin dimension must be even and positive, got {spin_dim}"
            )));
        }
        for (site, (b, cc)) in b1.iter().zip(&c).enumerate() {
            for (name, m) in [("B1", b), ("C", cc)] {
                if m.rows() != spin_dim || m.cols() != spin_dim {
                    return Err(Error::Shape(format!(
                        "{name} at site {site} is {}x{}, expected {spin_dim}x{spin_dim}",
                        m.rows(),
                        m.cols()
                    )));
                }
                let defect = m.hermiticity_defect();
                if !(defect <= HERMITIAN_TOL) {
                    return Err(Error::NotHermitian { defect });
                }
            }
        }
        Ok(Self {
            grid,
            axis,
            eps,
            spin_dim,
            b1,
            c,
        })
    }

    pub fn one_d(eps: f64, b1: Vec<ComplexMatrix>, c: Vec<ComplexMatrix>) -> Result<Self> {
        let n = b1.len();
        Self::new(&[n], 0, eps, b1, c)
    }

    pub fn uniform(dims: &[usize], axis: usize, eps: f64, b1: &ComplexMatrix, c: &ComplexMatrix) -> Result<Self> {
        let n: usize = dims.iter().product();
        Self::new(dims, axis, eps, vec![b1.clone(); n], vec![c.clone(); n])
    }

    /// Samples `f(X) -> (B1, C)` at the physical positions `X = eps * x`.
    pub fn from_fn(
        dims: &[usize],
        axis: usize,
        eps: f64,
        f: impl Fn(&[f64]) -> (ComplexMatrix, ComplexMatrix),
    ) -> Result<Self> {
        let grid = Grid::new(dims)?;
        let (b1, c) = (0..grid.len()).map(|i| f(&grid.position(i, eps))).unzip();
        Self::new(dims, axis, eps, b1, c)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> &[usize] {
        self.grid.dims()
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn b1(&self) -> &[ComplexMatrix] {
        &self.b1
    }

    pub fn c(&self) -> &[ComplexMatrix] {
        &self.c
    }

    /// True when all B1 samples and all C samples are bitwise equal.
    pub fn is_uniform(&self) -> bool {
        self.b1.iter().all(|b| *b == self.b1[0]) && self.c.iter().all(|c| *c == self.c[0])
    }
}

/// Builds one field per axis from per-axis transport samples and a single
/// potential, giving each axis the share `C / n`.
pub fn split_coefficients(
    dims: &[usize],
    eps: f64,
    b1_per_axis: Vec<Vec<ComplexMatrix>>,
    c: &[ComplexMatrix],
) -> Result<Vec<CoefficientField>> {
    let n = dims.len();
    if b1_per_axis.len() != n {
        return Err(Error::Shape(format!(
            "{} transport fields supplied for a {n}-dimensional lattice",
            b1_per_axis.len()
        )));
    }
    let share: Vec<ComplexMatrix> = c.iter().map(|m| m.scale_real(1.0 / n as f64)).collect();
    b1_per_axis
        .into_iter()
        .enumerate()
        .map(|(axis, b1)| CoefficientField::new(dims, axis, eps, b1, share.clone()))
        .collect()
}

/// The `x -> B = E0^H Z E0` completion of a transport matrix.
#[derive(Clone, Debug)]
pub struct PairCompletion {
    pub spectral: SpectralPair,
    /// `lambda_i = sqrt(1 - d_i^2)`.
    pub lambda: Vec<f64>,
    /// `eta_i = arcsin |d_i|`, in `[0, pi/2]`.
    pub eta: Vec<f64>,
    /// Diagonal of `Lambda = diag(-lambda_i e^{-i eta_i})`.
    pub big_lambda: Vec<Complex64>,
    pub b: ComplexMatrix,
    pub u: ComplexMatrix,
}

pub fn complete_pair(b1: &ComplexMatrix) -> Result<PairCompletion> {
    let spectral = herm_eig(b1)?;
    if let Some(&d) = spectral.values.iter().find(|d| d.abs() > 1.0 + CLAMP_TOL) {
        return Err(Error::Superluminal {
            eigenvalue: d,
            site: None,
        });
    }
    let mut spectral = spectral;
    for d in spectral.values.iter_mut() {
        *d = d.clamp(-1.0, 1.0);
    }
    let d = &spectral.values;
    let lambda: Vec<f64> = d.iter().map(|d| (1.0 - d * d).sqrt()).collect();
    let eta: Vec<f64> = d.iter().map(|d| d.abs().asin()).collect();
    let big_lambda: Vec<Complex64> = lambda
        .iter()
        .zip(&eta)
        .map(|(&l, &e)| -Complex64::from_polar(l, -e))
        .collect();

    let dm = ComplexMatrix::real_diag(d);
    let lm = ComplexMatrix::diag(&big_lambda);
    let bbar = ComplexMatrix::from_blocks(&dm, &lm.adjoint(), &lm, &(-&dm));
    let vv = spectral.vectors.direct_sum(&spectral.vectors);
    let b = &(&vv * &bbar) * &vv.adjoint();
    let u = spectral.apply(|d| -Complex64::from_polar(1.0, 2.0 * d.abs().asin()));
    Ok(PairCompletion {
        spectral,
        lambda,
        eta,
        big_lambda,
        b,
        u,
    })
}

/// `Ebar0` in the eigenbasis of B1: four diagonal blocks built from
/// `nu_i^{+-} = sqrt(1 +- d_i)` and the phases `e^{i eta_i}`.
pub fn build_e0_bar(values: &[f64], eta: &[f64]) -> ComplexMatrix {
    let n = values.len();
    let mut a1 = vec![Complex64::new(0.0, 0.0); n];
    let mut a2 = a1.clone();
    let mut a3 = a1.clone();
    let mut a4 = a1.clone();
    for i in 0..n {
        let nu_p = (1.0 + values[i]).sqrt() * FRAC_1_SQRT_2;
        let nu_m = (1.0 - values[i]).sqrt() * FRAC_1_SQRT_2;
        let ph = Complex64::from_polar(1.0, eta[i]);
        a1[i] = Complex64::new(nu_p, 0.0);
        a2[i] = Complex64::new(nu_m, 0.0);
        a3[i] = -ph * nu_m;
        a4[i] = ph * nu_p;
    }
    ComplexMatrix::from_blocks(
        &ComplexMatrix::diag(&a1),
        &ComplexMatrix::diag(&a3),
        &ComplexMatrix::diag(&a2),
        &ComplexMatrix::diag(&a4),
    )
}

pub fn build_e0(spectral: &SpectralPair, eta: &[f64]) -> ComplexMatrix {
    let vv = spectral.vectors.direct_sum(&spectral.vectors);
    &(&vv * &build_e0_bar(&spectral.values, eta)) * &vv.adjoint()
}

/// `W0 = E0 (I + U) E0^H X`, the inversion of the zeroth-order condition.
pub fn build_w0(e0: &ComplexMatrix, u: &ComplexMatrix) -> ComplexMatrix {
    let n = u.rows();
    let iu = ComplexMatrix::identity(n).direct_sum(u);
    &(&(e0 * &iu) * &e0.adjoint()) * &swap_x(n)
}

/// `X = sigma_x (x) I_n`.
pub fn swap_x(n: usize) -> ComplexMatrix {
    sigma_x().kron(&ComplexMatrix::identity(n))
}

/// `Z = sigma_z (x) I_n`.
pub fn parity_z(n: usize) -> ComplexMatrix {
    sigma_z().kron(&ComplexMatrix::identity(n))
}

/// Hadamard pre-encoding `H (x) I_n` acting on `[psi(x+1); psi(x-1)]`.
pub fn pre_encoding(n: usize) -> ComplexMatrix {
    hadamard().kron(&ComplexMatrix::identity(n))
}

#[derive(Clone, Debug)]
pub struct DerivativeFields {
    /// `(d_t E0^H) E0`; zero for static fields.
    pub n: ComplexMatrix,
    /// `E0^H Z d_x E0`.
    pub m: ComplexMatrix,
    /// `d_x B`.
    pub db: ComplexMatrix,
    /// `d_x B1`.
    pub db1: ComplexMatrix,
}

/// Derivative data at one site of a static field.
pub fn derivative_fields(field: &CoefficientField, site: usize) -> Result<DerivativeFields> {
    Ok(local_derivatives(field, site)?.1)
}

/// `(d_x E0, derivative fields)` at one site, from the five-point stencil.
fn local_derivatives(field: &CoefficientField, site: usize) -> Result<(ComplexMatrix, DerivativeFields)> {
    let grid = field.grid();
    if site >= grid.len() {
        return Err(Error::InvalidArgument(format!(
            "site {site} outside a lattice of {}",
            grid.len()
        )));
    }
    let mut e0 = Vec::with_capacity(5);
    let mut b = Vec::with_capacity(5);
    let mut b1 = Vec::with_capacity(5);
    for d in -2isize..=2 {
        let s = grid.shift(site, field.axis, d);
        let pc = complete_pair(&field.b1[s]).map_err(|e| with_site(e, s))?;
        e0.push(build_e0(&pc.spectral, &pc.eta));
        b.push(pc.b);
        b1.push(field.b1[s].clone());
    }
    check_stencil(grid, field.axis, &b1)?;
    let de0 = stencil_derivative(&e0, field.eps);
    let z = parity_z(field.spin_dim);
    let m = &(&e0[2].adjoint() * &z) * &de0;
    let k = 2 * field.spin_dim;
    let der = DerivativeFields {
        n: ComplexMatrix::zeros(k, k),
        m,
        db: stencil_derivative(&b, field.eps),
        db1: stencil_derivative(&b1, field.eps),
    };
    Ok((de0, der))
}

/// Centered derivative from samples at offsets -2..=2; exact zero when all
/// samples are bitwise equal.
fn stencil_derivative(v: &[ComplexMatrix], h: f64) -> ComplexMatrix {
    if v.iter().all(|m| *m == v[2]) {
        ComplexMatrix::zeros(v[2].rows(), v[2].cols())
    } else {
        fd4_matrix(&v[0], &v[1], &v[3], &v[4], h)
    }
}

fn check_stencil(grid: &Grid, axis: usize, samples: &[ComplexMatrix]) -> Result<()> {
    if grid.dims()[axis] < 5 && samples.iter().any(|m| *m != samples[2]) {
        return Err(Error::InvalidArgument(format!(
            "grid shorter than stencil: axis {axis} has {} sites, a varying field needs at least 5",
            grid.dims()[axis]
        )));
    }
    Ok(())
}

/// Assembles `T = [[T1, T3], [T2, T4]]` with `T4 = 0`.
pub fn build_t(c: &ComplexMatrix, n: &ComplexMatrix, m: &ComplexMatrix, u: &ComplexMatrix) -> Result<ComplexMatrix> {
    let i = Complex64::new(0.0, 1.0);
    let m1 = m.block1();
    // i Im(M1) = (M1 - M1^H) / 2
    let i_im_m1 = m1.anti_hermitian_part();
    let t1 = (&(&c.scale(i) - &n.block1()) - &i_im_m1).scale_real(2.0);
    let defect = t1.anti_hermiticity_defect();
    if !(defect <= CONSISTENCY_TOL) {
        return Err(Error::Consistency {
            name: "T1 anti-hermiticity",
            value: defect,
            bound: CONSISTENCY_TOL,
        });
    }
    let t2 = (&n.block2() + &(u * &m.block2())).scale_real(-2.0);
    let t3 = -&(&t2.adjoint() * u);
    let t4 = ComplexMatrix::zeros(u.rows(), u.rows());
    Ok(ComplexMatrix::from_blocks(&t1, &t3, &t2, &t4))
}

/// `W~ = -i X E0 (I + U^H) T E0^H X`, returned unprojected.
pub fn build_wtilde(e0: &ComplexMatrix, u: &ComplexMatrix, t: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = u.rows();
    let x = swap_x(n);
    let iu = ComplexMatrix::identity(n).direct_sum(&u.adjoint());
    let inner = &(&(e0 * &iu) * t) * &e0.adjoint();
    let w = (&(&x * &inner) * &x).scale(Complex64::new(0.0, -1.0));
    let defect = w.hermiticity_defect();
    if !(defect <= CONSISTENCY_TOL) {
        return Err(Error::Consistency {
            name: "W~ hermiticity",
            value: defect,
            bound: CONSISTENCY_TOL,
        });
    }
    Ok(w)
}

/// Named residuals of one synthesized site, or their maxima over many.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub e0_unitarity: f64,
    pub u_unitarity: f64,
    pub w0_unitarity: f64,
    pub e_unitarity: f64,
    pub w_prime_unitarity: f64,
    pub zeroth_order: f64,
    pub cond_ub: f64,
    pub cond_nmt: f64,
    pub b_trace: f64,
    pub b_hermiticity: f64,
    pub b_square: f64,
    pub e0_z_e0_minus_b: f64,
    pub n_anti_hermiticity: f64,
    pub t1_anti_hermiticity: f64,
    pub iu_t_anti_hermiticity: f64,
    pub wtilde_hermiticity: f64,
    /// `|M + M^H - d_x B|_F`: finite-difference consistency, reported only.
    pub leibniz: f64,
}

impl Residuals {
    pub const NAMES: [&'static str; 17] = [
        "e0_unitarity",
        "u_unitarity",
        "w0_unitarity",
        "e_unitarity",
        "w_prime_unitarity",
        "zeroth_order",
        "cond_ub",
        "cond_nmt",
        "b_trace",
        "b_hermiticity",
        "b_square",
        "e0_z_e0_minus_b",
        "n_anti_hermiticity",
        "t1_anti_hermiticity",
        "iu_t_anti_hermiticity",
        "wtilde_hermiticity",
        "leibniz",
    ];

    pub fn values(&self) -> [f64; 17] {
        [
            self.e0_unitarity,
            self.u_unitarity,
            self.w0_unitarity,
            self.e_unitarity,
            self.w_prime_unitarity,
            self.zeroth_order,
            self.cond_ub,
            self.cond_nmt,
            self.b_trace,
            self.b_hermiticity,
            self.b_square,
            self.e0_z_e0_minus_b,
            self.n_anti_hermiticity,
            self.t1_anti_hermiticity,
            self.iu_t_anti_hermiticity,
            self.wtilde_hermiticity,
            self.leibniz,
        ]
    }

    /// Gate bound per residual; `INFINITY` marks report-only entries.
    pub fn bound(name: &str) -> f64 {
        match name {
            "t1_anti_hermiticity" | "iu_t_anti_hermiticity" | "wtilde_hermiticity" => DERIVED_TOL,
            "leibniz" => f64::INFINITY,
            _ => UNITARITY_TOL,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, f64)> {
        Self::NAMES.into_iter().zip(self.values())
    }

    /// First residual above its bound, if any. NaN counts as a failure.
    pub fn first_violation(&self) -> Option<(&'static str, f64, f64)> {
        self.entries()
            .map(|(n, v)| (n, v, Self::bound(n)))
            .find(|&(_, v, b)| !(v <= b))
    }

    pub fn max(&self, other: &Self) -> Self {
        let a = self.values();
        let b = other.values();
        let mut m = [0.0; 17];
        for k in 0..17 {
            m[k] = a[k].max(b[k]);
        }
        Self::from_values(m)
    }

    fn from_values(v: [f64; 17]) -> Self {
        Self {
            e0_unitarity: v[0],
            u_unitarity: v[1],
            w0_unitarity: v[2],
            e_unitarity: v[3],
            w_prime_unitarity: v[4],
            zeroth_order: v[5],
            cond_ub: v[6],
            cond_nmt: v[7],
            b_trace: v[8],
            b_hermiticity: v[9],
            b_square: v[10],
            e0_z_e0_minus_b: v[11],
            n_anti_hermiticity: v[12],
            t1_anti_hermiticity: v[13],
            iu_t_anti_hermiticity: v[14],
            wtilde_hermiticity: v[15],
            leibniz: v[16],
        }
    }
}

/// Everything computed for one site.
#[derive(Clone, Debug)]
pub struct SynthesisData {
    pub completion: PairCompletion,
    pub e0: ComplexMatrix,
    pub w0: ComplexMatrix,
    pub n: ComplexMatrix,
    pub m: ComplexMatrix,
    pub db: ComplexMatrix,
    pub db1: ComplexMatrix,
    pub t: ComplexMatrix,
    /// Hermitian part of the assembled `W~`.
    pub wtilde: ComplexMatrix,
    /// Encoding including the Hadamard pre-encoding.
    pub e: ComplexMatrix,
    /// `W' = W0 exp(i eps W~)`.
    pub w_prime: ComplexMatrix,
    pub residuals: Residuals,
}

struct SiteInputs<'a> {
    c: &'a ComplexMatrix,
    completion: &'a PairCompletion,
    e0: &'a ComplexMatrix,
    de0: ComplexMatrix,
    db: ComplexMatrix,
    db1: ComplexMatrix,
    n: ComplexMatrix,
    eps: f64,
}

fn assemble(inp: SiteInputs<'_>) -> Result<SynthesisData> {
    let pc = inp.completion;
    let k = pc.u.rows();
    let z = parity_z(k);
    let x = swap_x(k);
    let id2 = ComplexMatrix::identity(2 * k);

    let e0 = inp.e0.clone();
    let e0h = e0.adjoint();
    let w0 = build_w0(&e0, &pc.u);
    let m = &(&e0h * &z) * &inp.de0;
    let t = build_t(inp.c, &inp.n, &m, &pc.u)?;
    let wt_raw = build_wtilde(&e0, &pc.u, &t)?;
    let wtilde = wt_raw.hermitian_part();
    let w_prime = &w0 * &unitary_exp(&wtilde, inp.eps)?;
    let e = &e0 * &pre_encoding(k);

    let iu = ComplexMatrix::identity(k).direct_sum(&pc.u);
    let iuh = ComplexMatrix::identity(k).direct_sum(&pc.u.adjoint());
    let zeroth = &(&(&e0h * &w0) * &x) * &e0;
    let b2 = pc.b.block2();
    let ub = &pc.u * &(&ComplexMatrix::identity(k) + &b2.scale_real(2.0));
    let nmt = &(&inp.n.block2().scale_real(2.0) + &(&pc.u * &m.block2()).scale_real(2.0)) + &t.block2();
    let e0ze0 = &(&e0h * &z) * &e0;
    let leibniz = &(&m + &m.adjoint()) - &inp.db;

    let residuals = Residuals {
        e0_unitarity: unitarity_defect(&e0),
        u_unitarity: unitarity_defect(&pc.u),
        w0_unitarity: unitarity_defect(&w0),
        e_unitarity: unitarity_defect(&e),
        w_prime_unitarity: unitarity_defect(&w_prime),
        zeroth_order: (&zeroth - &iu).frobenius_norm(),
        cond_ub: (&ub - &ComplexMatrix::identity(k)).frobenius_norm(),
        cond_nmt: nmt.frobenius_norm(),
        b_trace: pc.b.trace().norm(),
        b_hermiticity: pc.b.hermiticity_defect(),
        b_square: (&(&pc.b * &pc.b) - &id2).frobenius_norm(),
        e0_z_e0_minus_b: (&e0ze0 - &pc.b).frobenius_norm(),
        n_anti_hermiticity: inp.n.anti_hermiticity_defect(),
        t1_anti_hermiticity: t.block1().anti_hermiticity_defect(),
        iu_t_anti_hermiticity: (&iuh * &t).anti_hermiticity_defect(),
        wtilde_hermiticity: wt_raw.hermiticity_defect(),
        leibniz: leibniz.frobenius_norm(),
    };
    Ok(SynthesisData {
        completion: pc.clone(),
        e0,
        w0,
        n: inp.n,
        m,
        db: inp.db,
        db1: inp.db1,
        t,
        wtilde,
        e,
        w_prime,
        residuals,
    })
}

fn with_site(e: Error, site: usize) -> Error {
    match e {
        Error::Superluminal { eigenvalue, .. } => Error::Superluminal {
            eigenvalue,
            site: Some(site),
        },
        other => other,
    }
}

fn gate(data: &SynthesisData, site: usize) -> Result<()> {
    match data.residuals.first_violation() {
        Some((residual, value, bound)) => Err(Error::Synthesis {
            site,
            residual,
            value,
            bound,
        }),
        None => Ok(()),
    }
}

/// Full synthesis at one site of a static field, without residual gating.
pub fn synthesize_site(field: &CoefficientField, site: usize) -> Result<SynthesisData> {
    let (de0, der) = local_derivatives(field, site)?;
    let pc = complete_pair(&field.b1[site]).map_err(|e| with_site(e, site))?;
    let e0 = build_e0(&pc.spectral, &pc.eta);
    assemble(SiteInputs {
        c: &field.c[site],
        completion: &pc,
        e0: &e0,
        de0,
        db: der.db,
        db1: der.db1,
        n: der.n,
        eps: field.eps,
    })
}

/// Encodings and coins of one axis, stored once per distinct site.
#[derive(Clone, Debug)]
pub struct CoinSet {
    axis: usize,
    eps: f64,
    dims: Vec<usize>,
    spin_dim: usize,
    slot_of_site: Vec<u32>,
    representative: Vec<usize>,
    encodings: Vec<ComplexMatrix>,
    coins: Vec<ComplexMatrix>,
    step_ops: Vec<ComplexMatrix>,
    slot_residuals: Vec<Residuals>,
    diagnostics: Residuals,
}

impl CoinSet {
    /// Rebuilds a coin set from stored slots, checking unitarity.
    pub fn from_parts(
        dims: &[usize],
        axis: usize,
        eps: f64,
        slot_of_site: Vec<u32>,
        encodings: Vec<ComplexMatrix>,
        coins: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let grid = Grid::new(dims)?;
        if axis >= grid.ndim() {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        if slot_of_site.len() != grid.len() || encodings.len() != coins.len() || encodings.is_empty() {
            return Err(Error::Shape("coin set slot table does not match the lattice".into()));
        }
        let k4 = encodings[0].rows();
        if !k4.is_multiple_of(4) {
            return Err(Error::Shape(format!("coin size {k4} is not a multiple of 4")));
        }
        let mut representative = vec![usize::MAX; encodings.len()];
        for (site, &s) in slot_of_site.iter().enumerate() {
            let s = s as usize;
            if s >= encodings.len() {
                return Err(Error::Shape(format!("site {site} points at missing slot {s}")));
            }
            if representative[s] == usize::MAX {
                representative[s] = site;
            }
        }
        let mut slot_residuals = Vec::with_capacity(encodings.len());
        for (slot, (e, w)) in encodings.iter().zip(&coins).enumerate() {
            if e.rows() != k4 || e.cols() != k4 || w.rows() != k4 || w.cols() != k4 {
                return Err(Error::Shape("coin slots have inconsistent sizes".into()));
            }
            let r = Residuals {
                e_unitarity: unitarity_defect(e),
                w_prime_unitarity: unitarity_defect(w),
                ..Residuals::default()
            };
            if let Some((residual, value, bound)) = r.first_violation() {
                return Err(Error::Synthesis {
                    site: representative[slot],
                    residual,
                    value,
                    bound,
                });
            }
            slot_residuals.push(r);
        }
        let step_ops = encodings.iter().zip(&coins).map(|(e, w)| &e.adjoint() * w).collect();
        let diagnostics = slot_residuals.iter().fold(Residuals::default(), |a, b| a.max(b));
        Ok(Self {
            axis,
            eps,
            dims: dims.to_vec(),
            spin_dim: k4 / 2,
            slot_of_site,
            representative,
            encodings,
            coins,
            step_ops,
            slot_residuals,
            diagnostics,
        })
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn n_slots(&self) -> usize {
        self.encodings.len()
    }

    pub fn slot_of_site(&self) -> &[u32] {
        &self.slot_of_site
    }

    pub fn encodings(&self) -> &[ComplexMatrix] {
        &self.encodings
    }

    pub fn coins(&self) -> &[ComplexMatrix] {
        &self.coins
    }

    pub fn encoding(&self, site: usize) -> &ComplexMatrix {
        &self.encodings[self.slot_of_site[site] as usize]
    }

    pub fn coin(&self, site: usize) -> &ComplexMatrix {
        &self.coins[self.slot_of_site[site] as usize]
    }

    /// `E^H W'` at a site.
    pub fn step_op(&self, site: usize) -> &ComplexMatrix {
        &self.step_ops[self.slot_of_site[site] as usize]
    }

    /// Maxima of all residuals across synthesized sites.
    pub fn diagnostics(&self) -> &Residuals {
        &self.diagnostics
    }

    /// `(site, residuals)` for the first site of every distinct slot.
    pub fn site_residuals(&self) -> impl Iterator<Item = (usize, &Residuals)> {
        self.representative.iter().copied().zip(&self.slot_residuals)
    }

    /// CSV rows `site,residual,value` for every distinct slot.
    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["site", "residual", "value"])?;
        for (site, r) in self.site_residuals() {
            for (name, v) in r.entries() {
                w.write_record([site.to_string(), name.to_string(), format!("{v:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Bitwise identity of matrices, for deduplicating identical sites.
fn interner(items: &[ComplexMatrix]) -> Vec<usize> {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    items
        .iter()
        .map(|m| {
            let key: Vec<u64> = m
                .as_slice()
                .iter()
                .flat_map(|z| [z.re.to_bits(), z.im.to_bits()])
                .collect();
            let next = seen.len();
            *seen.entry(key).or_insert(next)
        })
        .collect()
}

/// Synthesizes coins for a static field.
pub fn synthesize_axis(field: &CoefficientField) -> Result<CoinSet> {
    synthesize_inner(field, None)
}

/// Synthesizes coins at time `t` of a time-dependent field, given samples
/// at `t - dt` and `t + dt`. `N = (d_t E0^H) E0` is taken by central
/// difference and projected onto its anti-hermitian part.
pub fn synthesize_axis_dynamic(
    before: &CoefficientField,
    now: &CoefficientField,
    after: &CoefficientField,
    dt: f64,
) -> Result<CoinSet> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time spacing must be positive, got {dt}"
        )));
    }
    for f in [before, after] {
        if f.dims() != now.dims() || f.axis != now.axis || f.spin_dim != now.spin_dim {
            return Err(Error::Shape("time samples live on different lattices".into()));
        }
    }
    synthesize_inner(now, Some((before, after, dt)))
}

struct Stage0 {
    completion: PairCompletion,
    e0: ComplexMatrix,
}

fn stage0_all(b1: &[ComplexMatrix]) -> Result<(Vec<usize>, Vec<Stage0>)> {
    let ids = interner(b1);
    let n_unique = ids.iter().copied().max().map_or(0, |m| m + 1);
    let mut first = vec![usize::MAX; n_unique];
    for (site, &id) in ids.iter().enumerate() {
        if first[id] == usize::MAX {
            first[id] = site;
        }
    }
    let stages: Vec<Result<Stage0>> = first
        .par_iter()
        .map(|&site| {
            let completion = complete_pair(&b1[site]).map_err(|e| with_site(e, site))?;
            let e0 = build_e0(&completion.spectral, &completion.eta);
            Ok(Stage0 { completion, e0 })
        })
        .collect();
    let stages = stages.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((ids, stages))
}

fn synthesize_inner(
    field: &CoefficientField,
    dynamic: Option<(&CoefficientField, &CoefficientField, f64)>,
) -> Result<CoinSet> {
    let grid = &field.grid;
    let axis = field.axis;
    let k = field.spin_dim;
    let (b1_ids, stages) = stage0_all(&field.b1)?;
    let c_ids = interner(&field.c);
    let b_fields: Vec<ComplexMatrix> = stages.iter().map(|s| s.completion.b.clone()).collect();
    let e0_fields: Vec<ComplexMatrix> = stages.iter().map(|s| s.e0.clone()).collect();

    let time_stages = match dynamic {
        Some((before, after, dt)) => {
            let (ib, sb) = stage0_all(&before.b1)?;
            let (ia, sa) = stage0_all(&after.b1)?;
            Some((ib, sb, ia, sa, dt))
        }
        None => None,
    };

    // slot key: stencil of B1 ids along the axis plus the local C id
    let mut key_to_slot: HashMap<Vec<usize>, u32> = HashMap::new();
    let mut representative = Vec::new();
    let mut slot_of_site = Vec::with_capacity(grid.len());
    for site in 0..grid.len() {
        let mut key: Vec<usize> = (-2isize..=2).map(|d| b1_ids[grid.shift(site, axis, d)]).collect();
        key.push(c_ids[site]);
        if let Some((ib, _, ia, _, _)) = &time_stages {
            key.push(ib[site]);
            key.push(ia[site]);
        }
        let next = key_to_slot.len() as u32;
        let slot = *key_to_slot.entry(key).or_insert_with(|| {
            representative.push(site);
            next
        });
        slot_of_site.push(slot);
    }

    let results: Vec<Result<SynthesisData>> = representative
        .par_iter()
        .map(|&site| {
            let stencil: Vec<usize> = (-2isize..=2).map(|d| grid.shift(site, axis, d)).collect();
            let ids: Vec<usize> = stencil.iter().map(|&s| b1_ids[s]).collect();
            let gather = |v: &[ComplexMatrix]| -> Vec<ComplexMatrix> { ids.iter().map(|&i| v[i].clone()).collect() };
            let raw_b1: Vec<ComplexMatrix> = stencil.iter().map(|&s| field.b1[s].clone()).collect();
            check_stencil(grid, axis, &raw_b1)?;
            let d = |v: &[ComplexMatrix]| stencil_derivative(v, field.eps);
            let de0 = d(&gather(&e0_fields));
            let db = d(&gather(&b_fields));
            let db1 = d(&raw_b1);
            let st = &stages[b1_ids[site]];
            let n = match &time_stages {
                Some((ib, sb, ia, sa, dt)) => {
                    let eb = &sb[ib[site]].e0;
                    let ea = &sa[ia[site]].e0;
                    if eb == ea {
                        ComplexMatrix::zeros(2 * k, 2 * k)
                    } else {
                        let dh = (&ea.adjoint() - &eb.adjoint()).scale_real(1.0 / (2.0 * dt));
                        (&dh * &st.e0).anti_hermitian_part()
                    }
                }
                None => ComplexMatrix::zeros(2 * k, 2 * k),
            };
            let data = assemble(SiteInputs {
                c: &field.c[site],
                completion: &st.completion,
                e0: &st.e0,
                de0,
                db,
                db1,
                n,
                eps: field.eps,
            })?;
            gate(&data, site)?;
            Ok(data)
        })
        .collect();

    let mut encodings = Vec::with_capacity(results.len());
    let mut coins = Vec::with_capacity(results.len());
    let mut slot_residuals = Vec::with_capacity(results.len());
    for r in results {
        let data = r?;
        encodings.push(data.e);
        coins.push(data.w_prime);
        slot_residuals.push(data.residuals);
    }
    let step_ops = encodings.iter().zip(&coins).map(|(e, w)| &e.adjoint() * w).collect();
    let diagnostics = slot_residuals.iter().fold(Residuals::default(), |a, b| a.max(b));
    Ok(CoinSet {
        axis,
        eps: field.eps,
        dims: grid.dims().to_vec(),
        spin_dim: k,
        slot_of_site,
        representative,
        encodings,
        coins,
        step_ops,
        slot_residuals,
        diagnostics,
    })
}

/// `(P' + P)(A + A)(v1 + v2)`: the last half of `A v1` stacked over the
/// first half of `A v2`.
pub fn paired_projection(a: &ComplexMatrix, v1: &[Complex64], v2: &[Complex64]) -> Vec<Complex64> {
    let h = a.rows() / 2;
    let av1 = a.matvec(v1);
    let av2 = a.matvec(v2);
    av1[h..].iter().chain(&av2[..h]).copied().collect()
}

/// Permutation taking `(a_1..a_n, b_1..b_n)` to `(a_1, b_1, a_2, b_2, ...)`.
pub fn interleave_permutation(n: usize) -> ComplexMatrix {
    let mut p = ComplexMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        p[(2 * i, i)] = Complex64::new(1.0, 0.0);
        p[(2 * i + 1, n + i)] = Complex64::new(1.0, 0.0);
    }
    p
}

/// Frobenius mass outside the 2x2 diagonal blocks.
pub fn off_block_mass(m: &ComplexMatrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if i / 2 != j / 2 {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::sigma_y;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn zero_velocity_completion() {
        let pc = complete_pair(&ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(pc.spectral.values, vec![0.0, 0.0]);
        assert_eq!(pc.lambda, vec![1.0, 1.0]);
        assert_eq!(pc.eta, vec![0.0, 0.0]);
        let want = ComplexMatrix::from_real(
            4,
            4,
            &[
                0., 0., -1., 0., //
                0., 0., 0., -1., //
                -1., 0., 0., 0., //
                0., -1., 0., 0.,
            ],
        );
        assert!(close(&pc.b, &want, 1e-15));
        assert!(close(&pc.u, &ComplexMatrix::identity(2).scale_real(-1.0), 1e-15));
    }

    #[test]
    fn half_speed_completion() {
        let pc = complete_pair(&sigma_z().scale_real(0.5)).unwrap();
        assert_eq!(pc.spectral.values, vec![0.5, -0.5]);
        for i in 0..2 {
            assert!((pc.lambda[i] - 3f64.sqrt() / 2.0).abs() < 1e-15);
            assert!((pc.eta[i] - FRAC_PI_6).abs() < 1e-15);
            assert!((pc.big_lambda[i] - c64(-0.75, 0.4330127018922193)).norm() < 1e-12);
        }
        let want_u = ComplexMatrix::identity(2).scale(-Complex64::from_polar(1.0, PI / 3.0));
        assert!(close(&pc.u, &want_u, 1e-12));
        assert!(close(&(&pc.b * &pc.b), &ComplexMatrix::identity(4), 1e-12));
        let ub = &pc.u * &(&ComplexMatrix::identity(2) + &pc.b.block2().scale_real(2.0));
        assert!(close(&ub, &ComplexMatrix::identity(2), 1e-12));
    }

    #[test]
    fn light_speed_completion() {
        let pc = complete_pair(&sigma_z()).unwrap();
        assert_eq!(pc.lambda, vec![0.0, 0.0]);
        assert!(pc.eta.iter().all(|e| (e - FRAC_PI_2).abs() < 1e-15));
        assert!(pc.big_lambda.iter().all(|l| l.norm() < 1e-15));
        let want = ComplexMatrix::real_diag(&[1.0, -1.0, -1.0, 1.0]);
        assert!(close(&pc.b, &want, 1e-15));
        assert!(close(&pc.u, &ComplexMatrix::identity(2), 1e-15));
    }

    #[test]
    fn superluminal_is_rejected() {
        let err = complete_pair(&sigma_x().scale_real(1.5)).unwrap_err();
        assert!(err.to_string().contains("superluminal coefficient"));
        match err {
            Error::Superluminal { eigenvalue, .. } => assert!((eigenvalue - 1.5).abs() < 1e-14),
            other => panic!("unexpected {other:?}"),
        }
        // within the clamp tolerance is accepted
        assert!(complete_pair(&sigma_z().scale_real(1.0 + 5e-13)).is_ok());
    }

    #[test]
    fn e0_examples() {
        let pc = complete_pair(&ComplexMatrix::zeros(2, 2)).unwrap();
        let e0 = build_e0(&pc.spectral, &pc.eta);
        let h = FRAC_1_SQRT_2;
        let want = ComplexMatrix::from_real(
            4,
            4,
            &[
                h, 0., -h, 0., //
                0., h, 0., -h, //
                h, 0., h, 0., //
                0., h, 0., h,
            ],
        );
        assert!(close(&e0, &want, 1e-15));

        let pc = complete_pair(&sigma_z().scale_real(0.5)).unwrap();
        let e0 = build_e0(&pc.spectral, &pc.eta);
        let ph = Complex64::from_polar(1.0, FRAC_PI_6);
        // the d = 0.5 block lives on indices (0, 2)
        assert!((e0[(0, 0)] - c64(1.5f64.sqrt() * h, 0.0)).norm() < 1e-12);
        assert!((e0[(0, 2)] + ph * 0.5f64.sqrt() * h).norm() < 1e-12);
        assert!((e0[(2, 0)] - c64(0.5f64.sqrt() * h, 0.0)).norm() < 1e-12);
        assert!((e0[(2, 2)] - ph * 1.5f64.sqrt() * h).norm() < 1e-12);
        assert!(unitarity_defect(&e0) < 1e-12);
        let z = parity_z(2);
        assert!(close(&(&(&e0.adjoint() * &z) * &e0), &pc.b, 1e-12));

        let pc = complete_pair(&sigma_z()).unwrap();
        let e0 = build_e0(&pc.spectral, &pc.eta);
        // first 2x2 block is diag(1, i)
        assert!((e0[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-15);
        assert!((e0[(2, 2)] - c64(0.0, 1.0)).norm() < 1e-15);
        assert!(e0[(0, 2)].norm() < 1e-15 && e0[(2, 0)].norm() < 1e-15);
        assert!(unitarity_defect(&e0) < 1e-15);
    }

    #[test]
    fn w0_examples() {
        let pc = complete_pair(&sigma_z()).unwrap();
        let w0 = build_w0(&build_e0(&pc.spectral, &pc.eta), &pc.u);
        assert!(close(&w0, &swap_x(2), 1e-15));

        let pc = complete_pair(&ComplexMatrix::zeros(2, 2)).unwrap();
        let w0 = build_w0(&build_e0(&pc.spectral, &pc.eta), &pc.u);
        assert!(close(&w0, &ComplexMatrix::identity(4), 1e-15));
    }

    #[test]
    fn w0_matches_corrected_block_form() {
        // per eigen-block: F diag(1, -e^{2i eta}) F^H sigma_x
        for d in [-0.9, -0.3, 0.0, 0.4, 0.99] {
            let b1 = ComplexMatrix::real_diag(&[d]);
            let pc = complete_pair(&b1).unwrap();
            let f = build_e0(&pc.spectral, &pc.eta);
            let w0 = build_w0(&f, &pc.u);
            let eta = d.abs().asin();
            let mid = ComplexMatrix::diag(&[c64(1.0, 0.0), -Complex64::from_polar(1.0, 2.0 * eta)]);
            let want = &(&(&f * &mid) * &f.adjoint()) * &sigma_x();
            assert!(close(&w0, &want, 1e-14));
            // the printed phase e^{-2i eta} would disagree away from eta = pi/4
            let alt = ComplexMatrix::diag(&[c64(1.0, 0.0), Complex64::from_polar(1.0, -2.0 * eta)]);
            let wrong = &(&(&f * &alt) * &f.adjoint()) * &sigma_x();
            assert!((&wrong - &w0).frobenius_norm() > 1e-3);
        }
    }

    #[test]
    fn t_examples() {
        let z4 = ComplexMatrix::zeros(4, 4);
        let pc = complete_pair(&sigma_z()).unwrap();
        let t = build_t(&ComplexMatrix::zeros(2, 2), &z4, &z4, &pc.u).unwrap();
        assert_eq!(t.max_abs(), 0.0);

        let t = build_t(&sigma_x(), &z4, &z4, &pc.u).unwrap();
        assert!(close(&t.block1(), &sigma_x().scale(c64(0.0, 2.0)), 1e-15));
        for b in [t.block2(), t.block3(), t.block4()] {
            assert_eq!(b.max_abs(), 0.0);
        }
        assert!(t.block1().anti_hermiticity_defect() < 1e-15);

        // corrupted input: a hermitian N1 breaks T1
        let mut bad = z4.clone();
        bad.set_block(0, 0, &sigma_x());
        assert!(matches!(
            build_t(&sigma_x(), &bad, &z4, &pc.u),
            Err(Error::Consistency { .. })
        ));
    }

    #[test]
    fn wtilde_examples() {
        let pc = complete_pair(&ComplexMatrix::zeros(2, 2)).unwrap();
        let e0 = build_e0(&pc.spectral, &pc.eta);
        let w = build_wtilde(&e0, &pc.u, &ComplexMatrix::zeros(4, 4)).unwrap();
        assert_eq!(w.max_abs(), 0.0);

        let z4 = ComplexMatrix::zeros(4, 4);
        let t = build_t(&sigma_x(), &z4, &z4, &pc.u).unwrap();
        let w = build_wtilde(&e0, &pc.u, &t).unwrap();
        assert!(w.hermiticity_defect() < 1e-14);
        assert!(w.max_abs() > 0.1);
    }

    #[test]
    fn constant_field_has_no_derivatives() {
        let f = CoefficientField::uniform(&[8], 0, 0.1, &sigma_x().scale_real(0.3), &sigma_y()).unwrap();
        let d = derivative_fields(&f, 3).unwrap();
        assert_eq!(d.m.max_abs(), 0.0);
        assert_eq!(d.n.max_abs(), 0.0);
        assert_eq!(d.db1.max_abs(), 0.0);
    }

    fn sine_field(n: usize) -> CoefficientField {
        let eps = 2.0 * PI / n as f64;
        CoefficientField::from_fn(&[n], 0, eps, |x| {
            (sigma_z().scale_real(0.5 * x[0].sin()), ComplexMatrix::zeros(2, 2))
        })
        .unwrap()
    }

    #[test]
    fn leibniz_residual_on_sine_field() {
        let n = 256;
        let f = sine_field(n);
        let eps = f.eps();
        for site in 0..n {
            let x = eps * site as f64;
            // arcsin|d| has a kink where d crosses zero (x = 0, pi)
            let dist = [0.0, PI, 2.0 * PI]
                .iter()
                .map(|k| (x - k).abs())
                .fold(f64::MAX, f64::min);
            if dist < 3.0 * eps {
                continue;
            }
            let d = derivative_fields(&f, site).unwrap();
            assert_eq!(d.n.max_abs(), 0.0);
            let r = (&(&d.m + &d.m.adjoint()) - &d.db).frobenius_norm();
            assert!(r <= 1e-6, "site {site}: {r:e}");
            // oracle: analytic derivative of B = E0^H Z E0
            let h = 1e-5;
            let b = |x: f64| complete_pair(&sigma_z().scale_real(0.5 * x.sin())).unwrap().b;
            let analytic = (&b(x + h) - &b(x - h)).scale_real(0.5 / h);
            assert!((&d.db - &analytic).frobenius_norm() <= 1e-6, "site {site}");
            assert!((d.db1[(0, 0)].re - 0.5 * x.cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn varying_t2_satisfies_constraint() {
        let f = sine_field(64);
        let data = synthesize_site(&f, 10).unwrap();
        let t2 = data.t.block2();
        assert!(t2.frobenius_norm() > 0.0);
        let lhs = &(&data.n.block2().scale_real(2.0) + &(&data.completion.u * &data.m.block2()).scale_real(2.0)) + &t2;
        assert!(lhs.frobenius_norm() <= 1e-12);
    }

    #[test]
    fn flat_massless_coins_are_swaps() {
        let f = CoefficientField::uniform(&[16], 0, 0.1, &sigma_z(), &ComplexMatrix::zeros(2, 2)).unwrap();
        let cs = synthesize_axis(&f).unwrap();
        assert_eq!(cs.n_slots(), 1);
        for site in 0..16 {
            assert!(close(cs.coin(site), &swap_x(2), 1e-15));
        }
        for (_, v) in cs.diagnostics().entries() {
            assert!(v <= 1e-12);
        }
    }

    #[test]
    fn flat_massive_coin_is_first_order_perturbation() {
        let dev = |eps: f64| {
            let f = CoefficientField::uniform(&[8], 0, eps, &sigma_z(), &sigma_x()).unwrap();
            let cs = synthesize_axis(&f).unwrap();
            (cs.coin(0) - &swap_x(2)).frobenius_norm()
        };
        let (a, b) = (dev(0.01), dev(0.005));
        assert!(a > 0.0 && a < 0.1);
        assert!((a / b - 2.0).abs() < 0.01, "ratio {}", a / b);
    }

    #[test]
    fn curved_coins_are_unitary_and_site_dependent() {
        let n = 256;
        let eps = 2.0 * PI / n as f64;
        let f = CoefficientField::from_fn(&[n], 0, eps, |x| {
            (
                sigma_z().scale_real(0.5 * (1.0 + 0.3 * x[0].sin())),
                ComplexMatrix::zeros(2, 2),
            )
        })
        .unwrap();
        let cs = synthesize_axis(&f).unwrap();
        assert!(cs.n_slots() > n / 2);
        for s in 0..n {
            assert!(unitarity_defect(cs.coin(s)) <= 1e-12);
            assert!(unitarity_defect(cs.encoding(s)) <= 1e-12);
        }
        assert_ne!(cs.coin(3), cs.coin(40));
    }

    #[test]
    fn failing_site_is_named() {
        let n = 8;
        let mut b1 = vec![sigma_z().scale_real(0.5); n];
        b1[5] = sigma_z().scale_real(1.2);
        let f = CoefficientField::one_d(0.1, b1, vec![ComplexMatrix::zeros(2, 2); n]).unwrap();
        match synthesize_axis(&f) {
            Err(Error::Superluminal { site: Some(5), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn projection_identities_small() {
        let a = ComplexMatrix::from_fn(4, 4, |i, j| c64(i as f64 + 0.5, j as f64 - 1.0));
        let v: Vec<Complex64> = (0..4).map(|i| c64(1.0 + i as f64, -0.5)).collect();
        let lhs = paired_projection(&a, &v, &v);
        let rhs = (&swap_x(2) * &a).matvec(&v);
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).norm() <= 1e-12);
        }
    }

    #[test]
    fn e0_bar_is_block_diagonal_after_interleaving() {
        let vals = [0.7, 0.1, -0.4];
        let eta: Vec<f64> = vals.iter().map(|d: &f64| d.abs().asin()).collect();
        let e = build_e0_bar(&vals, &eta);
        let p = interleave_permutation(3);
        let blocks = &(&p * &e) * &p.adjoint();
        assert!(off_block_mass(&blocks) <= 1e-15);
        for i in 0..3 {
            assert!(unitarity_defect(&blocks.block(2 * i, 2 * i, 2, 2)) <= 1e-15);
        }
    }

    #[test]
    fn diagnostics_csv_has_rows_per_slot() {
        let f = CoefficientField::uniform(&[8], 0, 0.1, &sigma_z(), &sigma_x()).unwrap();
        let cs = synthesize_axis(&f).unwrap();
        let mut buf = Vec::new();
        cs.write_diagnostics_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + Residuals::NAMES.len());
        assert!(text.starts_with("site,residual,value"));
    }
}
