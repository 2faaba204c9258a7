//! Independent continuum reference for `d_t psi = sum_i (B_i d_i psi +
//! (1/2)(d_i B_i) psi) + i C psi`: fourth-order central differences in space,
//! classical RK4 in time, plus error metrics and empirical convergence orders.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lattice::{evolve, SpinorField};
use crate::matcore::{herm_eig, ComplexMatrix, HERMITIAN_TOL};
use crate::synth::{split_coefficients, synthesize_axis};

/// Time step bound as a fraction of `h` over the summed spectral radii of `B_i`.
pub const CFL_FACTOR: f64 = 0.2;
/// Allowed relative norm drift of a reference run.
pub const REFERENCE_NORM_DRIFT: f64 = 1e-6;
/// Errors at or below this are reported as sitting at the noise floor.
pub const NOISE_FLOOR: f64 = 1e-9;
/// Accepted band for pairwise empirical orders.
pub const ORDER_BAND: (f64, f64) = (0.8, 2.2);

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Coefficient samples on the reference grid.
#[derive(Clone, Debug)]
pub struct ReferenceCoefficients {
    grid: Grid,
    h: f64,
    spin_dim: usize,
    b: Vec<Vec<ComplexMatrix>>,
    c: Vec<ComplexMatrix>,
}

impl ReferenceCoefficients {
    pub fn new(dims: &[usize], h: f64, b: Vec<Vec<ComplexMatrix>>, c: Vec<ComplexMatrix>) -> Result<Self> {
        let grid = Grid::new(dims)?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got {h}"
            )));
        }
        if b.len() != grid.ndim() {
            return Err(Error::Shape(format!(
                "{} transport fields for a {}-dimensional grid",
                b.len(),
                grid.ndim()
            )));
        }
        if c.len() != grid.len() || b.iter().any(|f| f.len() != grid.len()) {
            return Err(Error::Shape(format!(
                "coefficient fields must have {} samples",
                grid.len()
            )));
        }
        if let Some(&n) = dims.iter().find(|&&n| n < 5) {
            return Err(Error::InvalidArgument(format!(
                "grid shorter than stencil: {n} sites, the reference needs at least 5"
            )));
        }
        let spin_dim = c[0].rows();
        for m in b.iter().flatten().chain(&c) {
            if m.rows() != spin_dim || m.cols() != spin_dim {
                return Err(Error::Shape("coefficient samples differ in size".into()));
            }
            let defect = m.hermiticity_defect();
            if !(defect <= HERMITIAN_TOL) {
                return Err(Error::NotHermitian { defect });
            }
        }
        Ok(Self {
            grid,
            h,
            spin_dim,
            b,
            c,
        })
    }

    /// Samples `f(X) -> (B per axis, C)` at `X = h * x`.
    pub fn from_fn(dims: &[usize], h: f64, f: impl Fn(&[f64]) -> (Vec<ComplexMatrix>, ComplexMatrix)) -> Result<Self> {
        let grid = Grid::new(dims)?;
        let mut b = vec![Vec::with_capacity(grid.len()); grid.ndim()];
        let mut c = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let (bs, cc) = f(&grid.position(i, h));
            if bs.len() != grid.ndim() {
                return Err(Error::Shape(format!(
                    "{} transport samples for {} axes",
                    bs.len(),
                    grid.ndim()
                )));
            }
            for (a, m) in bs.into_iter().enumerate() {
                b[a].push(m);
            }
            c.push(cc);
        }
        Self::new(dims, h, b, c)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Sum over axes of the largest spectral radius of `B_i`.
    pub fn max_speed(&self) -> Result<f64> {
        let mut total = 0.0;
        for field in &self.b {
            let mut worst = 0.0f64;
            let mut last: Option<&ComplexMatrix> = None;
            for m in field {
                if last == Some(m) {
                    continue;
                }
                worst = worst.max(herm_eig(m)?.spectral_radius());
                last = Some(m);
            }
            total += worst;
        }
        Ok(total)
    }

    fn max_potential(&self) -> f64 {
        self.c.iter().map(|m| m.frobenius_norm()).fold(0.0, f64::max)
    }

    /// Largest stable time step under the CFL rule.
    pub fn max_dt(&self) -> Result<f64> {
        let speed = self.max_speed()?;
        let mut dt = f64::INFINITY;
        if speed > 0.0 {
            dt = dt.min(CFL_FACTOR * self.h / speed);
        }
        let pot = self.max_potential();
        if pot > 0.0 {
            dt = dt.min(CFL_FACTOR / pot);
        }
        Ok(dt)
    }

    /// `L psi = sum_i (1/2)(B_i D_i psi + D_i (B_i psi)) + i C psi`; the
    /// symmetric split keeps the semi-discrete operator anti-hermitian.
    fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let k = self.spin_dim;
        let grid = &self.grid;
        let w = 1.0 / (12.0 * self.h);
        out.par_chunks_mut(k).enumerate().for_each(|(s, o)| {
            self.c[s].matvec_into(&psi[s * k..(s + 1) * k], o);
            for z in o.iter_mut() {
                *z *= I;
            }
        });
        let mut bpsi = vec![ZERO; psi.len()];
        for (axis, b) in self.b.iter().enumerate() {
            bpsi.par_chunks_mut(k).enumerate().for_each(|(s, o)| {
                b[s].matvec_into(&psi[s * k..(s + 1) * k], o);
            });
            out.par_chunks_mut(k).enumerate().for_each_init(
                || (vec![ZERO; k], vec![ZERO; k]),
                |(dpsi, tmp), (s, o)| {
                    let idx = [
                        grid.shift(s, axis, -2),
                        grid.shift(s, axis, -1),
                        grid.shift(s, axis, 1),
                        grid.shift(s, axis, 2),
                    ];
                    for j in 0..k {
                        let d = |v: &[Complex64]| {
                            (v[idx[0] * k + j] - v[idx[3] * k + j] + (v[idx[2] * k + j] - v[idx[1] * k + j]) * 8.0) * w
                        };
                        dpsi[j] = d(psi);
                        o[j] += d(&bpsi) * 0.5;
                    }
                    b[s].matvec_into(dpsi, tmp);
                    for j in 0..k {
                        o[j] += tmp[j] * 0.5;
                    }
                },
            );
        }
    }
}

fn rk4_step(
    coeffs: &dyn Fn(f64) -> Result<Arc<ReferenceCoefficients>>,
    t: f64,
    dt: f64,
    psi: &mut [Complex64],
    scratch: &mut [Vec<Complex64>; 5],
) -> Result<()> {
    let [k1, k2, k3, k4, stage] = scratch;
    let c0 = coeffs(t)?;
    c0.apply(psi, k1);
    let half = coeffs(t + 0.5 * dt)?;
    axpy(stage, psi, k1, 0.5 * dt);
    half.apply(stage, k2);
    axpy(stage, psi, k2, 0.5 * dt);
    half.apply(stage, k3);
    axpy(stage, psi, k3, dt);
    coeffs(t + dt)?.apply(stage, k4);
    let w = dt / 6.0;
    psi.par_iter_mut().enumerate().for_each(|(i, p)| {
        *p += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
    });
    Ok(())
}

fn axpy(out: &mut [Complex64], x: &[Complex64], y: &[Complex64], a: f64) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| *o = x[i] + y[i] * a);
}

fn check_field(coeffs: &ReferenceCoefficients, psi0: &SpinorField) -> Result<()> {
    if psi0.grid() != coeffs.grid() || psi0.spin_dim() != coeffs.spin_dim {
        return Err(Error::Shape(format!(
            "initial data on {:?}x{} does not match coefficients on {:?}x{}",
            psi0.dims(),
            psi0.spin_dim(),
            coeffs.grid().dims(),
            coeffs.spin_dim
        )));
    }
    if (psi0.eps() - coeffs.h).abs() > 1e-12 * coeffs.h {
        return Err(Error::Shape(
            "initial data spacing differs from the coefficient grid".into(),
        ));
    }
    Ok(())
}

/// Integrates from `psi0.time()` and returns the state at each requested
/// time (ascending, not before the start).
pub fn reference_evolve_checkpoints(
    coeffs: &ReferenceCoefficients,
    psi0: &SpinorField,
    times: &[f64],
) -> Result<Vec<SpinorField>> {
    check_field(coeffs, psi0)?;
    let dt = coeffs.max_dt()?;
    let shared = Arc::new(coeffs.clone());
    integrate(&move |_| Ok(shared.clone()), psi0, times, dt)
}

/// State at `t_final` with the largest stable time step.
pub fn reference_evolve(coeffs: &ReferenceCoefficients, psi0: &SpinorField, t_final: f64) -> Result<SpinorField> {
    Ok(reference_evolve_checkpoints(coeffs, psi0, &[t_final])?.remove(0))
}

/// Like [`reference_evolve`] with a caller-chosen step bound, rejected when
/// it exceeds the CFL limit.
pub fn reference_evolve_with_dt(
    coeffs: &ReferenceCoefficients,
    psi0: &SpinorField,
    t_final: f64,
    dt: f64,
) -> Result<SpinorField> {
    check_field(coeffs, psi0)?;
    let limit = coeffs.max_dt()?;
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Stability(format!(
            "time step {dt:e} exceeds the CFL limit {limit:e} (factor {CFL_FACTOR} of h over the summed spectral radii of B)"
        )));
    }
    let shared = Arc::new(coeffs.clone());
    Ok(integrate(&move |_| Ok(shared.clone()), psi0, &[t_final], dt)?.remove(0))
}

/// Reference run with time-dependent coefficients, sampled at every RK
/// stage. `max_dt` bounds the step and must respect the CFL limit of every
/// sample.
pub fn reference_evolve_dynamic(
    coeffs_at: impl Fn(f64) -> Result<ReferenceCoefficients>,
    psi0: &SpinorField,
    t_final: f64,
    max_dt: f64,
) -> Result<SpinorField> {
    let first = coeffs_at(psi0.time())?;
    check_field(&first, psi0)?;
    let wrapped = move |t: f64| -> Result<Arc<ReferenceCoefficients>> {
        let c = coeffs_at(t)?;
        if max_dt > c.max_dt()? * (1.0 + 1e-12) {
            return Err(Error::Stability(format!(
                "time step {max_dt:e} exceeds the CFL limit at t = {t}"
            )));
        }
        Ok(Arc::new(c))
    };
    Ok(integrate(&wrapped, psi0, &[t_final], max_dt)?.remove(0))
}

fn integrate(
    coeffs: &dyn Fn(f64) -> Result<Arc<ReferenceCoefficients>>,
    psi0: &SpinorField,
    times: &[f64],
    dt_max: f64,
) -> Result<Vec<SpinorField>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < psi0.time()) {
        return Err(Error::InvalidArgument(
            "checkpoint times must be ascending and not before the start".into(),
        ));
    }
    let n0 = psi0.norm_sqr().sqrt();
    let mut psi = psi0.clone();
    let len = psi.amplitudes().len();
    let mut scratch: [Vec<Complex64>; 5] = std::array::from_fn(|_| vec![ZERO; len]);
    let mut out = Vec::with_capacity(times.len());
    let mut t = psi0.time();
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let steps = if dt_max.is_finite() {
                (span / dt_max).ceil().max(1.0) as u64
            } else {
                1
            };
            let dt = span / steps as f64;
            for s in 0..steps {
                rk4_step(coeffs, t + s as f64 * dt, dt, psi.amplitudes_mut(), &mut scratch)?;
            }
            t = target;
        }
        psi.set_time(t);
        let drift = if n0 > 0.0 {
            (psi.norm_sqr().sqrt() / n0 - 1.0).abs()
        } else {
            0.0
        };
        if !(drift <= REFERENCE_NORM_DRIFT) {
            return Err(Error::Stability(format!(
                "reference norm drifted by {drift:e} by t = {t}; data not resolved on this grid"
            )));
        }
        out.push(psi.clone());
    }
    Ok(out)
}

/// `sqrt(eps^n sum |a - b|^2)` with the spacing and dimension of `a`.
pub fn l2_error(a: &SpinorField, b: &SpinorField) -> Result<f64> {
    a.check_same_shape(b)?;
    let s: f64 = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    Ok((a.eps().powi(a.grid().ndim() as i32) * s).sqrt())
}

/// Samples a fine field at every `factor`-th site along each axis.
pub fn restrict(fine: &SpinorField, factor: usize) -> Result<SpinorField> {
    if factor == 0 || fine.dims().iter().any(|&n| n % factor != 0) {
        return Err(Error::InvalidArgument(format!(
            "grid {:?} cannot be subsampled by {factor}",
            fine.dims()
        )));
    }
    let coarse_dims: Vec<usize> = fine.dims().iter().map(|n| n / factor).collect();
    let coarse = Grid::new(&coarse_dims)?;
    let k = fine.spin_dim();
    let mut amps = Vec::with_capacity(coarse.len() * k);
    for i in 0..coarse.len() {
        let fc: Vec<usize> = coarse.coords(i).into_iter().map(|c| c * factor).collect();
        amps.extend_from_slice(fine.site(fine.grid().index(&fc)));
    }
    let mut out = SpinorField::from_amplitudes(&coarse_dims, k, fine.eps() * factor as f64, amps)?;
    out.set_time(fine.time());
    Ok(out)
}

pub type CoefficientFn = Arc<dyn Fn(&[f64]) -> (Vec<ComplexMatrix>, ComplexMatrix) + Send + Sync>;
pub type InitialFn = Arc<dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync>;

/// A walk-versus-reference experiment on the periodic box `[0, length)^n`.
#[derive(Clone)]
pub struct ConvergenceProblem {
    pub ndim: usize,
    pub spin_dim: usize,
    pub length: f64,
    pub t_final: f64,
    /// Reference sites per axis.
    pub reference_sites: usize,
    /// `X -> (B1 per axis, C)`.
    pub coefficients: CoefficientFn,
    pub initial: InitialFn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    /// Walk steps per rung.
    pub steps: Vec<u64>,
    /// Physical time reached by each rung, `2 eps steps`.
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})`.
    pub orders: Vec<f64>,
    /// Per order: both errors at the noise floor.
    pub noise_floor: Vec<bool>,
    pub runtime_seconds: Vec<f64>,
}

impl ConvergenceReport {
    /// Every pairwise order in the band (or at the noise floor) and errors
    /// strictly decreasing away from the floor.
    pub fn passes(&self) -> bool {
        let (lo, hi) = ORDER_BAND;
        self.orders
            .iter()
            .zip(&self.noise_floor)
            .zip(self.errors.windows(2))
            .all(|((&p, &floor), e)| floor || (p.is_finite() && (lo..=hi).contains(&p) && e[1] < e[0]))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "error", "order", "runtime_seconds"])?;
        for k in 0..self.eps.len() {
            let order = if k == 0 {
                String::new()
            } else {
                format!("{}", self.orders[k - 1])
            };
            w.write_record([
                format!("{}", self.eps[k]),
                format!("{:e}", self.errors[k]),
                order,
                format!("{:.6}", self.runtime_seconds[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the walk at each rung of a halving ladder and compares against one
/// shared reference run on a nested finer grid.
pub fn convergence_order(problem: &ConvergenceProblem, eps_ladder: &[f64]) -> Result<ConvergenceReport> {
    if eps_ladder.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "ladder too short: {} rungs, at least 3 needed",
            eps_ladder.len()
        )));
    }
    for w in eps_ladder.windows(2) {
        if (w[0] / w[1] - 2.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "ladder must halve at each rung, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut sites = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let n = problem.length / eps;
        let nr = n.round();
        if (n - nr).abs() > 1e-6 || nr < 4.0 || !(nr as usize).is_multiple_of(4) {
            return Err(Error::InvalidArgument(format!(
                "spacing {eps} gives {n} sites on the domain; need a multiple of 4"
            )));
        }
        sites.push(nr as usize);
    }
    let finest = *sites.last().unwrap_or(&1);
    let nref = problem.reference_sites;
    if nref < 4 * finest || !nref.is_multiple_of(finest) {
        return Err(Error::InvalidArgument(format!(
            "reference grid of {nref} sites must be a multiple of, and at least 4x, the finest walk grid ({finest})"
        )));
    }

    let steps: Vec<u64> = eps_ladder
        .iter()
        .map(|&e| (problem.t_final / (2.0 * e)).round().max(1.0) as u64)
        .collect();
    let times: Vec<f64> = eps_ladder
        .iter()
        .zip(&steps)
        .map(|(&e, &s)| 2.0 * e * s as f64)
        .collect();

    let h = problem.length / nref as f64;
    let ref_dims = vec![nref; problem.ndim];
    let coeffs = ReferenceCoefficients::from_fn(&ref_dims, h, |x| (problem.coefficients)(x))?;
    let psi_ref0 = SpinorField::from_fn(&ref_dims, problem.spin_dim, h, |x| (problem.initial)(x))?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let states = reference_evolve_checkpoints(&coeffs, &psi_ref0, &sorted)?;
    let mut reference: Vec<Option<SpinorField>> = vec![None; times.len()];
    for (slot, state) in order.into_iter().zip(states) {
        reference[slot] = Some(state);
    }

    let mut errors = Vec::with_capacity(eps_ladder.len());
    let mut runtime = Vec::with_capacity(eps_ladder.len());
    for (k, &eps) in eps_ladder.iter().enumerate() {
        let start = Instant::now();
        let n = sites[k];
        let dims = vec![n; problem.ndim];
        let grid = Grid::new(&dims)?;
        let mut b_axes = vec![Vec::with_capacity(grid.len()); problem.ndim];
        let mut c = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let (bs, cc) = (problem.coefficients)(&grid.position(i, eps));
            for (a, m) in bs.into_iter().enumerate() {
                b_axes[a].push(m);
            }
            c.push(cc);
        }
        let fields = split_coefficients(&dims, eps, b_axes, &c)?;
        let coins = fields.iter().map(synthesize_axis).collect::<Result<Vec<_>>>()?;
        let psi0 = SpinorField::from_fn(&dims, problem.spin_dim, eps, |x| (problem.initial)(x))?;
        let traj = evolve(&psi0, &coins, steps[k], steps[k])?;
        let walk = traj.final_state();
        runtime.push(start.elapsed().as_secs_f64());
        let reference = restrict(reference[k].as_ref().expect("every rung has a checkpoint"), nref / n)?;
        errors.push(l2_error(walk, &reference)?);
    }

    let orders = errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let noise_floor = errors
        .windows(2)
        .map(|e| e[0] <= NOISE_FLOOR && e[1] <= NOISE_FLOOR)
        .collect();
    Ok(ConvergenceReport {
        eps: eps_ladder.to_vec(),
        steps,
        times,
        errors,
        orders,
        noise_floor,
        runtime_seconds: runtime,
    })
}

/// Unit-norm Gaussian packet `chi exp(-|X - X0|^2 / (2 width^2))` on an
/// `n`-dimensional box, normalized analytically.
pub fn gaussian_packet(center: Vec<f64>, width: f64, chi: Vec<Complex64>) -> InitialFn {
    let n = center.len() as i32;
    let chi_norm: f64 = chi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let amp = 1.0 / ((width * std::f64::consts::PI.sqrt()).powi(n).sqrt() * chi_norm);
    Arc::new(move |x: &[f64]| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
        let g = amp * (-r2 / (2.0 * width * width)).exp();
        chi.iter().map(|z| z * g).collect()
    })
}
