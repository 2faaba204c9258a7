//! Spinor fields on periodic lattices and the paired-walk update.
//!
//! Along a stepping axis, sites are grouped in pairs `(x+1, x-1)` around a
//! group centre `x`. Centres whose coordinate is `0` or `1` modulo 4 form one
//! partition of the line into disjoint pairs, centres at `2` or `3` modulo 4
//! form the other. A step reads groups of one partition and writes groups of
//! the other, and the roles alternate from step to step, so decoding after a
//! step and re-encoding before the next cancel exactly.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::synth::{pre_encoding, synthesize_axis_dynamic, CoefficientField, CoinSet};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Field of `spin_dim`-component complex vectors, one per lattice site.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    grid: Grid,
    spin_dim: usize,
    amplitudes: Vec<Complex64>,
    eps: f64,
    time: f64,
    step: u64,
}

impl SpinorField {
    pub fn zeros(dims: &[usize], spin_dim: usize, eps: f64) -> Result<Self> {
        let n: usize = dims.iter().product();
        Self::from_amplitudes(dims, spin_dim, eps, vec![ZERO; n * spin_dim])
    }

    pub fn from_amplitudes(dims: &[usize], spin_dim: usize, eps: f64, amplitudes: Vec<Complex64>) -> Result<Self> {
        let grid = Grid::new(dims)?;
        for (a, &n) in dims.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "axis {a} has {n} sites; every axis needs an even count of at least 4"
                )));
            }
        }
        if spin_dim == 0 {
            return Err(Error::InvalidArgument("spin dimension must be positive".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got {eps}"
            )));
        }
        if amplitudes.len() != grid.len() * spin_dim {
            return Err(Error::Shape(format!(
                "expected {} amplitudes, got {}",
                grid.len() * spin_dim,
                amplitudes.len()
            )));
        }
        Ok(Self {
            grid,
            spin_dim,
            amplitudes,
            eps,
            time: 0.0,
            step: 0,
        })
    }

    /// Samples `f(X)` at `X = eps * x`.
    pub fn from_fn(dims: &[usize], spin_dim: usize, eps: f64, f: impl Fn(&[f64]) -> Vec<Complex64>) -> Result<Self> {
        let grid = Grid::new(dims)?;
        let mut amps = Vec::with_capacity(grid.len() * spin_dim);
        for i in 0..grid.len() {
            let v = f(&grid.position(i, eps));
            if v.len() != spin_dim {
                return Err(Error::Shape(format!(
                    "sample has {} components, expected {spin_dim}",
                    v.len()
                )));
            }
            amps.extend(v);
        }
        Self::from_amplitudes(dims, spin_dim, eps, amps)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> &[usize] {
        self.grid.dims()
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Number of full steps taken since construction.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn site(&self, index: usize) -> &[Complex64] {
        &self.amplitudes[index * self.spin_dim..(index + 1) * self.spin_dim]
    }

    /// `sum |psi|^2` over sites and components, summed in index order.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `sqrt(eps^n sum |psi|^2)`, the discrete L2 norm.
    pub fn l2_norm(&self) -> f64 {
        (self.eps.powi(self.grid.ndim() as i32) * self.norm_sqr()).sqrt()
    }

    /// `<self, other> = sum conj(self) other`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_same_shape(other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn scale(&mut self, x: f64) {
        for z in self.amplitudes.iter_mut() {
            *z *= x;
        }
    }

    /// Field translated by `k` sites along `axis`: `out(x) = self(x - k)`.
    pub fn cyclic_shift(&self, axis: usize, k: isize) -> Self {
        let mut out = self.clone();
        let s = self.spin_dim;
        for i in 0..self.grid.len() {
            let from = self.grid.shift(i, axis, -k);
            out.amplitudes[i * s..(i + 1) * s].copy_from_slice(self.site(from));
        }
        out
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.spin_dim != other.spin_dim {
            return Err(Error::Shape(format!(
                "fields differ in shape: {:?}x{} vs {:?}x{}",
                self.dims(),
                self.spin_dim,
                other.dims(),
                other.spin_dim
            )));
        }
        Ok(())
    }
}

/// Hadamard-combined pairs `(u, d, u', d')`, one `2 * spin_dim` vector per group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedField {
    axis: usize,
    parity: u8,
    spin_dim: usize,
    centers: Vec<usize>,
    groups: Vec<Complex64>,
    template: SpinorField,
}

impl GroupedField {
    pub fn axis(&self) -> usize {
        self.axis
    }

    /// 0 when centres sit at `0, 1 (mod 4)`, 1 for `2, 3 (mod 4)`.
    pub fn parity(&self) -> u8 {
        self.parity
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Flattened lattice index of the centre of group `g`.
    pub fn center(&self, g: usize) -> usize {
        self.centers[g]
    }

    pub fn group(&self, g: usize) -> &[Complex64] {
        let w = 2 * self.spin_dim;
        &self.groups[g * w..(g + 1) * w]
    }

    pub fn u(&self, g: usize) -> &[Complex64] {
        let h = self.spin_dim / 2;
        &self.group(g)[..h]
    }

    pub fn d(&self, g: usize) -> &[Complex64] {
        let h = self.spin_dim / 2;
        &self.group(g)[h..2 * h]
    }

    pub fn u_prime(&self, g: usize) -> &[Complex64] {
        let h = self.spin_dim / 2;
        &self.group(g)[2 * h..3 * h]
    }

    pub fn d_prime(&self, g: usize) -> &[Complex64] {
        let h = self.spin_dim / 2;
        &self.group(g)[3 * h..]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.groups.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn check_axis(psi: &SpinorField, axis: usize) -> Result<usize> {
    if axis >= psi.grid.ndim() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
    }
    let n = psi.dims()[axis];
    if !n.is_multiple_of(4) {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} has {n} sites; pairing needs a multiple of 4"
        )));
    }
    if !psi.spin_dim.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "spin dimension {} is odd; the upper and lower halves must match",
            psi.spin_dim
        )));
    }
    Ok(n)
}

#[inline]
fn in_partition(coord: usize, parity: u8) -> bool {
    coord % 4 / 2 == parity as usize
}

/// Groups the field along `axis` into the partition read by the next step.
pub fn pre_encode(psi: &SpinorField, axis: usize) -> Result<GroupedField> {
    check_axis(psi, axis)?;
    let parity = (psi.step % 2) as u8;
    let grid = &psi.grid;
    let k = psi.spin_dim;
    let h = pre_encoding(k);
    let centers: Vec<usize> = (0..grid.len())
        .filter(|&i| in_partition(grid.coord(i, axis), parity))
        .collect();
    let mut groups = Vec::with_capacity(centers.len() * 2 * k);
    let mut raw = vec![ZERO; 2 * k];
    for &c in &centers {
        raw[..k].copy_from_slice(psi.site(grid.shift(c, axis, 1)));
        raw[k..].copy_from_slice(psi.site(grid.shift(c, axis, -1)));
        groups.extend(h.matvec(&raw));
    }
    Ok(GroupedField {
        axis,
        parity,
        spin_dim: k,
        centers,
        groups,
        template: psi.clone(),
    })
}

/// Exact inverse of [`pre_encode`].
pub fn decode(grouped: &GroupedField) -> SpinorField {
    let mut out = grouped.template.clone();
    let k = grouped.spin_dim;
    let h = pre_encoding(k);
    let grid = out.grid.clone();
    let mut raw = vec![ZERO; 2 * k];
    for (g, &c) in grouped.centers.iter().enumerate() {
        h.adjoint_matvec_into(grouped.group(g), &mut raw);
        let up = grid.shift(c, grouped.axis, 1);
        let down = grid.shift(c, grouped.axis, -1);
        out.amplitudes[up * k..(up + 1) * k].copy_from_slice(&raw[..k]);
        out.amplitudes[down * k..(down + 1) * k].copy_from_slice(&raw[k..]);
    }
    out
}

fn check_coins(psi: &SpinorField, coins: &CoinSet) -> Result<()> {
    let axis = coins.axis();
    check_axis(psi, axis)?;
    if coins.dims() != psi.dims() {
        return Err(Error::Shape(format!(
            "coins for lattice {:?} applied to field on {:?}",
            coins.dims(),
            psi.dims()
        )));
    }
    if coins.spin_dim() != psi.spin_dim {
        return Err(Error::Shape(format!(
            "coins for spin dimension {} applied to a {}-component field",
            coins.spin_dim(),
            psi.spin_dim
        )));
    }
    if (coins.eps() - psi.eps).abs() > 1e-12 * psi.eps {
        return Err(Error::Shape(format!(
            "coins built for spacing {} applied to a field with spacing {}",
            coins.eps(),
            psi.eps
        )));
    }
    Ok(())
}

/// One walk sub-step along the coin set's axis, in place of the amplitudes.
fn apply_axis(psi: &mut SpinorField, coins: &CoinSet, parity: u8) {
    let axis = coins.axis();
    let grid = psi.grid.clone();
    let k = psi.spin_dim;
    let w = 2 * k;
    let n = grid.len();
    let src = &psi.amplitudes;

    // encode every group of the input partition
    let mut enc = vec![ZERO; n * w];
    enc.par_chunks_mut(w).enumerate().for_each_init(
        || vec![ZERO; w],
        |raw, (c, out)| {
            if !in_partition(grid.coord(c, axis), parity) {
                return;
            }
            let up = grid.shift(c, axis, 1);
            let down = grid.shift(c, axis, -1);
            raw[..k].copy_from_slice(&src[up * k..(up + 1) * k]);
            raw[k..].copy_from_slice(&src[down * k..(down + 1) * k]);
            coins.encoding(c).matvec_into(raw, out);
        },
    );

    // collect primed halves from the left, unprimed from the right, then E^H W'
    let out_parity = 1 - parity;
    let mut groups = vec![ZERO; n * w];
    groups.par_chunks_mut(w).enumerate().for_each_init(
        || vec![ZERO; w],
        |v, (c, out)| {
            if !in_partition(grid.coord(c, axis), out_parity) {
                return;
            }
            let left = grid.shift(c, axis, -2);
            let right = grid.shift(c, axis, 2);
            v[..k].copy_from_slice(&enc[left * w + k..(left + 1) * w]);
            v[k..].copy_from_slice(&enc[right * w..right * w + k]);
            coins.step_op(c).matvec_into(v, out);
        },
    );

    // decode: site y is the upper member of centre y-1 or the lower of y+1
    psi.amplitudes.par_chunks_mut(k).enumerate().for_each(|(y, out)| {
        let below = grid.shift(y, axis, -1);
        if in_partition(grid.coord(below, axis), out_parity) {
            out.copy_from_slice(&groups[below * w..below * w + k]);
        } else {
            let above = grid.shift(y, axis, 1);
            out.copy_from_slice(&groups[above * w + k..(above + 1) * w]);
        }
    });
}

/// A single-axis walk step; advances time by `2 eps`.
pub fn axis_step(psi: &SpinorField, coins: &CoinSet) -> Result<SpinorField> {
    check_coins(psi, coins)?;
    let mut out = psi.clone();
    apply_axis(&mut out, coins, (psi.step % 2) as u8);
    out.step += 1;
    out.time += 2.0 * psi.eps;
    Ok(out)
}

/// One sub-step per axis in ascending axis order, sharing one time increment.
pub fn full_step(psi: &SpinorField, coinsets: &[CoinSet]) -> Result<SpinorField> {
    let mut out = psi.clone();
    full_step_in_place(&mut out, coinsets)?;
    Ok(out)
}

fn check_coinsets(psi: &SpinorField, coinsets: &[CoinSet]) -> Result<()> {
    let n = psi.grid.ndim();
    if coinsets.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} coin sets supplied for a {n}-dimensional field",
            coinsets.len()
        )));
    }
    for (a, cs) in coinsets.iter().enumerate() {
        if cs.axis() != a {
            return Err(Error::InvalidArgument(format!(
                "coin set {a} is built for axis {}; supply one per axis in ascending order",
                cs.axis()
            )));
        }
        check_coins(psi, cs)?;
    }
    Ok(())
}

fn full_step_in_place(psi: &mut SpinorField, coinsets: &[CoinSet]) -> Result<()> {
    check_coinsets(psi, coinsets)?;
    let parity = (psi.step % 2) as u8;
    for cs in coinsets {
        apply_axis(psi, cs, parity);
    }
    psi.step += 1;
    psi.time += 2.0 * psi.eps;
    Ok(())
}

/// Norm bookkeeping for one state of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormRecord {
    pub step: u64,
    pub time: f64,
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Deep copies at step 0, every `snapshot_every` steps, and the end.
    pub snapshots: Vec<SpinorField>,
    /// `|psi|` after every step, starting with the initial state.
    pub norms: Vec<NormRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpinorField {
        self.snapshots
            .last()
            .expect("trajectory holds at least the initial state")
    }

    /// `|norm_end / norm_start - 1|`.
    pub fn relative_drift(&self) -> f64 {
        let first = self.norms.first().map_or(0.0, |r| r.norm);
        let last = self.norms.last().map_or(0.0, |r| r.norm);
        if first == 0.0 {
            0.0
        } else {
            (last / first - 1.0).abs()
        }
    }
}

fn record(psi: &SpinorField) -> NormRecord {
    NormRecord {
        step: psi.step,
        time: psi.time,
        norm: psi.norm_sqr().sqrt(),
    }
}

fn check_run(n_steps: u64, snapshot_every: u64) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("evolution needs at least one step".into()));
    }
    if snapshot_every == 0 {
        return Err(Error::InvalidArgument("snapshot cadence must be at least 1".into()));
    }
    Ok(())
}

fn run(
    psi0: &SpinorField,
    n_steps: u64,
    snapshot_every: u64,
    mut step: impl FnMut(&mut SpinorField) -> Result<()>,
) -> Result<Trajectory> {
    check_run(n_steps, snapshot_every)?;
    let mut psi = psi0.clone();
    let mut snapshots = vec![psi.clone()];
    let mut norms = vec![record(&psi)];
    for s in 1..=n_steps {
        step(&mut psi)?;
        norms.push(record(&psi));
        if s % snapshot_every == 0 || s == n_steps {
            snapshots.push(psi.clone());
        }
    }
    Ok(Trajectory { snapshots, norms })
}

/// Iterates [`full_step`] with fixed coins.
pub fn evolve(psi0: &SpinorField, coinsets: &[CoinSet], n_steps: u64, snapshot_every: u64) -> Result<Trajectory> {
    check_coinsets(psi0, coinsets)?;
    run(psi0, n_steps, snapshot_every, |psi| full_step_in_place(psi, coinsets))
}

/// Evolution under time-dependent coefficients. `fields_at(t)` returns one
/// field per axis; the step from `t` to `t + 2 eps` uses coins synthesized at
/// its midpoint, with the time derivative of the encodings taken across the
/// whole step.
pub fn evolve_dynamic(
    psi0: &SpinorField,
    fields_at: impl Fn(f64) -> Result<Vec<CoefficientField>>,
    n_steps: u64,
    snapshot_every: u64,
) -> Result<Trajectory> {
    let eps = psi0.eps;
    run(psi0, n_steps, snapshot_every, |psi| {
        let mid = psi.time + eps;
        let before = fields_at(mid - eps)?;
        let now = fields_at(mid)?;
        let after = fields_at(mid + eps)?;
        let coins = now
            .iter()
            .zip(&before)
            .zip(&after)
            .map(|((n, b), a)| synthesize_axis_dynamic(b, n, a, eps))
            .collect::<Result<Vec<_>>>()?;
        full_step_in_place(psi, &coins)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{sigma_x, sigma_z, ComplexMatrix};
    use crate::synth::synthesize_axis;
    use std::f64::consts::{PI, SQRT_2};

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn coins_1d(n: usize, eps: f64, b1: ComplexMatrix, c: ComplexMatrix) -> CoinSet {
        synthesize_axis(&CoefficientField::uniform(&[n], 0, eps, &b1, &c).unwrap()).unwrap()
    }

    fn gaussian(n: usize, eps: f64) -> SpinorField {
        SpinorField::from_fn(&[n], 2, eps, |x| {
            let g = (-(x[0] - PI).powi(2) / 0.5).exp();
            vec![c64(g, 0.2 * g), c64(0.5 * g, -g)]
        })
        .unwrap()
    }

    #[test]
    fn constant_field_encodes_to_unprimed_components() {
        let v = [c64(0.3, -0.1), c64(-0.7, 0.2)];
        let psi = SpinorField::from_fn(&[8], 2, 0.5, |_| v.to_vec()).unwrap();
        let g = pre_encode(&psi, 0).unwrap();
        assert_eq!(g.len(), 4);
        for i in 0..g.len() {
            assert!((g.u(i)[0] - v[0] * SQRT_2).norm() < 1e-15);
            assert!((g.d(i)[0] - v[1] * SQRT_2).norm() < 1e-15);
            assert!(g.u_prime(i)[0].norm() < 1e-15);
            assert!(g.d_prime(i)[0].norm() < 1e-15);
        }
    }

    #[test]
    fn ramp_encodes_difference() {
        let psi = SpinorField::from_fn(&[16], 2, 1.0, |x| vec![c64(x[0], 0.0), c64(0.0, 0.0)]).unwrap();
        let g = pre_encode(&psi, 0).unwrap();
        for i in 0..g.len() {
            let c = psi.grid().coord(g.center(i), 0);
            if c == 0 || c == 15 {
                continue;
            }
            assert!((g.u_prime(i)[0] - c64(SQRT_2, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn encode_round_trip() {
        let psi = gaussian(16, 0.3);
        let back = decode(&pre_encode(&psi, 0).unwrap());
        for (a, b) in psi.amplitudes().iter().zip(back.amplitudes()) {
            assert!((a - b).norm() <= 1e-15);
        }
        assert!((pre_encode(&psi, 0).unwrap().norm_sqr() - psi.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn odd_pairing_rejected() {
        let psi = SpinorField::zeros(&[6], 2, 0.1).unwrap();
        assert!(pre_encode(&psi, 0).is_err());
        assert!(SpinorField::zeros(&[5], 2, 0.1).is_err());
    }

    #[test]
    fn zero_coefficients_leave_constant_field() {
        let eps = 0.2;
        let coins = coins_1d(8, eps, ComplexMatrix::zeros(2, 2), ComplexMatrix::zeros(2, 2));
        let psi = SpinorField::from_fn(&[8], 2, eps, |_| vec![c64(0.6, 0.1), c64(-0.2, 0.5)]).unwrap();
        for _ in 0..2 {
            let out = axis_step(&psi, &coins).unwrap();
            for (a, b) in psi.amplitudes().iter().zip(out.amplitudes()) {
                assert!((a - b).norm() <= 1e-12);
            }
        }
        let out = axis_step(&psi, &coins).unwrap();
        assert_eq!(out.step(), 1);
        assert!((out.time() - 2.0 * eps).abs() < 1e-15);
    }

    #[test]
    fn massless_flat_step_transports_unprimed_components() {
        // d_t psi+ = d_x psi+: u moves two sites left, d two sites right
        let n = 32;
        let coins = coins_1d(n, 0.1, sigma_z(), ComplexMatrix::zeros(2, 2));
        let psi = gaussian(n, 0.1);
        let before = pre_encode(&psi, 0).unwrap();
        let after = pre_encode(&axis_step(&psi, &coins).unwrap(), 0).unwrap();
        let grid = psi.grid();
        let find = |g: &GroupedField, site: usize| (0..g.len()).find(|&i| g.center(i) == site).unwrap();
        for i in 0..before.len() {
            let c = before.center(i);
            let left = find(&after, grid.shift(c, 0, -2));
            let right = find(&after, grid.shift(c, 0, 2));
            assert!((after.u(left)[0] - before.u(i)[0]).norm() <= 1e-12);
            assert!((after.d(right)[0] - before.d(i)[0]).norm() <= 1e-12);
        }
    }

    #[test]
    fn steps_preserve_norm_and_are_deterministic() {
        let n = 64;
        let eps = 2.0 * PI / n as f64;
        let field = CoefficientField::from_fn(&[n], 0, eps, |x| {
            (
                sigma_z().scale_real(0.5 * (1.0 + 0.3 * x[0].sin())),
                sigma_x().scale_real(0.7),
            )
        })
        .unwrap();
        let coins = synthesize_axis(&field).unwrap();
        let psi = gaussian(n, eps);
        let t = evolve(&psi, std::slice::from_ref(&coins), 100, 25).unwrap();
        assert_eq!(t.snapshots.len(), 5);
        assert_eq!(t.norms.len(), 101);
        assert!(t.relative_drift() <= 1e-10);
        let t2 = evolve(&psi, std::slice::from_ref(&coins), 100, 25).unwrap();
        assert_eq!(t.final_state(), t2.final_state());
        // input untouched
        assert_eq!(psi.step(), 0);
    }

    #[test]
    fn single_step_trajectory() {
        let coins = coins_1d(8, 0.1, sigma_z(), sigma_x());
        let psi = gaussian(8, 0.1);
        let t = evolve(&psi, std::slice::from_ref(&coins), 1, 1).unwrap();
        assert_eq!(t.snapshots.len(), 2);
        assert_eq!(t.snapshots[0], psi);
        assert_eq!(t.snapshots[1], full_step(&psi, std::slice::from_ref(&coins)).unwrap());
        assert!(evolve(&psi, std::slice::from_ref(&coins), 0, 1).is_err());
        assert!(evolve(&psi, std::slice::from_ref(&coins), 3, 0).is_err());
    }

    #[test]
    fn uniform_coins_commute_with_pairing_period_shift() {
        let n = 32;
        let coins = coins_1d(n, 0.2, sigma_x().scale_real(0.6), sigma_z().scale_real(0.4));
        let psi = gaussian(n, 0.2);
        let a = axis_step(&psi.cyclic_shift(0, 4), &coins).unwrap();
        let b = axis_step(&psi, &coins).unwrap().cyclic_shift(0, 4);
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() <= 1e-12);
        }
    }

    #[test]
    fn mismatched_coins_rejected() {
        let coins = coins_1d(8, 0.1, sigma_z(), sigma_x());
        let psi = SpinorField::zeros(&[16], 2, 0.1).unwrap();
        assert!(axis_step(&psi, &coins).is_err());
        let psi = SpinorField::zeros(&[8], 2, 0.2).unwrap();
        assert!(axis_step(&psi, &coins).is_err());
        let psi = SpinorField::zeros(&[8, 8], 2, 0.1).unwrap();
        assert!(full_step(&psi, std::slice::from_ref(&coins)).is_err());
    }

    #[test]
    fn static_dynamic_evolution_matches_static() {
        let n = 16;
        let eps = 2.0 * PI / n as f64;
        let field = CoefficientField::uniform(&[n], 0, eps, &sigma_z().scale_real(0.5), &sigma_x()).unwrap();
        let coins = synthesize_axis(&field).unwrap();
        let psi = gaussian(n, eps);
        let a = evolve(&psi, std::slice::from_ref(&coins), 4, 4).unwrap();
        let b = evolve_dynamic(&psi, |_| Ok(vec![field.clone()]), 4, 4).unwrap();
        assert_eq!(a.final_state(), b.final_state());
    }

    #[test]
    fn time_dependent_evolution_is_unitary() {
        let n = 32;
        let eps = 2.0 * PI / n as f64;
        let psi = gaussian(n, eps);
        let t = evolve_dynamic(
            &psi,
            |t| {
                Ok(vec![CoefficientField::uniform(
                    &[n],
                    0,
                    eps,
                    &sigma_z().scale_real(0.5 + 0.2 * t.sin()),
                    &ComplexMatrix::zeros(2, 2),
                )?])
            },
            20,
            5,
        )
        .unwrap();
        assert!(t.relative_drift() <= 1e-10);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::matcore::{sigma_x, sigma_z, ComplexMatrix};
    use crate::sampling::{random_hermitian, random_hermitian_with_spectrum, random_vector, seeded};
    use crate::synth::synthesize_axis;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn random_coins(seed: u64, n: usize, eps: f64) -> CoinSet {
        let mut rng = seeded(seed);
        let b1 = random_hermitian_with_spectrum(&mut rng, 2, -0.99, 0.99);
        let c = random_hermitian(&mut rng, 2, 1.0);
        synthesize_axis(&CoefficientField::uniform(&[n], 0, eps, &b1, &c).unwrap()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn steps_preserve_inner_products(seed in any::<u64>()) {
            let n = 16;
            let coins = random_coins(seed, n, 0.2);
            let mut rng = seeded(seed ^ 0x5eed);
            let a = SpinorField::from_amplitudes(&[n], 2, 0.2, random_vector(&mut rng, 2 * n)).unwrap();
            let b = SpinorField::from_amplitudes(&[n], 2, 0.2, random_vector(&mut rng, 2 * n)).unwrap();
            let before = a.inner(&b).unwrap();
            let ua = full_step(&a, std::slice::from_ref(&coins)).unwrap();
            let ub = full_step(&b, std::slice::from_ref(&coins)).unwrap();
            prop_assert!((ua.inner(&ub).unwrap() - before).norm() <= 1e-12 * (1.0 + before.norm()));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn primed_components_stay_small(phase in 0.0f64..(2.0 * PI), mass in 0.0f64..1.0, curved in any::<bool>()) {
            let n = 128;
            let eps = 2.0 * PI / n as f64;
            let field = CoefficientField::from_fn(&[n], 0, eps, |x| {
                let speed = if curved { 0.5 * (1.0 + 0.3 * x[0].sin()) } else { 1.0 };
                (sigma_z().scale_real(speed), sigma_x().scale_real(mass))
            }).unwrap();
            let coins = [synthesize_axis(&field).unwrap()];
            let f = |x: f64| (x + phase).sin().exp();
            let df = |x: f64| (x + phase).cos() * f(x);
            let psi0 = SpinorField::from_fn(&[n], 2, eps, |x| {
                vec![Complex64::new(f(x[0]), 0.0), Complex64::new(0.0, 0.5 * f(-x[0]))]
            }).unwrap();
            let max_grad = (0..4096)
                .map(|i| {
                    let x = 2.0 * PI * i as f64 / 4096.0;
                    (df(x).powi(2) + (0.5 * df(-x)).powi(2)).sqrt()
                })
                .fold(0.0, f64::max);
            let traj = evolve(&psi0, &coins, 50, 1).unwrap();
            let mut worst = 0.0f64;
            for psi in &traj.snapshots {
                let g = pre_encode(psi, 0).unwrap();
                for i in 0..g.len() {
                    let p: f64 = g.u_prime(i).iter().chain(g.d_prime(i)).map(|z| z.norm_sqr()).sum();
                    worst = worst.max(p.sqrt());
                }
            }
            prop_assert!(worst <= 4.0 * eps * max_grad, "K = {}", worst / (eps * max_grad));
        }
    }

    #[test]
    fn uniform_step_is_unitary_for_zero_coefficients() {
        let coins = synthesize_axis(
            &CoefficientField::uniform(&[8], 0, 0.1, &ComplexMatrix::zeros(2, 2), &ComplexMatrix::zeros(2, 2)).unwrap(),
        )
        .unwrap();
        let psi = SpinorField::from_fn(&[8], 2, 0.1, |x| {
            vec![Complex64::new(x[0], 0.0), Complex64::new(0.0, 1.0)]
        })
        .unwrap();
        let out = full_step(&psi, &[coins]).unwrap();
        assert!((out.norm_sqr() - psi.norm_sqr()).abs() <= 1e-12 * psi.norm_sqr());
    }
}
