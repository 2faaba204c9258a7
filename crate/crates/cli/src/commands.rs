//! The four subcommands. Each writes into the configured output directory.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use pairwalk::oracle::gaussian_packet;
use pairwalk::qwf::{self, coinset_to_qwf, matrices_from_qwf, matrices_to_qwf, spinor_to_qwf, tetrad_from_qwf};
use pairwalk::relativity::diagonal_sine_tetrad;
use pairwalk::sampling::{random_vector, seeded};
use pairwalk::synth::split_coefficients;
use pairwalk::{
    convergence_order, evolve, minkowski_tetrad, synthesize_axis, tetrad_to_coeffs, CoefficientField, CoinSet,
    Complex64, Residuals, Scenario, SpinorField, TetradField,
};

use crate::config::{Initial, RunConfig, Source, TetradSource};
use crate::error::CliError;

/// Allowed relative norm drift of a walk run.
pub const NORM_DRIFT_GATE: f64 = 1e-10;

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.resolved.toml"), cfg.resolved_toml())?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

struct Setup {
    dims: Vec<usize>,
    eps: f64,
    spin_dim: usize,
    fields: Vec<CoefficientField>,
}

fn read_matrix_field(path: &Path) -> Result<(Vec<usize>, Vec<pairwalk::ComplexMatrix>), CliError> {
    let a = qwf::read_file(path).map_err(|e| CliError::Config(format!("cannot load {}: {e}", path.display())))?;
    Ok(matrices_from_qwf(a)?)
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    match &cfg.source {
        Source::Preset(s) => {
            let eps = cfg.eps.expect("presets always have dims");
            Ok(Setup {
                dims: cfg.dims.clone(),
                eps,
                spin_dim: s.spin_dim(),
                fields: s.coefficient_fields(&cfg.dims, eps, cfg.mass)?,
            })
        }
        Source::Custom { b1_files, c_file } => {
            let (dims, c) = read_matrix_field(c_file)?;
            let mut b1 = Vec::with_capacity(b1_files.len());
            for p in b1_files {
                let (d, m) = read_matrix_field(p)?;
                if d != dims {
                    return Err(CliError::Config(format!(
                        "{} has extents {d:?} but the C field has {dims:?}",
                        p.display()
                    )));
                }
                b1.push(m);
            }
            if b1.len() != dims.len() {
                return Err(CliError::Config(format!(
                    "{} B1 files given for a {}-dimensional lattice",
                    b1.len(),
                    dims.len()
                )));
            }
            if !cfg.dims.is_empty() && cfg.dims != dims {
                return Err(CliError::Config(format!(
                    "`dims` {:?} disagrees with the coefficient files {dims:?}",
                    cfg.dims
                )));
            }
            let eps = cfg.eps.unwrap_or(2.0 * PI / dims[0] as f64);
            let spin_dim = c.first().map_or(0, |m| m.rows());
            let fields = split_coefficients(&dims, eps, b1, &c)?;
            Ok(Setup {
                dims,
                eps,
                spin_dim,
                fields,
            })
        }
    }
}

fn synthesize(fields: &[CoefficientField]) -> Result<Vec<CoinSet>, CliError> {
    fields
        .iter()
        .map(|f| synthesize_axis(f).map_err(CliError::from))
        .collect()
}

fn initial_state(cfg: &RunConfig, dims: &[usize], eps: f64, spin_dim: usize) -> Result<SpinorField, CliError> {
    match cfg.initial {
        Initial::Gaussian => {
            let length = eps * dims[0] as f64;
            let f = gaussian_packet(
                vec![0.5 * length; dims.len()],
                pairwalk::scenarios::PACKET_WIDTH,
                vec![Complex64::new(1.0, 0.0); spin_dim],
            );
            Ok(SpinorField::from_fn(dims, spin_dim, eps, |x| f(x))?)
        }
        Initial::Random => {
            let n: usize = dims.iter().product::<usize>() * spin_dim;
            let mut psi = SpinorField::from_amplitudes(dims, spin_dim, eps, random_vector(&mut seeded(cfg.seed), n))?;
            let norm = psi.l2_norm();
            psi.scale(1.0 / norm);
            Ok(psi)
        }
    }
}

fn write_coins(cfg: &RunConfig, coins: &[CoinSet]) -> Result<(), CliError> {
    for (axis, cs) in coins.iter().enumerate() {
        let (slots, index) = coinset_to_qwf(cs);
        qwf::write_file(&cfg.out.join(format!("coins_axis{axis}.qwf")), &slots)?;
        qwf::write_file(&cfg.out.join(format!("coins_axis{axis}_slots.qwf")), &index)?;
    }
    let mut w = csv_writer(&cfg.out.join("diagnostics.csv"))?;
    writeln!(w, "axis,residual,value,bound")?;
    for cs in coins {
        for (name, value) in cs.diagnostics().entries() {
            writeln!(w, "{},{name},{value:e},{:e}", cs.axis(), Residuals::bound(name))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    prepare_out(cfg)?;
    let coins = synthesize(&s.fields)?;
    write_coins(cfg, &coins)
}

fn run_walk(cfg: &RunConfig, coins: &[CoinSet], psi0: &SpinorField) -> Result<(), CliError> {
    let steps = cfg.require_steps()?;
    let every = cfg.snapshot_every.unwrap_or(steps);
    let traj = evolve(psi0, coins, steps, every)?;
    for snap in &traj.snapshots {
        qwf::write_file(
            &cfg.out.join(format!("snapshot_{}.qwf", snap.step())),
            &spinor_to_qwf(snap),
        )?;
    }
    let mut w = csv_writer(&cfg.out.join("norm.csv"))?;
    writeln!(w, "step,time,norm,relative_drift")?;
    let n0 = traj.norms[0].norm;
    for r in &traj.norms {
        let drift = if n0 > 0.0 { (r.norm / n0 - 1.0).abs() } else { 0.0 };
        writeln!(w, "{},{},{:.17e},{drift:e}", r.step, r.time, r.norm)?;
    }
    w.flush()?;
    let drift = traj.relative_drift();
    if drift > NORM_DRIFT_GATE {
        return Err(CliError::Gate(format!(
            "norm drift {drift:e} exceeds {NORM_DRIFT_GATE:e}"
        )));
    }
    Ok(())
}

pub fn cmd_evolve(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.require_steps()?;
    let s = setup(cfg)?;
    prepare_out(cfg)?;
    let coins = synthesize(&s.fields)?;
    write_coins(cfg, &coins)?;
    let psi0 = initial_state(cfg, &s.dims, s.eps, s.spin_dim)?;
    run_walk(cfg, &coins, &psi0)
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<(), CliError> {
    let scenario = match cfg.source {
        Source::Preset(s) => s,
        Source::Custom { .. } => {
            return Err(CliError::Config(
                "scenario `custom` has no continuum reference to converge against".into(),
            ))
        }
    };
    let problem = scenario.convergence_problem(cfg.mass, cfg.t_final, cfg.reference_sites);
    let ladder: Vec<f64> = cfg.ladder.iter().map(|&n| 2.0 * PI / n as f64).collect();
    let report = convergence_order(&problem, &ladder).map_err(|e| match e {
        pairwalk::Error::InvalidArgument(m) => CliError::Config(m),
        other => other.into(),
    })?;
    prepare_out(cfg)?;
    report.write_csv(csv_writer(&cfg.out.join("convergence.csv"))?)?;
    for (k, &floor) in report.noise_floor.iter().enumerate() {
        if floor {
            eprintln!("order between rungs {k} and {} is at the noise floor", k + 1);
        }
    }
    if !report.passes() {
        return Err(CliError::Gate(format!(
            "empirical orders {:?} outside [0.8, 2.2] or errors {:?} not decreasing",
            report.orders, report.errors
        )));
    }
    Ok(())
}

fn load_tetrad(cfg: &RunConfig) -> Result<TetradField, CliError> {
    if cfg.source != Source::Preset(Scenario::Minkowski3d) {
        return Err(CliError::Config(
            "the dirac command needs scenario `minkowski-3d`".into(),
        ));
    }
    let eps = cfg.eps.expect("preset dims are always set");
    Ok(match &cfg.tetrad {
        TetradSource::Minkowski => minkowski_tetrad(&cfg.dims, eps, cfg.mass)?,
        TetradSource::DiagonalSine(a) => diagonal_sine_tetrad(&cfg.dims, eps, cfg.mass, *a)?,
        TetradSource::File(p) => {
            let a = qwf::read_file(p).map_err(|e| CliError::Config(format!("cannot load {}: {e}", p.display())))?;
            let extent = a.shape().first().copied().unwrap_or(1).max(1);
            let eps = cfg.raw.eps.unwrap_or(2.0 * PI / extent as f64);
            let t = tetrad_from_qwf(a, eps, cfg.mass)?;
            if cfg.raw.dims.is_some() && t.dims() != cfg.dims.as_slice() {
                return Err(CliError::Config(format!(
                    "`dims` {:?} disagrees with the tetrad file {:?}",
                    cfg.dims,
                    t.dims()
                )));
            }
            t
        }
    })
}

pub fn cmd_dirac(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.require_steps()?;
    let tetrad = load_tetrad(cfg)?;
    let coeffs = tetrad_to_coeffs(&tetrad)?;
    prepare_out(cfg)?;
    for (axis, b) in coeffs.b1.iter().enumerate() {
        qwf::write_file(
            &cfg.out.join(format!("b1_axis{axis}.qwf")),
            &matrices_to_qwf(&coeffs.dims, b)?,
        )?;
    }
    qwf::write_file(&cfg.out.join("c.qwf"), &matrices_to_qwf(&coeffs.dims, &coeffs.c)?)?;
    let coins = synthesize(&coeffs.coefficient_fields()?)?;
    write_coins(cfg, &coins)?;
    let psi0 = initial_state(cfg, &coeffs.dims, coeffs.eps, 4)?;
    run_walk(cfg, &coins, &psi0)
}
