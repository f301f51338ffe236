//! Dispatches a validated config to the matching solver and writes its
//! artifacts.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use chemoscale::compare::{distances_at, euler_ic_from_vlasov, optimize_epsilon, ComparisonRecord, EpsilonOptimum};
use chemoscale::euler::{euler_run, BlowUpReport, EulerOutcome, EulerRunConfig, EulerState, EulerTrajectory};
use chemoscale::grid::PhaseDensity;
use chemoscale::initial::{cosine_density, monokinetic_gauss, two_bump_v, two_bump_xv};
use chemoscale::particles::{
    particle_run, sample_particles, velocity_variance, mean_velocity, ParticleRunConfig, ParticleTrajectory,
};
use chemoscale::vlasov::{velocity_spread, vlasov_run, VlasovRunConfig, VlasovTrajectory};
use rayon::prelude::*;

use crate::config::{render, ExperimentConfig, InitialDataSpec, Objective, Scale};
use crate::error::{CliError, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The hydrodynamic solver stopped on its blow-up detector.
    BlowUp(BlowUpReport),
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::BlowUp(_) => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: RunStatus,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Optimum of the chosen distance at one comparison time.
#[derive(Debug, Clone)]
pub struct TimedOptimum {
    pub t: f64,
    pub optimum: EpsilonOptimum,
    /// Both distances at the optimum.
    pub record: ComparisonRecord,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    /// One record per fixed epsilon and comparison time; distances are NaN
    /// after an Euler blow-up.
    pub records: Vec<ComparisonRecord>,
    pub euler_runs: Vec<(f64, EulerTrajectory)>,
    pub optima: Vec<TimedOptimum>,
}

fn label(v: f64) -> String {
    format!("{v}")
}

/// Initial phase density for phase-space scales.
pub fn initial_density(cfg: &ExperimentConfig) -> Result<PhaseDensity> {
    let grid = cfg.phase_grid()?;
    Ok(match &cfg.initial {
        InitialDataSpec::TwoBumpV { v0, sigma_x, sigma_v } => two_bump_v(grid, *v0, *sigma_x, *sigma_v)?,
        InitialDataSpec::MonokineticGauss {
            x0,
            v0,
            sigma_x,
            sigma_v,
        } => monokinetic_gauss(grid, *x0, *v0, *sigma_x, *sigma_v)?,
        InitialDataSpec::TwoBumpXv {
            x1,
            v1,
            x2,
            v2,
            sigma_x,
            sigma_v,
        } => two_bump_xv(grid, (*x1, *v1), (*x2, *v2), *sigma_x, *sigma_v)?,
        InitialDataSpec::CustomCsv { path } => io::read_phase(path, grid)?,
        InitialDataSpec::CosineDensity { .. } => {
            return Err(CliError::Validation(vec![
                "initial.kind: cosine_density has no phase-space form".into(),
            ]))
        }
    })
}

/// Initial hydrodynamic state for the `euler` scale.
pub fn initial_hydro(cfg: &ExperimentConfig) -> Result<EulerState> {
    let grid = cfg.euler_grid()?;
    match &cfg.initial {
        InitialDataSpec::CosineDensity { c2 } => Ok(cosine_density(grid, *c2)?),
        InitialDataSpec::CustomCsv { path } => io::read_hydro(path, grid),
        _ => Ok(euler_ic_from_vlasov(&initial_density(cfg)?, &grid)?),
    }
}

pub fn vlasov_trajectory(cfg: &ExperimentConfig, keep_phase: bool) -> Result<VlasovTrajectory> {
    let rho0 = initial_density(cfg)?;
    let mut run = VlasovRunConfig::new(cfg.time.dt, cfg.time.t_final, cfg.time.snapshots.clone());
    run.keep_phase = keep_phase;
    if let Some(loss) = cfg.max_boundary_loss {
        run.max_boundary_loss = loss;
    }
    Ok(vlasov_run(&rho0, &cfg.vlasov_params()?, &run)?)
}

fn euler_config(cfg: &ExperimentConfig, snapshots: Vec<f64>) -> EulerRunConfig {
    let mut run = EulerRunConfig::new(cfg.time.dt, cfg.time.t_final, snapshots);
    if let Some(e) = cfg.euler {
        run.blowup_factor = e.blowup_factor;
    }
    run
}

pub fn euler_trajectory(cfg: &ExperimentConfig, state0: &EulerState, epsilon: f64) -> Result<EulerTrajectory> {
    let snapshots = cfg.time.snapshots.clone();
    Ok(euler_run(state0, &cfg.euler_params(epsilon)?, &euler_config(cfg, snapshots))?)
}

pub fn particle_trajectory(cfg: &ExperimentConfig) -> Result<ParticleTrajectory> {
    let spec = cfg.particles.ok_or_else(|| CliError::Validation(vec!["particles.n: missing".into()]))?;
    let rho0 = initial_density(cfg)?;
    let state0 = sample_particles(&rho0, spec.n, cfg.seed.unwrap_or(0))?;
    let run = ParticleRunConfig {
        kernel: cfg.params.kernel,
        chemo: cfg.params.chemo,
        chemo_grid: rho0.grid().x,
        normalize_source: spec.normalize_source,
        dt: cfg.time.dt,
        t_final: cfg.time.t_final,
        snapshot_times: cfg.time.snapshots.clone(),
    };
    Ok(particle_run(&state0, &run)?)
}

fn distances_or_nan(vt: &VlasovTrajectory, et: &EulerTrajectory, t: f64) -> Result<(f64, f64)> {
    if et.snapshot_at(t).is_none() && et.blew_up() {
        return Ok((f64::NAN, f64::NAN));
    }
    Ok(distances_at(vt, et, t)?)
}

/// Hydrodynamic side of a comparison against a finished kinetic run.
pub fn compare_with(cfg: &ExperimentConfig, vt: &VlasovTrajectory) -> Result<CompareOutcome> {
    let spec = cfg
        .compare
        .as_ref()
        .ok_or_else(|| CliError::Validation(vec!["scale: comparison needs scale = \"compare\"".into()]))?;
    let rho0 = initial_density(cfg)?;
    let state0 = euler_ic_from_vlasov(&rho0, &cfg.euler_grid()?)?;

    let euler_runs: Vec<(f64, EulerTrajectory)> = spec
        .epsilons
        .par_iter()
        .map(|&eps| euler_trajectory(cfg, &state0, eps).map(|et| (eps, et)))
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (eps, et) in &euler_runs {
        for &t in &spec.times {
            let (e0, e1) = distances_or_nan(vt, et, t)?;
            records.push(ComparisonRecord {
                t,
                epsilon: *eps,
                e0,
                e1,
            });
        }
    }

    let mut optima = Vec::new();
    if let Some(search) = &spec.search {
        // One Euler run per probed epsilon serves every comparison time.
        let cache: Mutex<HashMap<u64, Vec<(f64, f64)>>> = Mutex::new(HashMap::new());
        let probe = |eps: f64| -> Vec<(f64, f64)> {
            if let Some(hit) = cache.lock().expect("cache").get(&eps.to_bits()) {
                return hit.clone();
            }
            let out = match euler_run(
                &state0,
                &cfg.euler_params(eps).expect("validated parameters"),
                &euler_config(cfg, spec.times.clone()),
            ) {
                Ok(et) => spec
                    .times
                    .iter()
                    .map(|&t| distances_or_nan(vt, &et, t).unwrap_or((f64::NAN, f64::NAN)))
                    .collect(),
                Err(_) => vec![(f64::NAN, f64::NAN); spec.times.len()],
            };
            cache.lock().expect("cache").insert(eps.to_bits(), out.clone());
            out
        };
        for (k, &t) in spec.times.iter().enumerate() {
            let optimum = optimize_epsilon(search, |eps| {
                let (e0, e1) = probe(eps)[k];
                match spec.objective {
                    Objective::E0 => e0,
                    Objective::E1 => e1,
                }
            });
            let (e0, e1) = probe(optimum.epsilon)[k];
            optima.push(TimedOptimum {
                t,
                record: ComparisonRecord {
                    t,
                    epsilon: optimum.epsilon,
                    e0,
                    e1,
                },
                optimum,
            });
        }
    }
    Ok(CompareOutcome {
        records,
        euler_runs,
        optima,
    })
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }
}

/// Runs `cfg`, writing artifacts into `out_dir`. Blow-up of the hydrodynamic
/// solver is a successful detection and is returned as a status, not an
/// error.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut art = Artifacts {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let mut results: Vec<(String, String)> = Vec::new();
    let status = match cfg.scale {
        Scale::Particle => {
            write_particles(cfg, &mut art)?;
            RunStatus::Completed
        }
        Scale::Vlasov => {
            write_vlasov(cfg, &mut art, &mut results)?;
            if cfg.particles.is_some() {
                write_particles(cfg, &mut art)?;
            }
            RunStatus::Completed
        }
        Scale::Euler => write_euler(cfg, &mut art, &mut results)?,
        Scale::Compare => write_compare(cfg, &mut art, &mut results)?,
    };

    let mut header = vec![
        ("name".to_string(), format!("{:?}", cfg.name)),
        (
            "status".to_string(),
            match &status {
                RunStatus::Completed => "\"completed\"".to_string(),
                RunStatus::BlowUp(_) => "\"blow_up\"".to_string(),
            },
        ),
    ];
    header.extend(cfg.resolved.iter().map(|(k, v)| (k.clone(), render(v))));
    header.push(("wall_time_s".into(), format!("{:.3}", started.elapsed().as_secs_f64())));
    let path = art.path("run_header.txt");
    io::write_record(&path, &header)?;
    if !results.is_empty() {
        let path = art.path("results.txt");
        io::write_record(&path, &results)?;
    }
    Ok(RunSummary {
        status,
        out_dir: art.dir,
        files: art.files,
    })
}

fn write_particles(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let traj = particle_trajectory(cfg)?;
    let path = art.path("trajectory.csv");
    io::write_trajectory(&path, &traj.snapshots)?;
    let rows: Vec<Vec<f64>> = traj
        .snapshots
        .iter()
        .map(|s| {
            let mut row = vec![s.t, mean_velocity(s), velocity_variance(s)];
            if let Some(b) = cfg.v_band {
                let inside = s.v.iter().filter(|v| v.abs() <= b).count();
                row.push(inside as f64 / s.v.len() as f64);
            }
            row
        })
        .collect();
    let mut header = vec!["t", "mean_v", "var_v"];
    if cfg.v_band.is_some() {
        header.push("band_fraction");
    }
    let path = art.path("particle_diagnostics.csv");
    io::write_rows(&path, &header, &rows)?;
    let path = art.path("particle_psi_final.csv");
    io::write_field(&path, &traj.final_chemo.phi())
}

fn write_vlasov(cfg: &ExperimentConfig, art: &mut Artifacts, results: &mut Vec<(String, String)>) -> Result<()> {
    let keep_phase = cfg.write_phase || cfg.v_band.is_some();
    let vt = vlasov_trajectory(cfg, keep_phase)?;
    let grid = cfg.phase_grid()?;
    let mut rows = Vec::new();
    for s in &vt.snapshots {
        let t = label(s.t);
        io::write_moments(&art.path(&format!("moments_t{t}.csv")), &s.nu0, &s.nu1)?;
        io::write_field(&art.path(&format!("psi_t{t}.csv")), &s.psi)?;
        let mut row = vec![s.t, s.mass];
        if let Some(rho) = &s.rho {
            if cfg.write_phase {
                io::write_phase(&art.path(&format!("phase_t{t}.csv")), rho)?;
            }
            io::write_velocity_profile(&art.path(&format!("vmarginal_t{t}.csv")), &grid.v, &rho.velocity_marginal())?;
            row.push(velocity_spread(rho));
            if let Some(b) = cfg.v_band {
                row.push(rho.velocity_band_mass(b) / rho.mass());
            }
        }
        rows.push(row);
    }
    let mut header = vec!["t", "mass"];
    if keep_phase {
        header.push("velocity_spread");
    }
    if cfg.v_band.is_some() {
        header.push("band_fraction");
    }
    io::write_rows(&art.path("vlasov_diagnostics.csv"), &header, &rows)?;
    results.push(("vlasov.substeps".into(), vt.substeps.to_string()));
    results.push(("vlasov.boundary_loss".into(), vt.boundary_loss.to_string()));
    Ok(())
}

fn blowup_record(report: &BlowUpReport) -> Vec<(String, String)> {
    vec![
        ("time".into(), report.time.to_string()),
        ("max_mu".into(), report.max_mu.to_string()),
        ("reason".into(), format!("{:?}", report.reason)),
    ]
}

fn write_euler_snapshots(et: &EulerTrajectory, art: &mut Artifacts, prefix: &str) -> Result<()> {
    for s in &et.snapshots {
        let path = art.path(&format!("{prefix}_t{}.csv", label(s.t)));
        io::write_hydro(&path, &s.mu, &s.q, &s.psi)?;
    }
    Ok(())
}

fn write_euler(cfg: &ExperimentConfig, art: &mut Artifacts, results: &mut Vec<(String, String)>) -> Result<RunStatus> {
    let state0 = initial_hydro(cfg)?;
    let eps = cfg.params.epsilon.unwrap_or(0.0);
    let et = euler_trajectory(cfg, &state0, eps)?;
    write_euler_snapshots(&et, art, "euler")?;
    let rows: Vec<Vec<f64>> = et
        .snapshots
        .iter()
        .map(|s| {
            let st = EulerState::new(s.mu.clone(), s.q.clone(), s.t).expect("snapshot state");
            vec![s.t, st.mass(), st.max_density(), st.max_abs_velocity()]
        })
        .collect();
    io::write_rows(&art.path("euler_diagnostics.csv"), &["t", "mass", "max_mu", "max_abs_u"], &rows)?;
    results.push(("euler.steps".into(), et.steps.to_string()));
    results.push(("euler.final_time".into(), et.final_state.t.to_string()));
    results.push(("euler.final_max_abs_u".into(), et.final_state.max_abs_velocity().to_string()));
    Ok(match et.outcome {
        EulerOutcome::Completed => RunStatus::Completed,
        EulerOutcome::BlowUp(report) => {
            io::write_record(&art.path("blowup.txt"), &blowup_record(&report))?;
            RunStatus::BlowUp(report)
        }
    })
}

fn write_compare(cfg: &ExperimentConfig, art: &mut Artifacts, results: &mut Vec<(String, String)>) -> Result<RunStatus> {
    let vt = vlasov_trajectory(cfg, false)?;
    for s in &vt.snapshots {
        let t = label(s.t);
        io::write_moments(&art.path(&format!("moments_t{t}.csv")), &s.nu0, &s.nu1)?;
    }
    let outcome = compare_with(cfg, &vt)?;
    let mut status = RunStatus::Completed;
    for (eps, et) in &outcome.euler_runs {
        write_euler_snapshots(et, art, &format!("euler_eps{}", label(*eps)))?;
        if let EulerOutcome::BlowUp(report) = &et.outcome {
            io::write_record(&art.path(&format!("blowup_eps{}.txt", label(*eps))), &blowup_record(report))?;
            if status == RunStatus::Completed {
                status = RunStatus::BlowUp(report.clone());
            }
        }
    }
    if !outcome.records.is_empty() {
        io::write_comparison(&art.path("comparison.csv"), &outcome.records)?;
    }
    if !outcome.optima.is_empty() {
        let rows: Vec<ComparisonRecord> = outcome.optima.iter().map(|o| o.record).collect();
        io::write_comparison(&art.path("optimum.csv"), &rows)?;
        for o in &outcome.optima {
            io::write_probes(&art.path(&format!("probes_t{}.csv", label(o.t))), &o.optimum.probes)?;
            results.push((
                format!("optimum.t{}.epsilon_rounded", label(o.t)),
                o.optimum.epsilon_rounded.to_string(),
            ));
        }
    }
    results.push(("vlasov.substeps".into(), vt.substeps.to_string()));
    results.push(("vlasov.boundary_loss".into(), vt.boundary_loss.to_string()));
    Ok(status)
}
