use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use translator_lab::bowl::{solve_profile, solve_profile_with, Profile, SolverOptions};
use translator_lab::cones::{boundary_ray_probe, estimate_beta2, validate_lambda, PinchingMode};
use translator_lab::estimates::{
    asymptotics_report, blowdown_report, cone_constants_report, cylindrical_estimate_report, iccond_report,
    linearized_cylinder_report, rotation_jacobi_residual, speed_jacobi_residual, with_refinement, CylindricalMode,
    EstimateReport,
};
use translator_lab::matrix_calculus::iccond_min_eigenvalue;
use translator_lab::speeds::{check_admissible, check_speed_concavity, ConcavityMode, SpeedDescriptor, SpeedKind};
use translator_lab::LabError;

use crate::args::{BowlAction, Command, CommonArgs, ConcavityArg, ConeAction, Mode, SpeedsAction, VerifyTarget};
use crate::output::{to_json, write_atomic};

/// Blow-down times used by `verify`.
pub const BLOWDOWN_TIMES: [f64; 4] = [-1.0, 0.0, 0.5, 0.9];
/// Times at which the shrinking-cylinder identities are checked.
pub const CYLINDER_TIMES: [f64; 4] = [-1.0, 0.0, 0.5, 0.9];
/// Face grid resolution of the cone probe inside `verify`.
pub const PROBE_GRID: usize = 40;

#[derive(Debug)]
pub enum RunError {
    Lab(LabError),
    Io(io::Error),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Lab(e) => match e {
                LabError::InvalidInput(_) => "invalid_input",
                LabError::ConeViolation { .. } => "cone_violation",
                LabError::UnsupportedDimension { .. } => "unsupported_dimension",
                LabError::InvalidSpeed(_) => "invalid_speed",
                LabError::BoundaryProximity(_) => "boundary_proximity",
                LabError::EigenFailure(_) => "eigen_failure",
                LabError::SamplingFailure(_) => "sampling_failure",
                LabError::RootBracket { .. } => "root_bracket",
                LabError::StepUnderflow { .. } => "step_underflow",
                LabError::OutOfRange { .. } => "out_of_range",
                LabError::Differencing(_) => "differencing",
            },
            RunError::Io(_) => "io",
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Lab(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        RunError::Lab(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub speed: String,
    pub n: usize,
    pub h_max: f64,
    pub tol: f64,
    pub samples: usize,
    pub seed: u64,
    pub out_dir: String,
    /// Subcommand-specific settings.
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub reports: Vec<Value>,
    pub passed: bool,
}

impl Manifest {
    fn new(config: RunConfig, reports: Vec<Value>) -> Self {
        let passed = !reports.is_empty() && reports.iter().all(report_passed);
        Self { config, reports, passed }
    }

    pub fn failures(&self) -> Vec<String> {
        self.reports
            .iter()
            .filter(|r| !report_passed(r))
            .map(|r| r["lemma_id"].as_str().unwrap_or("unknown").to_string())
            .collect()
    }
}

fn report_passed(r: &Value) -> bool {
    r["passed"].as_bool() == Some(true)
}

/// Result of one run: the manifest and every file written.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: Manifest,
    pub manifest_json: String,
    pub artifacts: Vec<PathBuf>,
}

fn estimate(report: &EstimateReport) -> Value {
    serde_json::to_value(report).expect("reports serialize to JSON")
}

/// Wraps a non-estimate result as `{lemma_id, passed, details}`.
fn entry<T: Serialize>(id: &str, passed: bool, details: &T) -> Value {
    json!({
        "lemma_id": id,
        "passed": passed,
        "details": serde_json::to_value(details).expect("results serialize to JSON"),
    })
}

fn pinching(mode: Mode) -> PinchingMode {
    match mode {
        Mode::Convex => PinchingMode::Convex,
        Mode::Concave => PinchingMode::Concave,
    }
}

fn concavity(mode: ConcavityArg) -> ConcavityMode {
    match mode {
        ConcavityArg::Convex => ConcavityMode::Convex,
        ConcavityArg::Concave => ConcavityMode::Concave,
        ConcavityArg::DualConcave => ConcavityMode::DualConcave,
    }
}

pub fn dispatch(common: &CommonArgs, command: &Command) -> RunResult<Outcome> {
    let speed = SpeedDescriptor::normalized(common.speed, common.n)?;
    let mut params = BTreeMap::new();
    let mut artifacts = Vec::new();
    let (name, reports) = match command {
        Command::Bowl { action: BowlAction::Solve } => {
            let profile = solve_profile(&speed, common.n, common.h_max, common.tol)?;
            let stem = format!("profile_{}_n{}", speed.name(), common.n);
            let mut csv = Vec::new();
            profile.write_csv(&mut csv)?;
            artifacts.push(write_atomic(&common.out_dir, &format!("{stem}.csv"), &csv)?);
            let sidecar = profile.sidecar();
            artifacts.push(write_atomic(&common.out_dir, &format!("{stem}.json"), to_json(&sidecar).as_bytes())?);
            let passed = profile.residual_max() <= common.tol;
            ("bowl-solve".to_string(), vec![entry("bowl-solve", passed, &sidecar)])
        }
        Command::Verify { target } => {
            params.insert("target".into(), json!(target.id()));
            (format!("verify-{}", target.id()), verify(common, &speed, *target)?)
        }
        Command::Cone { action: ConeAction::Beta2 { mode } } => {
            let mode = pinching(*mode);
            params.insert("mode".into(), json!(mode.name()));
            let estimate = estimate_beta2(&speed, mode, common.samples, common.seed)?;
            let validation =
                validate_lambda(&speed, mode, estimate.beta2, common.samples, common.seed.wrapping_add(1))?;
            let passed = validation.passed;
            let details = json!({ "estimate": estimate, "validation": validation });
            ("cone-beta2".to_string(), vec![entry("cone-beta2", passed, &details)])
        }
        Command::Cone { action: ConeAction::Probe { mode, grid } } => {
            let mode = pinching(*mode);
            params.insert("mode".into(), json!(mode.name()));
            params.insert("grid".into(), json!(grid));
            let probe = boundary_ray_probe(&speed, mode, *grid as usize)?;
            ("cone-probe".to_string(), vec![entry("cone-probe", probe.passed, &probe)])
        }
        Command::Speeds { action: SpeedsAction::Check } => {
            let report = check_admissible(&speed, common.samples, common.seed)?;
            ("speeds-check".to_string(), vec![entry("speeds-check", report.passed(), &report)])
        }
        Command::Speeds { action: SpeedsAction::Concavity { mode } } => {
            let mode = concavity(*mode);
            let report = check_speed_concavity(&speed, mode, common.samples, common.seed)?;
            params.insert("mode".into(), serde_json::to_value(mode).expect("mode serializes"));
            ("speeds-concavity".to_string(), vec![entry("speeds-concavity", report.passed, &report)])
        }
        Command::Iccond { z: Some(z) } => {
            params.insert("z".into(), json!(z));
            let report = iccond_min_eigenvalue(&speed, z)?;
            ("iccond-point".to_string(), vec![entry("iccond", report.passed, &report)])
        }
        Command::Iccond { z: None } => {
            ("iccond".to_string(), vec![estimate(&iccond_report(&speed, common.samples, common.seed)?)])
        }
        Command::Blowdown { h_j, t } => {
            let h_j = h_j.unwrap_or(common.h_max);
            params.insert("h_j".into(), json!(h_j));
            params.insert("t".into(), json!(t));
            let top = t.iter().map(|t| h_j * (1.0 - t)).fold(1.0, f64::max);
            let profile = solve_profile(&speed, common.n, top, common.tol)?;
            ("blowdown".to_string(), vec![estimate(&blowdown_report(&profile, &[h_j], t)?)])
        }
    };
    let config = RunConfig {
        command: name.clone(),
        speed: speed.name().to_string(),
        n: common.n,
        h_max: common.h_max,
        tol: common.tol,
        samples: common.samples,
        seed: common.seed,
        out_dir: common.out_dir.display().to_string(),
        params,
    };
    let manifest = Manifest::new(config, reports);
    let manifest_json = to_json(&manifest);
    let file = format!("{name}_{}_n{}.manifest.json", speed.name(), common.n);
    artifacts.push(write_atomic(&common.out_dir, &file, manifest_json.as_bytes())?);
    Ok(Outcome { manifest, manifest_json, artifacts })
}

/// One unit of verification work; each yields one or more reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Asymptotics,
    Cylindrical,
    Blowdown,
    Claim41,
    Claim42,
    Iccond,
    Linearized,
    JacobiSpeed,
    JacobiRotation,
}

impl Task {
    fn needs_profile(self) -> bool {
        !matches!(self, Task::Claim41 | Task::Iccond | Task::Linearized)
    }
}

fn tasks_for(target: VerifyTarget, kind: SpeedKind) -> Vec<Task> {
    match target {
        VerifyTarget::All => {
            let mut tasks = vec![Task::Asymptotics, Task::Cylindrical, Task::Blowdown];
            if kind == SpeedKind::Mean {
                tasks.push(Task::Claim41);
            }
            tasks.extend([Task::Claim42, Task::Iccond, Task::Linearized, Task::JacobiSpeed]);
            if kind == SpeedKind::Mean {
                tasks.push(Task::JacobiRotation);
            }
            tasks
        }
        VerifyTarget::Lemma31
        | VerifyTarget::Lemma33
        | VerifyTarget::Lemma34
        | VerifyTarget::Lemma35
        | VerifyTarget::Lemma36
        | VerifyTarget::CorollaryH => vec![Task::Asymptotics],
        VerifyTarget::Blowdown => vec![Task::Blowdown],
        VerifyTarget::Claim41 => vec![Task::Claim41],
        VerifyTarget::Claim42 => vec![Task::Claim42],
        VerifyTarget::Iccond => vec![Task::Iccond],
        VerifyTarget::LinearizedCylinder => vec![Task::Linearized],
        VerifyTarget::JacobiSpeed => vec![Task::JacobiSpeed],
        VerifyTarget::JacobiRotation => vec![Task::JacobiRotation],
        VerifyTarget::CylindricalEstimate => vec![Task::Cylindrical],
    }
}

fn run_task(task: Task, common: &CommonArgs, speed: &SpeedDescriptor, profile: Option<&Profile>) -> RunResult<Vec<EstimateReport>> {
    let h_top = common.h_max;
    let profile = || profile.expect("profile solved for profile tasks");
    let reports = match task {
        Task::Asymptotics => asymptotics_report(profile(), h_top)?,
        Task::Cylindrical => {
            let mode = if speed.kind() == SpeedKind::Mean { CylindricalMode::Mcf } else { CylindricalMode::Concave };
            vec![cylindrical_estimate_report(profile(), mode, h_top)?]
        }
        Task::Blowdown => vec![blowdown_report(profile(), &[h_top], &BLOWDOWN_TIMES)?],
        Task::Claim41 => {
            if speed.kind() != SpeedKind::Mean {
                return Err(LabError::InvalidInput("claim-4.1 concerns convex speeds; run it with --speed mean".into()).into());
            }
            vec![cone_constants_report(speed, PinchingMode::Convex, common.samples, common.seed, PROBE_GRID, None)?]
        }
        Task::Claim42 => vec![cone_constants_report(
            speed,
            PinchingMode::Concave,
            common.samples,
            common.seed,
            PROBE_GRID,
            Some(profile()),
        )?],
        Task::Iccond => vec![iccond_report(speed, common.samples, common.seed)?],
        Task::Linearized => vec![linearized_cylinder_report(speed, &CYLINDER_TIMES)?],
        Task::JacobiSpeed => vec![with_refinement(profile(), speed_jacobi_residual)?],
        Task::JacobiRotation => vec![with_refinement(profile(), |p| rotation_jacobi_residual(p, 0.0))?],
    };
    Ok(reports)
}

fn verify(common: &CommonArgs, speed: &SpeedDescriptor, target: VerifyTarget) -> RunResult<Vec<Value>> {
    let tasks = tasks_for(target, speed.kind());
    // the t = -1 blow-down slice sits at height 2·h_max
    let profile = if tasks.iter().any(|t| t.needs_profile()) {
        Some(solve_profile_with(speed, SolverOptions::new(2.0 * common.h_max, common.tol))?)
    } else {
        None
    };
    let results: Vec<RunResult<Vec<EstimateReport>>> =
        tasks.par_iter().map(|&task| run_task(task, common, speed, profile.as_ref())).collect();
    let mut reports = Vec::new();
    for r in results {
        reports.extend(r?);
    }
    if target != VerifyTarget::All {
        reports.retain(|r| r.lemma_id == target.id());
    }
    Ok(reports.iter().map(estimate).collect())
}
