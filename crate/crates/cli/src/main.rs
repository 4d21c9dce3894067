//! `jae`: build joint-muscle mappings, run estimation experiments, emit plot
//! scripts and validate group files. Angles are given and reported in degrees.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use jae_core::estimator::{Mode, RelativeLinearization};
use jae_core::grouping::{check_against_model, check_jmms, GroupDocument, GroupError};
use jae_core::harness::{
    build_jmm, emit_plots, run_experiment, BuildRequest, ExperimentDocument, HarnessError, Summary,
    TrajectoryLog,
};
use jae_core::jmm::{basis_size, count_grid, load_jmm, save_jmm, DatasetSpec, Ridge};
use jae_core::ExecPolicy;

#[derive(Parser)]
#[command(
    name = "jae",
    version,
    about = "Joint angle estimation from muscle lengths"
)]
struct Cli {
    /// Run every data-parallel stage on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a model on a grid and fit a polynomial joint-muscle mapping.
    BuildJmm(Box<BuildArgs>),
    /// Simulate a trajectory and run the grouped estimator on it.
    Run(Box<RunArgs>),
    /// Write per-joint data files and a plotting script for a run log.
    Plot(PlotArgs),
    /// Check a group file and print its violations as JSON.
    ValidateGroups(ValidateArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Model file or `demo:<name>`.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated joints, in mapping order.
    #[arg(long, value_delimiter = ',')]
    joints: Vec<String>,
    /// Comma-separated muscles.
    #[arg(long, value_delimiter = ',')]
    muscles: Vec<String>,
    /// Group file whose `--group` entry supplies joints, muscles and output path.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    group: Option<String>,
    /// Grid points per joint, one value for all joints or one per joint.
    #[arg(long, value_delimiter = ',', default_value = "9")]
    samples: Vec<usize>,
    /// Per-joint grid ranges `lo:hi` in degrees; defaults to the joint limits.
    #[arg(long, value_delimiter = ',')]
    ranges_deg: Vec<String>,
    #[arg(long, default_value_t = 4)]
    degree: usize,
    /// Ridge as a fraction of the Gram trace.
    #[arg(long, conflicts_with = "ridge_absolute")]
    ridge_relative: Option<f64>,
    /// Ridge as an absolute diagonal increment.
    #[arg(long)]
    ridge_absolute: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    heldout_poses: usize,
    #[arg(long, default_value_t = 1)]
    heldout_seed: u64,
    /// Mapping output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit report output file; printed to stdout otherwise.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Only count grid samples and basis terms; no model needed.
    #[arg(long)]
    count_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrajectoryArg {
    RandomWalk,
    Sinusoid,
    Replay,
    Stationary,
}

impl TrajectoryArg {
    fn as_str(self) -> &'static str {
        match self {
            TrajectoryArg::RandomWalk => "random_walk",
            TrajectoryArg::Sinusoid => "sinusoid",
            TrajectoryArg::Replay => "replay",
            TrajectoryArg::Stationary => "stationary",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Absolute,
    Relative,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinearizationArg {
    Predicted,
    Previous,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file or `demo:<name>`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Mapping file for a group, `group=path`; repeatable.
    #[arg(long = "jmm", value_name = "GROUP=PATH")]
    jmms: Vec<String>,
    /// Grid points per joint when fitting mappings on the fly.
    #[arg(long)]
    fit_samples: Option<usize>,
    #[arg(long)]
    fit_degree: Option<usize>,

    #[arg(long, value_enum)]
    trajectory: Option<TrajectoryArg>,
    #[arg(long)]
    ticks: Option<usize>,
    #[arg(long)]
    step_sigma_deg: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// True start angle, `joint=deg`; repeatable.
    #[arg(long = "start-deg", value_name = "JOINT=DEG")]
    start_deg: Vec<String>,
    #[arg(long)]
    period_ticks: Option<f64>,
    #[arg(long)]
    amplitude_fraction: Option<f64>,
    /// Joint-angle CSV (degrees) for `--trajectory replay`.
    #[arg(long)]
    replay: Option<PathBuf>,

    #[arg(long)]
    measurement_sigma_m: Option<f64>,
    /// Posture where the encoders read zero, `joint=deg`; repeatable.
    #[arg(long = "calibration-offset-deg", value_name = "JOINT=DEG")]
    calibration_offset_deg: Vec<String>,
    #[arg(long)]
    length_bias_m: Option<f64>,

    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    process_noise_std_deg: Option<f64>,
    #[arg(long)]
    observation_noise_std_mm: Option<f64>,
    #[arg(long)]
    initial_std_deg: Option<f64>,
    #[arg(long)]
    pinv_tolerance: Option<f64>,
    #[arg(long, value_enum)]
    linearization: Option<LinearizationArg>,
    #[arg(long)]
    overwrite_shared: Option<bool>,
    #[arg(long)]
    max_innovation_condition: Option<f64>,
    /// Initial estimate, `joint=deg`; repeatable.
    #[arg(long = "initial-deg", value_name = "JOINT=DEG")]
    initial_deg: Vec<String>,
    #[arg(long)]
    convergence_threshold_deg: Option<f64>,

    /// CSV log output file.
    #[arg(long)]
    out: PathBuf,
    /// Summary output file; printed to stdout otherwise.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    groups: PathBuf,
    /// Also check joint and muscle names against this model.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dof_cap: Option<usize>,
    /// Also load each group's mapping file and check its joints and muscles.
    #[arg(long)]
    check_jmms: bool,
}

/// Failure carrying the process exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = error
            .chain()
            .find_map(|c| c.downcast_ref::<HarnessError>())
            .map(|h| h.exit_code() as u8)
            .unwrap_or(1);
        Failure { code, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        ExecPolicy::Sequential
    } else {
        ExecPolicy::Parallel
    };
    let result = match cli.command {
        Command::BuildJmm(a) => build(*a, exec),
        Command::Run(a) => run(*a, exec),
        Command::Plot(a) => plot(a),
        Command::ValidateGroups(a) => validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_model(spec: &str) -> Result<jae_core::model::KinematicModel> {
    let doc = ExperimentDocument {
        model: Some(spec.to_string()),
        ..Default::default()
    };
    Ok(doc.load_model()?)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => print_text(text),
    }
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_text(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn parse_assignments(items: &[String], what: &str) -> Result<BTreeMap<String, f64>> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("{what}: expected NAME=VALUE, got `{item}`"))?;
            let v: f64 = v
                .trim()
                .parse()
                .with_context(|| format!("{what}: bad number in `{item}`"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn build(a: BuildArgs, exec: ExecPolicy) -> Result<u8, Failure> {
    let ridge = match (a.ridge_relative, a.ridge_absolute) {
        (Some(v), _) => Ridge::Relative(v),
        (_, Some(v)) => Ridge::Absolute(v),
        _ => Ridge::default(),
    };
    let mut joints = a.joints.clone();
    let mut muscles = a.muscles.clone();
    let mut out = a.out.clone();
    if let Some(groups) = &a.groups {
        let doc = GroupDocument::load(groups)?;
        let name = a
            .group
            .as_deref()
            .ok_or_else(|| anyhow!("--groups requires --group"))?;
        let group = doc
            .groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| anyhow!("group file has no group `{name}`"))?;
        if joints.is_empty() {
            joints = group.joint_order();
        }
        if muscles.is_empty() {
            muscles = group.muscles.clone();
        }
        if out.is_none() {
            out = Some(groups.parent().unwrap_or(Path::new(".")).join(&group.jmm));
        }
    }

    let model = a.model.as_deref().map(load_model).transpose()?;
    let dof = if joints.is_empty() {
        a.samples.len()
    } else {
        joints.len()
    };
    let samples = match a.samples.as_slice() {
        [n] => vec![*n; dof],
        list if list.len() == dof => list.to_vec(),
        list => return Err(anyhow!("--samples has {} values for {dof} joints", list.len()).into()),
    };
    let ranges: Vec<(f64, f64)> = if !a.ranges_deg.is_empty() {
        if a.ranges_deg.len() != dof {
            return Err(anyhow!(
                "--ranges-deg has {} values for {dof} joints",
                a.ranges_deg.len()
            )
            .into());
        }
        a.ranges_deg
            .iter()
            .map(|r| {
                let (lo, hi) = r
                    .split_once(':')
                    .ok_or_else(|| anyhow!("range `{r}` must be lo:hi"))?;
                Ok((
                    lo.trim().parse::<f64>()?.to_radians(),
                    hi.trim().parse::<f64>()?.to_radians(),
                ))
            })
            .collect::<Result<_>>()?
    } else if let Some(model) = &model {
        let idx = model.joint_indices(&joints).map_err(HarnessError::from)?;
        idx.iter().map(|&j| model.joints()[j].range()).collect()
    } else {
        vec![(-1.0, 1.0); dof]
    };
    let dataset = DatasetSpec::new(samples, ranges).map_err(HarnessError::from)?;

    if a.count_only {
        let report = json!({
            "per_joint_samples": dataset.per_joint_samples(),
            "sample_count": count_grid(&dataset),
            "degree": a.degree,
            "basis_size": basis_size(dof, a.degree),
        });
        write_or_print(
            a.report.as_deref(),
            &serde_json::to_string_pretty(&report).unwrap(),
        )?;
        return Ok(0);
    }

    let model = model.ok_or_else(|| anyhow!("--model is required unless --count-only is set"))?;
    if joints.is_empty() || muscles.is_empty() {
        return Err(anyhow!(
            "joints and muscles must be given (--joints/--muscles or --groups/--group)"
        )
        .into());
    }
    let request = BuildRequest {
        joints,
        muscles,
        dataset,
        degree: a.degree,
        ridge,
        heldout_poses: a.heldout_poses,
        heldout_seed: a.heldout_seed,
    };
    let (jmm, report) = build_jmm(&model, &request, exec)?;
    if let Some(out) = &out {
        save_jmm(&jmm, out).map_err(HarnessError::from)?;
    }
    write_or_print(a.report.as_deref(), &report.to_json())?;
    Ok(0)
}

fn apply_overrides(doc: &mut ExperimentDocument, a: &RunArgs) -> Result<()> {
    let cwd = Path::new(".");
    if let Some(m) = &a.model {
        doc.model = Some(m.clone());
    }
    if let Some(g) = &a.groups {
        doc.groups = Some(g.clone());
    }
    for item in &a.jmms {
        let (g, p) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("--jmm: expected GROUP=PATH, got `{item}`"))?;
        doc.jmms.insert(g.to_string(), cwd.join(p));
    }
    if let Some(v) = a.fit_samples {
        doc.fit.samples_per_joint = v;
    }
    if let Some(v) = a.fit_degree {
        doc.fit.degree = v;
    }
    let t = &mut doc.trajectory;
    if let Some(k) = a.trajectory {
        t.kind = Some(k.as_str().to_string());
    }
    t.ticks = a.ticks.or(t.ticks);
    t.step_sigma_deg = a.step_sigma_deg.or(t.step_sigma_deg);
    t.seed = a.seed.or(t.seed);
    t.period_ticks = a.period_ticks.or(t.period_ticks);
    t.amplitude_fraction = a.amplitude_fraction.or(t.amplitude_fraction);
    if let Some(p) = &a.replay {
        t.path = Some(p.clone());
    }
    t.start_deg
        .extend(parse_assignments(&a.start_deg, "--start-deg")?);

    let n = &mut doc.noise;
    n.measurement_sigma_m = a.measurement_sigma_m.or(n.measurement_sigma_m);
    n.length_bias_m = a.length_bias_m.or(n.length_bias_m);
    n.calibration_offset_deg.extend(parse_assignments(
        &a.calibration_offset_deg,
        "--calibration-offset-deg",
    )?);

    let e = &mut doc.ekf;
    if let Some(m) = a.mode {
        e.mode = Some(match m {
            ModeArg::Absolute => Mode::Absolute,
            ModeArg::Relative => Mode::Relative,
        });
    }
    if let Some(l) = a.linearization {
        e.linearization = Some(match l {
            LinearizationArg::Predicted => RelativeLinearization::Predicted,
            LinearizationArg::Previous => RelativeLinearization::Previous,
        });
    }
    e.process_noise_std_deg = a.process_noise_std_deg.or(e.process_noise_std_deg);
    e.observation_noise_std_mm = a.observation_noise_std_mm.or(e.observation_noise_std_mm);
    e.initial_std_deg = a.initial_std_deg.or(e.initial_std_deg);
    e.pinv_tolerance = a.pinv_tolerance.or(e.pinv_tolerance);
    e.overwrite_shared = a.overwrite_shared.or(e.overwrite_shared);
    e.max_innovation_condition = a.max_innovation_condition.or(e.max_innovation_condition);
    doc.initial_estimate_deg
        .extend(parse_assignments(&a.initial_deg, "--initial-deg")?);
    doc.convergence_threshold_deg = a
        .convergence_threshold_deg
        .or(doc.convergence_threshold_deg);
    Ok(())
}

fn summary_json(summary: &Summary) -> Value {
    json!({
        "ticks": summary.ticks,
        "joints": summary.joints.iter().map(|j| json!({
            "joint": j.joint,
            "rmse_final_half_deg": j.rmse_final_half.to_degrees(),
            "bias_final_half_deg": j.bias_final_half.to_degrees(),
            "max_error_deg": j.max_error.to_degrees(),
            "convergence_tick": j.convergence_tick,
        })).collect::<Vec<_>>(),
        "slots": summary.slots.iter().map(|s| json!({
            "group": s.group,
            "joint": s.joint,
            "borrowed": s.borrowed,
            "rmse_final_half_deg": s.rmse_final_half.to_degrees(),
        })).collect::<Vec<_>>(),
        "covariance": {
            "max_asymmetry": summary.health.max_asymmetry,
            "min_eigenvalue": summary.health.min_eigenvalue,
            "unhealthy": summary.health.unhealthy,
        },
    })
}

fn run(a: RunArgs, exec: ExecPolicy) -> Result<u8, Failure> {
    let mut doc = match &a.config {
        Some(path) => ExperimentDocument::load(path)?,
        None => ExperimentDocument::default(),
    };
    apply_overrides(&mut doc, &a)?;
    let setup = doc.setup(exec)?;
    let config = doc.experiment_config(&setup.model)?;
    let output = run_experiment(&setup, &config, exec)?;
    output.log.save(&a.out)?;
    let text = serde_json::to_string_pretty(&summary_json(&output.summary)).unwrap();
    write_or_print(a.summary.as_deref(), &text)?;
    Ok(0)
}

fn plot(a: PlotArgs) -> Result<u8, Failure> {
    let log = TrajectoryLog::load(&a.log)?;
    let out = emit_plots(&log, &a.out)?;
    let files: Vec<String> = out
        .joint_data
        .iter()
        .chain([&out.error_data, &out.script])
        .map(|p| p.display().to_string())
        .collect();
    print_text(
        &serde_json::to_string_pretty(&json!({ "files": files, "figures": out.figures })).unwrap(),
    )?;
    Ok(0)
}

fn validate(a: ValidateArgs) -> Result<u8, Failure> {
    let mut doc = GroupDocument::load(&a.groups)?;
    if let Some(cap) = a.dof_cap {
        doc.dof_cap = cap;
    }
    let mut violations = Vec::new();
    let mut collect = |r: Result<(), GroupError>| -> Result<()> {
        match r {
            Ok(()) => Ok(()),
            Err(GroupError::ValidationFailed(v)) => {
                violations.extend(v);
                Ok(())
            }
            Err(other) => bail!(other),
        }
    };
    match doc.validate() {
        Ok(set) => {
            if let Some(spec) = &a.model {
                let model = load_model(spec)?;
                collect(check_against_model(&set, &model))?;
            }
            if a.check_jmms {
                let dir = a.groups.parent().unwrap_or(Path::new("."));
                let jmms = set
                    .groups()
                    .iter()
                    .map(|g| {
                        load_jmm(dir.join(&g.jmm)).with_context(|| format!("group `{}`", g.name))
                    })
                    .collect::<Result<Vec<_>>>()?;
                collect(check_jmms(&set, &jmms.iter().map(Some).collect::<Vec<_>>()))?;
            }
        }
        Err(e) => collect(Err(e))?,
    }
    let valid = violations.is_empty();
    print_text(
        &serde_json::to_string_pretty(&json!({ "valid": valid, "violations": violations }))
            .unwrap(),
    )?;
    Ok(if valid { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use jae_core::demo;

    #[test]
    fn assignments_parse() {
        let m = parse_assignments(&["a=1.5".into(), " b = -2".into()], "x").unwrap();
        assert_eq!(m["a"], 1.5);
        assert_eq!(m["b"], -2.0);
        assert!(parse_assignments(&["a".into()], "x").is_err());
    }

    #[test]
    fn demo_names_resolve() {
        for name in demo::NAMES {
            assert!(load_model(&format!("demo:{name}")).is_ok());
        }
    }
}
