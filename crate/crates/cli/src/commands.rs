//! Subcommand drivers: run, sweep, compare, check.

use crate::svg;
use pzo::scenario::{BuiltScenario, Scenario, ScenarioError};
use pzo::sim::{self, Algorithm, SimError, Trajectory};
use pzo::verify;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Exit codes: 0 success, 2 validation, 3 divergence, 4 I/O.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError { code: 2, message: e.to_string() }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::Divergence { .. }
            | SimError::FlowSetViolation { .. }
            | SimError::Problem(_) => 3,
            _ => 2,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: 4, message: e.to_string() }
    }
}

fn io_err(e: std::io::Error, path: &Path) -> CliError {
    CliError { code: 4, message: format!("{}: {e}", path.display()) }
}

/// Output directory precedence: flag, scenario `[output] dir`, the
/// `PZO_OUT_DIR` environment variable, `./out`.
fn resolve_out_dir(flag: Option<&Path>, built: &BuiltScenario) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(d) = &built.out_dir {
        return PathBuf::from(d);
    }
    if let Ok(d) = std::env::var("PZO_OUT_DIR") {
        if !d.is_empty() {
            return PathBuf::from(d);
        }
    }
    PathBuf::from("out")
}

pub fn load_scenario(config: &Path, seed: Option<u64>) -> Result<(Scenario, String), CliError> {
    let text = fs::read_to_string(config).map_err(|e| io_err(e, config))?;
    let mut scenario = Scenario::from_toml(&text)?;
    if let Some(s) = seed {
        scenario.sim.seed = s;
    }
    let label = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    Ok((scenario, label))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(e, path))
}

/// Optimizer path `d(theta(t))` along the samples, for plotting.
fn optimizer_path(built: &BuiltScenario, traj: &Trajectory) -> Option<Vec<(f64, f64)>> {
    if traj.n != 2 {
        return None;
    }
    let mut out = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        let star = built.problem.optimizer(&s.theta)?;
        out.push((star[0], star[1]));
    }
    Some(out)
}

/// Long-format plot data: `t,series,value` rows.
fn series_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,series,value\n");
    for s in &traj.samples {
        for (i, v) in s.x.iter().enumerate() {
            out += &format!("{:.10e},x_{},{:.10e}\n", s.t, i + 1, v);
        }
        out += &format!("{:.10e},f_value,{:.10e}\n", s.t, s.f_value);
        if !s.dist_opt.is_nan() {
            out += &format!("{:.10e},dist_opt,{:.10e}\n", s.t, s.dist_opt);
        }
    }
    out
}

fn switch_log_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,q_before,q_after,tau\n");
    for e in &traj.switches {
        out += &format!("{:.10e},{},{},{:.10e}\n", e.t, e.q_before, e.q_after, e.tau);
    }
    out
}

fn write_run_artifacts(
    out_dir: &Path,
    built: &BuiltScenario,
    traj: &Trajectory,
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(e, out_dir))?;
    let stem = out_dir.join(&built.label);
    let traj_path = stem.with_extension("trajectory.csv");
    {
        let mut f = fs::File::create(&traj_path).map_err(|e| io_err(e, &traj_path))?;
        let mut buf = std::io::BufWriter::new(&mut f);
        traj.write_csv(&mut buf).map_err(|e| io_err(e, &traj_path))?;
        buf.flush().map_err(|e| io_err(e, &traj_path))?;
    }
    let report = verify::report_for_run(
        traj,
        &built.problem,
        &built.working_set,
        built.base_set.as_ref(),
        built.bank.common_period(),
    );
    write_file(&stem.with_extension("report.txt"), &report.to_text())?;
    write_file(&stem.with_extension("summary.csv"), &report.to_csv())?;
    write_file(&stem.with_extension("series.csv"), &series_csv(traj))?;
    if !traj.switches.is_empty() {
        write_file(&stem.with_extension("switches.csv"), &switch_log_csv(traj))?;
    }
    if built.write_svg {
        let outline_set = built.base_set.as_ref().unwrap_or(&built.working_set);
        let path = optimizer_path(built, traj);
        if let Some(svg) = svg::phase_portrait(traj, outline_set, path.as_deref()) {
            write_file(&stem.with_extension("phase.svg"), &svg)?;
        }
    }
    Ok(traj_path)
}

pub fn cmd_run(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let (scenario, label) = load_scenario(config, seed)?;
    let built = scenario.build(&label)?;
    let spec = built.run_spec();
    for w in sim::validate_spec(&spec)? {
        eprintln!("warning: {w}");
    }
    let traj = sim::run(&spec)?;
    let out_dir = resolve_out_dir(out, &built);
    let path = write_run_artifacts(&out_dir, &built, &traj)?;
    println!(
        "{label}: {} samples to t = {:.3}, artifacts at {}",
        traj.samples.len(),
        traj.final_time(),
        path.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

pub fn cmd_check(config: &Path) -> Result<(), CliError> {
    let (scenario, label) = load_scenario(config, None)?;
    let built = scenario.build(&label)?;
    let spec = built.run_spec();
    let warnings = sim::validate_spec(&spec)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!("{label}: ok ({} warning(s))", warnings.len());
    Ok(())
}

/// One sweep row per value: the runs share the seed and differ only in the
/// swept parameter.
pub fn cmd_sweep(
    config: &Path,
    param: &str,
    values: &[f64],
    out: Option<&Path>,
    seed: Option<u64>,
    workers: usize,
) -> Result<(), CliError> {
    let (scenario, label) = load_scenario(config, seed)?;
    // Fail fast on an unknown parameter before spawning anything.
    scenario.clone().apply_sweep(param, *values.first().unwrap_or(&1.0))?;

    let n = values.len();
    let results: Vec<Result<SweepRow, CliError>> = {
        let mut slots: Vec<Option<Result<SweepRow, CliError>>> = Vec::new();
        slots.resize_with(n, || None);
        let slots = std::sync::Mutex::new(slots);
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers.max(1).min(n) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let row = sweep_one(&scenario, &label, param, values[i]);
                    slots.lock().unwrap()[i] = Some(row);
                });
            }
        });
        slots.into_inner().unwrap().into_iter().map(|r| r.unwrap()).collect()
    };

    let mut csv = String::from(
        "value,terminal_error,limsup_tracking_error,max_constraint_violation,f_calls,g_calls\n",
    );
    for (v, r) in values.iter().zip(results) {
        let row = r?;
        csv += &format!(
            "{v:.10e},{:.10e},{:.10e},{:.10e},{},{}\n",
            row.terminal_error, row.limsup_tracking, row.max_violation, row.f_calls, row.g_calls
        );
    }
    let built = scenario.build(&label)?;
    let out_dir = resolve_out_dir(out, &built);
    fs::create_dir_all(&out_dir).map_err(|e| io_err(e, &out_dir))?;
    let path = out_dir.join(format!("{label}_sweep_{param}.csv"));
    write_file(&path, &csv)?;
    print!("{csv}");
    println!("# written to {}", path.display());
    Ok(())
}

struct SweepRow {
    terminal_error: f64,
    limsup_tracking: f64,
    max_violation: f64,
    f_calls: u64,
    g_calls: u64,
}

fn sweep_one(
    scenario: &Scenario,
    label: &str,
    param: &str,
    value: f64,
) -> Result<SweepRow, CliError> {
    let mut sc = scenario.clone();
    sc.apply_sweep(param, value)?;
    let built = sc.build(&format!("{label}_{param}_{value}"))?;
    let traj = sim::run(&built.run_spec())?;
    let period = built.bank.common_period();
    let avg = traj.tail_average_x(period);
    let terminal_error = match traj.samples.last().and_then(|s| built.problem.optimizer(&s.theta)) {
        Some(star) => {
            let d: f64 = avg
                .iter()
                .zip(&star)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d
        }
        None => f64::NAN,
    };
    let limsup = traj.tail_limsup_dist_opt(0.2);
    let max_violation = traj
        .samples
        .iter()
        .flat_map(|s| s.g.iter())
        .fold(0.0_f64, |m, g| m.max(*g));
    Ok(SweepRow {
        terminal_error,
        limsup_tracking: limsup,
        max_violation,
        f_calls: traj.f_calls,
        g_calls: traj.g_calls,
    })
}

fn parse_algorithm_list(text: &str) -> Result<Vec<Algorithm>, CliError> {
    text.split(',')
        .map(|s| match s.trim() {
            "vanilla_es" => Ok(Algorithm::VanillaEs),
            "pgzo" => Ok(Algorithm::Pgzo),
            "ppdzo" => Ok(Algorithm::Ppdzo),
            "dpgzo" => Ok(Algorithm::Dpgzo),
            "target_grad" => Ok(Algorithm::TargetGrad),
            "target_saddle" => Ok(Algorithm::TargetSaddle),
            "average_gzo" => Ok(Algorithm::AverageGzo),
            other => Err(CliError { code: 2, message: format!("unknown algorithm `{other}`") }),
        })
        .collect()
}

/// Default comparison partners per primary algorithm.
fn default_compare_set(primary: Algorithm, has_gradients: bool) -> Vec<Algorithm> {
    let mut algos = vec![primary];
    if has_gradients {
        match primary {
            Algorithm::Pgzo => {
                algos.push(Algorithm::AverageGzo);
                algos.push(Algorithm::TargetGrad);
            }
            Algorithm::Ppdzo => algos.push(Algorithm::TargetSaddle),
            Algorithm::Dpgzo => algos.push(Algorithm::TargetGrad),
            _ => {}
        }
    }
    algos
}

pub fn cmd_compare(
    config: &Path,
    algorithms: Option<&str>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let (scenario, label) = load_scenario(config, seed)?;
    let built = scenario.build(&label)?;
    let algos = match algorithms {
        Some(list) => parse_algorithm_list(list)?,
        None => default_compare_set(built.algorithm, built.problem.has_gradients()),
    };
    if algos.len() < 2 {
        return Err(CliError {
            code: 2,
            message: "compare needs at least 2 algorithms (use --algorithms)".into(),
        });
    }
    let specs: Vec<_> = algos.iter().map(|a| built.run_spec_with(*a)).collect();
    let trajectories = sim::cosimulate(&specs)?;

    let period = built.bank.common_period();
    let mut report = verify::RunReport::default();
    report.push("label", &label);
    report.push(
        "algorithms",
        algos.iter().map(|a| a.name()).collect::<Vec<_>>().join(" "),
    );
    for (i, a) in trajectories.iter().enumerate() {
        for b in trajectories.iter().skip(i + 1) {
            report.push_f64(
                &format!("supdist_{}_{}", a.algorithm.name(), b.algorithm.name()),
                a.sup_distance_x(b),
            );
            let ta = a.tail_average_x(period);
            let tb = b.tail_average_x(period);
            let d: f64 = ta
                .iter()
                .zip(&tb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            report.push_f64(
                &format!("terminal_{}_{}", a.algorithm.name(), b.algorithm.name()),
                d,
            );
        }
    }
    for t in &trajectories {
        report.push_f64(
            &format!("limsup_dist_opt_{}", t.algorithm.name()),
            t.tail_limsup_dist_opt(0.2),
        );
        report.push(&format!("grad_calls_{}", t.algorithm.name()), t.grad_calls);
    }

    let out_dir = resolve_out_dir(out, &built);
    fs::create_dir_all(&out_dir).map_err(|e| io_err(e, &out_dir))?;
    for t in &trajectories {
        let path = out_dir.join(format!("{label}_{}.trajectory.csv", t.algorithm.name()));
        let mut f = fs::File::create(&path).map_err(|e| io_err(e, &path))?;
        let mut buf = std::io::BufWriter::new(&mut f);
        t.write_csv(&mut buf).map_err(|e| io_err(e, &path))?;
        buf.flush().map_err(|e| io_err(e, &path))?;
    }
    let rep_path = out_dir.join(format!("{label}_compare.txt"));
    write_file(&rep_path, &report.to_text())?;
    write_file(&out_dir.join(format!("{label}_compare.csv")), &report.to_csv())?;
    print!("{}", report.to_text());
    Ok(())
}
