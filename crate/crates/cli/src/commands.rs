use crate::manifest::{self, Manifest};
use crate::{Cli, CliError, Command, GlobalArgs};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use spinorbit::attractors::{census_resonance, refinement_config, write_census_csv, Resonance, TABLE_RESONANCES};
use spinorbit::basins::{self, Propagation, SurveyConfig};
use spinorbit::integrator::{integrate, libration, IntegratorConfig, Sampling};
use spinorbit::model::{PhysicalParams, SpinState};
use spinorbit::precapture::{self, LinearTidalFit};
use spinorbit::quasiperiodic::{self, ScanConfig, ScanParameter};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Directory searched for `params.conf` before `--config` is applied.
pub const CONFIG_DIR_ENV: &str = "SPINORBIT_CONFIG_DIR";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Initial spin angle, rad.
    #[arg(long, default_value_t = 0.0)]
    pub theta0: f64,
    /// Initial spin rate in units of the mean motion.
    #[arg(long)]
    pub thetadot0: f64,
    /// End time, yr.
    #[arg(long)]
    pub t_end: f64,
    /// Sample spacing, yr; defaults to one sample per forcing period.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Also write libration coordinates about this spin ratio.
    #[arg(long)]
    pub omega0: Option<f64>,
    /// Use the loose tolerances of the basin survey.
    #[arg(long)]
    pub survey_tolerance: bool,
}

#[derive(Debug, Args)]
pub struct CensusArgs {
    /// Numerators p of the p:2 resonances to refine; defaults to the full table.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub resonances: Option<Vec<i32>>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Periods discarded before recording.
    #[arg(long, default_value_t = 0)]
    pub transient: u64,
    /// Recorded forcing periods.
    #[arg(long, default_value_t = 200_000)]
    pub periods: u64,
    /// Samples per forcing period.
    #[arg(long, default_value_t = 16)]
    pub per_period: u32,
    /// Largest frequency written to the CSV, in units of the mean motion.
    #[arg(long, default_value_t = 6.0)]
    pub max_freq: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScanKnob {
    /// Sideband multiplier.
    S,
    /// Tidal multiplier.
    Lambda,
}

#[derive(Debug, Args)]
pub struct BifurcateArgs {
    #[arg(long, value_enum, default_value = "s")]
    pub param: ScanKnob,
    #[arg(long, default_value_t = 0.10)]
    pub from: f64,
    #[arg(long, default_value_t = 0.25)]
    pub to: f64,
    #[arg(long, default_value_t = 0.005)]
    pub step: f64,
    /// Periods discarded before sampling the section.
    #[arg(long, default_value_t = 50_000)]
    pub transient: u64,
    /// Section points kept per parameter value.
    #[arg(long, default_value_t = 200)]
    pub recorded: usize,
    /// Amplitude separating the fixed point from the invariant curve.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
    /// Active points used in the power-law fit.
    #[arg(long, default_value_t = 8)]
    pub fit_points: usize,
    #[arg(long)]
    pub survey_tolerance: bool,
}

#[derive(Debug, Args)]
pub struct PrecaptureArgs {
    /// Initial spin rate in units of the mean motion.
    #[arg(long)]
    pub thetadot0: f64,
    #[arg(long, default_value_t = 1.7)]
    pub theta0: f64,
    /// Capture ratio reached by the slow decay.
    #[arg(long, default_value_t = 1.5)]
    pub target: f64,
    /// Initial phases sampled for the worst frequency deviation.
    #[arg(long, default_value_t = 64)]
    pub phases: usize,
    /// Write the approximate spin rate every `curve_dt` yr up to this time.
    #[arg(long)]
    pub curve_t_end: Option<f64>,
    #[arg(long, default_value_t = 1e3)]
    pub curve_dt: f64,
    /// Also integrate the full model until the window mean reaches the target.
    #[arg(long)]
    pub integrate: bool,
    /// Half-width of the capture band, units of the mean motion.
    #[arg(long, default_value_t = 5e-4)]
    pub band: f64,
    /// Averaging window, forcing periods.
    #[arg(long, default_value_t = 500)]
    pub window: u32,
    #[arg(long, default_value_t = 3e7)]
    pub max_time: f64,
}

#[derive(Debug, Args)]
pub struct BasinsArgs {
    /// Number of samples, dealt round-robin over the strips.
    #[arg(long = "n", default_value_t = 900)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Zero-based strip indices to sample; defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub strips: Option<Vec<usize>>,
    /// Upper spin-rate bound of the survey, units of the mean motion.
    #[arg(long, default_value_t = 4.5)]
    pub thetadot_max: f64,
    /// Strip width, units of the mean motion.
    #[arg(long, default_value_t = 0.5)]
    pub strip_width: f64,
    #[arg(long, default_value_t = 0.02)]
    pub delta: f64,
    #[arg(long, default_value_t = 500)]
    pub lock_periods: u32,
    /// Simulated time per sample before it counts as unresolved, yr.
    #[arg(long, default_value_t = 3e7)]
    pub max_time: f64,
    /// Integrate every sample with the full model instead of averaging
    /// between resonance bands.
    #[arg(long)]
    pub direct: bool,
}

/// Parameters: defaults, then the config directory, then `--config`, then `--set`.
fn load_params(global: &GlobalArgs) -> Result<PhysicalParams, CliError> {
    let usage = |e: spinorbit::model::ParamError| CliError::Usage(e.to_string());
    let mut params = PhysicalParams::default();
    if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
        let path = Path::new(&dir).join("params.conf");
        if path.is_file() {
            params = PhysicalParams::from_kv_file(&path).map_err(usage)?;
        }
    }
    if let Some(path) = &global.config {
        params = PhysicalParams::from_kv_file(path).map_err(usage)?;
    }
    for item in &global.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set {item}: expected KEY=VALUE")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--set {item}: value is not a number")))?;
        params.set(key.trim(), value).map_err(usage)?;
    }
    params.validate().map_err(usage)?;
    Ok(params)
}

fn params_json(params: &PhysicalParams) -> Value {
    json!(params.to_kv())
}

fn integrator(loose: bool) -> IntegratorConfig {
    if loose {
        IntegratorConfig::survey()
    } else {
        IntegratorConfig::default()
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

/// Collects output files under the run directory.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), names: Vec::new() })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.names.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut f = self.file(name)?;
        serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::from)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

/// What a finished subcommand reports for its manifest.
struct Record {
    config: Value,
    seed: Option<u64>,
    /// Failure raised after the outputs were written.
    deferred: Option<CliError>,
}

impl Record {
    fn new(config: Value) -> Self {
        Self { config, seed: None, deferred: None }
    }
}

pub fn dispatch(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest);
    }
    let params = load_params(&cli.global)?;
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let name = subcommand_name(&cli.command);
    validate(&cli.command)?;
    let started = Instant::now();
    let mut out = Outputs::create(&cli.global.out)?;
    let record = match &cli.command {
        Command::Simulate(a) => simulate(a, &params, &mut out)?,
        Command::PeriodicCensus(a) => census(a, &params, &mut out)?,
        Command::QpConstruct => qp_construct(&params, &mut out)?,
        Command::Spectrum(a) => spectrum(a, &params, &mut out)?,
        Command::Bifurcate(a) => bifurcate(a, &params, &mut out)?,
        Command::Precapture(a) => precapture_cmd(a, &params, &mut out)?,
        Command::Basins(a) => survey(a, cli.global.jobs, &params, &mut out)?,
        Command::Replay { .. } => unreachable!("handled above"),
    };
    Manifest {
        subcommand: name.to_string(),
        argv: argv.to_vec(),
        config: record.config,
        seed: record.seed,
        params: params_json(&params),
        overrides: cli.global.overrides.clone(),
        outputs: out.names,
        duration_s: started.elapsed().as_secs_f64(),
    }
    .write(&cli.global.out)?;
    match record.deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Simulate(_) => "simulate",
        Command::PeriodicCensus(_) => "periodic-census",
        Command::QpConstruct => "qp-construct",
        Command::Spectrum(_) => "spectrum",
        Command::Bifurcate(_) => "bifurcate",
        Command::Precapture(_) => "precapture",
        Command::Basins(_) => "basins",
        Command::Replay { .. } => "replay",
    }
}

/// Argument checks that need no computation, run before `--out` is touched.
fn validate(command: &Command) -> Result<(), CliError> {
    let bad = |m: &str| Err(CliError::Usage(m.to_string()));
    match command {
        Command::Simulate(a) => {
            if !(a.t_end > 0.0 && a.t_end.is_finite()) {
                return bad("--t-end must be positive");
            }
            if a.dt.is_some_and(|dt| !(dt > 0.0)) {
                return bad("--dt must be positive");
            }
        }
        Command::Spectrum(a) => {
            if a.periods == 0 || a.per_period < 4 {
                return bad("--periods must be positive and --per-period at least 4");
            }
        }
        Command::Bifurcate(a) => {
            if !(a.step > 0.0 && a.to >= a.from) {
                return bad("--step must be positive and --to must not precede --from");
            }
            if a.recorded < 2 {
                return bad("--recorded must be at least 2");
            }
        }
        Command::Precapture(a) => {
            if a.phases == 0 || !(a.curve_dt > 0.0) {
                return bad("--phases and --curve-dt must be positive");
            }
        }
        Command::Basins(a) => {
            survey_config(a, None).validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Command::PeriodicCensus(_) | Command::QpConstruct | Command::Replay { .. } => {}
    }
    Ok(())
}

fn replay(path: &Path) -> Result<(), CliError> {
    let argv = manifest::recorded_argv(path).map_err(CliError::Usage)?;
    let program = std::iter::once("spinorbit".to_string()).chain(argv.iter().cloned());
    let cli = <Cli as clap::Parser>::try_parse_from(program).map_err(|e| CliError::Usage(e.to_string()))?;
    if matches!(cli.command, Command::Replay { .. }) {
        return Err(CliError::Usage("a manifest cannot replay another replay".into()));
    }
    dispatch(cli, &argv)
}

fn simulate(a: &SimulateArgs, params: &PhysicalParams, out: &mut Outputs) -> Result<Record, CliError> {
    let cfg = integrator(a.survey_tolerance);
    let start = SpinState::new(a.theta0, a.thetadot0 * params.n, 0.0);
    let sampling = a.dt.map_or(Sampling::Stroboscopic, Sampling::Uniform);
    let traj = integrate(start, a.t_end, sampling, &cfg, params).map_err(domain)?;
    let mut f = out.file("trajectory.csv")?;
    traj.write_csv(&mut f)?;
    f.flush()?;
    if let Some(omega0) = a.omega0 {
        let mut f = out.file("libration.csv")?;
        writeln!(f, "t,z,zdot_over_n")?;
        for s in &traj.samples {
            let (z, zdot) = libration(s, omega0, params);
            writeln!(f, "{:.17e},{z:.17e},{:.17e}", s.t, zdot / params.n)?;
        }
        f.flush()?;
    }
    Ok(Record::new(json!({
        "theta0": a.theta0,
        "thetadot0_over_n": a.thetadot0,
        "t_end": a.t_end,
        "dt": a.dt,
        "omega0": a.omega0,
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
    })))
}

fn census(a: &CensusArgs, params: &PhysicalParams, out: &mut Outputs) -> Result<Record, CliError> {
    let numerators = a.resonances.clone().unwrap_or_else(|| TABLE_RESONANCES.to_vec());
    let resonances = numerators
        .iter()
        .map(|&p| Resonance::new(p).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = refinement_config();
    let rows: Vec<_> = resonances.par_iter().map(|&res| (res, census_resonance(res, &cfg, params))).collect();
    let mut solved = Vec::new();
    let mut failures = Vec::new();
    for (res, result) in rows {
        match result {
            Ok(rows) => {
                for row in rows {
                    match row.solution {
                        Ok(sol) => solved.push(sol),
                        Err(e) => failures.push(format!("{res} branch {}: {e}", row.branch)),
                    }
                }
            }
            Err(e) => failures.push(format!("{res}: {e}")),
        }
    }
    let mut f = out.file("census.csv")?;
    write_census_csv(&mut f, &solved, params)?;
    f.flush()?;
    let mut record = Record::new(json!({
        "resonances": numerators,
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
    }));
    if !failures.is_empty() {
        record.deferred = Some(CliError::Domain(failures.join("; ")));
    }
    Ok(record)
}

fn qp_construct(params: &PhysicalParams, out: &mut Outputs) -> Result<Record, CliError> {
    let c = quasiperiodic::solve_construction(params).map_err(domain)?;
    let value: Value = serde_json::from_str(&quasiperiodic::construction_json(&c)).map_err(domain)?;
    out.json("construction.json", &value)?;
    Ok(Record::new(json!({})))
}

fn spectrum(a: &SpectrumArgs, params: &PhysicalParams, out: &mut Outputs) -> Result<Record, CliError> {
    let c = quasiperiodic::solve_construction(params).map_err(domain)?;
    let cfg = IntegratorConfig::default();
    let traj = quasiperiodic::attractor_trajectory(&c, a.transient, a.periods, a.per_period, &cfg, params)
        .map_err(domain)?;
    let spectrum = quasiperiodic::extract_frequency(&traj, params).map_err(domain)?;
    let limit = a.max_freq * params.n;
    let mut f = out.file("spectrum.csv")?;
    writeln!(f, "freq,magnitude")?;
    for (w, m) in spectrum.freq.iter().zip(&spectrum.magnitude).take_while(|(w, _)| **w <= limit) {
        writeln!(f, "{w:.10e},{m:.10e}")?;
    }
    f.flush()?;
    let n = params.n;
    out.json(
        "spectrum.json",
        &json!({
            "omega_l": spectrum.omega_l,
            "n_over_omega_l": n / spectrum.omega_l,
            "omega_l_analytic": c.omega_l,
            "omega_sq_minus_omega_l_sq_numeric": c.omega * c.omega - spectrum.omega_l * spectrum.omega_l,
            "omega_sq_minus_omega_l_sq_analytic": c.omega * c.omega - c.omega_l * c.omega_l,
            "peaks": spectrum.peaks.iter().filter(|&&w| w <= limit).collect::<Vec<_>>(),
        }),
    )?;
    Ok(Record::new(json!({
        "transient_periods": a.transient,
        "periods": a.periods,
        "per_period": a.per_period,
        "max_freq_over_n": a.max_freq,
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
    })))
}

fn scan_values(from: f64, to: f64, step: f64) -> Vec<f64> {
    let count = ((to - from) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| from + i as f64 * step).collect()
}

fn bifurcate(a: &BifurcateArgs, params: &PhysicalParams, out: &mut Outputs) -> Result<Record, CliError> {
    let parameter = match a.param {
        ScanKnob::S => ScanParameter::Sideband,
        ScanKnob::Lambda => ScanParameter::Dissipation,
    };
    let values = scan_values(a.from, a.to, a.step);
    let cfg = ScanConfig {
        transient_periods: a.transient,
        recorded: a.recorded,
        integrator: integrator(a.survey_tolerance),
        ..ScanConfig::default()
    };
    let points = quasiperiodic::bifurcation_scan(parameter, &values, &cfg, params).map_err(domain)?;
    let mut f = out.file("bifurcation.csv")?;
    quasiperiodic::write_scan_csv(&mut f, &points)?;
    f.flush()?;
    let fit = quasiperiodic::fit_hopf(&points, a.threshold, a.fit_points);
    let summary: Vec<Value> = points
        .iter()
        .map(|p| json!({"value": p.value, "amplitude": p.amplitude, "omega_l": p.omega_l}))
        .collect();
    out.json(
        "hopf.json",
        &json!({
            "parameter": parameter.name(),
            "fit": fit.map(|h| json!({
                "a0": h.a0,
                "s0": h.s0,
                "kappa": h.kappa,
                "points_used": h.points_used,
                "rms_log_residual": h.rms_log_residual,
            })),
            "points": summary,
        }),
    )?;
    let mut record = Record::new(json!({
        "parameter": parameter.name(),
        "values": values,
        "transient_periods": a.transient,
        "recorded": a.recorded,
        "kick": cfg.kick,
        "threshold": a.threshold,
        "fit_points": a.fit_points,
        "rel_tol": cfg.integrator.rel_tol,
        "abs_tol": cfg.integrator.abs_tol,
    }));
    if fit.is_none() {
        record.deferred = Some(CliError::Domain("no transition above the threshold to fit".into()));
    }
    Ok(record)
}

fn precapture_cmd(a: &PrecaptureArgs, params: &PhysicalParams, out: &mut Outputs) -> Result<Record, CliError> {
    let n = params.n;
    let theta_dot0 = a.thetadot0 * n;
    let fit: LinearTidalFit = precapture::fit_linear_tidal(theta_dot0, params).map_err(domain)?;
    let sol = precapture::solve_omega(a.theta0, theta_dot0, &fit, params).map_err(domain)?;
    let t_capture = precapture::time_to_capture(theta_dot0, a.target * n, &fit).ok();
    let worst = precapture::max_omega_deviation(theta_dot0, &fit, a.phases, params).map_err(domain)?;
    let mut value: Value =
        serde_json::from_str(&precapture::precapture_json(&fit, &sol, t_capture, params)).map_err(domain)?;
    value["max_omega_deviation_over_phases"] = json!(worst);
    value["phases"] = json!(a.phases);
    value["target_over_n"] = json!(a.target);
    if a.integrate {
        let cfg = IntegratorConfig::default();
        let start = SpinState::new(a.theta0, theta_dot0, 0.0);
        let run = precapture::integrate_to_capture(start, a.target, a.band, a.window, a.max_time, &cfg, params)
            .map_err(domain)?;
        value["integrated_capture_time"] = json!(run.capture_time);
        let mut f = out.file("window_means.csv")?;
        writeln!(f, "t,mean_thetadot_over_n")?;
        for (t, m) in &run.window_means {
            writeln!(f, "{t:.10e},{:.12e}", m / n)?;
        }
        f.flush()?;
    }
    out.json("precapture.json", &value)?;
    if let Some(t_end) = a.curve_t_end {
        let mut f = out.file("curve.csv")?;
        writeln!(f, "t,thetadot_over_n")?;
        let steps = (t_end / a.curve_dt).floor() as u64;
        for i in 0..=steps {
            let t = i as f64 * a.curve_dt;
            writeln!(f, "{t:.10e},{:.12e}", precapture::thetadot_approx(t, &sol, &fit, params) / n)?;
        }
        f.flush()?;
    }
    let mut record = Record::new(json!({
        "theta0": a.theta0,
        "thetadot0_over_n": a.thetadot0,
        "target_over_n": a.target,
        "phases": a.phases,
        "curve_t_end": a.curve_t_end,
        "curve_dt": a.curve_dt,
        "integrate": a.integrate,
        "band": a.band,
        "window": a.window,
        "max_time": a.max_time,
    }));
    if t_capture.is_none() {
        record.deferred = Some(CliError::Domain(format!(
            "the linear decay from {} n never reaches {} n",
            a.thetadot0, a.target
        )));
    }
    Ok(record)
}

fn survey_config(a: &BasinsArgs, jobs: Option<usize>) -> SurveyConfig {
    SurveyConfig {
        thetadot_range: (0.0, a.thetadot_max),
        strip_width: a.strip_width,
        strips: a.strips.clone(),
        samples: a.samples,
        seed: a.seed,
        delta: a.delta,
        lock_periods: a.lock_periods,
        max_time: a.max_time,
        propagation: if a.direct { Propagation::Direct } else { Propagation::default() },
        jobs,
        ..SurveyConfig::default()
    }
}

fn survey(a: &BasinsArgs, jobs: Option<usize>, params: &PhysicalParams, out: &mut Outputs) -> Result<Record, CliError> {
    let cfg = survey_config(a, jobs);
    let result = basins::run_survey(&cfg, params).map_err(domain)?;
    let mut f = out.file("outcomes.csv")?;
    basins::write_outcomes_csv(&result.outcomes, params, &mut f)?;
    f.flush()?;
    let mut f = out.file("strips.csv")?;
    basins::write_strip_csv(&result.strips, &mut f)?;
    f.flush()?;
    let report = basins::barrier_check(&result.outcomes, params);
    let violations: Vec<Value> = report
        .violations
        .iter()
        .map(|(index, rule)| json!({"index": index, "rule": format!("{rule:?}")}))
        .collect();
    out.json(
        "barrier.json",
        &json!({"checked": report.checked, "passed": report.passed(), "violations": violations}),
    )?;
    let mut record = Record::new(json!({
        "samples": cfg.samples,
        "theta_range": [cfg.theta_range.0, cfg.theta_range.1],
        "thetadot_range_over_n": [cfg.thetadot_range.0, cfg.thetadot_range.1],
        "strip_width": cfg.strip_width,
        "strips": cfg.active_strips(),
        "delta": cfg.delta,
        "lock_periods": cfg.lock_periods,
        "max_time": cfg.max_time,
        "propagation": if a.direct { "direct" } else { "multiscale" },
        "rel_tol": cfg.integrator.rel_tol,
        "abs_tol": cfg.integrator.abs_tol,
    }));
    record.seed = Some(cfg.seed);
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_values_include_both_ends() {
        let v = scan_values(0.10, 0.25, 0.005);
        assert_eq!(v.len(), 31);
        assert!((v[30] - 0.25).abs() < 1e-12);
    }
}
