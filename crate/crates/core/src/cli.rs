//! `rotor` command-line front end.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SpinDownConfig};
use crate::crlb::{self, Regime};
use crate::error::{Error, Result};
use crate::estimation::{self, DampingCalibration, DecayFit, FitOptions};
use crate::io;
use crate::model::{self, mbar_to_pa, pa_to_mbar, GasSpec, MagnetSpec};
use crate::precession::{self, conserved_quantities, nutation_constants};
use crate::spectral::Window;
use crate::spindown::{self, OUParams, StateSpaceModel, TraceMeta};

#[derive(Debug, Parser)]
#[command(name = "rotor", version, about = "Levitated spinning-magnet simulation and pressure inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derived physical quantities of the configured rotor.
    Physics(PhysicsArgs),
    /// Generate synthetic data.
    Simulate {
        #[command(subcommand)]
        what: SimulateCommand,
    },
    /// Fit recorded or synthetic data.
    Estimate {
        #[command(subcommand)]
        what: EstimateCommand,
    },
    /// Cramér–Rao bounds on the decay rate and the pressure floors they imply.
    Crlb(CrlbArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhysicsArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Integrate the gyromagnetic equations of motion.
    Precession(PrecessionArgs),
    /// Sample the discrete log-frequency spin-down model.
    Spindown(SeededArgs),
    /// Synthesize a pickup-coil signal.
    Squid(SeededArgs),
}

#[derive(Debug, Args)]
pub struct PrecessionArgs {
    #[command(flatten)]
    pub common: Common,
    /// Append the energy integral as an `E_n` column.
    #[arg(long)]
    pub invariants: bool,
    /// Run the configured spin-rate sweep and write `omega0,T_s,T_l` instead.
    #[arg(long)]
    pub sweep: bool,
    /// Also write a JSON summary (integrals of motion, nutation periods or power-law fit).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeededArgs {
    #[command(flatten)]
    pub common: Common,
    /// Random seed; falls back to `ROTOR_SEED`, then to the config's `seed`, then 0.
    #[arg(long, env = "ROTOR_SEED")]
    pub seed: Option<u64>,
    /// Metadata sidecar; defaults to `<out>.meta.json` when `--out` is given.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EstimateCommand {
    /// Track the spin frequency of a `t_s,y` record; writes `t_s,f_hz`.
    Track(TrackArgs),
    /// Fit an exponential decay to a `t_s,f_hz` trace.
    FitDecay(FitDecayArgs),
    /// Fit γ = A·P_g + B to a `p_gauge_mbar,gamma_per_s` table.
    FitPressure(FitPressureArgs),
    /// Convert a decay rate into a cold pressure and gauge reading.
    InferPressure(InferPressureArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WindowArg {
    Rectangular,
    Hann,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// SQUID record.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Optional configuration supplying `tracking` defaults.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long, value_enum)]
    pub window: Option<WindowArg>,
    /// JSON summary of windows and gaps.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitWindow {
    /// Ignore samples before this time (s).
    #[arg(long)]
    pub t_start: Option<f64>,
    /// Ignore samples after this time (s).
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Drop samples below this frequency (Hz).
    #[arg(long, default_value_t = estimation::DEFAULT_MIN_FREQ)]
    pub min_freq: f64,
}

impl FitWindow {
    fn options(&self) -> FitOptions {
        FitOptions { t_start: self.t_start, t_end: self.t_end, min_freq: self.min_freq, weights: None }
    }
}

#[derive(Debug, Args)]
pub struct FitDecayArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub window: FitWindow,
    /// Use the generalized least-squares estimator for this process noise Q (1/s).
    /// Needs a uniformly sampled trace and ignores the window flags.
    #[arg(long)]
    pub gls_q_per_s: Option<f64>,
    /// Readout noise σ_v for the GLS estimator.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_v: f64,
}

#[derive(Debug, Args)]
pub struct FitPressureArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Optional configuration with `gas`/`gauge` to refer the slope to the cold pressure.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferPressureArgs {
    #[command(flatten)]
    pub common: Common,
    /// Spin-down trace to fit.
    #[arg(short, long, conflicts_with_all = ["fit", "gamma_per_s"])]
    pub input: Option<PathBuf>,
    /// A `fit-decay` report.
    #[arg(long, conflicts_with = "gamma_per_s")]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub gamma_per_s: Option<f64>,
    #[arg(long, default_value_t = 0.0, requires = "gamma_per_s")]
    pub gamma_stderr_per_s: f64,
    /// Measured γ/P in (s·mbar)⁻¹ instead of the free-molecular value.
    #[arg(long)]
    pub damping_per_s_mbar: Option<f64>,
    #[command(flatten)]
    pub window: FitWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    /// Record duration t_m, varying N_s at fixed Δ.
    #[value(name = "t_m")]
    TM,
    /// Operating pressure, varying γ and the thermal Q.
    Pressure,
}

#[derive(Debug, Args)]
pub struct CrlbArgs {
    #[command(flatten)]
    pub common: Common,
    /// Emit a CSV sweep instead of a single report.
    #[arg(long, value_enum, requires = "values")]
    pub sweep: Option<SweepAxis>,
    /// Sweep points: t_m in s or pressure in mbar.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Monte Carlo trials of the log-linear and GLS estimators.
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    /// Worker threads for the trials.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, env = "ROTOR_SEED")]
    pub seed: Option<u64>,
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn open_in(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Resolves a relative output path against `outputs.directory`.
fn out_path(cfg: &ExperimentConfig, path: Option<&PathBuf>) -> Option<PathBuf> {
    let dir = cfg.outputs.as_ref().and_then(|o| o.directory.as_ref());
    path.map(|p| match dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p.clone(),
    })
}

fn resolve_seed(flag: Option<u64>, cfg: &ExperimentConfig) -> u64 {
    flag.or(cfg.seed).unwrap_or(0)
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Physics(a) => cmd_physics(&a),
        Command::Simulate { what } => match what {
            SimulateCommand::Precession(a) => cmd_simulate_precession(&a),
            SimulateCommand::Spindown(a) => cmd_simulate_spindown(&a),
            SimulateCommand::Squid(a) => cmd_simulate_squid(&a),
        },
        Command::Estimate { what } => match what {
            EstimateCommand::Track(a) => cmd_track(&a),
            EstimateCommand::FitDecay(a) => cmd_fit_decay(&a),
            EstimateCommand::FitPressure(a) => cmd_fit_pressure(&a),
            EstimateCommand::InferPressure(a) => cmd_infer_pressure(&a),
        },
        Command::Crlb(a) => cmd_crlb(&a),
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct PhysicsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_velocity_m_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauge_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_kg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inertia_kg_m2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_per_p_per_s_mbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_per_s_at_pressure: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_mbar_from_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_time_days: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangential_speed_m_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centripetal_accel_m_per_s2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breaking_stress_pa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breaking_limit_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spinning_threshold_j: Option<f64>,
}

pub fn physics_report(cfg: &ExperimentConfig) -> Result<PhysicsReport> {
    let magnet = cfg.magnet_spec()?;
    let gas = cfg.gas_spec()?;
    let gauge = cfg.gauge_spec()?;
    let rotor = cfg.rotor();
    let mut r = PhysicsReport::default();
    if let Some(g) = &gas {
        r.mean_velocity_m_per_s = Some(model::mean_velocity(g)?);
        r.gauge_factor = Some(gauge.factor(g));
    }
    if let Some(m) = &magnet {
        r.mass_kg = Some(m.mass());
        r.inertia_kg_m2 = Some(m.moment_of_inertia());
        if let Some(f) = rotor.freq_hz {
            let (v, a) = model::tangential_kinematics(m, f)?;
            r.tangential_speed_m_per_s = Some(v);
            r.centripetal_accel_m_per_s2 = Some(a);
        }
        if let Some(b) = cfg.breaking_spec()? {
            r.breaking_stress_pa = Some(b.breaking_stress());
            r.breaking_limit_hz = Some(model::breaking_limit(m, &b) / (2.0 * std::f64::consts::PI));
        }
        if let (Some(t), Some(_)) = (cfg.trap_field()?, m.magnetic_moment()) {
            r.spinning_threshold_j = Some(model::spinning_threshold(m, &t)?);
        }
    }
    if let (Some(m), Some(g)) = (&magnet, &gas) {
        r.gamma_per_p_per_s_mbar = Some(model::damping_per_pressure(m, g)? * model::PA_PER_MBAR);
        if let Some(p) = rotor.pressure_mbar {
            r.gamma_per_s_at_pressure = Some(model::decay_rate(m, g, mbar_to_pa(p))?);
        }
        if let Some(gamma) = rotor.gamma_per_s {
            r.p_mbar_from_gamma = Some(pa_to_mbar(model::pressure_from_decay(m, g, gamma)?));
        }
    }
    if let Some(gamma) = rotor.gamma_per_s {
        if gamma > 0.0 {
            r.decay_time_s = Some(1.0 / gamma);
            r.decay_time_days = Some(1.0 / gamma / 86400.0);
        }
        if let Some(f) = rotor.freq_hz {
            r.quality_factor = Some(model::quality_factor(f, gamma)?);
        }
    }
    Ok(r)
}

fn cmd_physics(a: &PhysicsArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.common.config)?;
    let report = physics_report(&cfg)?;
    io::write_json(open_out(out_path(&cfg, a.common.out.as_ref()).as_deref())?, &report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PrecessionReport {
    pub energy: f64,
    pub spin_projection: f64,
    pub max_relative_energy_drift: f64,
    pub max_spin_projection_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nutation_period_quadrature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nutation_period_spectral: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub ln_c: f64,
    pub alpha: f64,
}

fn cmd_simulate_precession(a: &PrecessionArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.common.config)?;
    let pc = cfg.precession()?;
    let params = pc.params()?;
    let out = out_path(&cfg, a.common.out.as_ref());
    let report_path = out_path(&cfg, a.report.as_ref());

    if a.sweep {
        let sw =
            pc.sweep.as_ref().ok_or_else(|| Error::Config("`precession.sweep` is required for --sweep".into()))?;
        let opts = precession::IntegratorOptions { tol: pc.tol, dt: sw.dt };
        let points = precession::precession_sweep(&sw.omega0, &params, sw.t_end, opts)?;
        io::write_sweep(open_out(out.as_deref())?, &points)?;
        if let Some(p) = report_path {
            let (ln_c, alpha) = precession::fit_power_law(&points)?;
            io::write_json(open_out(Some(&p))?, &SweepReport { ln_c, alpha })?;
        }
        return Ok(());
    }

    let state = pc.initial_state()?;
    let mut header = io::TRAJECTORY_HEADER.to_vec();
    if a.invariants {
        header.push("E_n");
    }
    if pc.t_end == 0.0 {
        return io::write_header(open_out(out.as_deref())?, &header);
    }
    let traj = precession::integrate(&state, &params, pc.t_end, pc.options())?;
    io::write_trajectory(open_out(out.as_deref())?, &traj, a.invariants)?;

    if let Some(p) = report_path {
        let c0 = conserved_quantities(&traj.states[0]);
        let (mut de, mut dp) = (0.0f64, 0.0f64);
        for s in &traj.states {
            let c = conserved_quantities(s);
            de = de.max(((c.energy - c0.energy) / c0.energy).abs());
            dp = dp.max((c.spin_projection - c0.spin_projection).abs());
        }
        let quad = if c0.spin_projection.abs() < 1e-9 {
            let k = nutation_constants(&traj.states[0], &params);
            precession::nutation_period(k.energy, k.omega0, params.epsilon()).ok()
        } else {
            None
        };
        let report = PrecessionReport {
            energy: c0.energy,
            spin_projection: c0.spin_projection,
            max_relative_energy_drift: de,
            max_spin_projection_drift: dp,
            nutation_period_quadrature: quad,
            nutation_period_spectral: precession::nutation_spectral_period(&traj).ok(),
        };
        io::write_json(open_out(Some(&p))?, &report)?;
    }
    Ok(())
}

fn sidecar_path(out: Option<&Path>, meta: Option<PathBuf>) -> Option<PathBuf> {
    meta.or_else(|| out.map(|o| o.with_extension("meta.json")))
}

/// Q: explicit override, else the thermal value for the configured magnet and gas.
fn spindown_q(cfg: &ExperimentConfig, sd: &SpinDownConfig) -> Result<f64> {
    if let Some(q) = sd.q_per_s {
        return Ok(q);
    }
    let magnet = cfg.require_magnet()?;
    let gas = cfg.require_gas()?;
    let p = OUParams::new(magnet.moment_of_inertia(), sd.gamma_per_s, gas.temperature(), 2.0 * std::f64::consts::PI * sd.f0_hz)?;
    Ok(p.process_noise_intensity())
}

fn cmd_simulate_spindown(a: &SeededArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.common.config)?;
    let sd = cfg.spindown()?;
    let seed = resolve_seed(a.seed, &cfg);
    let out = out_path(&cfg, a.common.out.as_ref());
    let meta_path = sidecar_path(out.as_deref(), out_path(&cfg, a.meta.as_ref()));
    let q = spindown_q(&cfg, &sd)?;
    eprintln!("seed = {seed}");

    if sd.n_samples == 0 {
        io::write_header(open_out(out.as_deref())?, &io::SPINDOWN_HEADER)?;
        if let Some(m) = meta_path {
            let meta = TraceMeta {
                seed: Some(seed),
                gamma: sd.gamma_per_s,
                omega0: 2.0 * std::f64::consts::PI * sd.f0_hz,
                q,
                sigma_v: sd.sigma_v()?,
                dt: sd.dt_s,
                n_samples: 0,
            };
            io::write_meta(open_out(Some(&m))?, &meta)?;
        }
        return Ok(());
    }
    let model = sd.model()?;
    let trace = spindown::simulate_log_spindown(2.0 * std::f64::consts::PI * sd.f0_hz, sd.gamma_per_s, q, &model, seed)?;
    for w in &trace.warnings {
        warn(w);
    }
    io::write_spindown(open_out(out.as_deref())?, &trace)?;
    if let (Some(m), Some(meta)) = (meta_path, &trace.meta) {
        io::write_meta(open_out(Some(&m))?, meta)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SquidMeta {
    seed: u64,
    f0_hz: f64,
    gamma_per_s: f64,
    amplitude: f64,
    phase0_rad: f64,
    noise_sigma: f64,
    sample_rate_hz: f64,
    duration_s: f64,
    process_noise_per_s: f64,
    n_samples: usize,
}

fn cmd_simulate_squid(a: &SeededArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.common.config)?;
    let spec = cfg.squid_spec()?;
    let seed = resolve_seed(a.seed, &cfg);
    let out = out_path(&cfg, a.common.out.as_ref());
    eprintln!("seed = {seed}");
    let trace = spindown::synth_squid_signal(&spec, seed)?;
    io::write_squid(open_out(out.as_deref())?, &trace)?;
    if let Some(m) = sidecar_path(out.as_deref(), out_path(&cfg, a.meta.as_ref())) {
        let meta = SquidMeta {
            seed,
            f0_hz: spec.f0,
            gamma_per_s: spec.gamma,
            amplitude: spec.amplitude,
            phase0_rad: spec.phase0,
            noise_sigma: spec.noise_sigma,
            sample_rate_hz: spec.sample_rate,
            duration_s: spec.duration,
            process_noise_per_s: spec.process_noise,
            n_samples: trace.values.len(),
        };
        io::write_json(open_out(Some(&m))?, &meta)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackReport {
    pub n_estimates: usize,
    pub window_len: usize,
    pub hop: usize,
    pub gap_times_s: Vec<f64>,
}

fn cmd_track(a: &TrackArgs) -> Result<()> {
    let mut opts = match &a.config {
        Some(p) => ExperimentConfig::from_path(p)?.track_options(),
        None => estimation::TrackOptions::default(),
    };
    if let Some(n) = a.window_len {
        opts.window_len = n;
    }
    if a.hop.is_some() {
        opts.hop = a.hop;
    }
    if let Some(w) = a.window {
        opts.peak.window = match w {
            WindowArg::Rectangular => Window::Rectangular,
            WindowArg::Hann => Window::Hann,
        };
    }
    let squid = io::read_squid(open_in(&a.input)?)?;
    let res = estimation::track_spindown(&squid, &opts)?;
    if !res.gaps.is_empty() {
        warn(&format!("{} windows without a detected peak", res.gaps.len()));
    }
    io::write_spindown(open_out(a.out.as_deref())?, &res.trace)?;
    if let Some(p) = &a.report {
        let r = TrackReport { n_estimates: res.trace.len(), window_len: res.window_len, hop: res.hop, gap_times_s: res.gaps };
        io::write_json(open_out(Some(p))?, &r)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub gamma_per_s: f64,
    pub gamma_stderr_per_s: f64,
    pub f0_hz: f64,
    pub f0_stderr_hz: f64,
    pub window_s: [f64; 2],
    pub n_used: usize,
    pub n_below_floor: usize,
    pub residual_rms: f64,
    pub method: String,
}

impl DecayReport {
    fn new(f: &DecayFit, method: &str) -> Self {
        Self {
            gamma_per_s: f.gamma,
            gamma_stderr_per_s: f.gamma_stderr,
            f0_hz: f.f0,
            f0_stderr_hz: f.f0_stderr,
            window_s: [f.t_start, f.t_end],
            n_used: f.n_used,
            n_below_floor: f.n_below_floor,
            residual_rms: f.residual_rms,
            method: method.into(),
        }
    }

    fn to_fit(&self) -> DecayFit {
        DecayFit {
            f0: self.f0_hz,
            f0_stderr: self.f0_stderr_hz,
            gamma: self.gamma_per_s,
            gamma_stderr: self.gamma_stderr_per_s,
            residual_rms: self.residual_rms,
            n_used: self.n_used,
            n_below_floor: self.n_below_floor,
            t_start: self.window_s[0],
            t_end: self.window_s[1],
        }
    }
}

fn cmd_fit_decay(a: &FitDecayArgs) -> Result<()> {
    let trace = io::read_spindown(open_in(&a.input)?)?;
    let report = match a.gls_q_per_s {
        Some(q) => DecayReport::new(&estimation::fit_decay_gls(&trace, q, a.sigma_v)?, "gls"),
        None => DecayReport::new(&estimation::fit_exponential_decay(&trace, &a.window.options())?, "ols"),
    };
    io::write_json(open_out(a.out.as_deref())?, &report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PressureFitReport {
    pub a_per_s_mbar: f64,
    pub b_per_s: f64,
    pub p_res_mbar: f64,
    pub stderr_a_per_s_mbar: Option<f64>,
    pub stderr_b_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauge_factor: Option<f64>,
    /// A referred to the cold pressure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_per_p_per_s_mbar: Option<f64>,
}

pub fn pressure_fit_report(fit: &estimation::PressureFit, factor: Option<f64>) -> PressureFitReport {
    PressureFitReport {
        a_per_s_mbar: fit.slope_per_mbar(),
        b_per_s: fit.intercept,
        p_res_mbar: pa_to_mbar(fit.residual_pressure),
        stderr_a_per_s_mbar: fit.slope_stderr.map(|s| s * model::PA_PER_MBAR),
        stderr_b_per_s: fit.intercept_stderr,
        gauge_factor: factor,
        gamma_per_p_per_s_mbar: factor.map(|f| fit.damping_per_pressure(f) * model::PA_PER_MBAR),
    }
}

fn cmd_fit_pressure(a: &FitPressureArgs) -> Result<()> {
    let points = io::read_pressure_series(open_in(&a.input)?)?;
    let fit = estimation::fit_gamma_vs_pressure(&points)?;
    let factor = match &a.config {
        Some(p) => {
            let cfg = ExperimentConfig::from_path(p)?;
            match cfg.gas_spec()? {
                Some(g) => Some(cfg.gauge_spec()?.factor(&g)),
                None => None,
            }
        }
        None => None,
    };
    io::write_json(open_out(a.out.as_deref())?, &pressure_fit_report(&fit, factor))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PressureReport {
    pub gamma_per_s: f64,
    pub gamma_stderr_per_s: f64,
    pub p_pa: f64,
    pub p_mbar: f64,
    pub p_stderr_mbar: f64,
    pub p_gauge_mbar: f64,
    pub p_gauge_stderr_mbar: f64,
    pub gauge_linear: bool,
    pub gamma_per_p_per_s_mbar: f64,
}

pub fn pressure_report(
    fit: &DecayFit,
    magnet: &MagnetSpec,
    gas: &GasSpec,
    gauge: &model::GaugeSpec,
    cal: DampingCalibration,
) -> Result<PressureReport> {
    let est = estimation::infer_pressure(fit, magnet, gas, gauge, cal)?;
    Ok(PressureReport {
        gamma_per_s: fit.gamma,
        gamma_stderr_per_s: fit.gamma_stderr,
        p_pa: est.pressure,
        p_mbar: pa_to_mbar(est.pressure),
        p_stderr_mbar: pa_to_mbar(est.pressure_stderr),
        p_gauge_mbar: pa_to_mbar(est.gauge_pressure),
        p_gauge_stderr_mbar: pa_to_mbar(est.gauge_stderr),
        gauge_linear: est.gauge_linear,
        gamma_per_p_per_s_mbar: est.damping_per_pressure * model::PA_PER_MBAR,
    })
}

fn cmd_infer_pressure(a: &InferPressureArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.common.config)?;
    let magnet = cfg.require_magnet()?;
    let gas = cfg.require_gas()?;
    let gauge = cfg.gauge_spec()?;
    let fit = if let Some(p) = &a.input {
        estimation::fit_exponential_decay(&io::read_spindown(open_in(p)?)?, &a.window.options())?
    } else if let Some(p) = &a.fit {
        io::read_json::<_, DecayReport>(open_in(p)?)?.to_fit()
    } else if let Some(g) = a.gamma_per_s {
        DecayFit {
            f0: f64::NAN,
            f0_stderr: f64::NAN,
            gamma: g,
            gamma_stderr: a.gamma_stderr_per_s,
            residual_rms: f64::NAN,
            n_used: 0,
            n_below_floor: 0,
            t_start: f64::NAN,
            t_end: f64::NAN,
        }
    } else {
        return Err(Error::Config("one of --input, --fit or --gamma-per-s is required".into()));
    };
    let cal = match a.damping_per_s_mbar {
        Some(d) => DampingCalibration::Measured(d / model::PA_PER_MBAR),
        None => DampingCalibration::Theoretical,
    };
    let report = pressure_report(&fit, &magnet, &gas, &gauge, cal)?;
    if !report.gauge_linear {
        warn("gauge-equivalent reading exceeds the linear range of the gauge");
    }
    io::write_json(open_out(out_path(&cfg, a.common.out.as_ref()).as_deref())?, &report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrlbReport {
    pub n_samples: usize,
    pub dt_s: f64,
    pub t_m_s: f64,
    pub sigma_v: f64,
    pub q_per_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_mbar: Option<f64>,
    /// None above the sample cap of the dense bound.
    pub exact_var_per_s2: Option<f64>,
    pub regularized: bool,
    pub readout_var_per_s2: f64,
    pub process_var_per_s2: f64,
    pub regime: Regime,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_p_pa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_p_pa_per_rthz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub readout_floor_pa_per_rthz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process_floor_pa_per_rthz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<EmpiricalVariance>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmpiricalVariance {
    pub trials: usize,
    pub ols_var_per_s2: f64,
    pub gls_var_per_s2: Option<f64>,
}

/// Everything the bound computation needs, resolved from the configuration.
#[derive(Debug, Clone)]
pub struct CrlbSetup {
    pub dt: f64,
    pub n_samples: usize,
    pub sigma_v: f64,
    pub q_override: Option<f64>,
    pub gamma: Option<f64>,
    pub pressure_mbar: Option<f64>,
    pub f0_hz: Option<f64>,
    pub magnet: Option<MagnetSpec>,
    pub gas: Option<GasSpec>,
    pub max_samples: usize,
}

impl CrlbSetup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let c = cfg.crlb();
        let sd = cfg.spindown;
        let dt = c.dt_s.or(sd.map(|s| s.dt_s)).ok_or_else(|| Error::Config("`crlb.dt_s` is required".into()))?;
        let n_samples =
            c.n_samples.or(sd.map(|s| s.n_samples)).ok_or_else(|| Error::Config("`crlb.n_samples` is required".into()))?;
        let sigma_v = match (c.sigma_v, sd) {
            (Some(s), _) => s,
            (None, Some(s)) => s.sigma_v()?,
            (None, None) => 0.0,
        };
        Ok(Self {
            dt,
            n_samples,
            sigma_v,
            q_override: c.q_per_s.or(sd.and_then(|s| s.q_per_s)),
            gamma: sd.map(|s| s.gamma_per_s).or(cfg.rotor().gamma_per_s),
            pressure_mbar: c.pressure_mbar.or(cfg.rotor().pressure_mbar),
            f0_hz: sd.map(|s| s.f0_hz).or(cfg.rotor().freq_hz),
            magnet: cfg.magnet_spec()?,
            gas: cfg.gas_spec()?,
            max_samples: c.max_samples.unwrap_or(crlb::DEFAULT_MAX_SAMPLES),
        })
    }

    fn gamma_p(&self) -> Result<Option<f64>> {
        match (&self.magnet, &self.gas) {
            (Some(m), Some(g)) => Ok(Some(model::damping_per_pressure(m, g)?)),
            _ => Ok(None),
        }
    }

    /// Thermal Q at the operating point; the pressure, when given, sets γ.
    fn q(&self, pressure_mbar: Option<f64>) -> Result<f64> {
        if let Some(q) = self.q_override {
            return Ok(q);
        }
        let (Some(m), Some(g)) = (&self.magnet, &self.gas) else {
            return Err(Error::Config("`crlb.q_per_s` or both `magnet` and `gas` are required".into()));
        };
        let gamma = match pressure_mbar {
            Some(p) => model::decay_rate(m, g, mbar_to_pa(p))?,
            None => self.gamma.ok_or_else(|| Error::Config("a decay rate or `crlb.pressure_mbar` is required".into()))?,
        };
        let f0 = self.f0_hz.ok_or_else(|| Error::Config("a spin frequency is required for the thermal Q".into()))?;
        OUParams::new(m.moment_of_inertia(), gamma, g.temperature(), 2.0 * std::f64::consts::PI * f0)
            .map(|p| p.process_noise_intensity())
    }

    pub fn report(&self, n_samples: usize, pressure_mbar: Option<f64>) -> Result<CrlbReport> {
        let model = StateSpaceModel::new(self.dt, n_samples, self.sigma_v)?;
        let q = self.q(pressure_mbar)?;
        let t_m = model.duration();
        let readout = crlb::readout_limited_bound(&model);
        let process = crlb::process_limited_bound(q, t_m)?;
        let exact = if n_samples <= self.max_samples {
            Some(crlb::exact_crlb_gamma_capped(&crlb::build_covariance(&model, q)?, self.max_samples)?)
        } else {
            warn(&format!("N_s = {n_samples} exceeds the dense-bound cap {}; reporting limits only", self.max_samples));
            None
        };
        let variance = exact.map(|e| e.variance).unwrap_or(readout + process);
        let mut r = CrlbReport {
            n_samples,
            dt_s: self.dt,
            t_m_s: t_m,
            sigma_v: self.sigma_v,
            q_per_s: q,
            p_mbar: pressure_mbar,
            exact_var_per_s2: exact.map(|e| e.variance),
            regularized: exact.is_some_and(|e| e.regularized),
            readout_var_per_s2: readout,
            process_var_per_s2: process,
            regime: if process > readout { Regime::Process } else { Regime::Readout },
            sigma_p_pa: None,
            sigma_p_pa_per_rthz: None,
            readout_floor_pa_per_rthz: None,
            process_floor_pa_per_rthz: None,
            empirical: None,
        };
        if let Some(gp) = self.gamma_p()? {
            let s = crlb::pressure_sensitivity(gp, variance, &model, q)?;
            r.sigma_p_pa = Some(s.sigma_p);
            r.sigma_p_pa_per_rthz = Some(s.sigma_p_per_rthz);
            r.readout_floor_pa_per_rthz = Some(s.readout_floor * t_m.sqrt());
            r.process_floor_pa_per_rthz = Some(s.process_floor * t_m.sqrt());
        }
        Ok(r)
    }
}

/// Sample variances of the log-linear and GLS estimators over independent paths.
pub fn empirical_variance(
    model: &StateSpaceModel,
    q: f64,
    gamma: f64,
    trials: usize,
    seed: u64,
    max_samples: usize,
) -> Result<EmpiricalVariance> {
    if trials < 2 {
        return Err(Error::Config("--trials must be at least 2".into()));
    }
    let weights = if model.n_samples() <= max_samples {
        Some(crlb::gls_weights(&crlb::build_covariance(model, q)?)?)
    } else {
        None
    };
    let times = model.times();
    let tm = times.iter().sum::<f64>() / times.len() as f64;
    let sxx: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    let est: Vec<(f64, Option<f64>)> = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let z = spindown::sample_log_path(0.0, gamma, q, model, &mut spindown::rng_for(seed, k));
            let ols = -times.iter().zip(&z).map(|(t, z)| (t - tm) * z).sum::<f64>() / sxx;
            let gls = weights.as_ref().map(|w| -w.iter().zip(&z).map(|(w, z)| w * z).sum::<f64>());
            (ols, gls)
        })
        .collect();
    let var = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let gls = if weights.is_some() { Some(var(est.iter().map(|e| e.1.unwrap()).collect())) } else { None };
    Ok(EmpiricalVariance { trials, ols_var_per_s2: var(est.iter().map(|e| e.0).collect()), gls_var_per_s2: gls })
}

const CRLB_SWEEP_HEADER: [&str; 9] = [
    "t_m_s",
    "p_mbar",
    "exact_var_per_s2",
    "readout_var_per_s2",
    "process_var_per_s2",
    "sigma_p_pa",
    "sigma_p_pa_per_rthz",
    "regime",
    "n_samples",
];

fn cmd_crlb(a: &CrlbArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.common.config)?;
    let setup = CrlbSetup::from_config(&cfg)?;
    let out = out_path(&cfg, a.common.out.as_ref());

    let pool = match a.jobs {
        Some(0) => return Err(Error::Config("--jobs must be positive".into())),
        Some(j) => rayon::ThreadPoolBuilder::new().num_threads(j).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::Config(e.to_string()))?;

    if let Some(axis) = a.sweep {
        let values = a.values.clone().unwrap_or_default();
        let reports: Vec<CrlbReport> = values
            .iter()
            .map(|&v| match axis {
                SweepAxis::TM => {
                    let n = (v / setup.dt).round();
                    if !(n >= 2.0) {
                        return Err(Error::Domain(format!("t_m = {v} s gives fewer than two samples")));
                    }
                    setup.report(n as usize, setup.pressure_mbar)
                }
                SweepAxis::Pressure => setup.report(setup.n_samples, Some(v)),
            })
            .collect::<Result<_>>()?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(open_out(out.as_deref())?);
        let f = |x: Option<f64>| x.map(io::format_f64).unwrap_or_default();
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(CRLB_SWEEP_HEADER).map_err(err)?;
        for r in &reports {
            w.write_record([
                io::format_f64(r.t_m_s),
                f(r.p_mbar),
                f(r.exact_var_per_s2),
                io::format_f64(r.readout_var_per_s2),
                io::format_f64(r.process_var_per_s2),
                f(r.sigma_p_pa),
                f(r.sigma_p_pa_per_rthz),
                match r.regime {
                    Regime::Readout => "readout".into(),
                    Regime::Process => "process".into(),
                },
                format!("{}", r.n_samples),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        return Ok(());
    }

    let mut report = setup.report(setup.n_samples, setup.pressure_mbar)?;
    if a.trials > 0 {
        let model = StateSpaceModel::new(setup.dt, setup.n_samples, setup.sigma_v)?;
        let seed = resolve_seed(a.seed, &cfg);
        let gamma = setup.gamma.unwrap_or(0.0);
        let emp =
            pool.install(|| empirical_variance(&model, report.q_per_s, gamma, a.trials, seed, setup.max_samples))?;
        report.empirical = Some(emp);
    }
    io::write_json(open_out(out.as_deref())?, &report)
}

/// Parses arguments, runs, and maps failures onto exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
