//! `covdesign` command-line front end.
//!
//! Every subcommand reads one JSON config, writes `report.json` (and
//! `mc.csv` for `simulate`) into the output directory and maps failures to
//! exit codes: 2 config error, 3 numerical failure, 4 infeasible design.
//! Numbers in every output are rounded to 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::design::{
    design_privacy_with, design_utility_with, privacy_floor_from_position, privacy_lmi_data,
    scaled_steady_state_target, theoretical_bound, utility_target_from_position, PrivacySpec, UtilitySpec,
};
use crate::error::Error;
use crate::kalman::InitialBelief;
use crate::matlib::{Mat, SymMat};
use crate::riccati::{check_assumptions, solve_dare, solve_dare_noiseless, DareOptions, SystemModel};
use crate::sdp::SdpOptions;
use crate::sim::{
    constant_velocity, monte_carlo, position_selector, Homography, McConfig, McReport, PixelModel, PrivacyInjection,
    TrajectoryOptions, DEFAULT_COLS, DEFAULT_FRAMES, DEFAULT_ROWS,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "covdesign", version, about = "Sensor precision and privacy noise design for Kalman tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Write the SDP iteration log; without a value it goes to `<out>/sdp_trace.log`.
    #[arg(long, global = true)]
    pub trace: Option<Option<PathBuf>>,
    /// Overrides `simulate.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Smallest achievable steady-state covariance (noise-free detections).
    Bound,
    /// Cheapest detection precision meeting a steady-state covariance target.
    Utility,
    /// Cheapest injected noise keeping the next prediction above a floor.
    Privacy,
    /// Monte Carlo tracking study.
    Simulate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Bound => "bound",
            Command::Utility => "utility",
            Command::Privacy => "privacy",
            Command::Simulate => "simulate",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Io(_) => 1,
        }
    }

    fn from_core(context: &str, e: Error) -> Self {
        match e {
            Error::Infeasible(m) => CliError::Infeasible(format!("{context}: {m}")),
            Error::InvalidInput(m) | Error::Dimension(m) => CliError::Config(format!("{context}: {m}")),
            other => CliError::Numerical(format!("{context}: {other}")),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn field<'a>(obj: &'a Value, parent: &str, key: &str) -> CliResult<&'a Value> {
    obj.get(key).ok_or_else(|| config_err(&join(parent, key), "missing field"))
}

fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

fn number(v: &Value, path: &str) -> CliResult<f64> {
    let x = v.as_f64().ok_or_else(|| config_err(path, "expected a number"))?;
    if !x.is_finite() {
        return Err(config_err(path, "must be finite"));
    }
    Ok(x)
}

fn count(v: &Value, path: &str) -> CliResult<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| config_err(path, "expected a non-negative integer"))
}

fn vector(v: &Value, path: &str) -> CliResult<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| config_err(path, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{path}[{i}]")))
        .collect()
}

fn matrix(v: &Value, path: &str) -> CliResult<Mat<f64>> {
    let rows = v.as_array().ok_or_else(|| config_err(path, "expected a nested array (rows)"))?;
    if rows.is_empty() {
        return Err(config_err(path, "matrix has no rows"));
    }
    let rows: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| vector(r, &format!("{path}[{i}]")))
        .collect::<CliResult<_>>()?;
    Mat::from_rows(&rows).map_err(|e| config_err(path, e))
}

fn sym_matrix(v: &Value, path: &str, dim: usize) -> CliResult<SymMat<f64>> {
    let m = matrix(v, path)?;
    if m.shape() != (dim, dim) {
        return Err(config_err(path, format!("expected {dim}x{dim}, got {}x{}", m.rows(), m.cols())));
    }
    let asym = (&m - &m.transpose()).max_abs();
    if asym > 1e-9 * (1.0 + m.max_abs()) {
        return Err(config_err(path, "matrix is not symmetric"));
    }
    SymMat::new(m).map_err(|e| config_err(path, e))
}

fn psd_matrix(v: &Value, path: &str, dim: usize) -> CliResult<SymMat<f64>> {
    let s = sym_matrix(v, path, dim)?;
    let lo = s.min_eigenvalue().map_err(|e| config_err(path, e))?;
    if lo < -1e-9 * (1.0 + s.frobenius_norm()) {
        return Err(config_err(path, format!("covariance is not positive semidefinite (min eigenvalue {lo:e})")));
    }
    Ok(s)
}

fn weight(block: &Value, parent: &str, ny: usize) -> CliResult<SymMat<f64>> {
    match block.get("W") {
        Some(w) => sym_matrix(w, &join(parent, "W"), ny),
        None => Ok(SymMat::identity(ny)),
    }
}

/// Parsed top-level config shared by all subcommands.
pub struct Config {
    pub raw: Value,
    pub model: SystemModel<f64>,
    pub homography: Option<(usize, usize)>,
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let raw: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        if !raw.is_object() {
            return Err(CliError::Config("config must be a JSON object".into()));
        }
        let m = field(&raw, "", "model")?;
        let f = matrix(field(m, "model", "F")?, "model.F")?;
        let h = matrix(field(m, "model", "H")?, "model.H")?;
        if !f.is_square() {
            return Err(config_err("model.F", "must be square"));
        }
        if h.cols() != f.rows() {
            return Err(config_err("model.H", format!("needs {} columns to match model.F", f.rows())));
        }
        let q = psd_matrix(field(m, "model", "Q")?, "model.Q", f.rows())?;
        let model = SystemModel::new(f, h, q).map_err(|e| config_err("model", e))?;
        let homography = match raw.get("homography") {
            None | Some(Value::Null) => None,
            Some(hv) => {
                let n_r = count(field(hv, "homography", "n_r")?, "homography.n_r")?;
                let n_c = count(field(hv, "homography", "n_c")?, "homography.n_c")?;
                if n_r == 0 || n_c == 0 {
                    return Err(config_err("homography", "frame dimensions must be positive"));
                }
                Some((n_r, n_c))
            }
        };
        Ok(Self { raw, model, homography })
    }

    fn block(&self, name: &str) -> CliResult<&Value> {
        let b = field(&self.raw, "", name)?;
        if !b.is_object() {
            return Err(config_err(name, "expected an object"));
        }
        Ok(b)
    }
}

/// Rounds to 9 significant digits through the decimal representation.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Decimal text of [`round_sig9`]: shortest round-trip form, '.' separator.
pub fn fmt_sig9(x: f64) -> String {
    let r = round_sig9(x);
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => match n.as_f64() {
            Some(x) => serde_json::Number::from_f64(round_sig9(x)).map(Value::Number).unwrap_or(Value::Null),
            None => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

fn to_value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("report types serialize")
}

/// Output of one subcommand.
pub struct Outcome {
    pub report: Value,
    pub csv: Option<String>,
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
}

struct Trace {
    file: Option<fs::File>,
    path: Option<PathBuf>,
}

impl Trace {
    fn sink(&mut self) -> Option<&mut dyn Write> {
        self.file.as_mut().map(|f| f as &mut dyn Write)
    }
}

fn position_block(model: &SystemModel<f64>, s: &SymMat<f64>) -> SymMat<f64> {
    s.congruence(model.h())
}

pub fn cmd_bound(cfg: &Config) -> CliResult<Outcome> {
    let model = &cfg.model;
    let assumptions = check_assumptions(model).map_err(|e| CliError::from_core("assumption check", e))?;
    let warnings = assumptions.warnings();
    let dare = solve_dare_noiseless(model, &DareOptions::default()).map_err(|e| CliError::from_core("noiseless DARE", e))?;
    if !dare.converged {
        return Err(CliError::Numerical(format!(
            "noiseless DARE did not converge in {} iterations",
            dare.iterations
        )));
    }
    let lb = &dare.sigma_inf;
    let pos = position_block(model, lb);
    let mut report = json!({
        "command": "bound",
        "assumptions": to_value(&assumptions),
        "sigma_lb": to_value(lb),
        "position_block": to_value(&pos),
        "dare": {"iterations": dare.iterations, "residual": dare.residual},
    });
    let mut summary = vec![format!(
        "position bound diag: {}",
        pos.diagonal().iter().map(|&x| fmt_sig9(x)).collect::<Vec<_>>().join(", ")
    )];
    if let Some(spatial) = spatial_block(cfg, &pos)? {
        summary.push(format!(
            "spatial bound diag (m^2): {}",
            spatial.diagonal().iter().map(|&x| fmt_sig9(x)).collect::<Vec<_>>().join(", ")
        ));
        report["spatial_block"] = to_value(&spatial);
    }
    report["warnings"] = to_value(&warnings);
    Ok(Outcome {
        report,
        csv: None,
        summary,
        warnings,
    })
}

fn spatial_block(cfg: &Config, pos: &SymMat<f64>) -> CliResult<Option<SymMat<f64>>> {
    let Some((n_r, n_c)) = cfg.homography else {
        return Ok(None);
    };
    if pos.dim() != 2 {
        return Err(config_err("homography", "needs a model with two measured coordinates"));
    }
    let h = Homography::for_frame(n_r, n_c).map_err(|e| config_err("homography", e))?;
    Ok(Some(h.pixel_to_spatial_cov(pos).map_err(|e| CliError::from_core("homography", e))?))
}

fn utility_target(cfg: &Config, block: &Value) -> CliResult<(SymMat<f64>, Value)> {
    let model = &cfg.model;
    let (nx, ny) = (model.nx(), model.ny());
    let t = field(block, "utility", "target")?;
    if let Some(s) = t.get("sigma_d") {
        let sd = psd_matrix(s, "utility.target.sigma_d", nx)?;
        return Ok((sd, json!({"kind": "sigma_d"})));
    }
    if let Some(scale) = t.get("position_scale") {
        let scale = number(scale, "utility.target.position_scale")?;
        if scale <= 0.0 {
            return Err(config_err("utility.target.position_scale", "must be positive"));
        }
        let lb = theoretical_bound(model).map_err(|e| CliError::from_core("theoretical bound", e))?;
        let goal: Vec<f64> = position_block(model, &lb).diagonal().iter().map(|&d| d * scale).collect();
        return from_position(model, &goal, json!({"kind": "position_scale", "scale": scale}));
    }
    if let Some(diag) = t.get("position_diag") {
        let goal = vector(diag, "utility.target.position_diag")?;
        if goal.len() != ny {
            return Err(config_err("utility.target.position_diag", format!("expected {ny} entries")));
        }
        return from_position(model, &goal, json!({"kind": "position_diag"}));
    }
    if let Some(r) = t.get("reference_R") {
        let r = psd_matrix(r, "utility.target.reference_R", ny)?;
        let scale = number(field(t, "utility.target", "scale")?, "utility.target.scale")?;
        let sd = scaled_steady_state_target(model, &r, scale).map_err(|e| CliError::from_core("utility target", e))?;
        return Ok((sd, json!({"kind": "scaled_steady_state", "scale": scale, "reference_R": to_value(&r)})));
    }
    Err(config_err(
        "utility.target",
        "expected one of sigma_d, position_scale, position_diag, reference_R",
    ))
}

fn from_position(model: &SystemModel<f64>, goal: &[f64], mut meta: Value) -> CliResult<(SymMat<f64>, Value)> {
    let c = utility_target_from_position(model, goal).map_err(|e| CliError::from_core("utility target", e))?;
    meta["position_target"] = to_value(&goal);
    meta["noise_level"] = json!(c.r);
    Ok((c.sigma, meta))
}

fn cmd_utility(cfg: &Config, trace: &mut Trace) -> CliResult<Outcome> {
    let block = cfg.block("utility")?;
    let model = &cfg.model;
    let (sigma_d, target_meta) = utility_target(cfg, block)?;
    let spec = UtilitySpec {
        model: model.clone(),
        sigma_d: sigma_d.clone(),
        w: weight(block, "utility", model.ny())?,
    };
    let design = design_utility_with(&spec, &SdpOptions::default(), trace.sink())
        .map_err(|e| CliError::from_core("utility design", e))?;
    let mut warnings = check_assumptions(model).map(|a| a.warnings()).unwrap_or_default();
    if design.certificate.near_boundary {
        warnings.push("target sits on the boundary of the achievable set; solved a slightly relaxed LMI".into());
    }
    if design.precision_floor_applied {
        warnings.push("optimal precision is singular; its inverse used an eigenvalue floor".into());
    }
    let report = json!({
        "command": "utility",
        "target": target_meta,
        "sigma_d": to_value(&sigma_d),
        "upsilon": to_value(&design.upsilon),
        "R_opt": to_value(&design.r_opt),
        "achieved_sigma_inf": to_value(&design.achieved_sigma_inf),
        "objective": design.objective,
        "precision_floor_applied": design.precision_floor_applied,
        "certificate": to_value(&design.certificate),
        "trace": trace.path.as_ref().map(|p| p.display().to_string()),
        "warnings": to_value(&warnings),
    });
    let summary = vec![
        format!("upsilon diag: {}", join_sig9(&design.upsilon.diagonal())),
        format!("R* diag: {}", join_sig9(&design.r_opt.diagonal())),
        format!("objective: {}", fmt_sig9(design.objective)),
    ];
    Ok(Outcome {
        report,
        csv: None,
        summary,
        warnings,
    })
}

fn join_sig9(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_sig9(x)).collect::<Vec<_>>().join(", ")
}

fn privacy_prior(cfg: &Config, block: &Value) -> CliResult<(SymMat<f64>, Value)> {
    let model = &cfg.model;
    let v = field(block, "privacy", "sigma_prior")?;
    if v.is_array() {
        return Ok((psd_matrix(v, "privacy.sigma_prior", model.nx())?, json!("given")));
    }
    let kind = field(v, "privacy.sigma_prior", "use")?
        .as_str()
        .ok_or_else(|| config_err("privacy.sigma_prior.use", "expected a string"))?;
    match kind {
        "noiseless_steady_state" => Ok((
            theoretical_bound(model).map_err(|e| CliError::from_core("noiseless steady state", e))?,
            json!("noiseless_steady_state"),
        )),
        "steady_state" => {
            let r = psd_matrix(field(v, "privacy.sigma_prior", "R")?, "privacy.sigma_prior.R", model.ny())?;
            let d = solve_dare(model, &r, &DareOptions::default()).map_err(|e| CliError::from_core("steady state", e))?;
            if !d.converged {
                return Err(CliError::Numerical("steady-state prior did not converge".into()));
            }
            Ok((d.sigma_inf, json!({"steady_state_R": to_value(&r)})))
        }
        other => Err(config_err(
            "privacy.sigma_prior.use",
            format!("unknown value {other:?} (expected noiseless_steady_state or steady_state)"),
        )),
    }
}

fn cmd_privacy(cfg: &Config, trace: &mut Trace) -> CliResult<Outcome> {
    let block = cfg.block("privacy")?;
    let model = &cfg.model;
    let (nx, ny) = (model.nx(), model.ny());
    let (prior, prior_meta) = privacy_prior(cfg, block)?;
    let r_s = match block.get("R_s") {
        Some(v) => psd_matrix(v, "privacy.R_s", ny)?,
        None => SymMat::zeros(ny),
    };
    let floor_v = field(block, "privacy", "sigma_d_next")?;
    let (floor, floor_meta) = if floor_v.is_array() {
        (psd_matrix(floor_v, "privacy.sigma_d_next", nx)?, json!("given"))
    } else {
        let diag = vector(
            field(floor_v, "privacy.sigma_d_next", "position_diag")?,
            "privacy.sigma_d_next.position_diag",
        )?;
        if diag.len() != ny {
            return Err(config_err("privacy.sigma_d_next.position_diag", format!("expected {ny} entries")));
        }
        let c = privacy_floor_from_position(model, &prior, &r_s, &diag)
            .map_err(|e| CliError::from_core("privacy floor", e))?;
        (c.sigma, json!({"position_diag": diag, "noise_level": c.r}))
    };
    let spec = PrivacySpec {
        model: model.clone(),
        sigma_prior: prior.clone(),
        r_s,
        sigma_d_next: floor.clone(),
        w: weight(block, "privacy", ny)?,
    };
    let design = design_privacy_with(&spec, &SdpOptions::default(), trace.sink())
        .map_err(|e| CliError::from_core("privacy design", e))?;
    let mut warnings = Vec::new();
    if design.certificate.near_boundary {
        warnings.push("floor sits on the boundary of the achievable set; solved a slightly relaxed LMI".into());
    }
    let mut report = json!({
        "command": "privacy",
        "sigma_prior": {"source": prior_meta, "value": to_value(&prior)},
        "sigma_d_next": {"source": floor_meta, "value": to_value(&floor)},
        "R_p": to_value(&design.r_p),
        "achieved_sigma_next": to_value(&design.achieved_sigma_next),
        "implied_posterior": to_value(&design.implied_posterior),
        "objective": design.objective,
        "certificate": to_value(&design.certificate),
        "trace": trace.path.as_ref().map(|p| p.display().to_string()),
    });
    let mut summary = vec![
        format!("R_p diag: {}", join_sig9(&design.r_p.diagonal())),
        format!("objective: {}", fmt_sig9(design.objective)),
    ];
    if let Some(w) = block.get("witness_R_p") {
        let cand = sym_matrix(w, "privacy.witness_R_p", ny)?;
        let g = privacy_lmi_data(&spec)
            .map_err(|e| CliError::from_core("privacy LMI", e))?
            .constraint_at(&cand);
        let lmi_min = g.min_eigenvalue().map_err(|e| CliError::from_core("witness check", e))?;
        let cand_min = cand.min_eigenvalue().map_err(|e| CliError::from_core("witness check", e))?;
        let feasible = lmi_min >= -1e-6 && cand_min >= -1e-9;
        summary.push(format!("witness R_p feasible: {feasible} (LMI min eigenvalue {})", fmt_sig9(lmi_min)));
        if !feasible {
            warnings.push("witness R_p violates the privacy LMI".into());
        }
        report["witness"] = json!({"R_p": to_value(&cand), "feasible": feasible, "lmi_min_eigenvalue": lmi_min});
    }
    report["warnings"] = to_value(&warnings);
    Ok(Outcome {
        report,
        csv: None,
        summary,
        warnings,
    })
}

fn pixel_model_from(cfg: &Config, frames: usize) -> CliResult<PixelModel<f64>> {
    let m = &cfg.model;
    if m.f() != &constant_velocity::<f64>() {
        return Err(config_err("model.F", "simulate requires the 4-state constant-velocity model"));
    }
    if m.h() != &position_selector::<f64>() {
        return Err(config_err("model.H", "simulate requires the position-selector measurement matrix"));
    }
    let (n_r, n_c) = cfg.homography.unwrap_or((DEFAULT_ROWS, DEFAULT_COLS));
    Ok(PixelModel {
        n_r,
        n_c,
        frames,
        q: m.q().clone(),
    })
}

/// Mean of a per-frame series over the last four fifths of the horizon.
fn steady_mean(xs: &[f64]) -> f64 {
    let tail = &xs[xs.len() / 5..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn cmd_simulate(cfg: &Config, seed_override: Option<u64>) -> CliResult<Outcome> {
    let block = cfg.block("simulate")?;
    let frames = match block.get("frames") {
        Some(v) => count(v, "simulate.frames")?,
        None => DEFAULT_FRAMES,
    };
    if frames == 0 {
        return Err(config_err("simulate.frames", "must be positive"));
    }
    let model = pixel_model_from(cfg, frames)?;
    let r = psd_matrix(field(block, "simulate", "R")?, "simulate.R", 2)?;
    let runs = count(field(block, "simulate", "runs")?, "simulate.runs")?;
    if runs == 0 {
        return Err(config_err("simulate.runs", "must be positive"));
    }
    let seed = match (seed_override, block.get("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => v.as_u64().ok_or_else(|| config_err("simulate.seed", "expected a non-negative integer"))?,
        (None, None) => 0,
    };
    let init = match block.get("init") {
        None => model.default_belief(),
        Some(v) => {
            let mu0 = vector(field(v, "simulate.init", "mu0")?, "simulate.init.mu0")?;
            if mu0.len() != 4 {
                return Err(config_err("simulate.init.mu0", "expected 4 entries"));
            }
            let sigma0 = psd_matrix(field(v, "simulate.init", "sigma0")?, "simulate.init.sigma0", 4)?;
            InitialBelief::new(mu0, sigma0).map_err(|e| config_err("simulate.init", e))?
        }
    };
    let flag = |key: &str| -> CliResult<bool> {
        match block.get(key) {
            None => Ok(false),
            Some(v) => v.as_bool().ok_or_else(|| config_err(&join("simulate", key), "expected a boolean")),
        }
    };
    let mut mc = McConfig::new(runs, seed);
    mc.trajectory = TrajectoryOptions {
        reflect: flag("reflect")?,
        waypoints: flag("waypoint_mode")?,
    };
    if let Some(p) = block.get("privacy") {
        let frame = count(field(p, "simulate.privacy", "frame")?, "simulate.privacy.frame")?;
        if frame >= frames {
            return Err(config_err("simulate.privacy.frame", "must be inside the horizon"));
        }
        let r_p = psd_matrix(field(p, "simulate.privacy", "R_p")?, "simulate.privacy.R_p", 2)?;
        mc.injection = Some(PrivacyInjection { frame, r_p });
    }
    let rep = monte_carlo(&model, &r, &init, &mc).map_err(|e| CliError::from_core("monte carlo", e))?;
    let csv = mc_csv(&rep);
    let summary = vec![
        format!("runs: {runs}, frames: {frames}, seed: {seed}"),
        format!("steady-state rmse: {}", fmt_sig9(steady_mean(&rep.rmse_per_frame))),
        format!("steady-state mean NEES: {}", fmt_sig9(steady_mean(&rep.mean_nees_per_frame))),
    ];
    let report = json!({
        "command": "simulate",
        "R": to_value(&r),
        "waypoint_mode": mc.trajectory.waypoints,
        "reflect": mc.trajectory.reflect,
        "steady_state": {
            "rmse": steady_mean(&rep.rmse_per_frame),
            "mean_nees": steady_mean(&rep.mean_nees_per_frame),
        },
        "mc": to_value(&rep),
    });
    Ok(Outcome {
        report,
        csv: Some(csv),
        summary,
        warnings: Vec::new(),
    })
}

/// One row per frame: frame, rmse, empirical and filter position covariance entries.
pub fn mc_csv(rep: &McReport<f64>) -> String {
    let mut out = String::from("frame,rmse,emp_cov_11,emp_cov_12,emp_cov_22,filt_cov_11,filt_cov_12,filt_cov_22\n");
    for k in 0..rep.frames {
        let e = &rep.mean_emp_cov_per_frame[k];
        let f = &rep.filter_cov_per_frame[k];
        let cells = [
            rep.rmse_per_frame[k],
            e[(0, 0)],
            e[(0, 1)],
            e[(1, 1)],
            f[(0, 0)],
            f[(0, 1)],
            f[(1, 1)],
        ];
        let _ = write!(out, "{k}");
        for c in cells {
            let _ = write!(out, ",{}", fmt_sig9(c));
        }
        out.push('\n');
    }
    out
}

/// Runs one subcommand against an already parsed config.
///
/// `trace`: `None` disables the solver log, `Some(None)` writes it to
/// `<out>/sdp_trace.log`, `Some(Some(path))` to `path`.
pub fn execute(
    command: Command,
    cfg: &Config,
    out: &Path,
    trace: Option<Option<&Path>>,
    seed: Option<u64>,
) -> CliResult<Outcome> {
    let mut tr = Trace { file: None, path: None };
    if let Some(p) = trace {
        let path = p.map_or_else(|| out.join("sdp_trace.log"), Path::to_path_buf);
        let f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        tr = Trace {
            file: Some(f),
            path: Some(path),
        };
    }
    let mut outcome = match command {
        Command::Bound => cmd_bound(cfg),
        Command::Utility => cmd_utility(cfg, &mut tr),
        Command::Privacy => cmd_privacy(cfg, &mut tr),
        Command::Simulate => cmd_simulate(cfg, seed),
    }?;
    outcome.report = round_value(outcome.report);
    Ok(outcome)
}

fn write_outputs(out: &Path, outcome: &Outcome) -> CliResult<()> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    let report_path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&outcome.report).expect("JSON value serializes");
    text.push('\n');
    fs::write(&report_path, text).map_err(|e| io(&report_path, e))?;
    if let Some(csv) = &outcome.csv {
        let p = out.join("mc.csv");
        fs::write(&p, csv).map_err(|e| io(&p, e))?;
    }
    Ok(())
}

/// Full CLI flow; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match run_inner(&cli) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for line in &outcome.summary {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("covdesign {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn run_inner(cli: &Cli) -> CliResult<Outcome> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <file.json> is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = Config::parse(&text)?;
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let outcome = execute(cli.command, &cfg, &cli.out, cli.trace.as_ref().map(|t| t.as_deref()), cli.seed)?;
    write_outputs(&cli.out, &outcome)?;
    Ok(outcome)
}

/// The pixel-plane configuration used throughout the examples.
pub fn example_config() -> Value {
    let mut m = Map::new();
    m.insert(
        "model".into(),
        json!({
            "F": [[1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]],
            "H": [[1, 0, 0, 0], [0, 1, 0, 0]],
            "Q": [[0.1, 0, 0, 0], [0, 0.1, 0, 0], [0, 0, 50, 0], [0, 0, 0, 50]],
        }),
    );
    m.insert("homography".into(), json!({"n_r": DEFAULT_ROWS, "n_c": DEFAULT_COLS}));
    m.insert(
        "utility".into(),
        json!({"target": {"position_scale": 1.5}, "W": [[1, 0], [0, 1]]}),
    );
    m.insert(
        "privacy".into(),
        json!({
            "sigma_prior": {"use": "noiseless_steady_state"},
            "R_s": [[0, 0], [0, 0]],
            "sigma_d_next": {"position_diag": [54.891, 54.891]},
            "W": [[1, 0], [0, 1]],
            "witness_R_p": [[1, 0], [0, 1]],
        }),
    );
    m.insert(
        "simulate".into(),
        json!({"R": [[1.515, 0], [0, 1.515]], "runs": 500, "seed": 42, "frames": 500, "waypoint_mode": false}),
    );
    Value::Object(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_rounding() {
        assert_eq!(fmt_sig9(54.89182888123), "54.8918289");
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(2.70321e-3), "0.00270321");
        assert_eq!(round_sig9(1.0 / 3.0), 0.333333333);
    }

    #[test]
    fn missing_h_names_the_field() {
        let mut c = example_config();
        c["model"].as_object_mut().unwrap().remove("H");
        let err = Config::parse(&c.to_string()).err().unwrap();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.to_string().contains("model.H"), "{err}");
    }

    #[test]
    fn bad_shapes_are_config_errors() {
        let mut c = example_config();
        c["model"]["Q"] = json!([[1, 0], [0, 1]]);
        let err = Config::parse(&c.to_string()).err().unwrap();
        assert!(err.to_string().contains("model.Q"));
        let mut c = example_config();
        c["model"]["Q"] = json!([[-1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]);
        assert!(Config::parse(&c.to_string()).err().unwrap().to_string().contains("positive semidefinite"));
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        assert_eq!(CliError::from_core("x", Error::Infeasible("a".into())).exit_code(), EXIT_INFEASIBLE);
        assert_eq!(CliError::from_core("x", Error::Numerical("a".into())).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::from_core("x", Error::InvalidInput("a".into())).exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn rounded_report_round_trips() {
        let v = round_value(json!({"a": [1.0 / 3.0, 2.0], "b": {"c": std::f64::consts::PI}}));
        let text = serde_json::to_string(&v).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }
}
