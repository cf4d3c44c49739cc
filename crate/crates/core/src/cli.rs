//! The `fldisc` command-line front end.
//!
//! ```text
//! fldisc simulate --preset unicycle --map explicit-euler --lifted --h 0.01 --T 10 --out run
//! fldisc check fl-discrete --preset unicycle --map explicit-euler
//! fldisc order --preset unicycle --lifted --hs 0.1,0.05,0.025,0.0125
//! ```
//!
//! Exit codes: 0 on success or when a verdict is delivered, 1 on usage
//! errors, 2 on runtime failures, failed checks and inconclusive audits.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::geometry::{check_map_axioms, lift_map, make_builtin_map, MapKind, MapRef};
use crate::integrator::{
    fmt_num, linearity_residual, order_estimate, run_with_reference, steps_for, Controller,
    DiscreteScheme, ReferenceKind, Trajectory,
};
use crate::linalg::euclid;
use crate::linearizability::{grizzle_audit, static_fl_check, DiscreteMapModel, Verdict};
use crate::presets::{preset_by_name, stabilizing_controller, ScenarioPreset};
use crate::systems::{verify_linearization, ExtendedSystem};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "fldisc",
    version,
    about = "Feedback-linearizable discretizations of dynamically linearizable systems",
    allow_negative_numbers = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-loop simulation with error against a fine reference solution.
    Simulate(ScenarioArgs),
    /// Run one of the checks.
    Check {
        #[arg(value_enum)]
        what: CheckKind,
        #[command(flatten)]
        args: ScenarioArgs,
    },
    /// Convergence order over a list of step sizes.
    Order {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',')]
        hs: Option<Vec<f64>>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CheckKind {
    MapAxioms,
    Linearization,
    FlDiscrete,
    FlContinuous,
    LinearityResidual,
}

#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// explicit-euler, implicit-euler or midpoint.
    #[arg(long)]
    map: Option<String>,
    /// Apply the map in linearizing coordinates.
    #[arg(long)]
    lifted: bool,
    #[arg(long)]
    h: Option<f64>,
    /// Horizon in seconds.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Gain rows, e.g. `10,10,10,0,0;0,0,0,10,10`.
    #[arg(long)]
    gains: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Error reference: closed-loop (default) or sampled.
    #[arg(long)]
    reference: Option<String>,
}

/// Resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub preset: String,
    pub map: MapKind,
    pub lifted: bool,
    pub h: Option<f64>,
    pub horizon: Option<f64>,
    pub gains: Option<DMatrix<f64>>,
    pub seed: u64,
    pub out: PathBuf,
    pub hs: Option<Vec<f64>>,
    pub reference: ReferenceKind,
}

struct Usage(String);

impl From<Error> for Usage {
    fn from(e: Error) -> Self {
        Usage(e.to_string())
    }
}

fn parse_config_file(path: &Path) -> std::result::Result<BTreeMap<String, String>, Usage> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Usage(format!("{}:{}: expected key = value", path.display(), lineno + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, Usage> {
    v.parse()
        .map_err(|_| Usage(format!("invalid value `{v}` for `{key}`")))
}

fn parse_gains(s: &str) -> std::result::Result<DMatrix<f64>, Usage> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| row.split(',').map(|v| parse_num("gains", v.trim())).collect())
        .collect::<std::result::Result<_, _>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Usage("gain rows must be non-empty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn resolve(args: &ScenarioArgs, hs: Option<Vec<f64>>) -> std::result::Result<ScenarioConfig, Usage> {
    let file = match &args.config {
        Some(p) => parse_config_file(p)?,
        None => BTreeMap::new(),
    };
    const KEYS: [&str; 10] = [
        "preset", "map", "lifted", "h", "T", "gains", "seed", "out", "hs", "reference",
    ];
    if let Some(k) = file.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(Usage(format!("unknown config key `{k}`")));
    }
    let get = |k: &str| file.get(k).map(String::as_str);
    let preset = args
        .preset
        .clone()
        .or_else(|| get("preset").map(str::to_string))
        .unwrap_or_else(|| "unicycle".into());
    let map_name = args
        .map
        .clone()
        .or_else(|| get("map").map(str::to_string))
        .unwrap_or_else(|| "explicit-euler".into());
    let map: MapKind = map_name.parse()?;
    if !map.is_builtin() {
        return Err(Usage(format!(
            "map must be explicit-euler, implicit-euler or midpoint, got `{map_name}`"
        )));
    }
    let lifted = args.lifted
        || match get("lifted") {
            Some(v) => parse_num::<bool>("lifted", v)?,
            None => false,
        };
    let h = match (args.h, get("h")) {
        (Some(h), _) => Some(h),
        (None, Some(v)) => Some(parse_num("h", v)?),
        _ => None,
    };
    if let Some(h) = h {
        if !(h.is_finite() && h > 0.0) {
            return Err(Usage(format!("--h must be positive, got {h}")));
        }
    }
    let horizon = match (args.horizon, get("T")) {
        (Some(t), _) => Some(t),
        (None, Some(v)) => Some(parse_num("T", v)?),
        _ => None,
    };
    if let Some(t) = horizon {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Usage(format!("--T must be non-negative, got {t}")));
        }
    }
    let gains = match (&args.gains, get("gains")) {
        (Some(g), _) => Some(parse_gains(g)?),
        (None, Some(g)) => Some(parse_gains(g)?),
        _ => None,
    };
    let seed = match (args.seed, get("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => parse_num("seed", v)?,
        _ => 0,
    };
    let out = args
        .out
        .clone()
        .or_else(|| get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fldisc"));
    let hs = match (hs, get("hs")) {
        (Some(hs), _) => Some(hs),
        (None, Some(v)) => Some(
            v.split(',')
                .map(|s| parse_num("hs", s.trim()))
                .collect::<std::result::Result<_, _>>()?,
        ),
        _ => None,
    };
    let reference = match (&args.reference, get("reference")) {
        (Some(r), _) => r.parse()?,
        (None, Some(r)) => r.parse()?,
        _ => ReferenceKind::default(),
    };
    Ok(ScenarioConfig {
        reference,
        preset,
        map,
        lifted,
        h,
        horizon,
        gains,
        seed,
        out,
        hs,
    })
}

/// Everything a command needs, built from a [`ScenarioConfig`].
struct Scenario {
    config: ScenarioConfig,
    preset: ScenarioPreset,
    gains: DMatrix<f64>,
    h: f64,
    horizon: f64,
}

impl Scenario {
    fn new(config: ScenarioConfig) -> std::result::Result<Self, Usage> {
        let preset = preset_by_name(&config.preset)?;
        let gains = config.gains.clone().unwrap_or_else(|| preset.gains.clone());
        let (m, d) = (preset.extended.m(), preset.extended.dim());
        if gains.nrows() != m || gains.ncols() != d {
            return Err(Usage(format!(
                "gains must be {m}×{d} for preset `{}`, got {}×{}",
                preset.name,
                gains.nrows(),
                gains.ncols()
            )));
        }
        Ok(Self {
            h: config.h.unwrap_or(preset.h),
            horizon: config.horizon.unwrap_or(preset.horizon),
            config,
            preset,
            gains,
        })
    }

    fn ext(&self) -> &ExtendedSystem {
        &self.preset.extended
    }

    fn base_map(&self) -> Result<MapRef> {
        make_builtin_map(self.config.map, self.ext().dim())
    }

    fn scheme(&self, h: f64) -> Result<DiscreteScheme> {
        let base = self.base_map()?;
        if self.config.lifted {
            DiscreteScheme::lifted(base, self.ext().clone(), self.preset.lin.clone(), h)
        } else {
            DiscreteScheme::implicit(base, self.ext().clone(), h)
        }
    }

    fn describe(&self) -> String {
        format!(
            "preset {}, map {}{}",
            self.preset.name,
            self.config.map,
            if self.config.lifted { " (lifted)" } else { "" }
        )
    }

    fn path(&self, suffix: &str) -> PathBuf {
        let mut s = self.config.out.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Runs the CLI on `args` (including the program name).
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let (args, hs) = match &cli.command {
        Command::Simulate(a) | Command::Check { args: a, .. } => (a, None),
        Command::Order { args, hs } => (args, hs.clone()),
    };
    let scenario = match resolve(args, hs).and_then(Scenario::new) {
        Ok(s) => s,
        Err(Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Simulate(_) => cmd_simulate(&scenario, out, err),
        Command::Check { what, .. } => cmd_check(&scenario, what, out, err),
        Command::Order { .. } => cmd_order(&scenario, out, err),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let _ = writeln!(err, "  caused by: {s}");
                source = s.source();
            }
            EXIT_RUNTIME
        }
    }
}

/// Entry point used by the binary.
pub fn main_with_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Stabilizing controller that also records each `v_k`.
struct Recording {
    inner: crate::presets::StabilizingController,
    vs: Vec<Vec<f64>>,
}

impl Controller for Recording {
    fn control(&mut self, k: usize, xi: &[f64]) -> Result<Vec<f64>> {
        let mu = self.inner.control(k, xi)?;
        self.vs.push(self.inner.last_v().expect("set by control").to_vec());
        Ok(mu)
    }

    fn law(&self, xi: &[f64]) -> Option<Result<Vec<f64>>> {
        self.inner.law(xi)
    }
}

fn controls_csv(traj: &Trajectory, vs: &[Vec<f64>]) -> String {
    let m = traj.controls.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for i in 1..=m {
        let _ = write!(s, ",mu_{i}");
    }
    for i in 1..=m {
        let _ = write!(s, ",v_{i}");
    }
    s.push('\n');
    for (k, mu) in traj.controls.iter().enumerate() {
        s.push_str(&fmt_num(traj.t[k]));
        for v in mu.iter().chain(vs.get(k).into_iter().flatten()) {
            s.push(',');
            s.push_str(&fmt_num(*v));
        }
        s.push('\n');
    }
    s
}

fn cmd_simulate(sc: &Scenario, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let scheme = sc.scheme(sc.h)?;
    let steps = steps_for(sc.horizon, sc.h)?;
    let mut ctrl = Recording {
        inner: stabilizing_controller(&sc.preset, Some(&sc.gains))?,
        vs: Vec::new(),
    };
    let xi0 = sc.preset.xi0.clone();
    let run = match run_with_reference(&scheme, &mut ctrl, &xi0, steps, sc.config.reference) {
        Ok(run) => run,
        Err(Error::StepFailed { k, source, partial }) => {
            let path = sc.path(".traj.csv");
            write_atomic(&path, partial.to_csv().as_bytes())?;
            let _ = writeln!(err, "step {k} failed: {source}");
            let _ = writeln!(err, "partial trajectory written to {}", path.display());
            return Ok(EXIT_RUNTIME);
        }
        Err(e) => return Err(e.into()),
    };
    write_atomic(&sc.path(".traj.csv"), run.trajectory.to_csv().as_bytes())?;
    write_atomic(
        &sc.path(".ctrl.csv"),
        controls_csv(&run.trajectory, &ctrl.vs).as_bytes(),
    )?;
    let mut errs = String::from("t,error\n");
    for (t, e) in run.trajectory.t.iter().zip(&run.errors) {
        let _ = writeln!(errs, "{},{}", fmt_num(*t), fmt_num(*e));
    }
    write_atomic(&sc.path(".err.csv"), errs.as_bytes())?;
    let initial = euclid(&xi0);
    let last = euclid(run.trajectory.final_state());
    let mut report = String::new();
    let _ = writeln!(report, "scenario: {}", sc.describe());
    let _ = writeln!(report, "h: {}", sc.h);
    let _ = writeln!(report, "T: {}", sc.horizon);
    let _ = writeln!(report, "steps: {steps}");
    let _ = writeln!(report, "reference: {}", sc.config.reference);
    let _ = writeln!(report, "max global error: {:e}", run.max_error());
    let _ = writeln!(report, "initial state norm: {initial:e}");
    let _ = writeln!(report, "final state norm: {last:e}");
    let _ = writeln!(report, "final/initial norm ratio: {:e}", last / initial);
    write_atomic(&sc.path(".report.txt"), report.as_bytes())?;
    let _ = write!(out, "{report}");
    Ok(EXIT_OK)
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_check(sc: &Scenario, what: CheckKind, out: &mut dyn Write, _err: &mut dyn Write) -> CmdResult {
    let d = sc.ext().dim();
    match what {
        CheckKind::MapAxioms => {
            let base = sc.base_map()?;
            let map = if sc.config.lifted {
                lift_map(base, sc.preset.lin.diffeo().inverse())?
            } else {
                base
            };
            let points = sc.preset.chart_points(sc.config.seed, 100)?;
            let r = check_map_axioms(&*map, &points);
            let _ = writeln!(
                out,
                "{}: map axioms for {} on ℝ^{d} at {} points",
                pass_fail(r.passed),
                sc.describe(),
                r.points
            );
            let _ = writeln!(out, "  D(x,0) = (x,x): worst deviation {:e}", r.zero_defect);
            let _ = writeln!(
                out,
                "  ∂D²/∂v − ∂D¹/∂v = I: worst deviation {:e}",
                r.derivative_defect
            );
            if let (false, Some(p)) = (r.passed, r.derivative_worst_at.as_ref().or(r.zero_worst_at.as_ref())) {
                let _ = writeln!(out, "  witness: {p:?}");
            }
            Ok(if r.passed { EXIT_OK } else { EXIT_RUNTIME })
        }
        CheckKind::Linearization => {
            let points = sc.preset.chart_points(sc.config.seed, 100)?;
            let r = verify_linearization(sc.ext(), &sc.preset.lin, &points)?;
            let _ = writeln!(
                out,
                "{}: linearization identities for preset {} at {} points",
                pass_fail(r.passed),
                sc.preset.name,
                r.points
            );
            let _ = writeln!(out, "  DΦ(F + Gα̃) − AΦ: {:e}", r.drift_residual);
            let _ = writeln!(out, "  DΦ·G·β̃ − B: {:e}", r.input_residual);
            Ok(if r.passed { EXIT_OK } else { EXIT_RUNTIME })
        }
        CheckKind::FlDiscrete => {
            let scheme = sc.scheme(sc.h)?;
            let model = DiscreteMapModel::from_scheme(&scheme)?;
            let points = model.sample_points(sc.config.seed, crate::sampling::DEFAULT_POINTS)?;
            let report = grizzle_audit(&model, &points)?;
            write_atomic(&sc.path(".audit.txt"), report.to_text().as_bytes())?;
            write_atomic(&sc.path(".audit.json"), report.to_json().as_bytes())?;
            let _ = write!(out, "{}", report.to_text());
            match report.verdict {
                Verdict::NotLinearizable => {
                    let _ = writeln!(
                        out,
                        "FAIL: not linearizable (stage {})",
                        report.failing_stage.as_deref().unwrap_or("?")
                    );
                    Ok(EXIT_OK)
                }
                Verdict::Inconclusive => {
                    let _ = writeln!(out, "INCONCLUSIVE: rank changes across sample points");
                    Ok(EXIT_RUNTIME)
                }
                v => {
                    let _ = writeln!(out, "PASS: {v}");
                    Ok(EXIT_OK)
                }
            }
        }
        CheckKind::FlContinuous => {
            let mut code = EXIT_OK;
            let targets = [
                ("system", sc.preset.system.clone()),
                ("extended system", sc.ext().as_control_affine().clone()),
            ];
            for (name, sys) in targets {
                let points = crate::sampling::sample_chart(
                    sc.config.seed,
                    crate::sampling::DEFAULT_POINTS,
                    sys.n(),
                    &chart_for(sc, sys.n()),
                )?;
                let r = static_fl_check(&sys, &points)?;
                let stage = r
                    .failing_stage
                    .as_deref()
                    .map(|s| format!(" (stage {s})"))
                    .unwrap_or_default();
                let _ = writeln!(out, "{name} (n = {}): {}{stage}", sys.n(), r.verdict);
                for s in &r.stages {
                    let _ = writeln!(
                        out,
                        "  {}: ranks {:?}, involutive {}",
                        s.stage,
                        dedup(&s.ranks),
                        s.involutive.map_or("-".into(), |b| b.to_string())
                    );
                    if let Some(w) = &s.witness {
                        let _ = writeln!(
                            out,
                            "    witness: [{}, {}] raises rank {} -> {} at {:?}",
                            w.labels.0, w.labels.1, w.rank_before, w.rank_after, w.point
                        );
                    }
                }
                if r.verdict == Verdict::Inconclusive {
                    code = EXIT_RUNTIME;
                }
            }
            Ok(code)
        }
        CheckKind::LinearityResidual => {
            let scheme = sc.scheme(sc.h)?;
            let ctrl = stabilizing_controller(&sc.preset, Some(&sc.gains))?;
            let steps = steps_for(sc.horizon, sc.h)?;
            let mut v_of = |_k: usize, z: &[f64]| Ok(ctrl.new_control(z));
            let r = linearity_residual(&scheme, &sc.preset.lin, &mut v_of, &sc.preset.xi0, steps)?;
            let _ = writeln!(
                out,
                "{}: max ‖Φ(ξ_{{k+1}}) − A_h Φ(ξ_k) − B_h v_k‖ = {:e} over {} steps ({})",
                pass_fail(r.passed),
                r.max_residual,
                r.steps,
                sc.describe()
            );
            if let (false, Some(k)) = (r.passed, r.worst_step) {
                let _ = writeln!(out, "  worst step: {k}");
            }
            Ok(if r.passed { EXIT_OK } else { EXIT_RUNTIME })
        }
    }
}

fn dedup(ranks: &[usize]) -> Vec<usize> {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r
}

/// The preset chart on its extended state space; everything on the base.
fn chart_for(sc: &Scenario, n: usize) -> crate::geometry::ChartGuard {
    if n == sc.ext().dim() {
        sc.preset.lin.guard().clone()
    } else {
        sc.preset.system.guard().clone()
    }
}

pub const DEFAULT_HS: [f64; 4] = [1e-1, 5e-2, 2.5e-2, 1.25e-2];

fn cmd_order(sc: &Scenario, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let hs = sc.config.hs.clone().unwrap_or_else(|| DEFAULT_HS.to_vec());
    if hs.len() < crate::integrator::MIN_ORDER_POINTS {
        return Err(Failure::Usage(format!(
            "--hs needs at least {} step sizes, got {}",
            crate::integrator::MIN_ORDER_POINTS,
            hs.len()
        )));
    }
    if let Some(h) = hs.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(Failure::Usage(format!("step sizes must be positive, got {h}")));
    }
    let gains = sc.gains.clone();
    let fit = order_estimate(
        &hs,
        sc.horizon,
        &sc.preset.xi0,
        sc.config.reference,
        |h| sc.scheme(h),
        |_| {
            Box::new(
                crate::presets::StabilizingController::new(sc.preset.lin.clone(), gains.clone())
                    .expect("gains validated"),
            )
        },
    )?;
    if !fit.geometric {
        let _ = writeln!(err, "warning: step sizes are not geometric; fitting by least squares anyway");
    }
    let mut table = String::from("h,max_error,log_h,log_error\n");
    for (h, e) in fit.hs.iter().zip(&fit.errors) {
        let _ = writeln!(
            table,
            "{},{},{},{}",
            fmt_num(*h),
            fmt_num(*e),
            fmt_num(h.ln()),
            fmt_num(e.ln())
        );
    }
    write_atomic(&sc.path(".order.csv"), table.as_bytes())?;
    let ok = fit.first_order();
    let _ = write!(out, "{table}");
    let _ = writeln!(
        out,
        "slope: {:.6}{}",
        fit.slope,
        if fit.degenerate { " (degenerate fit)" } else { "" }
    );
    let _ = writeln!(
        out,
        "{}: convergence order of {} (expected within [0.8, 1.2])",
        pass_fail(ok),
        sc.describe()
    );
    Ok(if ok { EXIT_OK } else { EXIT_RUNTIME })
}
