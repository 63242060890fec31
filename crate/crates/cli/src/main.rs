use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bathsep::entanglement::{entropy_bound, entropy_of, reduce_vector};
use bathsep::hilbert::{diagonalize, ManyBodyOperator};
use bathsep::io::{load_model, read_json, write_atomic, BathSpec, SweepConfig};
use bathsep::projection::{project, BathState, ProjectionBlocks};
use bathsep::renorm::{kernel_build, kernel_quadratic_form, solve_all, spectral_bounds, trace_curves};
use bathsep::siam::{greens_time, siam_report, spectral_function};
use bathsep::sweep::{self, bath_phi_sweep, fmt_num, heatmap, max_separability, ScanResolution};
use bathsep::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "bathsep", version, about = "Bath-projected renormalized Hamiltonians and eigenstate separability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues of the universe Hamiltonian.
    Spectrum(Common),
    /// Interaction curves ω_R(ω) of the renormalized Hamiltonian.
    Curves {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        proj: Projection,
        #[arg(long, allow_negative_numbers = true)]
        omega_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        omega_max: Option<f64>,
        #[arg(long, default_value_t = 401)]
        samples: usize,
    },
    /// Fixed points with separability, similarity, weights and entropies.
    FixedPoints {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        proj: Projection,
    },
    /// Separability of every eigenstate along a bath rotation; the JSON form
    /// adds the maximum over all rotations.
    BathSweep {
        #[command(flatten)]
        common: Common,
        /// Base bath state the rotation acts on.
        #[arg(long, default_value = "0up")]
        bath: String,
        /// Rotation axis: x, y, z or three comma-separated components.
        #[arg(long, default_value = "x")]
        axis: String,
        #[arg(long, default_value_t = 360)]
        steps: usize,
    },
    /// Maximal separability over a (J0x, V0x) grid.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Discretized resonant-level model against the Lorentzian.
    Siam(Common),
    /// Impurity Green's function in the time domain.
    Greens(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct Projection {
    /// 0up, xup, index:N or a bath-state JSON file.
    #[arg(long, default_value = "0up")]
    bath: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    epsilon: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct SiamConfig {
    #[serde(default)]
    omega_s: f64,
    #[serde(default = "default_delta0")]
    delta0: f64,
    #[serde(default = "default_bandwidth")]
    bandwidth: f64,
    #[serde(rename = "L", default = "default_modes")]
    modes: usize,
    /// Time window in units of `1/Δ0`.
    #[serde(default = "default_t_max")]
    t_max: f64,
    #[serde(default = "default_t_points")]
    t_points: usize,
}

fn default_delta0() -> f64 {
    0.5
}
fn default_bandwidth() -> f64 {
    20.0
}
fn default_modes() -> usize {
    2000
}
fn default_t_max() -> f64 {
    10.0
}
fn default_t_points() -> usize {
    1001
}

impl Common {
    fn require_config(&self) -> Result<&Path> {
        self.config.as_deref().ok_or_else(|| Error::InvalidInput("--config is required".into()))
    }

    /// Explicit flag, then the output extension, then the command default.
    fn format(&self, fallback: Format) -> Format {
        if let Some(f) = self.format {
            return f;
        }
        match self.out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            _ => fallback,
        }
    }

    fn emit(&self, text: String) -> Result<()> {
        match &self.out {
            Some(path) => write_atomic(path, text.as_bytes()),
            // a closed pipe (`| head`) is not an error
            None => match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            },
        }
    }

    fn siam_config(&self) -> Result<SiamConfig> {
        let value = match &self.config {
            Some(p) => read_json(p)?,
            None => json!({}),
        };
        serde_json::from_value(value).map_err(|e| Error::InvalidInput(format!("bad siam config: {e}")))
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn resolve_bath(spec: &str, h: &ManyBodyOperator) -> Result<BathState> {
    let dim = h.basis().bath_dim();
    match spec {
        "0up" => BathState::basis(dim, 0),
        "xup" => BathState::basis(dim, 1),
        _ => {
            if let Some(idx) = spec.strip_prefix("index:") {
                let idx = idx.parse().map_err(|_| Error::InvalidInput(format!("bad bath index in {spec:?}")))?;
                return BathState::basis(dim, idx);
            }
            let parsed: BathSpec = serde_json::from_value(read_json(Path::new(spec))?)
                .map_err(|e| Error::InvalidInput(format!("bad bath state {spec}: {e}")))?;
            parsed.resolve(dim)
        }
    }
}

fn parse_axis(s: &str) -> Result<[f64; 3]> {
    match s {
        "x" => Ok([1.0, 0.0, 0.0]),
        "y" => Ok([0.0, 1.0, 0.0]),
        "z" => Ok([0.0, 0.0, 1.0]),
        _ => {
            let parts: Vec<f64> = s
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidInput(format!("bad axis {s:?}")))?;
            <[f64; 3]>::try_from(parts).map_err(|_| Error::InvalidInput(format!("axis {s:?} needs three components")))
        }
    }
}

fn blocks_for(common: &Common, proj: &Projection) -> Result<(ManyBodyOperator, ProjectionBlocks)> {
    let h = load_model(common.require_config()?)?.operator()?;
    let bath = resolve_bath(&proj.bath, &h)?;
    let blocks = project(&h, &bath)?.with_epsilon(proj.epsilon)?;
    Ok((h, blocks))
}

fn spectrum(common: &Common) -> Result<()> {
    let es = diagonalize(&load_model(common.require_config()?)?.operator()?)?;
    if es.degenerate {
        log::warn!("spectrum is degenerate; separability results assume it is not");
    }
    let text = match common.format(Format::Json) {
        Format::Json => pretty(&es.values)?,
        Format::Csv => {
            let mut s = String::from("index,eigenvalue\n");
            for (k, v) in es.values.iter().enumerate() {
                s += &format!("{k},{}\n", fmt_num(*v));
            }
            s
        }
    };
    common.emit(text)
}

fn curves(common: &Common, proj: &Projection, lo: Option<f64>, hi: Option<f64>, samples: usize) -> Result<()> {
    let (_, blocks) = blocks_for(common, proj)?;
    let (blo, bhi) = spectral_bounds(&blocks);
    let c = trace_curves(&blocks, lo.unwrap_or(blo), hi.unwrap_or(bhi), samples)?;
    let text = match common.format(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("omega,branch,omega_R,slope_fd\n");
            for b in &c.branches {
                for k in 0..b.omega.len() {
                    s += &format!("{},{},{},{}\n", fmt_num(b.omega[k]), b.id, fmt_num(b.omega_r[k]), fmt_num(b.slope_fd[k]));
                }
            }
            s
        }
        Format::Json => pretty(&json!({
            "omega_min": c.omega_min,
            "omega_max": c.omega_max,
            "poles": c.poles,
            "excluded_windows": c.excluded_windows,
            "branches": c.branches,
        }))?,
    };
    common.emit(text)
}

fn fixed_points(common: &Common, proj: &Projection) -> Result<()> {
    let (h, blocks) = blocks_for(common, proj)?;
    let records = solve_all(&blocks)?;
    // an uncoupled or rank-deficient kernel leaves the diagnostics empty
    let kernel = match kernel_build(&blocks) {
        Ok(k) => Some(k),
        Err(e) => {
            log::warn!("coupling kernel unavailable: {e}");
            None
        }
    };
    let basis = h.basis();
    let mut rows = Vec::with_capacity(records.len());
    for fp in &records {
        let diagnostics = match kernel.as_ref().map(|k| kernel_quadratic_form(&blocks, k, fp)) {
            Some(Ok(est)) => json!({
                "kernel_estimate": est.kernel_estimate,
                "kernel_discrepancy": est.kernel_discrepancy,
            }),
            Some(Err(e)) => {
                log::warn!("kernel estimate skipped at {}: {e}", fp.omega_lambda);
                Value::Null
            }
            None => Value::Null,
        };
        let v = blocks.from_rotated(&fp.universe_vector(&blocks)?);
        let mut row = serde_json::to_value(fp)?;
        let obj = row.as_object_mut().expect("records serialize to objects");
        obj.insert("entropy_exact".into(), json!(entropy_of(&reduce_vector(&basis, &v))?));
        obj.insert("entropy_bound".into(), json!(entropy_bound(fp.separability)?));
        obj.insert("diagnostics".into(), diagnostics);
        rows.push(row);
    }
    let text = match common.format(Format::Json) {
        Format::Json => pretty(&rows)?,
        Format::Csv => {
            let cols = [
                "omega_lambda", "branch_id", "slope", "slope_fd", "Z", "z", "W", "static_partner", "omega_static",
                "residual", "entropy_exact", "entropy_bound",
            ];
            let mut s = cols.join(",") + "\n";
            for row in &rows {
                let cells: Vec<String> = cols.iter().map(|c| csv_cell(&row[*c])).collect();
                s += &(cells.join(",") + "\n");
            }
            s
        }
    };
    common.emit(text)
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => fmt_num(n.as_f64().unwrap_or(f64::NAN)),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn bath_sweep(common: &Common, bath: &str, axis: &str, steps: usize) -> Result<()> {
    let h = load_model(common.require_config()?)?.operator()?;
    let base = resolve_bath(bath, &h)?;
    let trace = bath_phi_sweep(&h, &base, parse_axis(axis)?, steps, (0, 1))?;
    let text = match common.format(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("phi");
            for k in 0..trace.z.len() {
                s += &format!(",Z_{k}");
            }
            s.push('\n');
            for (i, phi) in trace.phi.iter().enumerate() {
                s += &fmt_num(*phi);
                for z in &trace.z {
                    s += &format!(",{}", fmt_num(z[i]));
                }
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let res = ScanResolution::default();
            let best = (0..h.dim()).map(|k| max_separability(&h, k, &res)).collect::<Result<Vec<_>>>()?;
            pretty(&json!({ "trace": trace, "max_separability": best }))?
        }
    };
    common.emit(text)
}

fn run_heatmap(common: &Common, workers: Option<usize>) -> Result<()> {
    let cfg: SweepConfig = serde_json::from_value(read_json(common.require_config()?)?)
        .map_err(|e| Error::InvalidInput(format!("bad sweep config: {e}")))?;
    let result = heatmap(&cfg.model, &cfg.grid, &cfg.bath_scan, workers.or(cfg.workers))?;
    let text = match common.format(Format::Csv) {
        Format::Csv => sweep::to_csv(&result),
        Format::Json => pretty(&result)?,
    };
    common.emit(text)
}

fn siam(common: &Common) -> Result<()> {
    let cfg = common.siam_config()?;
    let report = siam_report(cfg.omega_s, cfg.bandwidth, cfg.modes, cfg.delta0)?;
    log::info!(
        "relative L2 {:.4e}, sup {:.4e}",
        report.comparison.relative_l2,
        report.comparison.relative_sup
    );
    let text = match common.format(Format::Json) {
        Format::Json => pretty(&report)?,
        Format::Csv => {
            let mut s = String::from("center,density,lorentzian\n");
            for [x, d] in &report.binned {
                s += &format!("{},{},{}\n", fmt_num(*x), fmt_num(*d), fmt_num(spectral_function(cfg.omega_s, cfg.delta0, *x)));
            }
            s
        }
    };
    common.emit(text)
}

fn greens(common: &Common) -> Result<()> {
    let cfg = common.siam_config()?;
    if cfg.t_points < 2 || !(cfg.delta0 > 0.0) || !(cfg.t_max > 0.0) {
        return Err(Error::InvalidInput("greens needs delta0 > 0, t_max > 0 and t_points >= 2".into()));
    }
    let t_end = cfg.t_max / cfg.delta0;
    let t: Vec<f64> = (0..cfg.t_points).map(|k| t_end * k as f64 / (cfg.t_points - 1) as f64).collect();
    let g = greens_time(cfg.omega_s, cfg.delta0, &t)?;
    let text = match common.format(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("t,re_G,im_G,abs_G\n");
            for (t, g) in t.iter().zip(&g) {
                s += &format!("{},{},{},{}\n", fmt_num(*t), fmt_num(g.re), fmt_num(g.im), fmt_num(g.norm()));
            }
            s
        }
        Format::Json => {
            let rows: Vec<[f64; 4]> = t.iter().zip(&g).map(|(t, g)| [*t, g.re, g.im, g.norm()]).collect();
            pretty(&json!({ "omega_s": cfg.omega_s, "delta0": cfg.delta0, "columns": ["t", "re_G", "im_G", "abs_G"], "rows": rows }))?
        }
    };
    common.emit(text)
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Spectrum(c) => spectrum(c),
        Command::Curves { common, proj, omega_min, omega_max, samples } => {
            curves(common, proj, *omega_min, *omega_max, *samples)
        }
        Command::FixedPoints { common, proj } => fixed_points(common, proj),
        Command::BathSweep { common, bath, axis, steps } => bath_sweep(common, bath, axis, *steps),
        Command::Heatmap { common, workers } => run_heatmap(common, *workers),
        Command::Siam(c) => siam(c),
        Command::Greens(c) => greens(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
