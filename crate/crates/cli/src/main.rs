//! `nabfront` command-line tool.
//!
//! Solved profiles are cached in `<workdir>/profiles_n<N>.archive`; every
//! command that needs them loads that file if present and writes it
//! otherwise.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nabfront::archive::{load_archive, save_archive};
use nabfront::asymptotics::log_grid;
use nabfront::fit::loglog_slope;
use nabfront::ode::Order;
use nabfront::pde::{run, FieldBlock, SimConfig};
use nabfront::pipeline::{exit_code, pipeline, PipelineOptions};
use nabfront::special::mu1;
use nabfront::{AsymptoticBundle, Error, ModelParams, Result};
use serde_json::{json, Value};

const SCHEMA: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "nabfront",
    version,
    about = "Reaction-front profiles, asymptotics and PDE checks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Reaction order (default 4; `simulate` takes it from the config file).
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Directory for the profile archive and pipeline state.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Relative quadrature tolerance for `inhomo` and `pipeline`.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Which {
    Eta,
    Mu2,
    Phi2,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Scale {
    Reactive,
    Diffusive,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Closed-form exponents and constants.
    Params,
    /// One solved profile at its grid nodes, plus a JSON sidecar.
    Profile {
        #[arg(value_enum)]
        which: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `v_inf(x, t)` and its parts on `[0, x_max]`.
    Assemble {
        #[arg(long)]
        t: f64,
        /// Defaults to `10 sqrt(t)`.
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Limiting reaction-front profile on the reactive or diffusive scale.
    Front {
        #[arg(long, value_enum, default_value_t = Scale::Reactive)]
        scale: Scale,
        /// Right end of the grid (default 30 reactive, 8 diffusive).
        #[arg(long)]
        max: Option<f64>,
        #[arg(long, default_value_t = 601)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// L1 norm of the inhomogeneous term at several times.
    Inhomo {
        #[arg(long, value_delimiter = ',', default_value = "1e2,1e3,1e4,1e5")]
        t_list: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linearised potential on a log grid in `x`.
    Potential {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the PDE and compare against `v_inf`.
    Simulate {
        /// Flat key = value file; missing keys take the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Field dump `(t, x, v, v_inf, F)` at each checkpoint.
        #[arg(long)]
        fields: Option<PathBuf>,
    },
    /// All stages with caching, then the metric summary.
    Pipeline {
        /// Simulation config used by the simulate stage.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn csv(&self) -> String {
        let mut s = self
            .columns
            .iter()
            .map(|c| format!("{c} [1]"))
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    fn json(&self, meta: &Value) -> Value {
        json!({ "schema": SCHEMA, "columns": self.columns, "rows": self.rows, "meta": meta })
    }
}

fn with_schema(mut meta: Value) -> Value {
    if let Value::Object(m) = &mut meta {
        m.insert("schema".into(), json!(SCHEMA));
    }
    meta
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => stdout(text)?,
    }
    Ok(())
}

/// Write to stdout; a closed pipe (`| head`) is not an error.
fn stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

/// Emit a table. In CSV mode `meta` goes to a `.json` file next to `out`,
/// or to stderr without `out`; in JSON mode it is embedded.
fn emit(g: &Global, out: Option<&Path>, table: &Table, meta: Value) -> Result<()> {
    match g.format {
        Format::Json => write_or_print(out, &pretty(&table.json(&meta))),
        Format::Csv => {
            write_or_print(out, &table.csv())?;
            let side = pretty(&with_schema(meta));
            match out {
                Some(p) => std::fs::write(p.with_extension("json"), side)?,
                None => eprint!("{side}"),
            }
            Ok(())
        }
    }
}

fn order(g: &Global) -> u32 {
    g.n.unwrap_or(4)
}

fn bundle(g: &Global, n: u32) -> Result<AsymptoticBundle> {
    ModelParams::derive(n)?;
    let path = PipelineOptions::new(n, &g.workdir).archive_path();
    if path.exists() {
        return load_archive(&path, n);
    }
    let b = AsymptoticBundle::solve(n)?;
    std::fs::create_dir_all(&g.workdir)?;
    save_archive(&b, &path)?;
    Ok(b)
}

fn read_config(path: Option<&Path>, n: Option<u32>) -> Result<SimConfig> {
    let cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            SimConfig::parse(&text)?
        }
        None => SimConfig::new(n.unwrap_or(4)),
    };
    if let Some(n) = n {
        if n != cfg.n {
            return Err(Error::Config(format!(
                "--n {n} disagrees with n = {} in the simulation config",
                cfg.n
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_params(g: &Global) -> Result<()> {
    let p = ModelParams::derive(order(g))?;
    match g.format {
        Format::Csv => {
            let mut s = String::from("name,value\n");
            for (k, v) in p.table() {
                let _ = writeln!(s, "{k},{v}");
            }
            stdout(&s)?;
        }
        Format::Json => {
            let mut v = serde_json::to_value(&p)?;
            v["schema"] = json!(SCHEMA);
            stdout(&pretty(&v))?;
        }
    }
    Ok(())
}

fn cmd_profile(g: &Global, which: Which, out: Option<&Path>) -> Result<()> {
    let b = bundle(g, order(g))?;
    let p = &b.params;
    let (table, meta) = match which {
        Which::Eta => {
            let e = &b.eta;
            let mut t = Table::new(&["z", "eta", "eta_z", "eta_zz"]);
            for nd in e.profile.nodes() {
                t.rows.push(vec![
                    nd.x,
                    nd.f,
                    nd.df,
                    e.profile.eval(nd.x, Order::Second)?,
                ]);
            }
            let meta = json!({
                "n": p.n, "eta0": e.eta0, "eta2": e.eta2(), "eta4": e.eta4(),
                "eta2_fit": e.eta2_fit, "lambda": p.lambda, "lambda_inf": e.lambda_inf,
                "z_max": e.options.z_max,
            });
            (t, meta)
        }
        Which::Mu2 => {
            let m = &b.mu2;
            let mut t = Table::new(&["y", "m", "mu2", "mu3", "mu2_y"]);
            for nd in m.profile.nodes() {
                let y = nd.x;
                t.rows.push(vec![
                    y,
                    nd.f,
                    m.mu2(y, Order::Value)?,
                    m.mu3(y, Order::Value)?,
                    m.mu2(y, Order::First)?,
                ]);
            }
            let meta = json!({
                "n": p.n, "xi_star": m.xi_star, "c0_xi_star": m.rho_star,
                "lambda0_fit": m.lambda0_fit, "lambda1_fit": m.lambda1_fit,
                "gauss_c": m.gauss_c, "lambda": p.lambda, "lambda0": p.lambda0,
            });
            (t, meta)
        }
        Which::Phi2 => {
            let h = &b.phi2;
            let mut t = Table::new(&["z", "h", "h_z", "phi2"]);
            for nd in h.profile.nodes() {
                t.rows
                    .push(vec![nd.x, nd.f, nd.df, h.phi2(nd.x, Order::Value)?]);
            }
            let meta = json!({
                "n": p.n, "h0": h.h0, "h2": h.h2, "h_inf": h.report.h_inf,
                "lambda_prime": h.lambda_prime, "lambda_prime_predicted": h.lambda_prime_predicted,
                "tail_slope": h.tail_slope, "path_agreement": h.report.agreement,
                "wronskian_error": h.report.wronskian_error,
            });
            (t, meta)
        }
    };
    emit(g, out, &table, meta)
}

fn cmd_assemble(
    g: &Global,
    t: f64,
    x_max: Option<f64>,
    points: usize,
    out: Option<&Path>,
) -> Result<()> {
    if points < 2 {
        return Err(Error::Config("--points must be at least 2".into()));
    }
    let b = bundle(g, order(g))?;
    let x_max = x_max.unwrap_or(10.0 * t.sqrt());
    let mut table = Table::new(&["x", "ubar", "phi", "v_inf"]);
    for i in 0..points {
        let x = x_max * i as f64 / (points - 1) as f64;
        let v = b.v_infinity(x, t)?;
        let ubar = mu1(x / t.sqrt());
        table.rows.push(vec![x, ubar, v - ubar, v]);
    }
    emit(g, out, &table, json!({ "n": b.params.n, "t": t }))
}

fn cmd_front(
    g: &Global,
    scale: Scale,
    max: Option<f64>,
    points: usize,
    out: Option<&Path>,
) -> Result<()> {
    if points < 2 {
        return Err(Error::Config("--points must be at least 2".into()));
    }
    let b = bundle(g, order(g))?;
    let mut table;
    match scale {
        Scale::Reactive => {
            table = Table::new(&["z", "front"]);
            let hi = max.unwrap_or(30.0);
            for i in 0..points {
                let z = hi * i as f64 / (points - 1) as f64;
                table.rows.push(vec![z, b.front_reactive(z)?]);
            }
        }
        Scale::Diffusive => {
            table = Table::new(&["y", "front"]);
            let hi = max.unwrap_or(8.0);
            for i in 1..=points {
                let y = hi * i as f64 / points as f64;
                table.rows.push(vec![y, b.front_diffusive(y)?]);
            }
        }
    }
    let name = match scale {
        Scale::Reactive => "reactive",
        Scale::Diffusive => "diffusive",
    };
    emit(g, out, &table, json!({ "n": b.params.n, "scale": name }))
}

fn cmd_inhomo(g: &Global, ts: &[f64], out: Option<&Path>) -> Result<()> {
    let b = bundle(g, order(g))?;
    let mut table = Table::new(&["t", "norm", "x_cut", "peak"]);
    for &t in ts {
        let r = b.inhomo_norm(t, g.tol)?;
        table.rows.push(vec![r.t, r.value, r.x_cut, r.peak]);
    }
    let slope = if ts.len() >= 2 {
        let ns: Vec<f64> = table.rows.iter().map(|r| r[1]).collect();
        Some(loglog_slope(ts, &ns)?.slope)
    } else {
        None
    };
    let meta = json!({
        "n": b.params.n,
        "tol": g.tol,
        "slope": slope,
        "target_slope": -(1.0 + 4.0 * b.params.gamma),
    });
    emit(g, out, &table, meta)
}

fn cmd_potential(g: &Global, t: f64, points: usize, out: Option<&Path>) -> Result<()> {
    let b = bundle(g, order(g))?;
    let scan = b.potential_scan(t, points)?;
    let lo = 1e-3 * t.powf(b.params.alpha);
    let mut table = Table::new(&["x", "potential", "two_ubar_plus_phi"]);
    for x in log_grid(lo, 20.0 * t.sqrt(), points.max(2)) {
        let (v, w) = b.potential(x, t)?;
        table.rows.push(vec![x, v, w]);
    }
    emit(g, out, &table, json!({ "n": b.params.n, "scan": scan }))
}

fn cmd_simulate(
    g: &Global,
    config: Option<&Path>,
    out: Option<&Path>,
    fields: Option<&Path>,
) -> Result<()> {
    let cfg = read_config(config, g.n)?;
    let b = bundle(g, cfg.n)?;
    let mut blocks: Vec<FieldBlock> = Vec::new();
    let report = run(&cfg, &b, fields.map(|_| &mut blocks))?;
    if let Some(path) = fields {
        let mut table = Table::new(&["t", "x", "v", "v_inf", "front"]);
        for block in &blocks {
            table.rows.extend(block.iter().map(|r| r.to_vec()));
        }
        write_or_print(Some(path), &table.csv())?;
    }
    write_or_print(out, &pretty(&serde_json::to_value(&report)?))
}

fn cmd_pipeline(g: &Global, config: Option<&Path>) -> Result<nabfront::pipeline::PipelineReport> {
    let sim = match config {
        Some(_) => Some(read_config(config, g.n)?),
        None => None,
    };
    let n = sim.as_ref().map_or(order(g), |c| c.n);
    ModelParams::derive(n)?;
    let mut opts = PipelineOptions::new(n, &g.workdir);
    opts.tol = g.tol;
    if let Some(sim) = sim {
        opts.sim = sim;
    }
    pipeline(&opts)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.cmd {
        Cmd::Params => cmd_params(g),
        Cmd::Profile { which, out } => cmd_profile(g, *which, out.as_deref()),
        Cmd::Assemble {
            t,
            x_max,
            points,
            out,
        } => cmd_assemble(g, *t, *x_max, *points, out.as_deref()),
        Cmd::Front {
            scale,
            max,
            points,
            out,
        } => cmd_front(g, *scale, *max, *points, out.as_deref()),
        Cmd::Inhomo { t_list, out } => cmd_inhomo(g, t_list, out.as_deref()),
        Cmd::Potential { t, points, out } => cmd_potential(g, *t, *points, out.as_deref()),
        Cmd::Simulate {
            config,
            out,
            fields,
        } => cmd_simulate(g, config.as_deref(), out.as_deref(), fields.as_deref()),
        Cmd::Pipeline { .. } => unreachable!("handled in main"),
    }
}

fn code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    if let Cmd::Pipeline { config } = &cli.cmd {
        let r = cmd_pipeline(&cli.global, config.as_deref());
        match &r {
            Ok(rep) => match cli.global.format {
                Format::Csv => {
                    eprint!("{}", rep.table());
                    let _ = stdout(&rep.csv());
                }
                Format::Json => {
                    let mut v = serde_json::to_value(rep).expect("report");
                    v["schema"] = json!(SCHEMA);
                    v["all_pass"] = json!(rep.all_pass());
                    let _ = stdout(&pretty(&v));
                }
            },
            Err(e) => eprintln!("error: {e}"),
        }
        return ExitCode::from(exit_code(&r) as u8);
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code(&e))
        }
    }
}
