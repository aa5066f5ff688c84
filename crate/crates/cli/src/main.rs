//! `dampwave`: configuration-driven experiments on the damped wave equation.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use clap::{Args, Parser, Subcommand};
use config::ExperimentConfig;
use dampwave::acceptance::Suite;
use dampwave::hotspots::{escape_experiment, track, EscapeExample, TrackOptions};
use dampwave::initdata::ProblemSetup;
use dampwave::pde::{Engine, EngineRule, Part};
use dampwave::specfun::{bessel_i_scaled, kernel_k, kernel_k_deriv, KernelId};
use dampwave::verify::{compare_oracle, decay_fit, probe_points, DecayQuantity};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "dampwave", version, about = "Damped wave equation experiments")]
struct Cli {
    /// Experiment configuration (JSON). Defaults to the built-in setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write outputs into this directory instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Target accuracy; selects the quadrature rule and adaptive tolerances.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate kernels or scaled Bessel functions as CSV.
    Kernels(KernelsArgs),
    /// Evaluate one part of the solution on a grid (CSV).
    Solve(SolveArgs),
    /// Track hot spots along the configured schedule.
    Hotspots(HotspotsArgs),
    /// Run the escape constructions.
    Escape(EscapeArgs),
    /// Fit large-time decay rates of sup norms.
    Decay(DecayArgs),
    /// Compare against the finite-difference oracle.
    Oracle(OracleArgs),
    /// Run the acceptance suite and print one verdict per criterion.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct KernelsArgs {
    /// `kernels` or `bessel`.
    #[arg(long, default_value = "kernels")]
    table: String,
    #[arg(long, default_value_t = 0.1)]
    s_min: f64,
    #[arg(long, default_value_t = 60.0)]
    s_max: f64,
    #[arg(long, default_value_t = 60)]
    points: usize,
    #[arg(long, default_value_t = 4)]
    max_order: u32,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// u, j, w, tilde_j, hat_w, tilde_w, heat or difference.
    #[arg(long, default_value = "u")]
    part: String,
    #[arg(long)]
    t: f64,
    /// Dimension of the built-in setup; must match `--config` if both are given.
    #[arg(long)]
    dim: Option<usize>,
    /// Nodes per axis (default depends on the dimension).
    #[arg(long)]
    resolution: Option<usize>,
    /// Grid margin around the support hull (default `t^phi`).
    #[arg(long)]
    margin: Option<f64>,
}

#[derive(Args, Debug)]
struct HotspotsArgs {
    /// Also record the minimal second directional derivative over the hull.
    #[arg(long)]
    concavity: bool,
}

#[derive(Args, Debug)]
struct EscapeArgs {
    /// ex1d, ex2d_critical, ex2d_small_support, ex3d or all.
    #[arg(long, default_value = "all")]
    example: String,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Probe time (default depends on the example).
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Args, Debug)]
struct DecayArgs {
    /// heat_part, heat_part_minus_heat, tilde_heat_part, full_difference or all.
    #[arg(long, default_value = "all")]
    quantity: String,
    #[arg(long, default_value_t = 10.0)]
    t_min: f64,
    #[arg(long, default_value_t = 160.0)]
    t_max: f64,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long, default_value_t = 50)]
    probes: usize,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Comma-separated criterion numbers (default: all).
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<usize>,
}

/// Failures mapped onto exit codes.
enum Failure {
    /// Bad configuration or arguments: exit 1.
    Config(String),
    /// A numerical target was not met: exit 2.
    Numeric(String),
}

impl From<dampwave::Error> for Failure {
    fn from(e: dampwave::Error) -> Self {
        match e {
            dampwave::Error::Tolerance { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOTSPOT_DW_LOG", "error"))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let dim_flag = match &cli.command {
        Some(Command::Solve(a)) => a.dim,
        Some(Command::Decay(a)) => a.dim,
        Some(Command::Oracle(a)) => a.dim,
        _ => None,
    };
    let mut cfg = load_config(cli.config.as_deref(), dim_flag)?;
    if let Some(tol) = cli.tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Failure::Config(format!("--tol {tol} must lie in (0, 1)")));
        }
        cfg.quadrature.engine_rule = Some(EngineRule::for_tolerance(tol));
        let mut spec = cfg.quadrature.adaptive.unwrap_or_default();
        spec.target_abs_tol = tol;
        spec.target_rel_tol = tol;
        cfg.quadrature.adaptive = Some(spec);
    }
    if cli.out.is_some() {
        cfg.output_dir = cli.out.clone();
    }
    if cli.dump_config {
        return write_stdout(&format!("{}\n", cfg.to_json()));
    }
    let Some(command) = cli.command else {
        return Err(Failure::Config(
            "a subcommand is required (see --help)".into(),
        ));
    };
    let mut engine = Engine::new(cfg.quadrature.engine_rule.unwrap_or_default());
    if let Some(spec) = cfg.quadrature.adaptive {
        spec.validate()?;
        engine.spec = spec;
    }
    let sink = Sink {
        dir: cfg.output_dir.clone(),
    };
    match command {
        Command::Kernels(a) => kernels(&sink, &a),
        Command::Solve(a) => solve(&sink, &engine, &cfg, &a),
        Command::Hotspots(a) => hotspots(&sink, &engine, &cfg, &a),
        Command::Escape(a) => escape(&sink, &engine, &a),
        Command::Decay(a) => decay(&sink, &engine, &cfg, &a),
        Command::Oracle(a) => oracle(&sink, &engine, &cfg, &a),
        Command::Selftest(a) => selftest(&sink, &engine, &a),
    }
}

fn load_config(path: Option<&Path>, dim: Option<usize>) -> Result<ExperimentConfig, Failure> {
    match path {
        None => {
            let n = dim.unwrap_or(2);
            if !(1..=3).contains(&n) {
                return Err(Failure::Config(format!("--dim {n} must be 1, 2 or 3")));
            }
            Ok(ExperimentConfig::default_for_dim(n))
        }
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            let cfg = ExperimentConfig::parse(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            if let Some(n) = dim {
                if n != cfg.initial_data.dim {
                    return Err(Failure::Config(format!(
                        "--dim {n} differs from `initial_data.dim` = {}",
                        cfg.initial_data.dim
                    )));
                }
            }
            Ok(cfg)
        }
    }
}

/// Standard output, or files in a directory.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    /// Writes `body` to `name` under the output directory, or prints it when
    /// `primary` and no directory is set.
    fn emit(&self, name: &str, body: &str, primary: bool) -> Outcome {
        match &self.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)
                    .and_then(|_| std::fs::write(dir.join(name), body))
                    .map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
                log::info!("wrote {}", dir.join(name).display());
            }
            None if primary => write_stdout(body)?,
            None => {}
        }
        Ok(())
    }

    fn json(&self, name: &str, value: &impl Serialize, primary: bool) -> Outcome {
        let mut body = serde_json::to_string_pretty(value).expect("reports serialize");
        body.push('\n');
        self.emit(name, &body, primary)
    }
}

/// Builds CSV text from a header and rows of already formatted fields.
/// Prints to standard output; a closed reader ends the run quietly.
fn write_stdout(body: &str) -> Outcome {
    use std::io::Write;
    match std::io::stdout().lock().write_all(body.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(Failure::Config(format!("standard output: {e}")))
        }
        _ => Ok(()),
    }
}

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// Shortest round-trip representation.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn setup_of(cfg: &ExperimentConfig) -> Result<ProblemSetup, Failure> {
    Ok(cfg.initial_data.build()?)
}

fn kernels(sink: &Sink, a: &KernelsArgs) -> Outcome {
    if !(a.s_min >= 0.0 && a.s_max > a.s_min) || a.points < 2 {
        return Err(Failure::Config(
            "need 0 <= --s-min < --s-max and --points >= 2".into(),
        ));
    }
    let grid: Vec<f64> = (0..a.points)
        .map(|i| a.s_min + (a.s_max - a.s_min) * i as f64 / (a.points - 1) as f64)
        .collect();
    let body = match a.table.as_str() {
        "kernels" => {
            let header = ["s", "family", "order", "k", "k_deriv"].map(String::from);
            let mut rows = Vec::new();
            for &s in &grid {
                for order in 0..=a.max_order {
                    let mut ids = vec![("odd", KernelId::odd(order))];
                    if order >= 1 {
                        ids.push(("even", KernelId::even(order)));
                    }
                    for (family, id) in ids {
                        rows.push(vec![
                            num(s),
                            family.to_string(),
                            order.to_string(),
                            num(kernel_k(id, s)),
                            num(kernel_k_deriv(id, s)),
                        ]);
                    }
                }
            }
            csv_text(&header, rows)
        }
        "bessel" => {
            let header = ["s", "nu", "scaled_i"].map(String::from);
            let mut rows = Vec::new();
            for &s in &grid {
                for nu in 0..=a.max_order {
                    rows.push(vec![num(s), nu.to_string(), num(bessel_i_scaled(nu, s)?)]);
                }
            }
            csv_text(&header, rows)
        }
        other => {
            return Err(Failure::Config(format!(
                "--table {other}: expected `kernels` or `bessel`"
            )))
        }
    };
    sink.emit(&format!("{}.csv", a.table), &body, true)
}

fn solve(sink: &Sink, engine: &Engine, cfg: &ExperimentConfig, a: &SolveArgs) -> Outcome {
    let part = Part::parse(&a.part).ok_or_else(|| {
        let names: Vec<&str> = Part::ALL.iter().map(|p| p.name()).collect();
        Failure::Config(format!(
            "--part {}: expected one of {}",
            a.part,
            names.join(", ")
        ))
    })?;
    let setup = setup_of(cfg)?;
    let n = setup.dim();
    if !(a.t >= 0.0) {
        return Err(Failure::Config(format!("--t {} must be non-negative", a.t)));
    }
    let res = a.resolution.unwrap_or(match n {
        1 => 201,
        2 => 41,
        _ => 15,
    });
    if res < 2 {
        return Err(Failure::Config("--resolution must be at least 2".into()));
    }
    let margin = a
        .margin
        .unwrap_or_else(|| a.t.powf(cfg.schedule.phi_exponent).max(0.5));
    let bounds = setup.hull_h.bounding_box(margin);
    let grid = engine.field(&setup, part, a.t, &bounds, &vec![res; n])?;
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push(part.name().to_string());
    let rows = (0..grid.values.len()).map(|i| {
        let mut row: Vec<String> = grid.node(i).into_iter().map(num).collect();
        row.push(num(grid.values[i]));
        row
    });
    sink.emit(
        &format!("solve_{}.csv", part.name()),
        &csv_text(&header, rows),
        true,
    )
}

fn hotspots(sink: &Sink, engine: &Engine, cfg: &ExperimentConfig, a: &HotspotsArgs) -> Outcome {
    let setup = setup_of(cfg)?;
    let schedule = cfg.schedule.build()?;
    let options = TrackOptions {
        search: cfg.search,
        concavity: a.concavity,
    };
    let records = track(engine, &setup, &schedule, &options)?;
    let header = [
        "t",
        "sup_dist_to_centroid",
        "inside_hull",
        "inside_psi_neighbourhood",
        "hotspot_count",
        "max_value",
        "min_second_dir",
    ]
    .map(String::from);
    let rows = records.iter().map(|r| {
        vec![
            num(r.t),
            num(r.sup_dist_to_centroid),
            r.inside_hull.to_string(),
            r.inside_psi_neighbourhood.to_string(),
            r.hotspot_count.to_string(),
            num(r.max_value),
            r.min_second_dir.map(num).unwrap_or_default(),
        ]
    });
    sink.emit("hotspots.csv", &csv_text(&header, rows), false)?;
    sink.json("hotspots.json", &records, true)
}

fn escape(sink: &Sink, engine: &Engine, a: &EscapeArgs) -> Outcome {
    let examples: Vec<EscapeExample> = if a.example == "all" {
        EscapeExample::ALL.to_vec()
    } else {
        vec![EscapeExample::parse(&a.example).ok_or_else(|| {
            Failure::Config(format!(
                "--example {}: expected ex1d, ex2d_critical, ex2d_small_support, ex3d or all",
                a.example
            ))
        })?]
    };
    let mut reports = Vec::new();
    for ex in examples {
        reports.push(escape_experiment(engine, ex, a.epsilon, a.t)?);
    }
    if reports.len() == 1 {
        sink.json("escape.json", &reports[0], true)
    } else {
        sink.json("escape.json", &reports, true)
    }
}

fn decay(sink: &Sink, engine: &Engine, cfg: &ExperimentConfig, a: &DecayArgs) -> Outcome {
    let quantities: Vec<DecayQuantity> = if a.quantity == "all" {
        DecayQuantity::ALL.to_vec()
    } else {
        vec![DecayQuantity::parse(&a.quantity).ok_or_else(|| {
            Failure::Config(format!("--quantity {}: unknown quantity", a.quantity))
        })?]
    };
    if !(a.t_min > 0.0 && a.t_max > a.t_min) || a.count < 2 {
        return Err(Failure::Config(
            "need 0 < --t-min < --t-max and --count >= 2".into(),
        ));
    }
    let times: Vec<f64> = (0..a.count)
        .map(|k| a.t_min * (a.t_max / a.t_min).powf(k as f64 / (a.count - 1) as f64))
        .collect();
    let setup = setup_of(cfg)?;
    let mut fits = Vec::new();
    for q in quantities {
        if q == DecayQuantity::TildeHeatPart && setup.f.is_zero() {
            log::info!("skipping {}: f is zero", q.name());
            continue;
        }
        fits.push(decay_fit(
            engine,
            &setup,
            q,
            &times,
            cfg.schedule.phi_exponent,
        )?);
    }
    let header = ["quantity", "t", "value", "boundary_value"].map(String::from);
    let rows = fits.iter().flat_map(|f| {
        (0..f.times.len()).map(move |i| {
            vec![
                f.quantity.clone(),
                num(f.times[i]),
                num(f.values[i]),
                num(f.exterior_bounds[i]),
            ]
        })
    });
    sink.emit("decay.csv", &csv_text(&header, rows), false)?;
    sink.json("decay.json", &fits, true)
}

#[derive(Serialize)]
struct OracleReport {
    dim: usize,
    t: f64,
    dx: f64,
    probes: usize,
    max_error: f64,
}

fn oracle(sink: &Sink, engine: &Engine, cfg: &ExperimentConfig, a: &OracleArgs) -> Outcome {
    let setup = setup_of(cfg)?;
    let n = setup.dim();
    let (t_default, dx_default) = match n {
        1 => (2.0, 1.0 / 400.0),
        2 => (1.5, 1.0 / 150.0),
        _ => {
            return Err(Failure::Config(
                "`initial_data.dim`: the finite-difference oracle covers dimensions 1 and 2".into(),
            ))
        }
    };
    let t = a.t.unwrap_or(t_default);
    let dx = a.dx.unwrap_or(dx_default);
    let probes = probe_points(&setup, t, a.probes, 50 + n as u64);
    let max_error = compare_oracle(engine, &setup, t, dx, &probes)?;
    sink.json(
        "oracle.json",
        &OracleReport {
            dim: n,
            t,
            dx,
            probes: probes.len(),
            max_error,
        },
        true,
    )
}

fn selftest(sink: &Sink, engine: &Engine, a: &SelftestArgs) -> Outcome {
    let ids: Vec<usize> = if a.criteria.is_empty() {
        (1..=13).collect()
    } else {
        a.criteria.clone()
    };
    if let Some(bad) = ids.iter().find(|id| !(1..=13).contains(*id)) {
        return Err(Failure::Config(format!(
            "--criteria: {bad} is not in 1..=13"
        )));
    }
    let suite = Suite::new(engine);
    let mut text = String::new();
    let mut failed = 0;
    for id in ids {
        let r = suite.run(id);
        log::info!("criterion {id} took {:.1} s", r.seconds);
        text.push_str(&r.line());
        text.push('\n');
        failed += usize::from(!r.passed);
    }
    sink.emit("selftest.txt", &text, true)?;
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} criteria failed")));
    }
    Ok(())
}
