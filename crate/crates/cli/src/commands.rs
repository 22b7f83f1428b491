use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use soac_core::decomposition::{find_layout, find_layout_with, LayoutConfig, SpanningTreeLayout};
use soac_core::dp_minmax::solve_minmax_dp_with;
use soac_core::dp_soac::{solve_soac_dp_with, DpOptions, DEFAULT_DP_BUDGET};
use soac_core::generators::{
    gen_edp_gadget, gen_muks_k2n, gen_muks_planar_dag, gen_one_in_three, gen_random, LatencyRange,
};
use soac_core::oracle::{solve_minmax_oracle_with, solve_soac_oracle_with, OracleConfig, DEFAULT_BUDGET};
use soac_core::{loads_and_cost, Cost, FlowAssignment, Instance, SoacError};
use thiserror::Error;

use crate::format::{self, parse_rational, Document, LayoutSpec, ParseError};
use crate::sources;

#[derive(Debug, Parser)]
#[command(
    name = "soac",
    version,
    about = "Exact solvers for system-optimal atomic congestion games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exhaustive reference solver.
    Oracle {
        file: PathBuf,
        /// Decision threshold; overrides the file's `lambda`.
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Memoise on partial loads (faster on instances with many agents).
        #[arg(long)]
        memo: bool,
    },
    /// Dynamic program over a spanning-tree layout.
    Dp {
        file: PathBuf,
        /// Layout file; defaults to the file's own layout block, then to a
        /// searched layout.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Width the layout search aims for.
        #[arg(long, default_value_t = 4)]
        width: usize,
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long, default_value_t = DEFAULT_DP_BUDGET)]
        budget: u64,
    },
    /// Optimum when up to `alpha` agents may stay unrouted.
    Minmax {
        file: PathBuf,
        /// Defaults to the file's `alpha`.
        #[arg(long)]
        alpha: Option<usize>,
        #[arg(long, conflicts_with = "dp")]
        oracle: bool,
        /// The default.
        #[arg(long)]
        dp: bool,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        width: usize,
        #[arg(long)]
        lambda: Option<String>,
    },
    /// Search for a low-width spanning-tree layout.
    Decompose {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        budget: usize,
        /// Exhaustive search regardless of graph size.
        #[arg(long)]
        exact: bool,
        /// Also write the layout block here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate an instance; writes to stdout unless `--output` is given.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
        #[arg(short, long, global = true)]
        output: Option<PathBuf>,
    },
    /// Run oracle and DP on every `*.soac` file in a directory and compare.
    Bench {
        dir: PathBuf,
        /// Corrupt the DP's root record; the run must then fail.
        #[arg(long)]
        fault_inject: bool,
        #[arg(long, default_value_t = 4)]
        width: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenKind {
    /// Knapsack file to the two-hub bipartite network.
    MuksK2n { file: PathBuf },
    /// Knapsack file to the planar acyclic network.
    MuksPlanar { file: PathBuf },
    /// Terminal pairs on K_{3,j} to the capacity-one gadget network.
    Edp { file: PathBuf },
    /// Cubic monotone formula to the layered acyclic network.
    Sat13 { file: PathBuf },
    /// Seeded random instance.
    Random {
        #[arg(long)]
        vertices: usize,
        #[arg(long)]
        arcs: usize,
        #[arg(long)]
        agents: usize,
        #[arg(long, default_value_t = 2)]
        c_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_numerator: u32,
        #[arg(long, default_value_t = 3)]
        max_denominator: u32,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Solver(SoacError),
    #[error("{0}")]
    Mismatch(String),
}

impl From<SoacError> for CliError {
    fn from(e: SoacError) -> Self {
        CliError::Solver(e)
    }
}

impl CliError {
    /// 2 for bad input, 3 for exhausted budgets, 4 for a bench disagreement.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(SoacError::BudgetExceeded { .. }) => 3,
            CliError::Mismatch(_) => 4,
            _ => 2,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(path: &Path) -> Result<Document, CliError> {
    format::parse_document(&read(path)?).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn lambda_of(flag: &Option<String>, instance: &Instance) -> Result<Option<Cost>, CliError> {
    match flag {
        Some(text) => match parse_rational(text) {
            Some(r) => Ok(Some(Cost::new(r))),
            None => Err(CliError::Usage(format!("bad --lambda `{text}`"))),
        },
        None => Ok(instance.lambda.clone()),
    }
}

fn layout_for(doc: &Document, file: Option<&Path>, width: usize) -> Result<SpanningTreeLayout, CliError> {
    let graph = &doc.instance.graph;
    if let Some(path) = file {
        let spec = format::parse_layout(&read(path)?, graph.vertex_count()).map_err(|source| CliError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        return Ok(spec.build(graph)?);
    }
    if let Some(spec) = &doc.layout {
        return Ok(spec.build(graph)?);
    }
    Ok(find_layout(&doc.instance, width)?.into_layout())
}

fn ms(start: Instant) -> String {
    format!("{:.3}", start.elapsed().as_secs_f64() * 1e3)
}

fn write_paths(out: &mut dyn Write, instance: &Instance, flow: &FlowAssignment) -> io::Result<()> {
    for (i, path) in flow.paths.iter().enumerate() {
        match path {
            None => writeln!(out, "path {i}: unrouted")?,
            Some(arcs) => {
                let mut vertices = vec![instance.agents[i].source];
                vertices.extend(arcs.iter().map(|&a| instance.graph.arc(a).head));
                let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
                let arcs = if arcs.is_empty() { "-".to_string() } else { join(arcs) };
                writeln!(out, "path {i}: vertices {} arcs {arcs}", join(&vertices))?;
            }
        }
    }
    Ok(())
}

/// Prints the common report tail; returns 1 when a threshold is given and
/// the optimum exceeds it.
fn report(
    out: &mut dyn Write,
    instance: &Instance,
    cost: &Cost,
    flow: Option<&FlowAssignment>,
    lambda: Option<Cost>,
    start: Instant,
) -> io::Result<i32> {
    writeln!(out, "cost: {cost}")?;
    let mut code = 0;
    if let Some(l) = lambda {
        let yes = *cost <= l;
        writeln!(out, "decision: {}", if yes { "yes" } else { "no" })?;
        code = if yes { 0 } else { 1 };
    }
    if let Some(flow) = flow {
        if flow.unrouted_count() > 0 {
            writeln!(out, "unrouted: {}", flow.unrouted_count())?;
        }
        write_paths(out, instance, flow)?;
    }
    writeln!(out, "time_ms: {}", ms(start))?;
    Ok(code)
}

fn emit(text: &str, output: &Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, text).map_err(io_err(path)),
        None => out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn parse_source<T>(path: &Path, parse: fn(&str) -> Result<T, ParseError>) -> Result<T, CliError> {
    parse(&read(path)?).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn generate(kind: &GenKind) -> Result<Instance, CliError> {
    Ok(match kind {
        GenKind::MuksK2n { file } | GenKind::MuksPlanar { file } => {
            let muks = parse_source(file, sources::parse_muks)?;
            let inst = if matches!(kind, GenKind::MuksK2n { .. }) {
                gen_muks_k2n(&muks)?
            } else {
                gen_muks_planar_dag(&muks)?
            };
            let n = muks.vectors.len();
            if muks.k <= n {
                inst.with_lambda(Cost::from_integer((n - muks.k) as i64))
            } else {
                inst
            }
        }
        GenKind::Edp { file } => gen_edp_gadget(&parse_source(file, sources::parse_edp)?)?.with_lambda(Cost::zero()),
        GenKind::Sat13 { file } => {
            gen_one_in_three(&parse_source(file, sources::parse_cnf)?)?.with_lambda(Cost::zero())
        }
        &GenKind::Random {
            vertices,
            arcs,
            agents,
            c_max,
            seed,
            max_numerator,
            max_denominator,
        } => gen_random(
            vertices,
            arcs,
            agents,
            c_max,
            LatencyRange {
                max_numerator,
                max_denominator,
            },
            seed,
        )?,
    })
}

fn bench(dir: &Path, fault_inject: bool, width: usize, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "soac"))
        .collect();
    files.sort();
    let stdout_err = io_err(Path::new("<stdout>"));
    let mut lines = String::new();
    for path in &files {
        let doc = load(path)?;
        let inst = &doc.instance;
        let layout = layout_for(&doc, None, width)?;
        let options = DpOptions {
            fault_inject,
            ..DpOptions::default()
        };
        let start = Instant::now();
        let oracle = match inst.alpha {
            Some(a) => solve_minmax_oracle_with(inst, a, &OracleConfig::default())?,
            None => solve_soac_oracle_with(inst, &OracleConfig::default())?,
        };
        let oracle_ms = ms(start);
        let start = Instant::now();
        let dp = match inst.alpha {
            Some(a) => solve_minmax_dp_with(inst, &layout, a, &options)?,
            None => solve_soac_dp_with(inst, &layout, &options)?,
        };
        let dp_ms = ms(start);
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut problem = (dp.cost != oracle.cost).then(|| format!("oracle {} != dp {}", oracle.cost, dp.cost));
        if let (None, Some(flow)) = (&problem, &dp.flow) {
            match loads_and_cost(inst, flow) {
                Ok((_, c)) if c == dp.cost => {}
                Ok((_, c)) => problem = Some(format!("dp witness costs {c}, reported {}", dp.cost)),
                Err(e) => problem = Some(format!("dp witness invalid: {e}")),
            }
        }
        if let Some(problem) = problem {
            lines.push_str(&format!("{name}: MISMATCH {problem}\n"));
            out.write_all(lines.as_bytes()).map_err(stdout_err)?;
            return Err(CliError::Mismatch(format!("{}: {problem}", path.display())));
        }
        lines.push_str(&format!(
            "{name}: cost {} width {} oracle_ms {oracle_ms} dp_ms {dp_ms} ok\n",
            dp.cost, layout.width
        ));
    }
    lines.push_str(&format!("bench: {} instances, all agree\n", files.len()));
    out.write_all(lines.as_bytes()).map_err(stdout_err)?;
    Ok(0)
}

/// Executes one command, writing the report to `out`. Returns the exit code
/// for completed runs (0, or 1 for a "no" answer to a threshold query).
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let stdout_err = || io_err(Path::new("<stdout>"));
    match &cli.command {
        Command::Oracle {
            file,
            lambda,
            budget,
            memo,
        } => {
            let doc = load(file)?;
            let inst = &doc.instance;
            let lambda = lambda_of(lambda, inst)?;
            let config = OracleConfig {
                budget: *budget,
                memoize: *memo,
                ..OracleConfig::default()
            };
            let start = Instant::now();
            let sol = solve_soac_oracle_with(inst, &config)?;
            report(out, inst, &sol.cost, sol.flow.as_ref(), lambda, start).map_err(stdout_err())
        }
        Command::Dp {
            file,
            layout,
            width,
            lambda,
            budget,
        } => {
            let doc = load(file)?;
            let inst = &doc.instance;
            let lambda = lambda_of(lambda, inst)?;
            let layout = layout_for(&doc, layout.as_deref(), *width)?;
            let options = DpOptions {
                budget: *budget,
                ..DpOptions::default()
            };
            let start = Instant::now();
            let sol = solve_soac_dp_with(inst, &layout, &options)?;
            writeln!(out, "width: {}", layout.width).map_err(stdout_err())?;
            report(out, inst, &sol.cost, sol.flow.as_ref(), lambda, start).map_err(stdout_err())
        }
        Command::Minmax {
            file,
            alpha,
            oracle,
            dp: _,
            layout,
            width,
            lambda,
        } => {
            let doc = load(file)?;
            let inst = &doc.instance;
            let lambda = lambda_of(lambda, inst)?;
            let Some(alpha) = alpha.or(inst.alpha) else {
                return Err(CliError::Usage("minmax needs --alpha or an `alpha` line".into()));
            };
            let start = Instant::now();
            let (cost, flow) = if *oracle {
                let sol = solve_minmax_oracle_with(inst, alpha, &OracleConfig::default())?;
                (sol.cost, sol.flow)
            } else {
                let layout = layout_for(&doc, layout.as_deref(), *width)?;
                let sol = solve_minmax_dp_with(inst, &layout, alpha, &DpOptions::default())?;
                writeln!(out, "width: {}", layout.width).map_err(stdout_err())?;
                (sol.cost, sol.flow)
            };
            writeln!(out, "alpha: {alpha}").map_err(stdout_err())?;
            report(out, inst, &cost, flow.as_ref(), lambda, start).map_err(stdout_err())
        }
        Command::Decompose {
            file,
            budget,
            exact,
            output,
        } => {
            let doc = load(file)?;
            let config = LayoutConfig {
                exact: *exact,
                ..LayoutConfig::default()
            };
            let start = Instant::now();
            let search = find_layout_with(&doc.instance.graph, *budget, &config)?;
            let status = if search.is_found() {
                "found"
            } else {
                "no layout within budget"
            };
            let block = format::serialize_layout(&LayoutSpec::from_layout(search.layout()));
            let text = format!(
                "width: {}\nstatus: {status}\ntime_ms: {}\n{block}",
                search.layout().width,
                ms(start)
            );
            out.write_all(text.as_bytes()).map_err(stdout_err())?;
            if let Some(path) = output {
                fs::write(path, &block).map_err(io_err(path))?;
            }
            Ok(0)
        }
        Command::Gen { kind, output } => {
            let inst = generate(kind)?;
            emit(&format::serialize_instance(&inst), output, out)?;
            Ok(0)
        }
        Command::Bench {
            dir,
            fault_inject,
            width,
        } => bench(dir, *fault_inject, *width, out),
    }
}
