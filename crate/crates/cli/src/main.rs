use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hgmp_core::engine::{run_mission, MissionConfig};
use hgmp_core::lab::baseline::run_baseline;
use hgmp_core::lab::metrics::MetricsReport;
use hgmp_core::lab::plot::{self, PlotKind};
use hgmp_core::lab::stats::{anova_oneway, paired_t_test, Sided, TestResult};
use hgmp_core::lab::sweep::{preset, run_sweep, SweepSpec};
use hgmp_core::lab::table::Table;

#[derive(Parser)]
#[command(
    name = "hgmp",
    version,
    about = "Hunter-and-gatherer mission simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and print its metrics.
    Run {
        /// Mission config (TOML); defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the event log as CSV.
        #[arg(long)]
        log_out: Option<PathBuf>,
        /// Run the single-type comparison model instead.
        #[arg(long)]
        baseline: bool,
    },
    /// Run a parameter sweep and write one CSV row per mission.
    Sweep {
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        preset: Option<String>,
        /// Sweep spec (TOML).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, env = "HGMP_WORKERS")]
        workers: Option<usize>,
        /// Override the number of replications per grid point.
        #[arg(long)]
        replications: Option<u32>,
        /// Override the iteration count of every mission.
        #[arg(long)]
        iterations: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hypothesis tests on a sweep CSV.
    Stats {
        #[arg(long, value_enum)]
        test: TestKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Column holding the measurements when grouping rows.
        #[arg(long, default_value = "eta_t")]
        metric: String,
        /// Group rows by this column (defaults to the first swept parameter).
        #[arg(long)]
        group_by: Option<String>,
        /// Treat these columns as the samples instead of grouping rows.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        /// With a t-test over groups: the two group labels to compare (a then b).
        #[arg(long, num_args = 2)]
        pair: Vec<String>,
        /// Offset of the paired difference b - a.
        #[arg(long, default_value_t = 0.0)]
        d0: f64,
        /// Offset as a fraction of mean(a); overrides --d0.
        #[arg(long)]
        d0_rel: Option<f64>,
        #[arg(long, value_enum, default_value_t = SidedArg::Two)]
        sided: SidedArg,
    },
    /// Render a sweep or series CSV as a PNG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Output file (defaults to the input with a .png extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TestKind {
    T,
    Anova,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidedArg {
    One,
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Heatmap,
    Series,
    Bars,
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;
type Sample = (String, Vec<f64>);

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            log_out,
            baseline,
        } => run(config.as_deref(), seed, log_out.as_deref(), baseline),
        Command::Sweep {
            preset: name,
            spec,
            out,
            workers,
            replications,
            iterations,
            seed,
        } => {
            let mut spec = match (name, spec) {
                (Some(name), _) => preset(&name)?,
                (None, Some(path)) => SweepSpec::from_toml_str(&read(&path)?)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            if let Some(r) = replications {
                spec.replications = r;
            }
            if let Some(i) = iterations {
                spec.base.max_iterations = i;
            }
            if let Some(s) = seed {
                spec.base.seed = s;
            }
            sweep(&spec, &out, workers.unwrap_or(1))
        }
        Command::Stats {
            test,
            input,
            alpha,
            metric,
            group_by,
            columns,
            pair,
            d0,
            d0_rel,
            sided,
        } => {
            let table = Table::from_path(&input)?;
            let samples = samples(&table, &metric, group_by.as_deref(), &columns)?;
            let result = match test {
                TestKind::T => {
                    let (a, b) = pick_pair(&samples, &pair)?;
                    let d0 = match d0_rel {
                        Some(rel) => rel * a.1.iter().sum::<f64>() / a.1.len() as f64,
                        None => d0,
                    };
                    let sided = match sided {
                        SidedArg::One => Sided::One,
                        SidedArg::Two => Sided::Two,
                    };
                    println!("a={} b={} d0={d0}", a.0, b.0);
                    paired_t_test(&a.1, &b.1, d0, alpha, sided)?
                }
                TestKind::Anova => {
                    let groups: Vec<Vec<f64>> = samples.iter().map(|(_, v)| v.clone()).collect();
                    println!(
                        "groups={}",
                        samples
                            .iter()
                            .map(|(k, _)| k.as_str())
                            .collect::<Vec<_>>()
                            .join(",")
                    );
                    anova_oneway(&groups, alpha)?
                }
            };
            print_test(&result);
            Ok(())
        }
        Command::Plot { input, kind, out } => {
            let table = Table::from_path(&input)?;
            let kind = match kind {
                KindArg::Heatmap => PlotKind::Heatmap,
                KindArg::Series => PlotKind::Series,
                KindArg::Bars => PlotKind::Bars,
            };
            let img = plot::render(&table, kind)?;
            let out = out.unwrap_or_else(|| input.with_extension("png"));
            plot::save(&img, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn run(
    config: Option<&Path>,
    seed: Option<u64>,
    log_out: Option<&Path>,
    baseline: bool,
) -> Result<()> {
    let mut config = match config {
        Some(path) => MissionConfig::from_toml_file(path)?,
        None => MissionConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    if baseline {
        if log_out.is_some() {
            return Err("--log-out is not available for the baseline model".into());
        }
        print_metrics(&run_baseline(&config)?);
        return Ok(());
    }
    let (log, metrics) = run_mission(&config)?;
    if let Some(path) = log_out {
        let file = fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        log.write_csv(io::BufWriter::new(file))?;
    }
    print_metrics(&metrics);
    Ok(())
}

fn print_metrics(m: &MetricsReport) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "gamma_t={}", m.total_completed);
    let _ = writeln!(out, "c_t={}", m.collective_cost);
    let _ = writeln!(out, "eta_t={}", m.total_effectiveness);
    for (i, a) in m.hunters.iter().enumerate() {
        let _ = writeln!(
            out,
            "hunter{} hunted={} cost={} eta={}",
            i + 1,
            a.count,
            a.cost,
            a.effectiveness
        );
    }
    for (j, a) in m.gatherers.iter().enumerate() {
        let _ = writeln!(
            out,
            "gatherer{} gathered={} cost={} eta={}",
            j + 1,
            a.count,
            a.cost,
            a.effectiveness
        );
    }
}

fn sweep(spec: &SweepSpec, out: &Path, workers: usize) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let table = run_sweep(spec, workers)?;
    let path = out.join(format!("{}.csv", spec.name));
    let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    table.write_csv(io::BufWriter::new(file))?;
    println!("wrote {} ({} missions)", path.display(), table.rows.len());
    if spec.series {
        let path = out.join(format!("{}_series.csv", spec.name));
        let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        table.write_series_csv(io::BufWriter::new(file))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Named samples: one per listed column, or one per distinct value of the
/// grouping column (HGMP rows only).
fn samples(
    table: &Table,
    metric: &str,
    group_by: Option<&str>,
    columns: &[String],
) -> Result<Vec<Sample>> {
    let table = if table.has_column("model") {
        table.filter("model", "hgmp")?
    } else {
        table.clone()
    };
    if table.rows.is_empty() {
        return Err("input has no model rows to test".into());
    }
    if !columns.is_empty() {
        return columns
            .iter()
            .map(|c| Ok((c.clone(), table.numeric(c)?)))
            .collect();
    }
    let key = match group_by {
        Some(k) => k.to_string(),
        None => table
            .axis_columns()
            .into_iter()
            .next()
            .ok_or("no swept parameter to group by; pass --group-by or --columns")?,
    };
    Ok(table.group_by(&key, metric)?)
}

fn pick_pair<'a>(samples: &'a [Sample], pair: &[String]) -> Result<(&'a Sample, &'a Sample)> {
    let find = |label: &str| {
        samples
            .iter()
            .find(|(k, _)| k == label)
            .ok_or_else(|| format!("no sample labelled {label:?}"))
    };
    match (pair, samples) {
        ([a, b], _) => Ok((find(a)?, find(b)?)),
        ([], [a, b]) => Ok((a, b)),
        ([], _) => Err(format!(
            "a t-test needs exactly two samples, found {}; choose with --pair",
            samples.len()
        )
        .into()),
        _ => Err("--pair takes two labels".into()),
    }
}

fn print_test(r: &TestResult) {
    println!("statistic={}", r.statistic);
    match r.df2 {
        Some(d2) => println!("df={},{}", r.df, d2),
        None => println!("df={}", r.df),
    }
    println!("p_value={}", r.p_value);
    println!("critical_value={}", r.critical_value);
    println!("alpha={}", r.alpha);
    println!("reject={}", r.reject);
    if r.degenerate {
        println!("degenerate=true");
    }
}
