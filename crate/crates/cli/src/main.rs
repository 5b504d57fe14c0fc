use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use prunekit::bench::{generate_benchmark, GeneratorSpec};
use prunekit::exec::{check_equivalent, execute, plan_physical, ExecConfig, QueryStats, Technique};
use prunekit::partition::{ingest_csv, write_csv, Schema};
use prunekit::plan::{Catalog, Plan};
use prunekit::sql::parse_sql;
use prunekit::stats_report::{flow_report, write_distribution_csv};
use prunekit::store::{load_catalog, save_table, TableMeta};
use prunekit::topk::ScanOrderStrategy;

#[derive(Parser)]
#[command(name = "prunekit", version, about = "Partition-pruning query engine")]
struct Cli {
    /// Catalog directory holding ingested tables.
    #[arg(long, global = true, default_value = "catalog")]
    catalog: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a CSV file as a partitioned table.
    Ingest {
        #[arg(long)]
        table: String,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        partition_rows: usize,
        /// Sort rows by these columns before partitioning (comma separated).
        #[arg(long, value_delimiter = ',')]
        sort_by: Option<Vec<String>>,
        #[arg(long, default_value = "")]
        null_token: String,
    },
    /// Run a query.
    Query(QueryArgs),
    /// Generate a synthetic dataset and query workload.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also run every query, writing stats to OUT/stats.
        #[arg(long)]
        run: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Summarize a directory of stats files.
    Report {
        #[arg(long)]
        stats_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-query ratio dump for plotting.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    FullSort,
    Random,
}

#[derive(clap::Args)]
struct QueryArgs {
    #[arg(long, conflicts_with = "plan", required_unless_present = "plan")]
    sql: Option<String>,
    /// Logical plan as JSON instead of SQL.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Print the plan with pruning annotations instead of running it.
    #[arg(long)]
    explain: bool,
    /// With --explain: print the physical plan as JSON.
    #[arg(long, requires = "explain")]
    json: bool,
    /// Print the logical plan as JSON and exit.
    #[arg(long)]
    print_plan: bool,
    /// Techniques to turn off: filter,limit,join,topk or all.
    #[arg(long, value_delimiter = ',')]
    disable: Vec<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "full-sort")]
    scan_order: Order,
    /// Record per-partition decisions in the stats.
    #[arg(long)]
    trace: bool,
    /// Compare the result against the unpruned reference executor.
    #[arg(long)]
    check: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<prunekit::Error> for Failure {
    fn from(e: prunekit::Error) -> Self {
        Failure {
            code: if e.is_user_error() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        prunekit::Error::from(e).into()
    }
}

fn user(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn parse_disabled(list: &[String]) -> Result<Vec<Technique>, Failure> {
    let mut out = Vec::new();
    for item in list.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        match item {
            "all" => out.extend(Technique::ALL),
            "none" => {}
            t => out.push(Technique::parse(t).ok_or_else(|| user(format!("unknown technique '{t}'")))?),
        }
    }
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(prunekit::Error::from)?;
    fs::write(path, text + "\n").map_err(|e| user(format!("{}: {e}", path.display())))
}

fn load(catalog: &Path) -> Result<Catalog, Failure> {
    Ok(load_catalog(catalog)?)
}

fn query(catalog_dir: &Path, a: QueryArgs) -> Result<(), Failure> {
    let catalog = load(catalog_dir)?;
    let plan: Plan = match (&a.sql, &a.plan) {
        (Some(sql), _) => parse_sql(sql, &catalog)?,
        (None, Some(p)) => {
            let plan: Plan = read_json(p)?;
            plan.schema(&catalog)?;
            plan
        }
        (None, None) => return Err(user("one of --sql or --plan is required")),
    };
    let mut config = ExecConfig {
        workers: a.workers.max(1),
        seed: a.seed,
        trace: a.trace,
        scan_order: match a.scan_order {
            Order::FullSort => ScanOrderStrategy::FullSort,
            Order::Random => ScanOrderStrategy::NoneRandom,
        },
        ..ExecConfig::default()
    };
    config.disabled.extend(parse_disabled(&a.disable)?);

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if a.print_plan {
        writeln!(out, "{}", serde_json::to_string_pretty(&plan).map_err(prunekit::Error::from)?)?;
        return Ok(());
    }
    if a.explain {
        let physical = plan_physical(&plan, &catalog, &config)?;
        if a.json {
            writeln!(out, "{}", serde_json::to_string_pretty(&physical).map_err(prunekit::Error::from)?)?;
        } else {
            write!(out, "{}", physical.explain())?;
        }
        return Ok(());
    }
    let (rows, mut stats) = execute(&plan, &catalog, &config)?;
    stats.label = a.sql.clone();
    if a.check {
        check_equivalent(&plan, &catalog, &rows).map_err(|m| Failure {
            code: 2,
            message: format!("result differs from the reference executor: {m}"),
        })?;
    }
    let schema = display_names(plan.schema(&catalog)?);
    write_csv(&mut out, &schema, &rows, "")?;
    if let Some(path) = &a.stats {
        write_json(path, &stats)?;
    }
    Ok(())
}

/// Drops the table qualifier from output columns whose bare name is unique.
fn display_names(mut schema: Schema) -> Schema {
    let bare = |n: &str| n.rsplit('.').next().unwrap_or(n).to_string();
    let names: Vec<String> = schema.columns.iter().map(|f| bare(&f.name)).collect();
    for (f, b) in schema.columns.iter_mut().zip(&names) {
        if names.iter().filter(|n| *n == b).count() == 1 {
            f.name = b.clone();
        }
    }
    schema
}

fn bench(spec: &Path, out: &Path, run: bool, workers: usize) -> Result<(), Failure> {
    let spec: GeneratorSpec = read_json(spec)?;
    spec.validate()?;
    let manifest = generate_benchmark(&spec, out)?;
    println!(
        "wrote {} tables and {} queries to {}",
        manifest.tables.len(),
        manifest.queries.len(),
        out.display()
    );
    if !run {
        return Ok(());
    }
    let catalog = load(&out.join("catalog"))?;
    let stats_dir = out.join("stats");
    fs::create_dir_all(&stats_dir)?;
    let config = ExecConfig {
        workers: workers.max(1),
        ..ExecConfig::default()
    };
    let mut all = Vec::new();
    for q in &manifest.queries {
        let plan = parse_sql(&q.sql, &catalog)?;
        let (_, mut stats) = execute(&plan, &catalog, &config)?;
        stats.label = Some(q.label.clone());
        write_json(&stats_dir.join(format!("{}.json", q.label)), &stats)?;
        println!(
            "{:<20} scanned {:>5} / {:<5} partitions  rows {}",
            q.label,
            stats.scanned(),
            stats.partitions_total(),
            stats.rows_out
        );
        all.push(stats);
    }
    write_json(&out.join("report.json"), &flow_report(&all))?;
    Ok(())
}

fn report(stats_dir: &Path, out: &Path, csv: Option<&Path>) -> Result<(), Failure> {
    let mut paths: Vec<PathBuf> = fs::read_dir(stats_dir)
        .map_err(|e| user(format!("{}: {e}", stats_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(user(format!("no stats files in {}", stats_dir.display())));
    }
    let stats = paths
        .iter()
        .map(|p| read_json::<QueryStats>(p))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(bad) = stats.iter().find(|s| s.version != prunekit::exec::STATS_VERSION) {
        return Err(user(format!("unsupported stats version {}", bad.version)));
    }
    let r = flow_report(&stats);
    write_json(out, &r)?;
    if let Some(csv) = csv {
        write_distribution_csv(&stats, fs::File::create(csv)?)?;
    }
    println!(
        "{} queries, {} of {} partitions pruned",
        r.queries, r.partitions_pruned, r.partitions_total
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest {
            table,
            csv,
            schema,
            partition_rows,
            sort_by,
            null_token,
        } => {
            let text = fs::read_to_string(&schema).map_err(|e| user(format!("{}: {e}", schema.display())))?;
            let schema = Schema::from_json(&text)?;
            let rows = ingest_csv(&csv, &schema, &null_token)?;
            let meta = TableMeta {
                name: table,
                partition_rows,
                sort_by,
            };
            let t = save_table(&cli.catalog, &meta, &schema, rows)?;
            println!(
                "{}: {} rows in {} partitions",
                t.name,
                t.num_rows(),
                t.partitions().len()
            );
            Ok(())
        }
        Command::Query(a) => query(&cli.catalog, a),
        Command::Bench {
            spec,
            out,
            run,
            workers,
        } => bench(&spec, &out, run, workers),
        Command::Report {
            stats_dir,
            out,
            csv,
        } => report(&stats_dir, &out, csv.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(2),
    }
}
