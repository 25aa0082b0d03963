use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use seigmap::benchmark::{emit_table, run_protocol, AlphaGrid, TableFormat};
use seigmap::classify::{classify_rows, error_rate, fit_seeds, label_counts, ScoreMap};
use seigmap::data::{load_csv, make_arc, CsvOptions, Manifest};
use seigmap::embedding::embed;
use seigmap::{BenchConfig, EmbedParams, Embedding, PointCloud, Potential, PotentialSpec, VacModel};
use seigmap_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "seigmap", version, about = "Laplacian and Schroedinger eigenmaps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark protocol on a manifest dataset and print the table.
    Bench(BenchArgs),
    /// Embed a CSV point cloud.
    Embed(EmbedArgs),
    /// Classify an embedding with a model or with seeds fitted from groups.
    Classify(ClassifyArgs),
    /// Write the arc fixture, or sweep a pairwise endpoint potential over it.
    Arc(ArcArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: String,
    /// Training sizes; the dataset's defaults when omitted.
    #[arg(long = "train", num_args = 1.., value_delimiter = ',')]
    train: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    sigma: Vec<f64>,
    /// Explicit α grid instead of the heuristic one.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Skip the grid-on-training-only variant.
    #[arg(long)]
    no_honest: bool,
    /// Use the features as stored instead of standardizing them.
    #[arg(long)]
    raw_features: bool,
    #[arg(long, default_value = "data/manifest.toml")]
    manifest: PathBuf,
    /// Table destination; format from the extension unless `--format` is given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write the full result, per-repetition errors included, as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CsvArgs {
    /// Points as CSV, one row per point.
    #[arg(long)]
    input: PathBuf,
    /// Zero-based column holding class labels.
    #[arg(long)]
    label_column: Option<usize>,
    #[arg(long)]
    has_header: bool,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label_column,
            has_header: self.has_header,
            ..CsvOptions::default()
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    csv: CsvArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Potential spec as JSON: a list of `{type, indices, value}` terms.
    #[arg(long)]
    potential: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    embedding: PathBuf,
    /// Model JSON.
    #[arg(long, conflicts_with = "fit")]
    model: Option<PathBuf>,
    /// Groups JSON, `[["name", [indices...]], ...]`, fitted to class-mean seeds.
    #[arg(long, required_unless_present = "model")]
    fit: Option<PathBuf>,
    /// Norm threshold; overrides the model's.
    #[arg(long)]
    threshold: Option<f64>,
    /// Write the model used.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Labeled CSV to score against; class names must match the model's.
    #[arg(long, requires = "label_column")]
    truth: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<usize>,
    /// Dataset class that zero-class points count as.
    #[arg(long)]
    zero_as: Option<String>,
    /// One label per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ArcArgs {
    #[arg(long, default_value_t = 400)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    width: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    /// Write the points as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// α values to sweep with a pairwise potential on the first and last point.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    sweep: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    point_cap: Option<usize>,
    #[arg(long)]
    cors_origin: Option<String>,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn bench(a: BenchArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest).with_context(|| format!("loading {}", a.manifest.display()))?;
    let mut cfg = BenchConfig::for_dataset(&a.dataset);
    if !a.train.is_empty() {
        cfg.train_sizes = a.train;
    }
    if !a.k.is_empty() {
        cfg.k_grid = a.k;
    }
    if !a.sigma.is_empty() {
        cfg.sigma_grid = a.sigma;
    }
    if !a.alpha.is_empty() {
        cfg.alpha_grid = AlphaGrid::Explicit { values: a.alpha };
    }
    cfg.reps = a.reps;
    cfg.seed = a.seed;
    cfg.honest = !a.no_honest;
    cfg.standardize = !a.raw_features;
    let result = run_protocol(&manifest, &cfg)?;
    let format = match (a.format, &a.out) {
        (Some(Format::Csv), _) => TableFormat::Csv,
        (Some(Format::Text), _) => TableFormat::Text,
        (None, Some(p)) if p.extension().is_some_and(|e| e == "csv") => TableFormat::Csv,
        _ => TableFormat::Text,
    };
    write_or_print(a.out.as_deref(), &emit_table(&result, format))?;
    if a.out.is_some() {
        print!("{}", emit_table(&result, TableFormat::Text));
    }
    if let Some(p) = a.json {
        fs::write(&p, serde_json::to_string_pretty(&result)?).with_context(|| format!("writing {}", p.display()))?;
    }
    for c in result.cells.iter().filter(|c| !c.failures.is_empty()) {
        eprintln!(
            "{} train={} {}: {} failed repetitions, first: {}",
            c.dataset,
            c.train_size,
            c.method.name(),
            c.failures.len(),
            c.failures[0].1
        );
    }
    Ok(())
}

fn read_potential(path: Option<&Path>) -> Result<Potential> {
    let Some(p) = path else {
        return Ok(Potential::zero());
    };
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(PotentialSpec::from_json(&text)?.to_potential())
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    let (ds, report) = load_csv(&a.csv.input, &a.csv.options())?;
    if report.rows_dropped > 0 {
        eprintln!("dropped {} rows with missing values", report.rows_dropped);
    }
    let params = EmbedParams::new(a.k, a.sigma, a.n).with_potential(read_potential(a.potential.as_deref())?, a.alpha);
    let e = embed(&ds.points, &params)?;
    fs::write(&a.out, e.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    let eig: Vec<String> = e.eigenvalues.iter().map(|v| format!("{v:.6e}")).collect();
    println!("{} points, {} dimensions, eigenvalues [{}]", e.len(), e.dim(), eig.join(", "));
    println!("hash {}", e.content_hash());
    Ok(())
}

fn classify_cmd(a: ClassifyArgs) -> Result<()> {
    let text = fs::read_to_string(&a.embedding).with_context(|| format!("reading {}", a.embedding.display()))?;
    let e = Embedding::from_json(&text)?;
    let mut model = match (&a.model, &a.fit) {
        (Some(p), _) => VacModel::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        (None, Some(p)) => {
            let groups: Vec<(String, Vec<usize>)> =
                serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                    .with_context(|| format!("parsing groups in {}", p.display()))?;
            fit_seeds(&e, &groups)?
        }
        (None, None) => bail!("give --model or --fit"),
    };
    if let Some(t) = a.threshold {
        model.norm_threshold = t;
    }
    model.validate()?;
    let labels = classify_rows(&e.coords, &model)?;
    if let Some(p) = &a.save_model {
        fs::write(p, model.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut listing = String::new();
    for &l in &labels {
        let _ = writeln!(listing, "{}", model.label_name(l));
    }
    if let Some(p) = &a.out {
        fs::write(p, listing).with_context(|| format!("writing {}", p.display()))?;
    }
    let (zero, per, open) = label_counts(&labels, model.n_classes());
    for (name, count) in model.class_names.iter().zip(&per) {
        println!("{name}: {count}");
    }
    println!("zero-class: {zero}");
    println!("unclassified: {open}");

    if let Some(p) = &a.truth {
        let (ds, _) = load_csv(p, &CsvOptions::labeled(a.label_column.expect("required by clap")))?;
        if ds.len() != labels.len() {
            bail!("{} has {} rows, the embedding {}", p.display(), ds.len(), labels.len());
        }
        let map = model
            .class_names
            .iter()
            .map(|n| ds.class_id(n).with_context(|| format!("class {n:?} not in {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        let zero_class = a
            .zero_as
            .as_deref()
            .map(|n| ds.class_id(n).with_context(|| format!("class {n:?} not in {}", p.display())))
            .transpose()?;
        let predicted: Vec<_> = labels
            .iter()
            .map(|&l| match l {
                seigmap::Label::Class(c) => seigmap::Label::Class(map[c]),
                other => other,
            })
            .collect();
        let truth: Vec<usize> = ds.labels.iter().map(|l| l.expect("labeled rows")).collect();
        let rate = error_rate(
            &predicted,
            &truth,
            &ScoreMap {
                zero_class,
                unclassified: None,
            },
        )?;
        println!("error rate: {:.2}%", 100.0 * rate);
    }
    Ok(())
}

fn arc_cmd(a: ArcArgs) -> Result<()> {
    let points = make_arc(a.m, a.width, a.noise, a.seed)?;
    if let Some(p) = &a.out {
        fs::write(p, to_csv(&points)).with_context(|| format!("writing {}", p.display()))?;
    }
    if a.sweep.is_empty() {
        if a.out.is_none() {
            print!("{}", to_csv(&points));
        }
        return Ok(());
    }
    let last = a.m - 1;
    println!("{:>10}  {:>12}  {:>12}  {:>8}", "alpha", "endpoint gap", "diameter", "ratio");
    for &alpha in &a.sweep {
        let params = EmbedParams::new(a.k, a.sigma, 2).with_potential(Potential::pair(0, last), alpha);
        let e = embed(&points, &params)?;
        let gap = (e.coords.row(0) - e.coords.row(last)).norm();
        let diameter = diameter(&e);
        println!("{alpha:>10.4}  {gap:>12.4e}  {diameter:>12.4e}  {:>7.2}%", 100.0 * gap / diameter);
    }
    Ok(())
}

fn diameter(e: &Embedding) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            d = d.max((e.coords.row(i) - e.coords.row(j)).norm());
        }
    }
    d
}

fn to_csv(points: &PointCloud) -> String {
    let mut s = String::new();
    for row in points.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn serve(a: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let mut cfg = ServiceConfig::from_env().map_err(anyhow::Error::msg)?;
    if let Some(v) = a.port {
        cfg.port = v;
    }
    if let Some(v) = a.data_dir {
        cfg.data_dir = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    if let Some(v) = a.point_cap {
        cfg.point_cap = v;
    }
    if a.cors_origin.is_some() {
        cfg.cors_origin = a.cors_origin;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(seigmap_service::serve(cfg))?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Bench(a) => bench(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Arc(a) => arc_cmd(a),
        Command::Serve(a) => serve(a),
    }
}
