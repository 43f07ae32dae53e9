use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use histophenotype::pipeline::{self, parse_k_range, RunConfig};
use histophenotype::synth::study_fixture;
use histophenotype::Result;

/// Cell-network tissue phenotyping and survival analysis of whole-slide cell maps.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tile cell maps and write per-tile CF vectors to <out>/cf/.
    Tile(Common),
    /// Cluster CF vectors into phenotypes; writes model.json and assignments.csv.
    Phenotype(Common),
    /// Compute slide features; writes features.csv.
    Features(Common),
    /// Run the statistical analysis; writes report.json and km/.
    Analyze(Common),
    /// Write a synthetic study (cell maps, labels, clinical table).
    Synth {
        #[arg(long, default_value_t = 40)]
        slides: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage and write a manifest.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Plain `key = value` settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding <slide>.cells.csv and <slide>.labels.csv.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    clinical: Option<PathBuf>,
    /// Run the statistical analysis (needs --clinical).
    #[arg(long)]
    stats: bool,
    #[arg(long)]
    tile_size: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Range of k to scan, e.g. 2-10.
    #[arg(long)]
    k_range: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    quadrat_size: Option<f64>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.input {
            c.input = v;
        }
        if let Some(v) = self.clinical {
            c.clinical = Some(v);
        }
        c.stats |= self.stats;
        if let Some(v) = self.tile_size {
            c.tile_size = v;
        }
        if self.k.is_some() {
            c.k = self.k;
        }
        if let Some(v) = self.k_range {
            c.k_range = parse_k_range(&v)?;
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        if self.quadrat_size.is_some() {
            c.quadrat_size = self.quadrat_size;
        }
        if let Some(v) = self.bootstrap {
            c.bootstrap_replicates = v;
        }
        if let Some(v) = self.out {
            c.out = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { slides, seed, out } => {
            study_fixture(slides, seed)?.write_to(&out)?;
            println!("wrote {slides} slides to {}", out.display());
        }
        Command::Run(args) => {
            let c = args.resolve()?;
            let m = pipeline::run_pipeline(&c)?;
            println!("{}", pipeline::summarize(&m));
        }
        Command::Tile(args) => {
            let c = args.resolve()?;
            let ids = pipeline::with_pool(&c, || pipeline::stage_tile(&c, &c.out))??;
            println!("tiled {} slides", ids.len());
        }
        Command::Phenotype(args) => {
            let c = args.resolve()?;
            let r = pipeline::with_pool(&c, || pipeline::stage_phenotype(&c, &c.out))??;
            println!("k = {} over {} tiles", r.k, r.assignments.len());
        }
        Command::Features(args) => {
            let c = args.resolve()?;
            let t = pipeline::with_pool(&c, || pipeline::stage_features(&c, &c.out))??;
            println!("{} slides, {} features", t.rows.len(), t.columns.len());
        }
        Command::Analyze(args) => {
            let c = args.resolve()?;
            let r = pipeline::with_pool(&c, || pipeline::stage_analyze(&c, &c.out))??;
            println!(
                "analyzed {} features over {} patients",
                r.features.len(),
                r.n_patients
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
