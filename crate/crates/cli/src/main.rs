use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sidl::experiment::config::{parse_list, parse_seeds, parse_synthetic, synthetic_dataset};
use sidl::experiment::{
    render_report, run_experiment, run_sweep, write_synthetic, Algorithm, DatasetSpec, ExperimentConfig,
    InitKind, SweepParam,
};
use sidl::{Error, Result};

#[derive(Parser)]
#[command(name = "sidl", version, about = "Structured dictionary learning experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset and its ground truth.
    Gen {
        /// e.g. `n=20,N=500,L=10,q=3,s=4,snr=30,seed=1`
        #[arg(long)]
        synthetic: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit one or more algorithms for every seed.
    Run(RunArgs),
    /// Repeat a run over the values of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// snr, sparsity, support or blocks
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values; an SNR sweep defaults to 10,15,20,25,30,40
        /// dB over seeds 0..20.
        #[arg(long)]
        values: Option<String>,
    },
    /// Print the summary of a run or sweep directory.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Comma-separated: cdla, ucirc, ucdla_block, uconv, wdla.
    #[arg(long)]
    algo: Option<String>,
    /// Synthetic dataset, e.g. `n=20,N=500,L=10,q=3,s=4,snr=30`.
    #[arg(long, group = "data")]
    synthetic: Option<String>,
    /// ECG trace (SIMX or single-column CSV); synthetic when no file is given.
    #[arg(long, group = "data", num_args = 0..=1)]
    ecg: Option<Option<PathBuf>>,
    /// Directory of PGM images; procedural images when none is given.
    #[arg(long, group = "data", num_args = 0..=1)]
    images: Option<Option<PathBuf>>,
    /// Training matrix, one signal per column (SIMX or CSV).
    #[arg(long, group = "data")]
    matrix: Option<PathBuf>,
    /// ECG segment length.
    #[arg(long)]
    segment: Option<usize>,
    /// Image patch side.
    #[arg(long)]
    patch: Option<usize>,
    /// Number of blocks L.
    #[arg(short = 'L', long)]
    blocks: Option<usize>,
    /// Sparsity s.
    #[arg(short, long)]
    s: Option<usize>,
    /// Kernel or filter length.
    #[arg(short, long)]
    n: Option<usize>,
    /// Wavelet stages.
    #[arg(short, long)]
    m: Option<usize>,
    /// Wavelet initialization: svd, haar, d4 or random.
    #[arg(long)]
    init: Option<String>,
    /// Iteration cap K.
    #[arg(long, short = 'K')]
    iters: Option<usize>,
    /// One seed, a list `1,2,3` or a range `0..10`.
    #[arg(long, alias = "seed")]
    seeds: Option<String>,
    /// Code only with the first q shifts of each block.
    #[arg(long)]
    mask: Option<usize>,
    /// Correlation needed to count a kernel as recovered.
    #[arg(long)]
    threshold: Option<f64>,
    /// Always run all K iterations.
    #[arg(long)]
    no_early_stop: bool,
    /// Output directory (default `out`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn dataset(&self) -> Result<Option<DatasetSpec>> {
        if let Some(text) = &self.synthetic {
            return synthetic_dataset(text, None).map(Some);
        }
        if let Some(path) = &self.ecg {
            return Ok(Some(DatasetSpec::Ecg {
                path: path.clone(),
                segment: self.segment.unwrap_or(64),
                length: 64 * 2000,
            }));
        }
        if let Some(dir) = &self.images {
            return Ok(Some(DatasetSpec::Images {
                dir: dir.clone(),
                patch: self.patch.unwrap_or(8),
                count: 6,
                size: 128,
            }));
        }
        Ok(self.matrix.clone().map(|path| DatasetSpec::Matrix { path }))
    }

    fn config(&self) -> Result<ExperimentConfig> {
        let algorithms = self.algo.as_deref().map(parse_list::<Algorithm>).transpose()?;
        let dataset = self.dataset()?;
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => {
                let first = algorithms
                    .as_ref()
                    .and_then(|a| a.first().copied())
                    .ok_or_else(|| Error::Config("give --algo or --config".into()))?;
                let data = dataset.clone().ok_or_else(|| {
                    Error::Config(
                        "give a dataset (--synthetic, --ecg, --images or --matrix) or --config".into(),
                    )
                })?;
                ExperimentConfig::new(first, data)
            }
        };
        if let Some(a) = algorithms {
            if a.is_empty() {
                return Err(Error::Config("--algo is empty".into()));
            }
            cfg.algorithms = a;
        }
        if let Some(d) = dataset {
            cfg.dataset = d;
        }
        cfg.blocks = self.blocks.or(cfg.blocks);
        cfg.sparsity = self.s.or(cfg.sparsity);
        cfg.support = self.n.or(cfg.support);
        cfg.stages = self.m.or(cfg.stages);
        if let Some(i) = &self.init {
            cfg.init = i.parse::<InitKind>()?;
        }
        cfg.iterations = self.iters.unwrap_or(cfg.iterations);
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        cfg.mask_shifts = self.mask.or(cfg.mask_shifts);
        cfg.recovery_threshold = self.threshold.unwrap_or(cfg.recovery_threshold);
        if self.no_early_stop {
            cfg.early_stop = false;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen { synthetic, out } => {
            write_synthetic(&parse_synthetic(&synthetic)?, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Run(args) => {
            let cfg = args.config()?;
            cfg.validate()?;
            let runs = run_experiment(&cfg)?;
            for r in &runs {
                let rec = r
                    .recovery
                    .as_ref()
                    .map_or(String::new(), |x| format!(" recovery={:.3}", x.rate));
                println!(
                    "{} seed={} iterations={} epsilon={:.6}%{rec}",
                    r.algorithm, r.seed, r.iterations, r.final_epsilon
                );
            }
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Sweep { run, param, values } => {
            let mut cfg = run.config()?;
            match (param, values) {
                (Some(p), v) => {
                    let values = v.as_deref().map(parse_list::<f64>).transpose()?;
                    let seeds_given = run.seeds.is_some() || cfg.seeds != [0];
                    cfg.set_sweep(p.parse::<SweepParam>()?, values, seeds_given)?;
                }
                (None, None) => {}
                (None, Some(_)) => return Err(Error::Config("--values needs --param".into())),
            }
            cfg.validate()?;
            run_sweep(&cfg)?;
            print!("{}", render_report(&cfg.output_dir)?);
        }
        Command::Report { dir } => print!("{}", render_report(&dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
