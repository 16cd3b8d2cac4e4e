//! `biglp` — low-rank label propagation from the command line.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use biglp_core::glnp;
use biglp_core::harness::{
    self, run_experiment, run_experiment_on, Dataset, DatasetFormat, ExperimentConfig, Method,
};
use biglp_core::labelprop::{self, LabelState};
use biglp_core::nystrom::{self, KernelParams};
use biglp_core::preprocess;
use biglp_core::runtime::{RowPartitionedMatrix, WorkerGroup};

#[derive(Parser)]
#[command(
    name = "biglp",
    version,
    about = "Scalable semi-supervised learning via low-rank label propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Svmlight,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DatasetFormat::Csv,
            FormatArg::Svmlight => DatasetFormat::Svmlight,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PropagateMode {
    Iterative,
    Closed,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment described by a key=value config file.
    Run {
        /// Path to the config file (keys mirror the experiment settings).
        #[arg(long)]
        config: PathBuf,
        /// Directory for report.txt, accuracy.csv and convergence.csv.
        #[arg(long, default_value = "biglp-out")]
        out_dir: PathBuf,
        /// Override the config's worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build a low-rank factor and write it as a CSV matrix.
    Approx {
        #[arg(long)]
        input: PathBuf,
        /// Input format; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<FormatArg>,
        /// glnp-mul | glnp-apgd | nystrom-random | nystrom-kmeans
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// RBF width; seeded median heuristic when omitted.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Work on a seeded row subsample of this size.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = 5)]
        kmeans_iters: usize,
        #[arg(long, default_value_t = 1e-12)]
        pinv_tol: f64,
        /// Optimizer iteration budget (GLNP methods).
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// Optimizer tolerance (GLNP methods).
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Output CSV for the factor (one row per sample).
        #[arg(long, default_value = "factor.csv")]
        output: PathBuf,
        /// Optional per-iteration trace CSV (GLNP methods).
        #[arg(long)]
        convergence: Option<PathBuf>,
    },
    /// Propagate labels through a saved factor. The factor is first
    /// normalized so the propagation map contracts.
    Propagate {
        /// Factor CSV produced by `biglp approx`.
        #[arg(long)]
        factor: PathBuf,
        /// Initial labels, one -1/0/+1 per line.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = PropagateMode::Iterative)]
        mode: PropagateMode,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Output file, one score per line.
        #[arg(long, default_value = "scores.csv")]
        output: PathBuf,
    },
    /// K-nearest-neighbor baseline accuracy over seeded trials.
    Knn {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<FormatArg>,
        #[arg(long, default_value_t = 0.1)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 5)]
        neighbors: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        subsample: Option<usize>,
        /// Optional directory for report.txt and accuracy.csv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            workers,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let report = run_experiment(&cfg)?;
            report.write_files(&out_dir)?;
            print!("{}", report.to_text());
            println!("out_dir={}", out_dir.display());
            Ok(())
        }
        Command::Approx {
            input,
            format,
            method,
            k,
            sigma,
            seed,
            workers,
            subsample,
            kmeans_iters,
            pinv_tol,
            max_iter,
            tol,
            output,
            convergence,
        } => {
            let method: Method = method.parse()?;
            let dataset = load(&input, format)?;
            let dataset = match subsample {
                Some(rows) => dataset.subsample(rows, seed)?,
                None => dataset,
            };
            let group = WorkerGroup::new(workers)?;
            let part = RowPartitionedMatrix::partition(&group, dataset.x.view())?;

            let (factor, records) = match method {
                Method::GlnpMul | Method::GlnpApgd => {
                    let shifted = preprocess::par_shift(&group, &part)?.to_dense();
                    let result = match method {
                        Method::GlnpMul => {
                            glnp::multiplicative(shifted.view(), k, max_iter, tol, seed)?
                        }
                        _ => {
                            let params = glnp::ApgdParams {
                                max_iter,
                                tol,
                                ..Default::default()
                            };
                            glnp::apgd(shifted.view(), k, &params, seed)?
                        }
                    };
                    (result.factor, result.records)
                }
                Method::NystromRandom | Method::NystromKmeans => {
                    let sigma = sigma.unwrap_or_else(|| {
                        nystrom::median_heuristic_sigma(dataset.x.view(), 1000, seed)
                    });
                    let params = KernelParams::new(sigma)?;
                    let landmarks = match method {
                        Method::NystromRandom => {
                            nystrom::sample_random(&group, &part, k, seed)?
                        }
                        _ => nystrom::sample_kmeans(&group, &part, k, kmeans_iters, seed)?,
                    };
                    println!("sigma={sigma:.6e}");
                    let f = nystrom::factor(&group, &part, &landmarks, &params, pinv_tol)?;
                    (f.to_dense(), Vec::new())
                }
                other => {
                    return Err(format!("`approx` needs a factorization method, got {other}").into())
                }
            };

            write_matrix_csv(&factor, &output)?;
            if let Some(path) = convergence {
                let mut buf = Vec::new();
                glnp::write_convergence_csv(&records, &mut buf)?;
                std::fs::write(path, buf)?;
            }
            let stats = group.comm_stats();
            println!("rows={}", factor.nrows());
            println!("k={}", factor.ncols());
            println!("comm_bytes_total={}", stats.total_bytes());
            println!("factor={}", output.display());
            Ok(())
        }
        Command::Propagate {
            factor,
            labels,
            alpha,
            mode,
            max_iter,
            tol,
            seed,
            workers,
            output,
        } => {
            let raw = read_matrix_csv(&factor)?;
            let f0 = read_labels(&labels)?;
            let group = WorkerGroup::new(workers)?;
            let part = RowPartitionedMatrix::partition(&group, raw.view())?;
            let fbar = preprocess::par_normalize(&group, &part)?;
            let scores = match mode {
                PropagateMode::Closed => {
                    labelprop::closed_form(fbar.to_dense().view(), &f0, alpha)?
                }
                PropagateMode::Iterative => {
                    let state = LabelState::new(f0, alpha)?;
                    let outcome =
                        labelprop::iterate(&group, &fbar, &state, max_iter, tol, seed)?;
                    println!("iterations={}", outcome.iterations);
                    println!("converged={}", outcome.converged);
                    outcome.scores
                }
            };
            let mut text = String::new();
            for s in &scores {
                let _ = writeln!(text, "{s:.17e}");
            }
            std::fs::write(&output, text)?;
            let positive = scores.iter().filter(|&&s| s >= 0.0).count();
            println!("rows={}", scores.len());
            println!("predicted_positive={positive}");
            println!("predicted_negative={}", scores.len() - positive);
            println!("scores={}", output.display());
            Ok(())
        }
        Command::Knn {
            input,
            format,
            train_fraction,
            test_fraction,
            neighbors,
            trials,
            seed,
            subsample,
            out_dir,
        } => {
            let dataset = load(&input, format)?;
            let mut cfg = ExperimentConfig::new(&input, Method::Knn);
            cfg.train_fraction = train_fraction;
            cfg.test_fraction = test_fraction;
            cfg.neighbors = neighbors;
            cfg.trials = trials;
            cfg.seed = seed;
            cfg.subsample = subsample;
            let report = run_experiment_on(&cfg, &dataset)?;
            print!("{}", report.to_text());
            if let Some(dir) = out_dir {
                report.write_files(&dir)?;
                println!("out_dir={}", dir.display());
            }
            Ok(())
        }
    }
}

fn load(path: &PathBuf, format: Option<FormatArg>) -> Result<Dataset, biglp_core::Error> {
    let format = format
        .map(DatasetFormat::from)
        .unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Svmlight,
        });
    harness::load_dataset(path, format)
}

fn write_matrix_csv(m: &Array2<f64>, path: &PathBuf) -> std::io::Result<()> {
    let mut text = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                text.push(',');
            }
            let _ = write!(text, "{:.17e}", m[[i, j]]);
        }
        text.push('\n');
    }
    std::fs::write(path, text)
}

fn read_matrix_csv(path: &PathBuf) -> Result<Array2<f64>, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse()).collect();
        let row = row.map_err(|e| format!("{}:{}: {e}", path.display(), lineno + 1))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("{}:{}: ragged row", path.display(), lineno + 1).into());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format!("{}: empty matrix", path.display()).into());
    }
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((flat.len() / cols, cols), flat)?)
}

fn read_labels(path: &PathBuf) -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|e| format!("{}:{}: {e}", path.display(), lineno + 1))?;
        out.push(v);
    }
    Ok(out)
}
