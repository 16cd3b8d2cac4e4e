//! End-to-end experiment orchestration: load, split, factor, normalize,
//! propagate, classify, report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, FullLpKernel, Method};
use super::{load_dataset, split_train_test, Dataset, Split};
use crate::baselines::{self, BaselineKernel, NeighborQuery};
use crate::error::{Error, Result};
use crate::glnp::{self, IterationRecord};
use crate::labelprop::{self, LabelState};
use crate::nystrom::{self, KernelParams};
use crate::preprocess;
use crate::runtime::{CommStats, RowPartitionedMatrix, WorkerGroup};

/// Wall-clock seconds spent in one pipeline phase, summed over trials.
#[derive(Debug, Clone)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

/// Experiment output. The numeric fields are deterministic functions of
/// the configuration and the dataset bytes; wall-clock timings are
/// reported separately and excluded from [`Report::key_values`].
#[derive(Debug, Clone)]
pub struct Report {
    pub dataset_name: String,
    pub rows: usize,
    pub cols: usize,
    pub method: Method,
    pub k: usize,
    pub sigma_used: Option<f64>,
    pub alpha: f64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub comm: CommStats,
    pub timings: Vec<PhaseTiming>,
    /// Optimizer trace of the first trial (GLNP methods only).
    pub convergence: Vec<IterationRecord>,
}

impl Report {
    /// Deterministic portion of the report as ordered key=value pairs.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("dataset".to_string(), self.dataset_name.clone()),
            ("rows".to_string(), self.rows.to_string()),
            ("cols".to_string(), self.cols.to_string()),
            ("method".to_string(), self.method.to_string()),
            ("k".to_string(), self.k.to_string()),
            (
                "sigma".to_string(),
                self.sigma_used
                    .map(|s| format!("{s:.17e}"))
                    .unwrap_or_else(|| "none".into()),
            ),
            ("alpha".to_string(), format!("{}", self.alpha)),
            ("train_fraction".to_string(), format!("{}", self.train_fraction)),
            ("test_fraction".to_string(), format!("{}", self.test_fraction)),
            ("trials".to_string(), self.trials.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("workers".to_string(), self.workers.to_string()),
            ("mean_accuracy".to_string(), format!("{:.17e}", self.mean_accuracy)),
            ("std_accuracy".to_string(), format!("{:.17e}", self.std_accuracy)),
            (
                "comm_bytes_total".to_string(),
                self.comm.total_bytes().to_string(),
            ),
            (
                "comm_bytes_allreduce".to_string(),
                self.comm.allreduce_bytes.to_string(),
            ),
            (
                "comm_bytes_broadcast".to_string(),
                self.comm.broadcast_bytes.to_string(),
            ),
            (
                "comm_bytes_gather".to_string(),
                self.comm.gather_bytes.to_string(),
            ),
        ];
        for (t, acc) in self.accuracies.iter().enumerate() {
            kv.push((format!("accuracy_trial_{t}"), format!("{acc:.17e}")));
        }
        kv
    }

    /// Full report text: deterministic keys plus `time_*` keys.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.key_values() {
            let _ = writeln!(out, "{k}={v}");
        }
        for t in &self.timings {
            let _ = writeln!(out, "time_{}_seconds={:.6}", t.phase, t.seconds);
        }
        out
    }

    /// Writes `report.txt`, `accuracy.csv` and (for GLNP methods)
    /// `convergence.csv` into `dir`.
    pub fn write_files(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;

        let mut acc = String::from("trial,accuracy\n");
        for (t, a) in self.accuracies.iter().enumerate() {
            let _ = writeln!(acc, "{t},{a:.17e}");
        }
        std::fs::write(dir.join("accuracy.csv"), acc)?;

        if !self.convergence.is_empty() {
            let mut buf = Vec::new();
            glnp::write_convergence_csv(&self.convergence, &mut buf)?;
            std::fs::write(dir.join("convergence.csv"), buf)?;
        }
        Ok(())
    }
}

fn phase<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Phase {
        phase: name,
        source: Box::new(e),
    })
}

struct PhaseClock {
    totals: BTreeMap<&'static str, f64>,
}

impl PhaseClock {
    fn new() -> Self {
        PhaseClock {
            totals: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, name: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.totals.entry(name).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }

    fn into_timings(self) -> Vec<PhaseTiming> {
        self.totals
            .into_iter()
            .map(|(phase, seconds)| PhaseTiming {
                phase: phase.to_string(),
                seconds,
            })
            .collect()
    }
}

fn rows_subset(x: ArrayView2<'_, f64>, indices: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((indices.len(), x.ncols()), |(i, j)| x[[indices[i], j]])
}

/// Runs one experiment: per trial, split the labels, build the factor for
/// the configured method, normalize, propagate and score on the held-out
/// rows. Aggregates accuracy over trials together with phase timings and
/// collective-communication volume.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let dataset = phase("load", load_dataset(&config.dataset, config.format))?;
    run_experiment_on(config, &dataset)
}

/// [`run_experiment`] with an already loaded dataset (used by tests and
/// by callers that share one dataset across many configurations).
pub fn run_experiment_on(config: &ExperimentConfig, dataset: &Dataset) -> Result<Report> {
    config.validate()?;
    let mut clock = PhaseClock::new();
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let sigma_seed = master.random::<u64>();
    let subsample_seed = master.random::<u64>();

    let owned;
    let data: &Dataset = match config.subsample {
        Some(rows) if rows < dataset.rows() => {
            owned = phase("subsample", dataset.subsample(rows, subsample_seed))?;
            &owned
        }
        _ => dataset,
    };

    let group = WorkerGroup::new(config.workers)?;
    let needs_sigma = matches!(
        config.method,
        Method::NystromRandom | Method::NystromKmeans
    ) || (config.method == Method::FullLp && config.full_lp_kernel == FullLpKernel::Rbf);
    let sigma_used = if needs_sigma {
        Some(config.sigma.unwrap_or_else(|| {
            clock.time("sigma_heuristic", || {
                nystrom::median_heuristic_sigma(data.x.view(), 1000, sigma_seed)
            })
        }))
    } else {
        None
    };

    let mut accuracies = Vec::with_capacity(config.trials);
    let mut convergence: Vec<IterationRecord> = Vec::new();

    for trial in 0..config.trials {
        let split_seed = master.random::<u64>();
        let factor_seed = master.random::<u64>();
        let lp_seed = master.random::<u64>();

        let split = phase(
            "split",
            split_train_test(
                &data.y,
                config.test_fraction,
                config.train_fraction,
                split_seed,
            ),
        )?;

        let (scores_on_test, records) = match config.method {
            Method::Knn => {
                let predicted = clock.time("knn", || -> Result<Vec<i8>> {
                    let train_idx: Vec<usize> = (0..data.rows())
                        .filter(|&i| split.f0[i] != 0.0)
                        .collect();
                    let train_x = rows_subset(data.x.view(), &train_idx);
                    let train_y: Vec<i8> = train_idx.iter().map(|&i| data.y[i]).collect();
                    let nq = NeighborQuery::new(train_x, train_y, config.neighbors)?;
                    let test_x = rows_subset(data.x.view(), &split.test_indices());
                    Ok(baselines::knn_predict_batch(test_x.view(), &nq))
                });
                (phase("knn", predicted)?, Vec::new())
            }
            Method::FullLp => {
                let kernel = match config.full_lp_kernel {
                    FullLpKernel::Rbf => BaselineKernel::Rbf(KernelParams::new(
                        sigma_used.expect("sigma computed for rbf"),
                    )?),
                    FullLpKernel::Linear => BaselineKernel::Linear,
                };
                let x_dense = match config.full_lp_kernel {
                    FullLpKernel::Linear => {
                        let part = RowPartitionedMatrix::partition(&group, data.x.view())?;
                        phase("shift", clock.time("shift", || preprocess::par_shift(&group, &part)))?
                            .to_dense()
                    }
                    FullLpKernel::Rbf => data.x.to_owned(),
                };
                let f = phase(
                    "propagate",
                    clock.time("propagate", || {
                        baselines::full_lp(
                            x_dense.view(),
                            &split.f0,
                            config.alpha,
                            &kernel,
                            config.lp_max_iter,
                            config.lp_tol,
                        )
                    }),
                )?;
                (labelprop::classify(&f, &split.test_mask), Vec::new())
            }
            Method::GlnpMul | Method::GlnpApgd => {
                let part = RowPartitionedMatrix::partition(&group, data.x.view())?;
                let shifted = phase(
                    "shift",
                    clock.time("shift", || preprocess::par_shift(&group, &part)),
                )?;
                let x_shifted = shifted.to_dense();
                let result = phase(
                    "factor",
                    clock.time("factor", || match config.method {
                        Method::GlnpMul => glnp::multiplicative(
                            x_shifted.view(),
                            config.k,
                            config.glnp_max_iter,
                            config.glnp_tol,
                            factor_seed,
                        ),
                        _ => glnp::apgd(
                            x_shifted.view(),
                            config.k,
                            &config.apgd_params(),
                            factor_seed,
                        ),
                    }),
                )?;
                let f_part = RowPartitionedMatrix::partition(&group, result.factor.view())?;
                let scores = propagate_lowrank(
                    &group,
                    &f_part,
                    &split,
                    config,
                    lp_seed,
                    &mut clock,
                )?;
                (
                    labelprop::classify(&scores, &split.test_mask),
                    result.records,
                )
            }
            Method::NystromRandom | Method::NystromKmeans => {
                let part = RowPartitionedMatrix::partition(&group, data.x.view())?;
                let params = KernelParams::new(sigma_used.expect("sigma computed"))?;
                let landmarks = phase(
                    "sample",
                    clock.time("sample", || match config.method {
                        Method::NystromRandom => {
                            nystrom::sample_random(&group, &part, config.k, factor_seed)
                        }
                        _ => nystrom::sample_kmeans(
                            &group,
                            &part,
                            config.k,
                            config.kmeans_iters,
                            factor_seed,
                        ),
                    }),
                )?;
                let factor = phase(
                    "factor",
                    clock.time("factor", || {
                        nystrom::factor(&group, &part, &landmarks, &params, config.pinv_tol)
                    }),
                )?;
                let scores =
                    propagate_lowrank(&group, &factor, &split, config, lp_seed, &mut clock)?;
                (labelprop::classify(&scores, &split.test_mask), Vec::new())
            }
        };

        let truth: Vec<i8> = split.test_indices().iter().map(|&i| data.y[i]).collect();
        let acc = phase("classify", baselines::accuracy(&scores_on_test, &truth))?;
        accuracies.push(acc);
        if trial == 0 {
            convergence = records;
        }
    }

    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let std = if accuracies.len() > 1 {
        let var = accuracies
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / (accuracies.len() - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };

    Ok(Report {
        dataset_name: data.name.clone(),
        rows: data.rows(),
        cols: data.cols(),
        method: config.method,
        k: config.k,
        sigma_used,
        alpha: config.alpha,
        train_fraction: config.train_fraction,
        test_fraction: config.test_fraction,
        trials: config.trials,
        seed: config.seed,
        workers: config.workers,
        accuracies,
        mean_accuracy: mean,
        std_accuracy: std,
        comm: group.comm_stats(),
        timings: clock.into_timings(),
        convergence,
    })
}

fn propagate_lowrank(
    group: &WorkerGroup,
    factor: &RowPartitionedMatrix,
    split: &Split,
    config: &ExperimentConfig,
    lp_seed: u64,
    clock: &mut PhaseClock,
) -> Result<Vec<f64>> {
    let normalized = phase(
        "normalize",
        clock.time("normalize", || preprocess::par_normalize(group, factor)),
    )?;
    let state = LabelState::new(split.f0.clone(), config.alpha)?;
    let outcome = phase(
        "propagate",
        clock.time("propagate", || {
            labelprop::iterate(
                group,
                &normalized,
                &state,
                config.lp_max_iter,
                config.lp_tol,
                lp_seed,
            )
        }),
    )?;
    Ok(outcome.scores)
}
