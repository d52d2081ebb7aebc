//! Command-line interface.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    auto_depth, Competitor, DataSpec, ExperimentConfig, Layout, PartitionSpec, PredictTarget, SimMethod, SimulationSpec,
    SubsetMode,
};
use crate::covariance::CovarianceModel;
use crate::error::{MraError, Result};
use crate::executor::Executor;
use crate::geometry::{Locations, PartitionTree};
use crate::inference::{fit, upward, FitOptions};
use crate::io::{fmt_f64, read_observations, read_table, write_columns, write_json, CsvOut, Stamp};
use crate::metrics::{score, ScoreReport};
use crate::oracle;
use crate::predict::predict;
use crate::prior::compute_prior_with;

#[derive(Debug, Parser)]
#[command(name = "mra", version, about = "Multi-resolution approximation of Gaussian processes")]
pub struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the tree sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write a CSV log of every scheduled task.
    #[arg(long, global = true)]
    pub trace_schedule: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a data set from the configured model.
    Simulate,
    /// M-RA log-likelihood of the data.
    Loglik {
        /// Observations CSV (`x1..xd, y`), overriding the config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also compute the exact log-likelihood.
        #[arg(long)]
        exact: bool,
        /// Save the prior factors to this file.
        #[arg(long)]
        save_prior: Option<PathBuf>,
    },
    /// Maximum-likelihood parameter estimates.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Hold the nugget at zero.
        #[arg(long)]
        zero_nugget: bool,
    },
    /// Posterior predictive means and standard deviations.
    Predict {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Prediction locations CSV (`x1..xd`), overriding the config.
        #[arg(long)]
        at: Option<PathBuf>,
        /// Number of joint predictive draws to write.
        #[arg(long)]
        samples: Option<usize>,
        /// Predict noisy observations rather than the process.
        #[arg(long)]
        with_nugget: bool,
    },
    /// Score predictions against held-out truth.
    Score {
        /// Predictions CSV (`x1..xd, mean, sd`).
        #[arg(long)]
        pred: PathBuf,
        /// Truth CSV (`x1..xd, y`).
        #[arg(long)]
        truth: PathBuf,
    },
    /// Compare likelihood approximations across data sizes.
    Compare,
    /// Time the M-RA and the dense likelihood over a size ladder.
    Bench,
    /// Summarize the partition for the data.
    PartitionInfo {
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
    exec: Executor,
    stamp: Stamp,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn model(&self) -> Result<CovarianceModel> {
        self.cfg.model.build()
    }

    fn data(&self, override_path: Option<&Path>) -> Result<(Locations, Vec<f64>)> {
        if let Some(p) = override_path {
            return read_observations(p);
        }
        match &self.cfg.data {
            Some(DataSpec::Csv(p)) => read_observations(p),
            Some(DataSpec::Simulate(spec)) => simulate_data(&self.model()?, &self.cfg.partition, spec, self.seed),
            None => Err(MraError::Config("no data source: set data in the config or pass --data".into())),
        }
    }
}

/// Parses arguments and runs the selected command.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = Some(o.clone());
    }
    if cli.workers == 0 {
        return Err(MraError::InvalidArgument("--workers must be at least 1".into()));
    }
    let exec = if cli.trace_schedule.is_some() {
        Executor::new(cli.workers).with_trace()
    } else {
        Executor::new(cli.workers)
    };
    let stamp = Stamp { config_hash: cfg.hash(), seed: cfg.seed };
    let ctx = Ctx {
        seed: cfg.seed,
        out: cfg.output.clone().unwrap_or_else(|| PathBuf::from("out")),
        cfg,
        exec,
        stamp,
    };
    std::fs::create_dir_all(&ctx.out)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&ctx)?,
        Command::Loglik { data, exact, save_prior } => {
            cmd_loglik(&ctx, data.as_deref(), *exact, save_prior.as_deref())?
        }
        Command::Fit { data, zero_nugget } => cmd_fit(&ctx, data.as_deref(), *zero_nugget)?,
        Command::Predict { data, at, samples, with_nugget } => {
            cmd_predict(&ctx, data.as_deref(), at.as_deref(), *samples, *with_nugget)?
        }
        Command::Score { pred, truth } => cmd_score(&ctx, pred, truth)?,
        Command::Compare => cmd_compare(&ctx)?,
        Command::Bench => cmd_bench(&ctx)?,
        Command::PartitionInfo { data } => cmd_partition_info(&ctx, data.as_deref())?,
    }
    if let Some(p) = &cli.trace_schedule {
        ctx.exec.write_trace_csv(p)?;
    }
    Ok(())
}

/// Simulates observations from `model` according to `spec`.
pub fn simulate_data(
    model: &CovarianceModel,
    partition: &PartitionSpec,
    spec: &SimulationSpec,
    seed: u64,
) -> Result<(Locations, Vec<f64>)> {
    let domain = partition.domain(spec.dim)?;
    let s = match spec.layout {
        Layout::Grid => {
            if spec.dim != 1 {
                return Err(MraError::Config("grid layout is 1-D only".into()));
            }
            Locations::grid_1d(spec.n, domain.lower()[0], domain.upper()[0])
        }
        Layout::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut s = Locations::empty(spec.dim);
            for _ in 0..spec.n {
                let p: Vec<f64> =
                    (0..spec.dim).map(|j| rng.random_range(domain.lower()[j]..domain.upper()[j])).collect();
                s.push(&p);
            }
            s
        }
    };
    let circulant = match spec.method {
        SimMethod::Circulant => {
            if spec.layout != Layout::Grid {
                return Err(MraError::Config("circulant simulation needs the grid layout".into()));
            }
            true
        }
        SimMethod::Dense => false,
        SimMethod::Auto => spec.layout == Layout::Grid,
    };
    let y = if circulant {
        let spacing = (domain.upper()[0] - domain.lower()[0]) / spec.n as f64;
        oracle::simulate_1d_circulant(model, spec.n, spacing, seed)?
    } else {
        oracle::simulate_dense(model, &s, seed)?
    };
    Ok((s, y))
}

fn cmd_simulate(ctx: &Ctx) -> Result<()> {
    let spec = match &ctx.cfg.data {
        Some(DataSpec::Simulate(s)) => s.clone(),
        _ => return Err(MraError::Config("simulate needs data.simulate in the config".into())),
    };
    let model = ctx.model()?;
    let (s, y) = simulate_data(&model, &ctx.cfg.partition, &spec, ctx.seed)?;
    write_columns(&ctx.path("data.csv"), &ctx.stamp, &s, &["y"], &[&y])?;
    write_json(
        &ctx.path("data.seed.json"),
        &json!({ "seed": ctx.seed, "config_hash": ctx.stamp.config_hash, "n": spec.n, "model": ctx.cfg.model }),
    )?;
    println!("wrote {} observations to {}", y.len(), ctx.path("data.csv").display());
    Ok(())
}

fn cmd_loglik(ctx: &Ctx, data: Option<&Path>, exact: bool, save_prior: Option<&Path>) -> Result<()> {
    let model = ctx.model()?;
    let (s, y) = ctx.data(data)?;
    let tree = ctx.cfg.partition.build_tree(s.clone(), Some(y.clone()))?;
    let t0 = Instant::now();
    let prior = compute_prior_with(&tree, &model, &ctx.exec)?;
    let post = upward(&tree, &prior, &y, &ctx.exec)?;
    let seconds = t0.elapsed().as_secs_f64();
    if let Some(p) = save_prior {
        prior.save(p, &model)?;
    }
    let mut report = json!({
        "config_hash": ctx.stamp.config_hash,
        "seed": ctx.seed,
        "n": y.len(),
        "depth": tree.depth(),
        "loglik": post.loglik(),
        "seconds": seconds,
    });
    if exact {
        let t0 = Instant::now();
        let ll = exact_loglik_capped(&model, &s, &y, &ctx.cfg)?;
        report["exact_loglik"] = json!(ll);
        report["exact_seconds"] = json!(t0.elapsed().as_secs_f64());
    }
    write_json(&ctx.path("loglik.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Exact log-likelihood: dense when within the cap, otherwise Durbin–Levinson
/// on regular 1-D grids.
fn exact_loglik_capped(model: &CovarianceModel, s: &Locations, y: &[f64], cfg: &ExperimentConfig) -> Result<f64> {
    if s.len() <= cfg.caps.dense {
        return oracle::DenseGp::with_cap(model, s, cfg.caps.dense)?.loglik(y);
    }
    match regular_spacing(s) {
        Some(h) if s.len() <= cfg.caps.durbin_levinson => {
            oracle::durbin_levinson_loglik(&oracle::grid_acvf(model, s.len(), h), y)
        }
        _ => Err(MraError::OracleCap { size: s.len(), cap: cfg.caps.dense }),
    }
}

/// Spacing of a sorted, equispaced 1-D point list.
pub fn regular_spacing(s: &Locations) -> Option<f64> {
    if s.dim() != 1 || s.len() < 2 {
        return None;
    }
    let x = s.coords();
    let h = x[1] - x[0];
    if h <= 0.0 {
        return None;
    }
    let tol = 1e-9 * h.max(x[x.len() - 1].abs());
    x.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= tol).then_some(h)
}

fn cmd_fit(ctx: &Ctx, data: Option<&Path>, zero_nugget: bool) -> Result<()> {
    let init = ctx.model()?;
    let (s, y) = ctx.data(data)?;
    let tree = ctx.cfg.partition.build_tree(s, Some(y.clone()))?;
    let opts = FitOptions {
        tol: ctx.cfg.fit.tol,
        max_iter: ctx.cfg.fit.max_iter,
        zero_nugget: zero_nugget || ctx.cfg.fit.zero_nugget,
        ..FitOptions::default()
    };
    let res = fit(&tree, &y, &init, &opts, &ctx.exec)?;
    let mut out = CsvOut::create(
        &ctx.path("fit_trace.csv"),
        &ctx.stamp,
        &["iteration", "variance", "range", "nugget", "loglik"].map(String::from),
    )?;
    for r in &res.trace {
        out.row([r.iteration.to_string(), fmt_f64(r.variance), fmt_f64(r.range), fmt_f64(r.nugget), fmt_f64(r.loglik)])?;
    }
    out.finish()?;
    let report = json!({
        "config_hash": ctx.stamp.config_hash,
        "seed": ctx.seed,
        "variance": res.model.variance,
        "range": res.model.range,
        "nugget": res.model.nugget,
        "loglik": res.loglik,
        "iterations": res.iterations,
        "evaluations": res.evaluations,
        "converged": res.converged,
        "seconds": res.seconds,
    });
    write_json(&ctx.path("fit.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_predict(
    ctx: &Ctx,
    data: Option<&Path>,
    at: Option<&Path>,
    samples: Option<usize>,
    with_nugget: bool,
) -> Result<()> {
    let model = ctx.model()?;
    let (s, y) = ctx.data(data)?;
    let spec = ctx.cfg.predict.clone();
    let sp = match (at, spec.as_ref().map(|p| &p.at)) {
        (Some(p), _) => read_table(p)?.locations()?,
        (None, Some(PredictTarget::Csv(p))) => read_table(p)?.locations()?,
        (None, Some(PredictTarget::Grid(n))) => {
            let d = ctx.cfg.partition.domain(1)?;
            Locations::grid_1d(*n, d.lower()[0], d.upper()[0])
        }
        (None, None) => return Err(MraError::Config("no prediction locations: pass --at or set predict.at".into())),
    };
    let samples = samples.or(spec.as_ref().map(|p| p.samples)).unwrap_or(0);
    let with_nugget = with_nugget || spec.as_ref().is_some_and(|p| p.with_nugget);
    let tree = ctx.cfg.partition.build_tree(s, Some(y.clone()))?;
    let prior = compute_prior_with(&tree, &model, &ctx.exec)?;
    let post = upward(&tree, &prior, &y, &ctx.exec)?;
    let pd = predict(&tree, &model, &prior, &post, &sp, &ctx.exec)?;
    let (mean, var) = pd.marginals(with_nugget);
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    write_columns(&ctx.path("predictions.csv"), &ctx.stamp, &sp, &["mean", "sd"], &[&mean, &sd])?;
    if samples > 0 {
        let draws = pd.sample(samples, ctx.seed, with_nugget)?;
        let header: Vec<String> = (1..=sp.len()).map(|j| format!("y{j}")).collect();
        let mut out = CsvOut::create(&ctx.path("samples.csv"), &ctx.stamp, &header)?;
        for row in draws.row_iter() {
            out.row(row.iter().map(|v| fmt_f64(*v)))?;
        }
        out.finish()?;
    }
    println!("wrote {} predictions to {}", sp.len(), ctx.path("predictions.csv").display());
    Ok(())
}

fn cmd_score(ctx: &Ctx, pred: &Path, truth: &Path) -> Result<()> {
    let p = read_table(pred)?;
    let t = read_table(truth)?;
    let (ps, ts) = (p.locations()?, t.locations()?);
    if ps.len() != ts.len() || ps.coords().iter().zip(ts.coords()).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(MraError::InvalidArgument("prediction and truth locations differ".into()));
    }
    let col = |tab: &crate::io::Table, name: &str, path: &Path| {
        tab.column(name).ok_or_else(|| MraError::Config(format!("{}: missing {name} column", path.display())))
    };
    let report = score(&col(&p, "mean", pred)?, &col(&p, "sd", pred)?, &col(&t, "y", truth)?)?;
    #[derive(Serialize)]
    struct Stamped<'a> {
        config_hash: &'a str,
        seed: u64,
        #[serde(flatten)]
        report: &'a ScoreReport,
    }
    let stamped = Stamped { config_hash: &ctx.stamp.config_hash, seed: ctx.seed, report: &report };
    write_json(&ctx.path("score.json"), &stamped)?;
    println!("{}", serde_json::to_string_pretty(&stamped)?);
    Ok(())
}

/// Partition used by a likelihood competitor at data size `n`, or `None`
/// for competitors that are not tree based.
pub fn competitor_partition(c: Competitor, n: usize, base: &PartitionSpec) -> Option<PartitionSpec> {
    let blocks_for = |n: usize| ((n as f64 / 240.0).round() as usize).max(2);
    let one_level = |blocks: usize, r: usize| PartitionSpec {
        branching: Some(vec![blocks]),
        r,
        r_per_level: None,
        knots: crate::config::KnotKind::Equidistant,
        knots_file: None,
        ..base.clone()
    };
    match c {
        Competitor::Mra => Some(base.clone()),
        Competitor::FsaFast => Some(one_level(blocks_for(n), 240)),
        Competitor::FsaSlow => Some(one_level(64, (n / 64).max(1))),
        Competitor::Block => Some(PartitionSpec { r_per_level: Some(vec![0]), ..one_level(blocks_for(n), 0) }),
        Competitor::Exact | Competitor::DlExact | Competitor::Local => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub n: usize,
    pub competitor: String,
    pub status: String,
    pub loglik: Option<f64>,
    pub loglik_diff: Option<f64>,
    pub loglik_ratio: Option<f64>,
    pub seconds: Option<f64>,
    pub rmspe: Option<f64>,
    pub crps: Option<f64>,
    pub log_score: Option<f64>,
}

/// Subset of `n` points from a full data set of size `total`.
pub fn subset_indices(total: usize, n: usize, mode: SubsetMode) -> Vec<usize> {
    match mode {
        SubsetMode::IncreasingDomain => (0..n.min(total)).collect(),
        SubsetMode::FixedDomain => {
            let stride = total as f64 / n as f64;
            (0..n.min(total)).map(|i| ((i as f64 + 0.5) * stride).floor() as usize).collect()
        }
    }
}

/// Held-out split of a data set: training points and test points.
pub struct Split {
    pub train_s: Locations,
    pub train_y: Vec<f64>,
    pub test_s: Locations,
    pub test_y: Vec<f64>,
}

impl Split {
    pub fn new(s: &Locations, y: &[f64], test: &[usize]) -> Self {
        let mut held = vec![false; s.len()];
        for &i in test {
            held[i] = true;
        }
        let train: Vec<usize> = (0..s.len()).filter(|&i| !held[i]).collect();
        Self {
            train_s: s.subset(&train),
            train_y: train.iter().map(|&i| y[i]).collect(),
            test_s: s.subset(test),
            test_y: test.iter().map(|&i| y[i]).collect(),
        }
    }
}

fn tree_fit(
    spec: &PartitionSpec,
    model: &CovarianceModel,
    s: &Locations,
    y: &[f64],
    exec: &Executor,
) -> Result<(PartitionTree, crate::prior::PriorFactors, crate::inference::PosteriorFactors)> {
    let tree = spec.build_tree(s.clone(), Some(y.to_vec()))?;
    let prior = compute_prior_with(&tree, model, exec)?;
    let post = upward(&tree, &prior, y, exec)?;
    Ok((tree, prior, post))
}

type Outcome = (Option<f64>, f64, Option<(Vec<f64>, Vec<f64>)>);

fn run_competitor(
    c: Competitor,
    cfg: &ExperimentConfig,
    model: &CovarianceModel,
    s: &Locations,
    y: &[f64],
    split: Option<&Split>,
    exec: &Executor,
) -> Result<Outcome> {
    let n = s.len();
    let t0 = Instant::now();
    match c {
        Competitor::Exact => {
            let ll = oracle::DenseGp::with_cap(model, s, cfg.caps.dense)?.loglik(y)?;
            let secs = t0.elapsed().as_secs_f64();
            let pred = match split {
                Some(sp) => Some(oracle::DenseGp::with_cap(model, &sp.train_s, cfg.caps.dense)?.krige(&sp.train_y, &sp.test_s)?),
                None => None,
            };
            Ok((Some(ll), secs, pred))
        }
        Competitor::DlExact => {
            if n > cfg.caps.durbin_levinson {
                return Err(MraError::OracleCap { size: n, cap: cfg.caps.durbin_levinson });
            }
            let h = regular_spacing(s).ok_or_else(|| MraError::Unsupported("irregular".into()))?;
            let ll = oracle::durbin_levinson_loglik(&oracle::grid_acvf(model, n, h), y)?;
            Ok((Some(ll), t0.elapsed().as_secs_f64(), None))
        }
        Competitor::Local => {
            let sp = split.ok_or_else(|| MraError::Unsupported("no holdout".into()))?;
            let k = cfg.compare.neighbours.min(sp.train_s.len());
            let pred = oracle::local_krige_with(model, &sp.train_s, &sp.train_y, &sp.test_s, k, exec.workers())?;
            Ok((None, t0.elapsed().as_secs_f64(), Some(pred)))
        }
        Competitor::Mra | Competitor::FsaFast | Competitor::FsaSlow | Competitor::Block => {
            let cap = if c == Competitor::FsaSlow { cfg.caps.fsa_slow.min(cfg.caps.mra) } else { cfg.caps.mra };
            if n > cap {
                return Err(MraError::OracleCap { size: n, cap });
            }
            let spec = competitor_partition(c, n, &cfg.partition).expect("tree competitor");
            let (_, _, post) = tree_fit(&spec, model, s, y, exec)?;
            let secs = t0.elapsed().as_secs_f64();
            let pred = match split {
                Some(sp) => {
                    let spec = competitor_partition(c, sp.train_s.len(), &cfg.partition).expect("tree competitor");
                    let (tree, prior, post) = tree_fit(&spec, model, &sp.train_s, &sp.train_y, exec)?;
                    Some(predict(&tree, model, &prior, &post, &sp.test_s, exec)?.marginals(false))
                }
                None => None,
            };
            Ok((Some(post.loglik()), secs, pred))
        }
    }
}

/// Runs every competitor at one data size. Log-likelihoods use all of `s`;
/// prediction scores refit on the training part of `split` and predict its
/// test part.
pub fn compare_at(
    cfg: &ExperimentConfig,
    model: &CovarianceModel,
    s: &Locations,
    y: &[f64],
    split: Option<&Split>,
    exec: &Executor,
) -> Vec<CompareRow> {
    let n = s.len();
    let mut rows: Vec<CompareRow> = Vec::new();
    for &c in &cfg.competitors {
        let mut row = CompareRow {
            n,
            competitor: c.name().to_string(),
            status: "ok".into(),
            loglik: None,
            loglik_diff: None,
            loglik_ratio: None,
            seconds: None,
            rmspe: None,
            crps: None,
            log_score: None,
        };
        match run_competitor(c, cfg, model, s, y, split, exec) {
            Ok((ll, secs, pred)) => {
                row.loglik = ll;
                row.seconds = Some(secs);
                if let (Some((mean, var)), Some(sp)) = (pred, split) {
                    // held-out values are noisy observations
                    let sd: Vec<f64> = var.iter().map(|v| (v + model.nugget).sqrt()).collect();
                    if let Ok(rep) = score(&mean, &sd, &sp.test_y) {
                        row.rmspe = Some(rep.rmspe);
                        row.crps = Some(rep.crps_mean);
                        row.log_score = Some(rep.log_score);
                    }
                }
            }
            Err(MraError::OracleCap { .. }) => row.status = "skipped: cap".into(),
            Err(MraError::Unsupported(why)) => row.status = format!("skipped: {why}"),
            Err(e) => row.status = format!("error: {e}"),
        }
        rows.push(row);
    }
    let reference = rows
        .iter()
        .find(|r| r.competitor == "mra" && r.loglik.is_some())
        .or_else(|| rows.iter().find(|r| r.loglik.is_some()))
        .and_then(|r| r.loglik);
    if let Some(refv) = reference {
        for r in &mut rows {
            if let Some(v) = r.loglik {
                let ls = crate::metrics::log_score(v, refv);
                r.loglik_diff = Some(ls.difference);
                r.loglik_ratio = Some(ls.ratio);
            }
        }
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn cmd_compare(ctx: &Ctx) -> Result<()> {
    let model = ctx.model()?;
    let cfg = &ctx.cfg;
    let sizes = cfg.compare.sizes.clone();
    let (s_all, y_all) = match (&cfg.data, sizes.last()) {
        (Some(DataSpec::Simulate(spec)), Some(&max)) => {
            let spec = SimulationSpec { n: spec.n.max(max), ..spec.clone() };
            simulate_data(&model, &cfg.partition, &spec, ctx.seed)?
        }
        _ => ctx.data(None)?,
    };
    let sizes = if sizes.is_empty() { vec![s_all.len()] } else { sizes };
    let mut rows = Vec::new();
    for &n in &sizes {
        let idx = subset_indices(s_all.len(), n, cfg.compare.subset);
        let mut part = cfg.clone();
        if cfg.compare.subset == SubsetMode::IncreasingDomain && s_all.dim() == 1 {
            let d = cfg.partition.domain(1)?;
            let upper = d.lower()[0] + (d.upper()[0] - d.lower()[0]) * n as f64 / s_all.len() as f64;
            part.partition.domain = Some(crate::config::DomainSpec { lower: d.lower().to_vec(), upper: vec![upper] });
        }
        let s = s_all.subset(&idx);
        let y: Vec<f64> = idx.iter().map(|&i| y_all[i]).collect();
        let (_, test) = split_holdout(&(0..n).collect::<Vec<_>>(), cfg.compare.holdout, ctx.seed);
        let split = (!test.is_empty()).then(|| Split::new(&s, &y, &test));
        rows.extend(compare_at(&part, &model, &s, &y, split.as_ref(), &ctx.exec));
    }
    let header = [
        "n", "competitor", "status", "loglik", "loglik_diff", "loglik_ratio", "seconds", "rmspe", "crps", "log_score",
    ]
    .map(String::from);
    let mut out = CsvOut::create(&ctx.path("compare.csv"), &ctx.stamp, &header)?;
    for r in &rows {
        out.row([
            r.n.to_string(),
            r.competitor.clone(),
            r.status.clone(),
            opt(r.loglik),
            opt(r.loglik_diff),
            opt(r.loglik_ratio),
            opt(r.seconds),
            opt(r.rmspe),
            opt(r.crps),
            opt(r.log_score),
        ])?;
    }
    out.finish()?;
    let summary = json!({ "config_hash": ctx.stamp.config_hash, "seed": ctx.seed, "rows": rows });
    write_json(&ctx.path("compare_summary.json"), &summary)?;
    for r in &rows {
        println!("n={:<8} {:<9} {:<14} loglik={}", r.n, r.competitor, r.status, opt(r.loglik));
    }
    Ok(())
}

/// Splits indices into training and held-out parts.
pub fn split_holdout(idx: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let k = (idx.len() as f64 * fraction).round() as usize;
    if k == 0 {
        return (idx.to_vec(), Vec::new());
    }
    let mut perm = idx.to_vec();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed)));
    let mut test = perm[..k].to_vec();
    let mut train = perm[k..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub seconds: f64,
    pub memory_bytes: usize,
}

/// Times the M-RA log-likelihood (prior plus upward sweep) on a 1-D grid.
pub fn bench_mra(model: &CovarianceModel, n: usize, r: usize, j: usize, repeats: usize, seed: u64, exec: &Executor) -> Result<BenchRow> {
    let (tree, y) = bench_tree(model, n, r, j, seed)?;
    let mut best = f64::INFINITY;
    let mut memory = 0;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        let prior = compute_prior_with(&tree, model, exec)?;
        let post = upward(&tree, &prior, &y, exec)?;
        best = best.min(t0.elapsed().as_secs_f64());
        memory = 8 * (prior.stored_floats() + post.stored_floats());
    }
    Ok(BenchRow { method: "mra".into(), n, seconds: best, memory_bytes: memory })
}

fn bench_tree(model: &CovarianceModel, n: usize, r: usize, j: usize, seed: u64) -> Result<(PartitionTree, Vec<f64>)> {
    let y = oracle::simulate_1d_circulant(model, n, 1.0 / n as f64, seed)?;
    let spec = PartitionSpec { branching: Some(vec![j; auto_depth(n, r, j)]), r, ..PartitionSpec::default() };
    Ok((spec.build_tree(Locations::grid_1d(n, 0.0, 1.0), Some(y.clone()))?, y))
}

/// Times the dense log-likelihood (matrix assembly plus Cholesky).
pub fn bench_dense(model: &CovarianceModel, n: usize, repeats: usize, seed: u64) -> Result<BenchRow> {
    let s = Locations::grid_1d(n, 0.0, 1.0);
    let y = oracle::simulate_1d_circulant(model, n, 1.0 / n as f64, seed)?;
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        oracle::exact_loglik(model, &s, &y)?;
        best = best.min(t0.elapsed().as_secs_f64());
    }
    Ok(BenchRow { method: "dense".into(), n, seconds: best, memory_bytes: 8 * n * n })
}

fn cmd_bench(ctx: &Ctx) -> Result<()> {
    let model = ctx.model()?;
    let b = &ctx.cfg.bench;
    let mut rows = Vec::new();
    for &n in &b.sizes {
        rows.push(bench_mra(&model, n, ctx.cfg.partition.r, ctx.cfg.partition.children, b.repeats, ctx.seed, &ctx.exec)?);
    }
    for &n in &b.dense_sizes {
        if n <= ctx.cfg.caps.dense {
            rows.push(bench_dense(&model, n, b.repeats, ctx.seed)?);
        }
    }
    let mut out = CsvOut::create(
        &ctx.path("bench.csv"),
        &ctx.stamp,
        &["method", "n", "seconds", "memory_bytes"].map(String::from),
    )?;
    for r in &rows {
        out.row([r.method.clone(), r.n.to_string(), fmt_f64(r.seconds), r.memory_bytes.to_string()])?;
    }
    out.finish()?;
    let slope = |method: &str, f: &dyn Fn(&BenchRow) -> f64| {
        let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.method == method).collect();
        (sel.len() >= 2).then(|| {
            log_log_slope(&sel.iter().map(|r| r.n as f64).collect::<Vec<_>>(), &sel.iter().map(|r| f(r)).collect::<Vec<_>>())
        })
    };
    let summary = json!({
        "config_hash": ctx.stamp.config_hash,
        "seed": ctx.seed,
        "mra_time_slope": slope("mra", &|r| r.seconds),
        "mra_memory_slope": slope("mra", &|r| r.memory_bytes as f64),
        "dense_time_slope": slope("dense", &|r| r.seconds),
        "rows": rows,
    });
    write_json(&ctx.path("bench_summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// Summary statistics of a partition tree.
pub fn partition_summary(tree: &PartitionTree) -> serde_json::Value {
    let counts: Vec<usize> = (0..tree.n_leaves()).map(|o| tree.leaf_obs(o).len()).collect();
    let levels: Vec<serde_json::Value> = (0..=tree.depth())
        .map(|m| {
            let ids = tree.level_ids(m);
            json!({ "level": m, "regions": ids.len(), "knots": tree.knots(ids.start).len() })
        })
        .collect();
    json!({
        "dim": tree.dim(),
        "depth": tree.depth(),
        "branching": tree.branching(),
        "regions": tree.n_regions(),
        "leaves": tree.n_leaves(),
        "observations": tree.n_obs(),
        "empty_leaves": counts.iter().filter(|&&c| c == 0).count(),
        "leaf_min": counts.iter().copied().min().unwrap_or(0),
        "leaf_max": counts.iter().copied().max().unwrap_or(0),
        "levels": levels,
    })
}

fn cmd_partition_info(ctx: &Ctx, data: Option<&Path>) -> Result<()> {
    let (s, y) = ctx.data(data)?;
    let tree = ctx.cfg.partition.build_tree(s, Some(y))?;
    let mut info = partition_summary(&tree);
    info["config_hash"] = json!(ctx.stamp.config_hash);
    info["seed"] = json!(ctx.seed);
    write_json(&ctx.path("partition_info.json"), &info)?;
    println!("{}", serde_json::to_string_pretty(&info)?);
    Ok(())
}
