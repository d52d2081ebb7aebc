//! Likelihood and held-out scores of the approximation against full-scale,
//! block-independent, local and exact competitors.
//!
//! `cargo run --release --example compare_competitors`

use mra::cli::{compare_at, split_holdout, Split};
use mra::config::{Competitor, ExperimentConfig};
use mra::oracle;
use mra::*;

fn main() -> Result<()> {
    let model = CovarianceModel::matern15(0.95, 0.05, 0.05)?;
    let cfg = ExperimentConfig {
        competitors: vec![
            Competitor::Exact,
            Competitor::DlExact,
            Competitor::Mra,
            Competitor::FsaFast,
            Competitor::FsaSlow,
            Competitor::Block,
            Competitor::Local,
        ],
        ..ExperimentConfig::default()
    };
    let n = 1920;
    let s = Locations::grid_1d(n, 0.0, 1.0);
    let y = oracle::simulate_1d_circulant(&model, n, 1.0 / n as f64, 21)?;
    let (_, test) = split_holdout(&(0..n).collect::<Vec<_>>(), 0.1, 21);
    let split = Split::new(&s, &y, &test);

    let rows = compare_at(&cfg, &model, &s, &y, Some(&split), &Executor::serial());
    println!("{:<9} {:<6} {:>12} {:>10} {:>8} {:>8}", "method", "status", "loglik", "vs mra", "rmspe", "crps");
    let f = |v: Option<f64>, p: usize| v.map(|v| format!("{v:.p$}")).unwrap_or_else(|| "-".into());
    for r in rows {
        println!(
            "{:<9} {:<6} {:>12} {:>10} {:>8} {:>8}",
            r.competitor,
            r.status,
            f(r.loglik, 3),
            f(r.loglik_diff, 3),
            f(r.rmspe, 4),
            f(r.crps, 4)
        );
    }
    Ok(())
}
