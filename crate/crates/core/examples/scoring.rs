//! Held-out scores for the approximation and for local kriging.
//!
//! `cargo run --release --example scoring`

use mra::cli::{split_holdout, Split};
use mra::config::PartitionSpec;
use mra::inference::upward;
use mra::metrics::{crps_normal, score};
use mra::predict::predict;
use mra::prior::compute_prior;
use mra::oracle;
use mra::*;

fn main() -> Result<()> {
    println!("CRPS of N(0, 1) at 0: {:.5}", crps_normal(0.0, 1.0, 0.0)?);

    let model = CovarianceModel::matern15(0.95, 0.05, 0.05)?;
    let n = 4096;
    let s = Locations::grid_1d(n, 0.0, 1.0);
    let y = oracle::simulate_1d_circulant(&model, n, 1.0 / n as f64, 8)?;
    let (_, test) = split_holdout(&(0..n).collect::<Vec<_>>(), 0.1, 8);
    let sp = Split::new(&s, &y, &test);

    let tree = PartitionSpec::default().build_tree(sp.train_s.clone(), Some(sp.train_y.clone()))?;
    let exec = Executor::serial();
    let prior = compute_prior(&tree, &model)?;
    let post = upward(&tree, &prior, &sp.train_y, &exec)?;
    let (mean, var) = predict(&tree, &model, &prior, &post, &sp.test_s, &exec)?.marginals(true);
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    println!("mra:   {:?}", score(&mean, &sd, &sp.test_y)?);

    let (mean, var) = oracle::local_krige(&model, &sp.train_s, &sp.train_y, &sp.test_s, 20)?;
    let sd: Vec<f64> = var.iter().map(|v| (v + model.nugget).sqrt()).collect();
    println!("local: {:?}", score(&mean, &sd, &sp.test_y)?);
    Ok(())
}
