//! One-dimensional exponential covariance without nugget, with knots on the
//! boundaries between children. The 3-level approximation reproduces the
//! exact likelihood and kriging predictor; a one-level approximation of the
//! same cost does not.
//!
//! `cargo run --example toy_exactness`

use mra::inference::upward;
use mra::oracle::{self, DenseGp};
use mra::predict::predict;
use mra::prior::compute_prior;
use mra::*;

fn fit_predict(tree: &PartitionTree, model: &CovarianceModel, y: &[f64], sp: &Locations) -> Result<(f64, Vec<f64>)> {
    let exec = Executor::serial();
    let prior = compute_prior(tree, model)?;
    let post = upward(tree, &prior, y, &exec)?;
    let pd = predict(tree, model, &prior, &post, sp, &exec)?;
    Ok((post.loglik(), pd.marginals(false).0))
}

fn main() -> Result<()> {
    let model = CovarianceModel::exponential(1.0, 0.25, 0.0)?;
    let s = Locations::grid_1d(54, 0.0, 1.0);
    let y = oracle::simulate_dense(&model, &s, 11)?;
    let sp = Locations::grid_1d(200, 0.0, 1.0);

    let gp = DenseGp::new(&model, &s)?;
    let exact_ll = gp.loglik(&y)?;
    let (exact_mean, _) = gp.krige(&y, &sp)?;

    let three = PartitionTree::build(Domain::unit(1), &[3, 3, 3], SplitPolicy::CycleAxes)?
        .assign_locations(s.clone(), Some(y.clone()))?
        .place_knots(&KnotStrategy::child_boundaries(2))?;
    // one level with M * r = 6 knots and 9 blocks
    let one = PartitionTree::build(Domain::unit(1), &[9], SplitPolicy::CycleAxes)?
        .assign_locations(s, Some(y.clone()))?
        .place_knots(&KnotStrategy::equidistant(6))?;

    for (name, tree) in [("3-level", &three), ("1-level", &one)] {
        let (ll, mean) = fit_predict(tree, &model, &y, &sp)?;
        let dev = mean.iter().zip(&exact_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{name}: loglik {ll:.10} (exact {exact_ll:.10}), max |mean - kriging| = {dev:.2e}");
    }
    Ok(())
}
