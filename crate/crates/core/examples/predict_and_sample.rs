//! Posterior prediction on a grid: marginal means and intervals, a joint
//! covariance block and joint predictive draws.
//!
//! `cargo run --example predict_and_sample`

use mra::config::PartitionSpec;
use mra::inference::upward;
use mra::predict::predict;
use mra::prior::compute_prior;
use mra::oracle;
use mra::*;

fn main() -> Result<()> {
    let model = CovarianceModel::matern15(1.0, 0.1, 0.01)?;
    let all = Locations::grid_1d(600, 0.0, 1.0);
    let y_all = oracle::simulate_dense(&model, &all, 4)?;
    // drop the points in [0.4, 0.55) to leave a gap
    let keep: Vec<usize> = (0..all.len()).filter(|&i| !(0.4..0.55).contains(&all.point(i)[0])).collect();
    let s = all.subset(&keep);
    let y: Vec<f64> = keep.iter().map(|&i| y_all[i]).collect();

    let spec = PartitionSpec { branching: Some(vec![2; 4]), r: 12, ..PartitionSpec::default() };
    let tree = spec.build_tree(s, Some(y.clone()))?;
    let exec = Executor::serial();
    let prior = compute_prior(&tree, &model)?;
    let post = upward(&tree, &prior, &y, &exec)?;

    let sp = Locations::grid_1d(40, 0.0, 1.0);
    let pd = predict(&tree, &model, &prior, &post, &sp, &exec)?;
    let (mean, var) = pd.marginals(false);
    for i in (0..sp.len()).step_by(4) {
        let sd = var[i].sqrt();
        println!("x = {:.3}  mean {:>7.3}  95% [{:>7.3}, {:>7.3}]", sp.point(i)[0], mean[i], mean[i] - 1.96 * sd, mean[i] + 1.96 * sd);
    }

    let cov = pd.joint_covariance(false, 1000)?;
    println!("corr(x[16], x[17]) = {:.3}", cov[(16, 17)] / (cov[(16, 16)] * cov[(17, 17)]).sqrt());

    let draws = pd.sample(3, 99, false)?;
    println!("3 draws at x[18]: {:?}", draws.column(18).iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    Ok(())
}
