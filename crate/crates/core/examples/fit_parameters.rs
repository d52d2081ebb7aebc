//! Maximum-likelihood estimation of variance, range and nugget.
//!
//! `cargo run --release --example fit_parameters`

use mra::config::PartitionSpec;
use mra::inference::{fit, FitOptions};
use mra::oracle;
use mra::*;

fn main() -> Result<()> {
    let truth = CovarianceModel::matern15(0.95, 0.05, 0.05)?;
    let n = 2048;
    let y = oracle::simulate_1d_circulant(&truth, n, 1.0 / n as f64, 2)?;
    let spec = PartitionSpec { r: 30, ..PartitionSpec::default() };
    let tree = spec.build_tree(Locations::grid_1d(n, 0.0, 1.0), Some(y.clone()))?;

    let start = CovarianceModel::matern15(0.5, 0.1, 0.1)?;
    let res = fit(&tree, &y, &start, &FitOptions::default(), &Executor::serial())?;
    for row in res.trace.iter().step_by(20) {
        println!("iter {:>4}  loglik {:>12.4}", row.iteration, row.loglik);
    }
    println!(
        "estimate: variance {:.4} range {:.4} nugget {:.4} (truth 0.95, 0.05, 0.05)",
        res.model.variance, res.model.range, res.model.nugget
    );
    println!("{} iterations, {} evaluations, {:.2} s", res.iterations, res.evaluations, res.seconds);
    Ok(())
}
