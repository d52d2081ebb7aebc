//! Log-likelihood of the approximation against the exact value on a regular
//! grid, where the exact value comes from the Durbin–Levinson recursion.
//!
//! `cargo run --release --example loglik_vs_exact`

use std::time::Instant;

use mra::config::{auto_depth, PartitionSpec};
use mra::inference::loglikelihood_with;
use mra::oracle;
use mra::*;

fn main() -> Result<()> {
    let model = CovarianceModel::matern15(0.95, 0.05, 0.05)?;
    let exec = Executor::serial();
    println!("{:>7} {:>3} {:>14} {:>14} {:>9} {:>9}", "n", "M", "exact", "mra - exact", "t_exact", "t_mra");
    for n in [480, 1920, 7680] {
        let h = 1.0 / n as f64;
        let y = oracle::simulate_1d_circulant(&model, n, h, 1)?;
        let t0 = Instant::now();
        let exact = oracle::durbin_levinson_loglik(&oracle::grid_acvf(&model, n, h), &y)?;
        let t_exact = t0.elapsed().as_secs_f64();

        let depth = auto_depth(n, 30, 4);
        let spec = PartitionSpec { branching: Some(vec![4; depth]), r: 30, ..PartitionSpec::default() };
        let tree = spec.build_tree(Locations::grid_1d(n, 0.0, 1.0), Some(y.clone()))?;
        let t0 = Instant::now();
        let ll = loglikelihood_with(&tree, &model, &y, &exec)?;
        let t_mra = t0.elapsed().as_secs_f64();
        println!("{n:>7} {depth:>3} {exact:>14.4} {:>14.4} {t_exact:>9.4} {t_mra:>9.4}", ll - exact);
    }
    Ok(())
}
