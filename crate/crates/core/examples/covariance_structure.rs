//! The covariance implied by the approximation: exact within a leaf, exact
//! on the diagonal, and positive semi-definite overall.
//!
//! `cargo run --example covariance_structure`

use mra::oracle::dense_covariance;
use mra::prior::{compute_prior, dense_mra_cov_matrix_with};
use mra::*;

fn main() -> Result<()> {
    let model = CovarianceModel::matern15(1.0, 0.2, 0.0)?;
    let s = Locations::grid_1d(120, 0.0, 1.0);
    let tree = PartitionTree::build(Domain::unit(1), &[2, 2, 2], SplitPolicy::CycleAxes)?
        .assign_locations(s.clone(), None)?
        .place_knots(&KnotStrategy::equidistant(4))?;
    let prior = compute_prior(&tree, &model)?;
    let cm = dense_mra_cov_matrix_with(&prior, &tree, &model, &s, false, 1000)?;
    let c0 = dense_covariance(&model, &s)?;

    let leaf_of: Vec<usize> = s.iter().map(|p| tree.locate(p).unwrap()).collect();
    let (mut within, mut across) = (0.0f64, 0.0f64);
    for i in 0..s.len() {
        for j in 0..s.len() {
            let d = (cm[(i, j)] - c0[(i, j)]).abs();
            if leaf_of[i] == leaf_of[j] {
                within = within.max(d);
            } else {
                across = across.max(d);
            }
        }
    }
    let min_eig = cm.clone().symmetric_eigenvalues().min();
    println!("max |C_M - C_0| within leaves {within:.2e}, across leaves {across:.2e}");
    println!("smallest eigenvalue of C_M {min_eig:.2e}");
    Ok(())
}
