//! Tree sweeps on several worker threads. Results are bitwise identical to
//! the serial run; the schedule trace shows which worker ran each task.
//!
//! `cargo run --release --example parallel_trace`

use mra::config::PartitionSpec;
use mra::inference::upward;
use mra::oracle;
use mra::prior::compute_prior_with;
use mra::*;

fn main() -> Result<()> {
    let model = CovarianceModel::matern15(0.95, 0.05, 0.05)?;
    let n = 7680;
    let y = oracle::simulate_1d_circulant(&model, n, 1.0 / n as f64, 3)?;
    let tree = PartitionSpec::default().build_tree(Locations::grid_1d(n, 0.0, 1.0), Some(y.clone()))?;

    let mut reference = None;
    for workers in [1, 2, 4] {
        let exec = Executor::new(workers).with_trace();
        let t0 = std::time::Instant::now();
        let prior = compute_prior_with(&tree, &model, &exec)?;
        let ll = upward(&tree, &prior, &y, &exec)?.loglik();
        let secs = t0.elapsed().as_secs_f64();
        let reference = *reference.get_or_insert(ll);
        let trace = exec.trace();
        let used: std::collections::BTreeSet<usize> = trace.iter().map(|t| t.worker).collect();
        println!(
            "workers {workers}: loglik {ll:.12} identical {} | {} tasks on workers {used:?} | {secs:.3} s",
            ll.to_bits() == reference.to_bits(),
            trace.len()
        );
        if workers == 4 {
            let path = std::env::temp_dir().join("mra_trace.csv");
            exec.write_trace_csv(&path)?;
            println!("trace written to {}", path.display());
        }
    }
    Ok(())
}
