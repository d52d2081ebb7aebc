//! Builds a two-dimensional partition, places knots and prints its shape.
//!
//! `cargo run --example partition_basics`

use mra::cli::partition_summary;
use mra::{Domain, KnotStrategy, Locations, PartitionTree, SplitPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mra::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = Locations::empty(2);
    for _ in 0..2000 {
        s.push(&[rng.random::<f64>(), rng.random::<f64>()]);
    }

    // J = 4 children per region, M = 3 levels below the root
    let tree = PartitionTree::build(Domain::unit(2), &[4, 4, 4], SplitPolicy::CycleAxes)?
        .assign_locations(s, None)?
        .place_knots(&KnotStrategy::equidistant(16))?;

    println!("{}", serde_json::to_string_pretty(&partition_summary(&tree)).unwrap());

    let leaf = tree.leaf_id(0);
    let r = tree.region(leaf);
    println!("first leaf {} spans {:?}..{:?} and holds {} points", r.path, r.lower, r.upper, tree.leaf_obs(0).len());
    for id in tree.ancestors(leaf) {
        println!("  level {} region {} has {} knots", tree.region(id).level, tree.region(id).path, tree.knots(id).len());
    }
    Ok(())
}
