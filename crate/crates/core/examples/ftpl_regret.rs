//! Follow-the-perturbed-leader over states against i.i.d. states and costs.
use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fairmdp::regulator::{FtplState, RegretTracker};
use fairmdp::{GroupFunction, GroupSet};

fn main() -> fairmdp::Result<()> {
    let rows = [[1, 1, 1, 0, 0, 0], [0, 1, 1, 1, 0, 0], [0, 0, 1, 1, 1, 0], [1, 0, 0, 0, 1, 1], [0, 1, 0, 1, 0, 1]];
    let groups = GroupSet::new(rows.iter().map(|r| GroupFunction::Explicit(r.iter().map(|&b| b == 1).collect())).collect())?;
    let features = vec![vec![]; 6];
    let membership = groups.membership(&features)?;
    let mean_cost = [0.9, 0.2, 0.5, 0.4, 0.7, 0.3];
    for t in [100usize, 1_000, 10_000, 100_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states = WeightedIndex::new([1.0; 6]).unwrap();
        let mut ftpl = FtplState::new(6, 25.0, t, 2)?;
        let mut tracker = RegretTracker::new(groups.len());
        for _ in 0..t {
            let s = rng.sample(&states);
            let c = if rng.gen::<f64>() < mean_cost[s] { 1.0 } else { 0.0 };
            let g = ftpl.step(&membership, s, c)?.group;
            tracker.record(&membership, g, s, c);
        }
        let bound = (8.0f64 * 216.0).sqrt() / (t as f64).sqrt();
        println!("T {t:>6}  regret/T {:.5}  bound {bound:.4}", tracker.average_regret());
    }
    Ok(())
}
