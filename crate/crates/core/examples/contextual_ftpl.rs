//! Contextual FTPL over every monotone conjunction of six features, noise on
//! the coordinate-dropping separator.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fairmdp::groups::conjunction_separator;
use fairmdp::regulator::{CtxFtplState, RegretTracker};
use fairmdp::GroupSet;

fn main() -> fairmdp::Result<()> {
    let d = 6;
    let groups = GroupSet::all_conjunctions(d)?.with_separator(conjunction_separator(d)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let features: Vec<Vec<bool>> = (0..16).map(|_| (0..d).map(|_| rng.gen::<f64>() < 0.7).collect()).collect();
    let p: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
    let membership = groups.membership(&features)?;
    for t in [1_000usize, 10_000, 100_000] {
        let mut ftpl = CtxFtplState::new(&groups, &features, 25.0, t, 9)?;
        let mut tracker = RegretTracker::new(groups.len());
        for _ in 0..t {
            let s = rng.gen_range(0..16);
            let c = if rng.gen::<f64>() < p[s] { 1.0 } else { 0.0 };
            let g = ftpl.step(s, c)?.group;
            tracker.record(&membership, g, s, c);
        }
        println!("T {t:>6}  rate {:.5}  regret/T {:.5}", ftpl.rate(), tracker.average_regret());
    }
    Ok(())
}
