use lcam::*;
use lcam::treegame::*;
fn main() {
    let p2 = build_params(64, 2, 256, 2, Variant::FullHierarchy, World::Yes, 7).unwrap();
    for trials in [30_000u64] {
        for seed in [1u64, 9] {
            let tvd = yes_no_observable_tvd(&p2, trials, 200, seed).unwrap();
            println!("trials {trials} seed {seed}: tvd={:.4} outcomes={}", tvd.tvd, tvd.distinct_outcomes);
        }
    }
}
