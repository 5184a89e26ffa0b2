use lcam::*;
use lcam::attacks::*;
use lcam::treegame::*;
use std::time::Instant;

fn main() {
    // TVD between YES/NO observable distributions at k=2.
    let p2 = build_params(64, 2, 256, 2, Variant::FullHierarchy, World::Yes, 7).unwrap();
    let t0 = Instant::now();
    let tvd = yes_no_observable_tvd(&p2, 10_000, 200, 5151).unwrap();
    println!("TVD: {:?} ({:?})", tvd, t0.elapsed());

    // Bad-event frequency at k=2, subtree sizes <= Q=20.
    let report = bad_event_experiment(&p2, ExpandPolicy::RandomNode, 1000, 20, 99).unwrap();
    println!("bad_event: with_crucial={} bad={} freq={:.4} (bound 8*Q^2/d^2 = {:.4})",
        report.trials_with_crucial, report.bad_event_count, report.bad_event_freq,
        8.0 * 400.0 / (256.0f64 * 256.0));

    // Mixer bad-path band at small trees.
    for size in [10u32, 20] {
        let r = mixer_hit_experiment(&p2, ExpandPolicy::RandomNode, 1000, size..=size, 1.05, 7).unwrap();
        println!("mixer size {size}: bad_freq={:.4} vs band {:.4}", r.bad_path_freq, 8.0 * size as f64 / 256.0);
    }

    // Distinguisher at N=1024 flagship-style params.
    let p8 = build_params(1024, 8, 64, 4, Variant::FullHierarchy, World::Yes, 7).unwrap();
    let budget = budget_of(&p8, 2, 2, 1.0);
    println!("distinguisher budget: {budget}");
    let t0 = Instant::now();
    let r = referee_exact_distinguisher(&p8, 40, 77).unwrap();
    println!("referee_exact: acc={:.3} ({:?})", r.accuracy, t0.elapsed());
    for strat in [Strategy::CoinFlip, Strategy::RandomWalk, Strategy::GreedyEstimate] {
        let t0 = Instant::now();
        let r = world_distinguisher(&p8, &strat, budget, 40, 77).unwrap();
        println!("{}: acc={:.3} mean_q={:.0} ({:?})", r.strategy, r.accuracy, r.mean_queries, t0.elapsed());
    }
}
