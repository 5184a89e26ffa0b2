//! Monte Carlo checks of the per-operation behavior: walk statistics,
//! layer tests, estimator concentration, distinguisher profiles, and the
//! tree-game rate bands.

use lcam::attacks::*;
use lcam::construction::{build_params, BlockLabel, ConstructionParams, Side, Variant, World};
use lcam::exact::hopcroft_karp;
use lcam::oracle::{new_oracle, Oracle, PublicId};
use lcam::realizer::{assemble_instance, repair_degrees, Instance};
use lcam::rng::derive_rng;
use lcam::treegame::{
    bad_event_experiment, mixer_hit_experiment, yes_no_observable_tvd, ExpandPolicy,
};
use num::ToPrimitive;
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;

fn flagship(world: World) -> ConstructionParams {
    build_params(4096, 8, 64, 4, Variant::FullHierarchy, world, 7).unwrap()
}

#[test]
fn repair_respects_the_lemma_bound_on_binomial_pairs() {
    // eta*rho = 16 per entry, lengths 256: the broken set stays within
    // 10 sqrt(sum) ln(n) in at least 99 of 100 trials.
    let mut within = 0;
    for trial in 0..100u64 {
        let mut rng = derive_rng(31, "lemma-bound", trial);
        let a: Vec<u32> = (0..256)
            .map(|_| (0..64).filter(|_| rng.gen::<f64>() < 0.25).count() as u32)
            .collect();
        let b: Vec<u32> = (0..256)
            .map(|_| (0..64).filter(|_| rng.gen::<f64>() < 0.25).count() as u32)
            .collect();
        let (hi, lo) = if a.iter().sum::<u32>() >= b.iter().sum::<u32>() {
            (a, b)
        } else {
            (b, a)
        };
        let out = repair_degrees(&hi, &lo).expect("binomial regime is repairable");
        let total = 256.0 * 16.0f64;
        let bound = 10.0 * total.sqrt() * (512.0f64).ln();
        if (out.broken.len() as f64) <= bound {
            within += 1;
        }
    }
    assert!(within >= 99, "only {within}/100 trials within the bound");
}

/// Uniform walk step on the oracle; returns the next vertex.
fn step(o: &mut Oracle, cur: PublicId, rng: &mut rand_chacha::ChaCha8Rng) -> PublicId {
    let slots = o.public_params().slots;
    loop {
        let i = rng.gen_range(1..=slots);
        if let Some(next) = o.query(cur, i).unwrap() {
            return next;
        }
    }
}

#[test]
fn hitting_times_separate_core_levels() {
    let params = flagship(World::Yes).with_variant(Variant::CoreOnly);
    let inst = Arc::new(assemble_instance(&params).unwrap());
    let (mut o, referee) = new_oracle(&inst, 5);
    o.set_recording(false);
    let find = |referee: &lcam::oracle::Referee, o: &Oracle, want: BlockLabel| {
        (0..inst.n())
            .map(|v| referee.public_of(o, v))
            .find(|&id| referee.label_of(o, id) == want)
            .unwrap()
    };
    let b1 = find(&referee, &o, BlockLabel::B { level: 1, side: Side::One });
    let bk = find(&referee, &o, BlockLabel::B { level: 8, side: Side::One });
    let mut rng = derive_rng(5, "sep", 0);
    let low = walk_hitting_profile(&mut o, b1, 1000, 20_000, u64::MAX, &mut rng)
        .unwrap()
        .guess;
    let high = walk_hitting_profile(&mut o, bk, 1000, 20_000, u64::MAX, &mut rng)
        .unwrap()
        .guess;
    assert!(low.timeouts == 0 && high.timeouts <= 5);
    let gap = high.mean() - low.mean();
    let se = low.mean_se() + high.mean_se();
    assert!(
        gap > 2.0 * se && gap > 0.0,
        "means {} vs {} (se {se})",
        low.mean(),
        high.mean()
    );
}

#[test]
fn walks_see_delusive_vertices_before_s_when_s_is_small() {
    // With s = 1 and a wide degree the descent to S is slow enough that
    // the delusive mass absorbs almost every walk first, wherever it
    // starts.
    let params = build_params(4096, 8, 256, 1, Variant::FullHierarchy, World::Yes, 3).unwrap();
    let inst = Arc::new(assemble_instance(&params).unwrap());
    let (mut o, referee) = new_oracle(&inst, 9);
    o.set_recording(false);
    let mut rng = derive_rng(11, "d-before-s", 0);
    let mut d_first = 0u32;
    let trials = 200u32;
    for _ in 0..trials {
        let mut cur = o.random_vertex();
        loop {
            let label = referee.label_of(&o, cur);
            if label.is_d() {
                d_first += 1;
                break;
            }
            if label.is_s() {
                break;
            }
            cur = step(&mut o, cur, &mut rng);
        }
    }
    let freq = d_first as f64 / trials as f64;
    assert!(freq >= 0.9, "D-before-S frequency {freq}");
}

#[test]
fn touched_broken_stays_within_the_claimed_rate() {
    let params = flagship(World::Yes);
    let instances: Vec<Arc<Instance>> = (0..4u64)
        .map(|s| Arc::new(assemble_instance(&params.with_seed(s)).unwrap()))
        .collect();
    let q = 200u64;
    let trials = 1000u64;
    let touched: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = &instances[(t % 4) as usize];
            let (mut o, referee) = new_oracle(inst, 5000 + t);
            o.set_recording(false);
            let mut rng = derive_rng(17, "broken-walk", t);
            let mut cur = o.random_vertex();
            while o.query_count() < q {
                let slots = o.public_params().slots;
                if let Some(next) = o.query(cur, rng.gen_range(1..=slots)).unwrap() {
                    cur = next;
                }
            }
            referee.touched_broken(&o) as u64
        })
        .sum();
    let freq = touched as f64 / trials as f64;
    let n = instances[0].n() as f64;
    let dp = params.d_prime().to_f64().unwrap();
    let bound = 4.0 * q as f64 * (dp / n).sqrt() * n.ln();
    assert!(freq <= bound, "freq {freq} vs bound {bound}");
}

#[test]
fn d1_test_identifies_delusive_vertices() {
    // d = 64 keeps each D1 vertex's B1-neighbor count concentrated enough
    // for the fraction test to separate the rows.
    let params = build_params(1024, 2, 64, 2, Variant::SingleDelusive, World::Yes, 5).unwrap();
    let inst = Arc::new(assemble_instance(&params).unwrap());
    let n = inst.n() as f64;
    let samples = (64.0 * n.ln()).ceil() as u32;

    let mut d1_hits = 0u32;
    let mut a2_rejects = 0u32;
    let per_class = 40u32;
    let (mut o, referee) = new_oracle(&inst, 7);
    o.set_recording(false);
    let mut rng = derive_rng(23, "d1", 0);
    let mut seen_d1 = 0u32;
    let mut seen_a2 = 0u32;
    for v in 0..inst.n() {
        let id = referee.public_of(&o, v);
        match referee.label_of(&o, id) {
            BlockLabel::D { level: 1, .. } if seen_d1 < per_class => {
                seen_d1 += 1;
                if d1_test(&mut o, id, samples, &mut rng).unwrap() {
                    d1_hits += 1;
                }
            }
            BlockLabel::A { level: 2, .. } if seen_a2 < per_class => {
                seen_a2 += 1;
                if !d1_test(&mut o, id, samples, &mut rng).unwrap() {
                    a2_rejects += 1;
                }
            }
            _ => {}
        }
        if seen_d1 == per_class && seen_a2 == per_class {
            break;
        }
    }
    assert_eq!(seen_d1, per_class);
    assert_eq!(seen_a2, per_class);
    assert!(
        d1_hits as f64 >= 0.95 * per_class as f64,
        "D1 recall {d1_hits}/{per_class}"
    );
    assert!(
        a2_rejects as f64 >= 0.95 * per_class as f64,
        "A2 rejection {a2_rejects}/{per_class}"
    );
}

#[test]
fn estimator_tracks_the_exact_matching_size() {
    let params = build_params(1024, 8, 64, 4, Variant::FullHierarchy, World::Yes, 11).unwrap();
    let inst = Arc::new(assemble_instance(&params).unwrap());
    let hk = hopcroft_karp(inst.graph()).unwrap();
    let mu = hk.size as f64;
    let n = inst.n() as f64;
    let eps_n = n / 8.0;
    // Membership map of one fixed maximum matching, keyed by internal id.
    let mut matched = vec![false; inst.n() as usize];
    for &(a, b) in &hk.matching {
        matched[a as usize] = true;
        matched[b as usize] = true;
    }
    let t = 64 * 64u64; // 64 / eps^2
    let mut good = 0;
    let trials = 20;
    for trial in 0..trials {
        let (mut o, referee) = new_oracle(&inst, 900 + trial);
        o.set_recording(false);
        let m = matched.clone();
        let out = estimate_matching_size(&mut o, t, &mut |o, id| {
            Ok(m[referee.internal_of(o, id) as usize])
        })
        .unwrap();
        if (out.guess - mu).abs() <= eps_n {
            good += 1;
        }
    }
    assert!(good * 10 >= trials * 9, "only {good}/{trials} within eps n");
}

#[test]
fn estimator_is_unbiased_over_vertex_draws() {
    let params = build_params(64, 2, 16, 2, Variant::FullHierarchy, World::Yes, 13).unwrap();
    let inst = Arc::new(assemble_instance(&params).unwrap());
    let hk = hopcroft_karp(inst.graph()).unwrap();
    let mut matched = vec![false; inst.n() as usize];
    for &(a, b) in &hk.matching {
        matched[a as usize] = true;
        matched[b as usize] = true;
    }
    let mu = hk.size as f64;
    // The grand mean over many independent estimates approaches mu.
    let mut total = 0.0;
    let reps = 400u64;
    for r in 0..reps {
        let (mut o, referee) = new_oracle(&inst, 10_000 + r);
        o.set_recording(false);
        let m = matched.clone();
        let out = estimate_matching_size(&mut o, 64, &mut |o, id| {
            Ok(m[referee.internal_of(o, id) as usize])
        })
        .unwrap();
        total += out.guess;
    }
    let mean = total / reps as f64;
    // SE of the grand mean: sigma_per_estimate / sqrt(reps); sigma per
    // estimate is (n/2) sqrt(p(1-p)/64) with p = 2 mu / n.
    let n = inst.n() as f64;
    let p = 2.0 * mu / n;
    let se = (n / 2.0) * (p * (1.0 - p) / 64.0).sqrt() / (reps as f64).sqrt();
    assert!(
        (mean - mu).abs() < 4.0 * se,
        "mean {mean} vs mu {mu} (se {se})"
    );
}

#[test]
fn distinguisher_profiles_behave() {
    let params = build_params(1024, 8, 64, 4, Variant::FullHierarchy, World::Yes, 0).unwrap();
    let budget = budget_of(&params, 2, 2, 1.0);

    let referee = referee_exact_distinguisher(&params, 100, 501).unwrap();
    assert!(
        referee.accuracy >= 0.99,
        "referee accuracy {}",
        referee.accuracy
    );

    let coin = world_distinguisher(&params, &Strategy::CoinFlip, budget, 60, 502).unwrap();
    assert!(
        coin.wilson_lo <= 0.5 && 0.5 <= coin.wilson_hi,
        "coin flip interval excludes 1/2: {:?}",
        (coin.wilson_lo, coin.wilson_hi)
    );

    for strat in [
        Strategy::RandomWalk,
        Strategy::GreedyEstimate,
        Strategy::LayerThenWalk,
    ] {
        let report = world_distinguisher(&params, &strat, budget, 60, 503).unwrap();
        assert!(
            report.accuracy <= 0.75,
            "{} accuracy {} at budget {budget}",
            report.strategy,
            report.accuracy
        );
        assert!(
            report.accuracy + 0.2 < referee.accuracy,
            "budgeted {} not separated from referee",
            report.strategy
        );
    }
}

#[test]
fn fixed_pair_edge_frequencies_are_bounded() {
    let params = build_params(64, 2, 16, 2, Variant::FullHierarchy, World::Yes, 0).unwrap();
    let table = lcam::construction::transition_table(&params).unwrap();
    let layout = lcam::realizer::BlockLayout::of(&lcam::construction::block_sizes(&params));
    let pairs = [
        (BlockLabel::S { side: Side::One }, BlockLabel::B { level: 1, side: Side::One }),
        (BlockLabel::B { level: 1, side: Side::One }, BlockLabel::A { level: 1, side: Side::One }),
        (BlockLabel::B { level: 1, side: Side::One }, BlockLabel::D { level: 1, part: lcam::construction::Part::L }),
        (BlockLabel::B { level: 2, side: Side::One }, BlockLabel::B { level: 2, side: Side::Two }),
        (BlockLabel::A { level: 2, side: Side::One }, BlockLabel::A { level: 2, side: Side::Two }),
        (BlockLabel::D { level: 1, part: lcam::construction::Part::L }, BlockLabel::D { level: 1, part: lcam::construction::Part::R }),
    ];
    let targets: Vec<(u32, u32)> = pairs
        .iter()
        .map(|&(x, y)| {
            (
                layout.range(x).unwrap().start,
                layout.range(y).unwrap().start,
            )
        })
        .collect();
    let trials = 10_000u64;
    let counts: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = assemble_instance(&params.with_seed(200_000 + t)).unwrap();
            let mut hits = 0u64;
            for (i, &(u, v)) in targets.iter().enumerate() {
                if inst.graph().neighbors(u).binary_search(&v).is_ok() {
                    hits |= 1 << i;
                }
            }
            hits
        })
        .fold(|| vec![0u64; targets.len()], |mut acc, hits| {
            for (i, slot) in acc.iter_mut().enumerate() {
                *slot += (hits >> i) & 1;
            }
            acc
        })
        .reduce(|| vec![0u64; targets.len()], |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        });
    for (i, &(x, y)) in pairs.iter().enumerate() {
        let freq = counts[i] as f64 / trials as f64;
        let sx = layout.range(x).unwrap().len() as f64;
        let sy = layout.range(y).unwrap().len() as f64;
        let wxy = table.weight(x, y).to_f64().unwrap();
        let wyx = table.weight(y, x).to_f64().unwrap();
        let bound = 4.0 * (wxy / sy).min(wyx / sx);
        assert!(
            freq <= bound.min(1.0) + 0.02,
            "pair {x}-{y}: freq {freq} vs bound {bound}"
        );
    }
}

#[test]
fn tree_game_rate_bands_at_k2() {
    let params = build_params(64, 2, 256, 2, Variant::FullHierarchy, World::Yes, 7).unwrap();

    // Bad-path frequency scales with |T|/d.
    for size in [10u32, 20] {
        let report = mixer_hit_experiment(
            &params,
            ExpandPolicy::RandomNode,
            1000,
            size..=size,
            1.05,
            7,
        )
        .unwrap();
        let band = 8.0 * size as f64 / 256.0;
        assert!(
            report.bad_path_freq <= band,
            "size {size}: freq {} vs band {band}",
            report.bad_path_freq
        );
    }

    // Bad events below crucial-edge endpoints are rare on small subtrees.
    let report = bad_event_experiment(&params, ExpandPolicy::RandomNode, 1000, 20, 99).unwrap();
    let band = 8.0 * (20.0f64 * 20.0) / (256.0f64 * 256.0);
    assert!(
        report.bad_event_freq <= band,
        "bad-event freq {} vs band {band}",
        report.bad_event_freq
    );
}

#[test]
fn yes_no_tree_observables_are_close() {
    let params = build_params(64, 2, 256, 2, Variant::FullHierarchy, World::Yes, 7).unwrap();
    let report = yes_no_observable_tvd(&params, 30_000, 200, 5151).unwrap();
    assert!(report.tvd <= 0.05, "TVD {}", report.tvd);
}

#[test]
fn attack_outcomes_account_for_every_query() {
    // Budget honesty: queries_used always equals the oracle counter delta.
    let params = build_params(64, 2, 16, 2, Variant::FullHierarchy, World::Yes, 21).unwrap();
    let inst = Arc::new(assemble_instance(&params).unwrap());
    let (mut o, _) = new_oracle(&inst, 31);
    let mut rng = derive_rng(41, "honesty", 0);

    let before = o.query_count();
    let out = walk_hitting_profile(&mut o, PublicId(3), 5, 50, 10_000, &mut rng).unwrap();
    assert_eq!(out.queries_used, o.query_count() - before);

    let before = o.query_count();
    let mut session = GreedySession::new(5);
    let out = greedy_match_oracle(&mut o, PublicId(3), &mut session, u64::MAX).unwrap();
    assert_eq!(out.queries_used, o.query_count() - before);

    let before = o.query_count();
    let out = layer_classifier(&mut o, PublicId(4), 2_000, &mut rng).unwrap();
    assert_eq!(out.queries_used, o.query_count() - before);
    assert!(out.queries_used <= 2_000);

    let before = o.query_count();
    let out = estimate_matching_size(&mut o, 17, &mut |_, _| Ok(true)).unwrap();
    assert_eq!(out.queries_used, o.query_count() - before);
    assert_eq!(out.queries_used, 17);
}
