use lcam::*;
use lcam::oracle::{new_oracle, discovered_graph};
use lcam::rng::derive_rng;
use rand::Rng;
use std::sync::Arc;
use std::time::Instant;

// Random-walk transcript of exactly q queries; counts as non-forest if any
// collision step appears.
fn walk_collides(oracle: &mut lcam::oracle::Oracle, q: u64, rng: &mut rand_chacha::ChaCha8Rng, slots: u32) -> bool {
    let mut cur = oracle.random_vertex();
    while oracle.query_count() < q {
        match oracle.query(cur, rng.gen_range(1..=slots)).unwrap() {
            Some(next) => cur = next,
            None => {}
        }
    }
    let report = discovered_graph(oracle.transcript());
    !report.rooted_forest
}

fn main() {
    let params = build_params(4096, 8, 64, 4, Variant::FullHierarchy, World::Yes, 7).unwrap();
    let slots = params.slots();
    let mut insts = Vec::new();
    for seed in 0..4u64 {
        insts.push(Arc::new(lcam::realizer::assemble_instance(&params.with_seed(seed)).unwrap()));
    }
    let trials = 10_000u64;
    let t0 = Instant::now();
    let mut freqs = Vec::new();
    for q in [8u64, 16, 32] {
        let mut collisions = 0u64;
        for t in 0..trials {
            let inst = &insts[(t % 4) as usize];
            let (mut oracle, _) = new_oracle(inst, 1_000_000 + t * 3 + q);
            let mut rng = derive_rng(77, "colwalk", t * 100 + q);
            if walk_collides(&mut oracle, q, &mut rng, slots) {
                collisions += 1;
            }
        }
        let f = collisions as f64 / trials as f64;
        println!("Q={q:>2}: non-forest freq {f:.4} ({collisions}/{trials})");
        freqs.push(f);
    }
    println!("ratios: {:.2}, {:.2}", freqs[1]/freqs[0], freqs[2]/freqs[1]);
    println!("took {:?}", t0.elapsed());
}
