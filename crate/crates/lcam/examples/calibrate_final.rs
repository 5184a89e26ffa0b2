use lcam::*;
use lcam::attacks::*;

fn main() {
    let base = build_params(4096, 8, 64, 4, Variant::FullHierarchy, World::Yes, 7).unwrap();
    let budget = budget_of(&base, 2, 2, 1.0);
    for seed in [41u64, 42] {
        for (variant, filter) in [
            (Variant::CoreOnly, None),
            (Variant::SingleDelusive, None),
            (Variant::FullHierarchy, Some([7u32, 8].as_slice())),
        ] {
            let params = base.with_variant(variant);
            let report = classifier_experiment(&params, 200, budget, filter, seed).unwrap();
            println!("seed {seed} {:?}{}: acc={:.3} wilson=({:.3},{:.3})",
                variant, if filter.is_some() { "[7,8]" } else { "" },
                report.accuracy, report.wilson_lo, report.wilson_hi);
        }
    }
}
