use lcam::*;
use lcam::attacks::*;

fn main() {
    let base = build_params(4096, 8, 64, 4, Variant::FullHierarchy, World::Yes, 7).unwrap();
    let full_budget = budget_of(&base, 2, 2, 1.0);
    for factor in [16u64, 8, 4, 2, 1] {
        let budget = full_budget / factor;
        print!("budget {budget:>7}:");
        for (variant, filter) in [
            (Variant::CoreOnly, None),
            (Variant::SingleDelusive, None),
            (Variant::FullHierarchy, Some([7u32, 8].as_slice())),
        ] {
            let params = base.with_variant(variant);
            let report = classifier_experiment(&params, 80, budget, filter, 1234).unwrap();
            print!("  {:?}{}={:.3}", variant, if filter.is_some() { "[7,8]" } else { "" }, report.accuracy);
        }
        println!();
    }
}
