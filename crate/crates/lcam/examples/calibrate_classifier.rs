use lcam::*;
use lcam::attacks::*;
use std::time::Instant;

fn main() {
    let base = build_params(4096, 8, 64, 4, Variant::FullHierarchy, World::Yes, 7).unwrap();
    let budget = budget_of(&base, 2, 2, 1.0);
    println!("budget (d^2 ln^2 n): {budget}");

    for variant in [Variant::CoreOnly, Variant::SingleDelusive, Variant::FullHierarchy] {
        let params = base.with_variant(variant);
        let t0 = Instant::now();
        let model = layer_model_for(&params).unwrap();
        println!("{variant:?}: model t_max={} walk_cap={} built in {:?}", model.t_max, model.walk_cap, t0.elapsed());
        let filter: Option<&[u32]> = if variant == Variant::FullHierarchy { Some(&[7, 8]) } else { None };
        let t0 = Instant::now();
        let report = classifier_experiment(&params, 60, budget, filter, 41).unwrap();
        println!("  {variant:?} filter={filter:?}: acc={:.3} ({} / {}), mean_queries={:.0}, took {:?}",
            report.accuracy, report.correct, report.vertices, report.mean_queries, t0.elapsed());
    }
}
