use lcam::*;
use std::time::Instant;

fn main() {
    let params = build_params(4096, 8, 64, 4, Variant::FullHierarchy, World::Yes, 7).unwrap();
    let t0 = Instant::now();
    let inst = lcam::realizer::assemble_instance(&params).unwrap();
    println!("YES assemble: {:?}  n={} m={} broken={}", t0.elapsed(), inst.n(), inst.graph().edge_count(), inst.broken().len());
    let t0 = Instant::now();
    let audit = lcam::realizer::audit_instance(&inst);
    println!("audit: {:?} clean={} violations={:?}", t0.elapsed(), audit.clean(), audit.violations.iter().take(5).collect::<Vec<_>>());
    println!("broken bound: {}", audit.broken_bound);
    let t0 = Instant::now();
    let mu = lcam::exact::hopcroft_karp(inst.graph()).unwrap().size;
    println!("HK: {:?} mu_yes={}", t0.elapsed(), mu);

    let params_no = params.with_world(World::No).with_seed(8);
    let t0 = Instant::now();
    let inst_no = lcam::realizer::assemble_instance(&params_no).unwrap();
    println!("NO assemble: {:?} broken={}", t0.elapsed(), inst_no.broken().len());
    let audit = lcam::realizer::audit_instance(&inst_no);
    println!("NO audit clean={} viol(first5)={:?}", audit.clean(), audit.violations.iter().take(5).collect::<Vec<_>>());
    let t0 = Instant::now();
    let mu_no = lcam::exact::hopcroft_karp(inst_no.graph()).unwrap().size;
    println!("HK: {:?} mu_no={}  (bounds: yes>=17344? no<=16896?)", t0.elapsed(), mu_no);
}
