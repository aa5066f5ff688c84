//! Prints one PASS/FAIL line per acceptance criterion; exits non-zero on
//! any failure. Pass criterion numbers as arguments to run a subset.

use dampwave::acceptance::Suite;
use dampwave::pde::Engine;

fn main() {
    let ids: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|id| (1..=13).contains(id))
        .collect();
    let ids = if ids.is_empty() {
        (1..=13).collect()
    } else {
        ids
    };
    let suite = Suite::new(Engine::standard());
    let mut failed = 0;
    for id in ids {
        let r = suite.run(id);
        println!("{} [{:.1} s]", r.line(), r.seconds);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
