//! Builds the mechanism on random SOS instances and checks every property.
//!
//! `cargo run --release --example random_sweep -- [n] [count] [seed]`

use sos_auction::allocation::allocate;
use sos_auction::payments::Mechanism;
use sos_auction::rational::format_rational;
use sos_auction::seed::derive_seed;
use sos_auction::valuation::gen_random_setting;
use sos_auction::verification::verify;
use sos_auction::Rational;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let n = args.first().copied().unwrap_or(4) as usize;
    let count = args.get(1).copied().unwrap_or(1000);
    let seed = args.get(2).copied().unwrap_or(0);

    let mut worst: Option<Rational> = None;
    let mut failed = 0;
    for r in 0..count {
        let setting = gen_random_setting(n, derive_seed(seed, r), 100).expect("generator");
        let rule = allocate(&setting).expect("SOS input").rule;
        let mechanism = Mechanism::new(&setting, rule.clone()).expect("monotone rule");
        let report = verify(&setting, &rule, Some(&mechanism));
        failed += !report.passed() as u64;
        let ratio = report.checks.iter().find_map(|c| c.min_ratio.as_ref()).map(|m| m.ratio);
        worst = match (worst, ratio) {
            (Some(w), Some(r)) => Some(w.min(r)),
            (w, r) => w.or(r),
        };
    }
    println!(
        "n={n} instances={count} failed={failed} worst ratio={}",
        worst.map_or("n/a".into(), |w| format_rational(&w))
    );
}
