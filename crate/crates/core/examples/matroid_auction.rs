//! Runs the matroid mechanism with at most two winners and prints expected
//! welfare against the greedy optimum at every profile.

use sos_auction::matroid::{check_matroid, Matroid};
use sos_auction::rational::format_rational;
use sos_auction::valuation::Setting;

fn main() {
    let setting = Setting::from_integer_tables(&[
        &[2, 2, 4, 4, 5, 5, 7, 7],
        &[3, 4, 3, 4, 4, 4, 4, 4],
        &[3, 5, 5, 6, 3, 5, 5, 6],
    ])
    .expect("valid tables");
    let matroid = Matroid::uniform(3, 2).expect("rank within ground set");
    let report = check_matroid(&setting, &matroid).expect("tractable instance");
    for o in &report.outcomes {
        let win: Vec<String> = o.win_probabilities.iter().map(format_rational).collect();
        println!(
            "{:<8} welfare={:<6} greedy={:<3} win=[{}]",
            o.set.to_string(),
            format_rational(&o.expected_welfare),
            format_rational(&o.greedy),
            win.join(", ")
        );
    }
    for v in &report.monotonicity_violations {
        println!(
            "bidder {} wins with {} at {} and {} at {}",
            v.bidder + 1,
            format_rational(&v.low),
            v.set,
            format_rational(&v.high),
            v.set.with(v.bidder)
        );
    }
    println!("bound violations: {}", report.bound_violations.len());
}
