//! Two bidders: v1 = 1 + s1, v2 = 10·s1. Builds the rule, its payments and
//! runs every check.

use sos_auction::allocation::allocate;
use sos_auction::payments::Mechanism;
use sos_auction::rational::format_rational;
use sos_auction::signal::SignalSet;
use sos_auction::valuation::Setting;
use sos_auction::verification::verify;

fn main() {
    // Tables are in bitmask order: {}, {1}, {2}, {1,2}.
    let setting = Setting::from_integer_tables(&[&[1, 2, 1, 2], &[0, 10, 0, 10]]).expect("valid tables");
    let allocation = allocate(&setting).expect("SOS input");
    print!("{}", allocation.table.render());

    let mechanism = Mechanism::new(&setting, allocation.rule.clone()).expect("monotone rule");
    for set in SignalSet::all(2) {
        let row: Vec<String> = (0..2)
            .map(|b| {
                format!(
                    "x{}={} p{}={}",
                    b + 1,
                    format_rational(&allocation.rule.prob(b, set)),
                    b + 1,
                    format_rational(&mechanism.payments.payment(b, set))
                )
            })
            .collect();
        println!("{set:<6} {}", row.join("  "));
    }
    print!("{}", verify(&setting, &allocation.rule, Some(&mechanism)).summary());
}
