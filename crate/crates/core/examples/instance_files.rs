//! Writes a generated instance and its rule as JSON, reads both back and
//! verifies the result.

use sos_auction::allocation::allocate;
use sos_auction::io::{read_json, write_json, InstanceFile, RuleFile};
use sos_auction::payments::{compute_payments, Mechanism};
use sos_auction::valuation::gen_random_setting;
use sos_auction::verification::verify;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("sos-auction-example");
    let seed = 42;
    let setting = gen_random_setting(3, seed, 100)?;
    let instance_path = dir.join("instance.json");
    write_json(&instance_path, &InstanceFile::from_setting(&setting, Some(seed), Some(100)))?;

    let allocation = allocate(&setting)?;
    let payments = compute_payments(&setting, &allocation.rule)?;
    let rule_path = dir.join("rule.json");
    write_json(&rule_path, &RuleFile::new(&allocation, Some(&payments), Some(seed), true))?;

    let instance: InstanceFile = read_json(&instance_path)?;
    let rule: RuleFile = read_json(&rule_path)?;
    let setting = instance.setting()?;
    let x = rule.rule()?;
    let mechanism = Mechanism {
        setting: &setting,
        allocation: x.clone(),
        payments: rule.payment_rule()?.expect("payments written"),
    };
    println!("read back {} and {}", instance_path.display(), rule_path.display());
    print!("{}", verify(&setting, &x, Some(&mechanism)).summary());
    Ok(())
}
