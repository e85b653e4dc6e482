//! Runs the extended sweep on random valuations over {0..k}ⁿ and shows the
//! first instance below the 1/2 welfare ratio, if any.
//!
//! `cargo run --release --example lattice_simulation -- [count] [seed]`

use sos_auction::lattice::{extended_allocate, simulate_batch, FailureDetail};
use sos_auction::rational::format_rational;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let count = args.first().copied().unwrap_or(5000);
    let seed = args.get(1).copied().unwrap_or(1);
    let summary = simulate_batch(3, 3, count, seed, 100).expect("tractable grid");
    print!("{}", summary.render());

    let Some(r) = summary.reproducers.iter().find(|r| matches!(r.detail, FailureDetail::Approximation { .. })) else {
        return;
    };
    let FailureDetail::Approximation { profile, ratio } = r.detail else { unreachable!() };
    let setting = &r.setting;
    let grid = setting.grid();
    let x = extended_allocate(setting).expect("sweep completed");
    println!(
        "\ninstance {} (seed {}), ratio {} at {}",
        r.instance,
        r.seed,
        format_rational(&ratio),
        grid.render(profile)
    );
    for b in 0..setting.n {
        println!(
            "  bidder {}: value {} color {:?}",
            b + 1,
            format_rational(&setting.value(b, profile)),
            x.color(b, profile)
        );
    }
}
