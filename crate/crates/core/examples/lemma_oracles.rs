//! Randomized checks of the chained-inequality lemmas and subadditivity.

use sos_auction::lattice::{lattice_lemma_setting, lemma8_sweep};
use sos_auction::seed::derive_seed;
use sos_auction::verification::{lemma1_sweep, lemma2_sweep, lemma_settings, subadditivity_sweep, LemmaSweep};

fn show(name: &str, s: &LemmaSweep) {
    println!("{name:<24} draws={:<6} active={:<5} counterexamples={}", s.draws, s.active, s.counterexamples.len());
}

fn main() {
    let settings = lemma_settings(6, 128, 1);
    show("lemma 1", &lemma1_sweep(&settings, 20_000, 2));
    for lens in [[0, 0, 0], [1, 0, 1], [1, 1, 1]] {
        let n = (3 + lens.iter().sum::<usize>()).max(4);
        show(&format!("lemma 2 {lens:?}"), &lemma2_sweep(&lemma_settings(n, 64, 3), lens, 5_000, 4));
    }
    show("subadditivity", &subadditivity_sweep(&settings, 5_000, 5));
    let grids: Vec<_> = (0..64).filter_map(|r| lattice_lemma_setting(3, 3, derive_seed(6, r)).ok()).collect();
    show("lemma 8 on {0..3}^3", &lemma8_sweep(&grids, [0, 0, 0], 5_000, 7));
}
