//! Exhaustive checkers for allocation rules and mechanisms, plus empirical
//! oracles for the SOS inequality lemmas and the sweep's trace observations.
//!
//! Every checker enumerates its full quantifier range; a pass is a proof for
//! that instance. Every failure carries a [`Violation`] that can be
//! re-checked in isolation.

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::{AllocationRule, Cause, Color, ColorTable, TraceEvent};
use crate::payments::{expected_utility, Mechanism};
use crate::rational::{format_rational, serde_rational, serde_rational_matrix, Rational};
use crate::seed::{derive_seed, rng_from_seed};
use crate::signal::SignalSet;
use crate::valuation::{gen_budget_additive_setting, gen_random_setting, is_subadditive, GenerateError, Setting};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ColumnSum {
        set: SignalSet,
        #[serde(with = "serde_rational")]
        sum: Rational,
    },
    WinnerCount {
        set: SignalSet,
        winners: usize,
    },
    Monotonicity {
        bidder: usize,
        set: SignalSet,
        #[serde(with = "serde_rational")]
        low: Rational,
        #[serde(with = "serde_rational")]
        high: Rational,
    },
    Approximation {
        set: SignalSet,
        #[serde(with = "serde_rational")]
        alg: Rational,
        #[serde(with = "serde_rational")]
        opt: Rational,
    },
    IndividualRationality {
        bidder: usize,
        profile: SignalSet,
        #[serde(with = "serde_rational")]
        utility: Rational,
    },
    IncentiveCompatibility {
        bidder: usize,
        profile: SignalSet,
        reported_high: bool,
        #[serde(with = "serde_rational")]
        truthful: Rational,
        #[serde(with = "serde_rational")]
        deviating: Rational,
    },
    /// Observation `number` (1, 2 or 3) failed for the Red `bidder` chosen at `set`;
    /// `against` lists the bidders on the right-hand side.
    Observation {
        number: u8,
        bidder: usize,
        set: SignalSet,
        against: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MinRatio {
    #[serde(with = "serde_rational")]
    pub ratio: Rational,
    pub set: SignalSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    /// Number of inequalities or conditions evaluated.
    pub cases: usize,
    pub violations: Vec<Violation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_ratio: Option<MinRatio>,
}

impl CheckReport {
    fn new(name: &'static str) -> Self {
        CheckReport { name, cases: 0, violations: Vec::new(), min_ratio: None }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckReport>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for check in &self.checks {
            let status = if check.passed() { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status} {:<16} cases={}", check.name, check.cases));
            if let Some(m) = &check.min_ratio {
                out.push_str(&format!(" min_ratio={} at {}", format_rational(&m.ratio), m.set));
            }
            if !check.passed() {
                out.push_str(&format!(" violations={} first={:?}", check.violations.len(), check.violations[0]));
            }
            out.push('\n');
        }
        out
    }
}

/// `Σ_b x_b(S)` for every column, in mask order.
pub fn column_sums(x: &AllocationRule) -> Vec<Rational> {
    SignalSet::all(x.n()).map(|s| x.column(s).iter().sum()).collect()
}

/// Column sums at most 1, and one or two bidders with positive probability.
pub fn check_feasibility(x: &AllocationRule) -> CheckReport {
    let mut report = CheckReport::new("feasibility");
    for set in SignalSet::all(x.n()) {
        report.cases += 1;
        let sum: Rational = x.column(set).iter().sum();
        if sum > Rational::from_integer(1) {
            report.violations.push(Violation::ColumnSum { set, sum });
        }
        let winners = x.column(set).iter().filter(|p| !p.is_zero()).count();
        if !(1..=2).contains(&winners) {
            report.violations.push(Violation::WinnerCount { set, winners });
        }
    }
    report
}

/// `x_i(S) ≤ x_i(S ∪ {i})` for every bidder and every `S ∌ i`.
pub fn check_monotonicity(x: &AllocationRule) -> CheckReport {
    let mut report = CheckReport::new("monotonicity");
    for bidder in 0..x.n() {
        for set in SignalSet::all(x.n()).filter(|s| !s.contains(bidder)) {
            report.cases += 1;
            let (low, high) = (x.prob(bidder, set), x.prob(bidder, set.with(bidder)));
            if low > high {
                report.violations.push(Violation::Monotonicity { bidder, set, low, high });
            }
        }
    }
    report
}

/// `c · ALG(S) ≥ OPT(S)` at every profile; `OPT(S) = 0` passes vacuously.
pub fn check_approximation(setting: &Setting, x: &AllocationRule, c: Rational) -> CheckReport {
    let mut report = CheckReport::new("approximation");
    for set in SignalSet::all(setting.n()) {
        let opt = setting.opt(set);
        if opt.is_zero() {
            continue;
        }
        report.cases += 1;
        let alg = x.welfare(setting, set);
        let ratio = alg / opt;
        if report.min_ratio.as_ref().is_none_or(|m| ratio < m.ratio) {
            report.min_ratio = Some(MinRatio { ratio, set });
        }
        if alg * c < opt {
            report.violations.push(Violation::Approximation { set, alg, opt });
        }
    }
    report
}

/// Every bidder, true profile and unilateral misreport: truthful utility is
/// non-negative (IR) and at least the deviating utility (IC).
pub fn check_ex_post_ic_ir(mechanism: &Mechanism<'_>) -> Vec<CheckReport> {
    let n = mechanism.setting.n();
    let mut ir = CheckReport::new("ex_post_ir");
    let mut ic = CheckReport::new("ex_post_ic");
    for bidder in 0..n {
        for profile in SignalSet::all(n) {
            let truly_high = profile.contains(bidder);
            let truthful = expected_utility(mechanism, bidder, profile, truly_high);
            ir.cases += 1;
            if truthful < Rational::zero() {
                ir.violations.push(Violation::IndividualRationality { bidder, profile, utility: truthful });
            }
            let deviating = expected_utility(mechanism, bidder, profile, !truly_high);
            ic.cases += 1;
            if deviating > truthful {
                ic.violations.push(Violation::IncentiveCompatibility {
                    bidder,
                    profile,
                    reported_high: !truly_high,
                    truthful,
                    deviating,
                });
            }
        }
    }
    vec![ir, ic]
}

/// Feasibility, monotonicity, the factor-2 bound and, when payments are
/// given, ex post IC-IR.
pub fn verify(setting: &Setting, x: &AllocationRule, mechanism: Option<&Mechanism<'_>>) -> VerificationReport {
    let mut checks =
        vec![check_feasibility(x), check_monotonicity(x), check_approximation(setting, x, Rational::from_integer(2))];
    if let Some(m) = mechanism {
        checks.extend(check_ex_post_ic_ir(m));
    }
    VerificationReport { checks }
}

/// `lhs ≥ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inequality {
    pub lhs: Rational,
    pub rhs: Rational,
}

impl Inequality {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs
    }

    pub fn is_strict(&self) -> bool {
        self.lhs > self.rhs
    }
}

/// A system of inequalities whose simultaneous validity should force
/// equality in all of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaCheck {
    pub inequalities: Vec<Inequality>,
}

impl LemmaCheck {
    pub fn all_hold(&self) -> bool {
        self.inequalities.iter().all(Inequality::holds)
    }

    /// False exactly when every inequality holds and at least one is strict.
    pub fn passed(&self) -> bool {
        !(self.all_hold() && self.inequalities.iter().any(Inequality::is_strict))
    }
}

/// With `S* = S' ∪ {i, j}`:
/// `v_i(S*∖i) ≥ v_k(S*∖i)`, `v_j(S*∖j) ≥ v_k(S*∖j)`, `v_k(S*) ≥ v_i(S*) + v_j(S*)`.
pub fn lemma1_oracle(setting: &Setting, s_prime: SignalSet, i: usize, j: usize, k: usize) -> LemmaCheck {
    let top = s_prime.with(i).with(j);
    let v = |b: usize, s: SignalSet| setting.value(b, s);
    LemmaCheck {
        inequalities: vec![
            Inequality { lhs: v(i, top.without(i)), rhs: v(k, top.without(i)) },
            Inequality { lhs: v(j, top.without(j)), rhs: v(k, top.without(j)) },
            Inequality { lhs: v(k, top), rhs: v(i, top) + v(j, top) },
        ],
    }
}

/// The three bidders `i, j, k` and the three chains of bridge bidders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BridgeChains {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    /// Bridges between `i` and `k`, paired with `j`.
    pub first: Vec<usize>,
    /// Bridges between `j` and `k`, paired with `i`.
    pub second: Vec<usize>,
    /// Bridges between `k` and `i`, paired with `j`.
    pub third: Vec<usize>,
}

impl BridgeChains {
    pub fn plain(i: usize, j: usize, k: usize) -> Self {
        BridgeChains { i, j, k, first: Vec::new(), second: Vec::new(), third: Vec::new() }
    }

    /// Every bidder named, with repetitions.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        [self.i, self.j, self.k]
            .into_iter()
            .chain(self.first.iter().copied())
            .chain(self.second.iter().copied())
            .chain(self.third.iter().copied())
    }

    pub fn member_set(&self) -> SignalSet {
        SignalSet::from_bidders(self.members())
    }

    pub fn inequality_count(&self) -> usize {
        3 + self.first.len() + self.second.len() + self.third.len()
    }

    /// The chained system as `(winner, partner, rival, removed)` quadruples,
    /// each read as `v_winner(R) ≥ v_rival(R) + v_partner(R)` where `R` is the
    /// full set minus `removed`.
    pub fn terms(&self) -> Vec<(usize, usize, usize, SignalSet)> {
        let mut out = Vec::with_capacity(self.inequality_count());
        let mut chain = |head: usize, bridges: &[usize], tail: usize, partner: usize| {
            let mut removed = SignalSet::EMPTY.with(head);
            let mut current = head;
            for &t in bridges {
                out.push((current, partner, t, removed));
                removed = removed.with(t);
                current = t;
            }
            out.push((current, partner, tail, removed));
        };
        chain(self.i, &self.first, self.k, self.j);
        chain(self.j, &self.second, self.k, self.i);
        chain(self.k, &self.third, self.i, self.j);
        out
    }

    /// Builds the inequalities given `value(bidder, removed)`.
    pub fn system(&self, value: impl Fn(usize, SignalSet) -> Rational) -> LemmaCheck {
        LemmaCheck {
            inequalities: self
                .terms()
                .into_iter()
                .map(|(winner, partner, rival, removed)| Inequality {
                    lhs: value(winner, removed),
                    rhs: value(rival, removed) + value(partner, removed),
                })
                .collect(),
        }
    }
}

/// The chained system on `S* = S' ∪ E`: the inequality with removed set `R`
/// is evaluated at `S* ∖ R`.
pub fn lemma2_oracle(setting: &Setting, s_prime: SignalSet, chains: &BridgeChains) -> LemmaCheck {
    let top = s_prime.union(chains.member_set());
    chains.system(|b, removed| setting.value(b, top.difference(removed)))
}

/// Replays a sweep trace and checks the three observations about Red cells
/// chosen for low-signal bidders.
pub fn trace_observation_oracle(setting: &Setting, trace: &[TraceEvent]) -> CheckReport {
    let mut report = CheckReport::new("observations");
    let n = setting.n();
    let mut table = ColorTable::new(n);
    let mut current: Option<SignalSet> = None;
    let mut reds_at_start: Vec<usize> = Vec::new();
    for event in trace {
        if current != Some(event.iteration) {
            current = Some(event.iteration);
            reds_at_start = table.reds(event.iteration).collect();
        }
        let set = event.iteration;
        let chosen = matches!(event.cause, Cause::Priority1 | Cause::Priority2);
        if chosen && event.column == set && event.color == Color::Red && !set.contains(event.bidder) {
            let i = event.bidder;
            let vi = setting.value(i, set);
            report.cases += 1;
            if vi != setting.opt(set) {
                report.violations.push(Violation::Observation { number: 1, bidder: i, set, against: vec![] });
            }
            match reds_at_start.as_slice() {
                [] => {
                    for j in set.iter() {
                        for k in set.iter().filter(|&k| k > j) {
                            report.cases += 1;
                            if vi < setting.value(j, set) + setting.value(k, set) {
                                report.violations.push(Violation::Observation {
                                    number: 2,
                                    bidder: i,
                                    set,
                                    against: vec![j, k],
                                });
                            }
                        }
                    }
                }
                [t] if set.contains(*t) => {
                    for j in set.iter().filter(|j| j != t) {
                        report.cases += 1;
                        if vi < setting.value(j, set) + setting.value(*t, set) {
                            report.violations.push(Violation::Observation {
                                number: 3,
                                bidder: i,
                                set,
                                against: vec![j, *t],
                            });
                        }
                    }
                }
                _ => {}
            }
        }
        table.set(event.bidder, event.column, event.color);
    }
    report
}

/// Largest bidder count the layered generator is asked for in lemma sweeps.
pub const LAYERED_LEMMA_BIDDERS: usize = 6;

/// Instance family for the lemma sweeps. Plain random instances almost never
/// satisfy all hypotheses at once, so most draws use coarse or sparse values
/// where ties and zeros are common. By `seed % 4`:
///
/// * 0: layered generator at scale 100
/// * 1: layered generator at scale 2, each bidder scaled by 0, 1 or 3
/// * 2: budget-additive at scale 3
/// * 3: sparse unit coverage, see [`sparse_coverage_setting`]
///
/// Above [`LAYERED_LEMMA_BIDDERS`] cases 0 and 1 fall back to budget-additive.
pub fn lemma_setting(n: usize, seed: u64) -> Result<Setting, GenerateError> {
    match seed % 4 {
        0 if n <= LAYERED_LEMMA_BIDDERS => gen_random_setting(n, seed, 100),
        1 if n <= LAYERED_LEMMA_BIDDERS => {
            let base = gen_random_setting(n, seed, 2)?;
            let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
            let tables = base
                .tables()
                .into_iter()
                .map(|t| {
                    let w = Rational::from_integer(*[0, 1, 3].choose(&mut rng).expect("non-empty"));
                    t.into_iter().map(|x| x * w).collect()
                })
                .collect();
            Ok(Setting::from_tables(tables).expect("scaled tables keep their shape"))
        }
        3 => sparse_coverage_setting(n, seed),
        _ => gen_budget_additive_setting(n, seed, 3),
    }
}

/// Each bidder is identically zero with probability 1/2, otherwise
/// `c + [S ∩ A ≠ ∅]` for a random `c ∈ {0, 1}` and random `A ⊆ [n]`.
pub fn sparse_coverage_setting(n: usize, seed: u64) -> Result<Setting, GenerateError> {
    if n == 0 || n > crate::signal::MAX_BIDDERS {
        return Err(GenerateError::BidderCount(n));
    }
    let mut rng = rng_from_seed(seed);
    let tables = (0..n)
        .map(|_| {
            let (zero, c, a) = (rng.gen_bool(0.5), rng.gen_range(0..=1i64), rng.gen_range(0..1u32 << n));
            SignalSet::all(n)
                .map(|s| if zero { 0 } else { c + (s.mask() & a != 0) as i64 })
                .map(Rational::from_integer)
                .collect()
        })
        .collect();
    Ok(Setting::from_tables(tables).expect("coverage tables have valid shape"))
}

/// `count` instances from [`lemma_setting`], instance `r` seeded by
/// `derive_seed(seed, r)`. Seeds the generator cannot serve are skipped.
pub fn lemma_settings(n: usize, count: u64, seed: u64) -> Vec<Setting> {
    (0..count).into_par_iter().filter_map(|r| lemma_setting(n, derive_seed(seed, r)).ok()).collect()
}

/// One randomized lemma configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "lemma", rename_all = "snake_case")]
pub enum LemmaConfig {
    Lemma1 {
        s_prime: SignalSet,
        i: usize,
        j: usize,
        k: usize,
    },
    Lemma2 {
        s_prime: SignalSet,
        chains: BridgeChains,
    },
    Subadditivity {
        bidder: usize,
        base: SignalSet,
        a: SignalSet,
        b: SignalSet,
    },
    /// Grid version: `valuations` are then indexed by mixed-radix profile.
    Lemma8 {
        s_prime: Vec<u32>,
        d: Vec<u32>,
        chains: BridgeChains,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LemmaCounterexample {
    pub draw: u64,
    pub config: LemmaConfig,
    #[serde(with = "serde_rational_matrix")]
    pub valuations: Vec<Vec<Rational>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LemmaSweep {
    pub draws: u64,
    /// Draws where every hypothesis held, so the conclusion was actually tested.
    pub active: u64,
    pub counterexamples: Vec<LemmaCounterexample>,
}

impl LemmaSweep {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }

    pub(crate) fn collect(draws: u64, results: Vec<(bool, Option<LemmaCounterexample>)>) -> Self {
        let mut sweep = LemmaSweep { draws, ..Default::default() };
        for (active, counterexample) in results {
            sweep.active += active as u64;
            sweep.counterexamples.extend(counterexample);
        }
        sweep
    }
}

/// Random `(S', i, j, k)` with `i ≠ j`; `k` is unrestricted. With `i = j`
/// the three inequalities do not force equality (see the unit tests).
pub fn random_lemma1_config<R: Rng>(rng: &mut R, n: usize) -> (SignalSet, usize, usize, usize) {
    assert!(n >= 2, "lemma 1 draws need two distinct bidders");
    let s_prime = SignalSet::from_mask(rng.gen_range(0..1u32 << n));
    let i = rng.gen_range(0..n);
    let j = (i + rng.gen_range(1..n)) % n;
    (s_prime, i, j, rng.gen_range(0..n))
}

/// Random chains with the given lengths over pairwise distinct bidders, or
/// `None` when `n < 3 + ℓ₁ + ℓ₂ + ℓ₃`.
pub fn random_bridge_chains<R: Rng>(rng: &mut R, n: usize, lens: [usize; 3]) -> Option<BridgeChains> {
    let needed = 3 + lens.iter().sum::<usize>();
    if n < needed {
        return None;
    }
    let mut bidders: Vec<usize> = (0..n).collect();
    bidders.shuffle(rng);
    let mut it = bidders.into_iter();
    let mut take = |m: usize| it.by_ref().take(m).collect::<Vec<_>>();
    let ijk = take(3);
    Some(BridgeChains {
        i: ijk[0],
        j: ijk[1],
        k: ijk[2],
        first: take(lens[0]),
        second: take(lens[1]),
        third: take(lens[2]),
    })
}

fn pick<'a, R: Rng>(rng: &mut R, settings: &'a [Setting]) -> &'a Setting {
    &settings[rng.gen_range(0..settings.len())]
}

/// `draws` Lemma 1 draws over `settings`; draw `d` uses `derive_seed(seed, d)`.
pub fn lemma1_sweep(settings: &[Setting], draws: u64, seed: u64) -> LemmaSweep {
    assert!(!settings.is_empty());
    let results = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng_from_seed(derive_seed(seed, d));
            let setting = pick(&mut rng, settings);
            let (s_prime, i, j, k) = random_lemma1_config(&mut rng, setting.n());
            let check = lemma1_oracle(setting, s_prime, i, j, k);
            let counterexample = (!check.passed()).then(|| LemmaCounterexample {
                draw: d,
                config: LemmaConfig::Lemma1 { s_prime, i, j, k },
                valuations: setting.tables(),
            });
            (check.all_hold(), counterexample)
        })
        .collect();
    LemmaSweep::collect(draws, results)
}

/// Role assignments tried per Lemma 2 draw before settling for an inactive one.
pub const GUIDED_TRIES: usize = 8;

/// Chains over the bidders of `members` (exactly `3 + ℓ₁ + ℓ₂ + ℓ₃` of them)
/// whose bridges are picked one position at a time, preferring a bidder
/// that makes that position's inequality hold at `S' ∪ members`.
pub fn guided_bridge_chains<R: Rng>(
    rng: &mut R,
    setting: &Setting,
    s_prime: SignalSet,
    members: &[usize],
    lens: [usize; 3],
) -> BridgeChains {
    assert_eq!(members.len(), 3 + lens.iter().sum::<usize>());
    let top = s_prime.union(SignalSet::from_bidders(members.iter().copied()));
    let v = |b: usize, removed: SignalSet| setting.value(b, top.difference(removed));
    let mut pool = members.to_vec();
    pool.shuffle(rng);
    let (i, j, k) = (pool[0], pool[1], pool[2]);
    let mut rest = pool.split_off(3);
    let mut fill = |head: usize, partner: usize, len: usize| {
        let mut removed = SignalSet::EMPTY.with(head);
        let mut current = head;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let need = v(current, removed) - v(partner, removed);
            let at = rest.iter().position(|&t| v(t, removed) <= need).unwrap_or(0);
            let t = rest.remove(at);
            out.push(t);
            removed = removed.with(t);
            current = t;
        }
        out
    };
    let first = fill(i, j, lens[0]);
    let second = fill(j, i, lens[1]);
    let third = fill(k, j, lens[2]);
    BridgeChains { i, j, k, first, second, third }
}

/// `draws` Lemma 2 draws with fixed chain lengths over pairwise distinct
/// bidders. Each draw fixes `S'` and the member set, then tries up to
/// [`GUIDED_TRIES`] guided role assignments and keeps the first active one.
/// Settings with fewer than `3 + ℓ₁ + ℓ₂ + ℓ₃` bidders are never picked.
pub fn lemma2_sweep(settings: &[Setting], lens: [usize; 3], draws: u64, seed: u64) -> LemmaSweep {
    let needed = 3 + lens.iter().sum::<usize>();
    let usable: Vec<&Setting> = settings.iter().filter(|s| s.n() >= needed).collect();
    assert!(!usable.is_empty(), "no setting has {needed} bidders");
    let results = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng_from_seed(derive_seed(seed, d));
            let setting = usable[rng.gen_range(0..usable.len())];
            let n = setting.n();
            let s_prime = SignalSet::from_mask(rng.gen_range(0..1u32 << n));
            let members: Vec<usize> = rand::seq::index::sample(&mut rng, n, needed).into_vec();
            let mut result = None;
            for _ in 0..GUIDED_TRIES {
                let chains = guided_bridge_chains(&mut rng, setting, s_prime, &members, lens);
                let check = lemma2_oracle(setting, s_prime, &chains);
                let active = check.all_hold();
                result = Some((chains, check));
                if active {
                    break;
                }
            }
            let (chains, check) = result.expect("at least one try");
            let counterexample = (!check.passed()).then(|| LemmaCounterexample {
                draw: d,
                config: LemmaConfig::Lemma2 { s_prime, chains },
                valuations: setting.tables(),
            });
            (check.all_hold(), counterexample)
        })
        .collect();
    LemmaSweep::collect(draws, results)
}

/// Subadditivity of `v_b(· | base)` for random `(instance, bidder, base)`.
/// Every draw is active.
pub fn subadditivity_sweep(settings: &[Setting], draws: u64, seed: u64) -> LemmaSweep {
    assert!(!settings.is_empty());
    let results = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng_from_seed(derive_seed(seed, d));
            let setting = pick(&mut rng, settings);
            let n = setting.n();
            let bidder = rng.gen_range(0..n);
            let base = SignalSet::from_mask(rng.gen_range(0..1u32 << n));
            let table = setting.valuation(bidder).conditional(base);
            let counterexample = (!is_subadditive(&table)).then(|| {
                let (a, b) = crate::valuation::subadditivity_witness(&table).expect("witness exists");
                LemmaCounterexample {
                    draw: d,
                    config: LemmaConfig::Subadditivity { bidder, base, a, b },
                    valuations: setting.tables(),
                }
            });
            (true, counterexample)
        })
        .collect();
    LemmaSweep::collect(draws, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::allocate;
    use crate::seed::rng_from_seed;
    use crate::signal::SignalSet as S;

    fn flagship() -> Setting {
        Setting::from_integer_tables(&[&[1, 2, 1, 2], &[0, 10, 0, 10]]).unwrap()
    }

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn flagship_feasibility_and_sums() {
        let x = allocate(&flagship()).unwrap().rule;
        assert!(check_feasibility(&x).passed());
        assert_eq!(column_sums(&x), vec![r(1, 2), r(1, 1), r(1, 2), r(1, 1)]);
        assert!(check_monotonicity(&x).passed());
    }

    #[test]
    fn three_winners_fail_feasibility() {
        let h = r(1, 2);
        let x = AllocationRule::from_columns(3, vec![vec![h, h, h]; 8]).unwrap();
        let rep = check_feasibility(&x);
        assert!(!rep.passed());
        assert_eq!(rep.violations[0], Violation::ColumnSum { set: S::EMPTY, sum: r(3, 2) });
        assert_eq!(rep.violations[1], Violation::WinnerCount { set: S::EMPTY, winners: 3 });
    }

    #[test]
    fn single_bidder_rule_is_feasible() {
        let x = allocate(&Setting::from_integer_tables(&[&[1, 2]]).unwrap()).unwrap().rule;
        assert!(check_feasibility(&x).passed());
        assert_eq!(column_sums(&x), vec![r(1, 2), r(1, 2)]);
    }

    #[test]
    fn decreasing_rule_fails_monotonicity() {
        let x = AllocationRule::from_columns(1, vec![vec![r(1, 2)], vec![r(0, 1)]]).unwrap();
        let rep = check_monotonicity(&x);
        assert_eq!(
            rep.violations,
            vec![Violation::Monotonicity { bidder: 0, set: S::EMPTY, low: r(1, 2), high: r(0, 1) }]
        );
    }

    #[test]
    fn flagship_ratio_is_tight() {
        let setting = flagship();
        let x = allocate(&setting).unwrap().rule;
        let rep = check_approximation(&setting, &x, r(2, 1));
        assert!(rep.passed());
        assert_eq!(rep.min_ratio, Some(MinRatio { ratio: r(1, 2), set: S::EMPTY }));
        assert_eq!(x.welfare(&setting, S::from_bidders([0])), r(6, 1));
        assert!(!check_approximation(&setting, &x, r(19, 10)).passed());
    }

    #[test]
    fn zero_setting_is_vacuous() {
        let setting = Setting::from_integer_tables(&[&[0; 4], &[0; 4]]).unwrap();
        let x = allocate(&setting).unwrap().rule;
        let rep = check_approximation(&setting, &x, r(2, 1));
        assert!(rep.passed());
        assert_eq!(rep.cases, 0);
        let m = Mechanism::new(&setting, x).unwrap();
        assert!(check_ex_post_ic_ir(&m).iter().all(CheckReport::passed));
    }

    #[test]
    fn flagship_mechanism_is_truthful() {
        let setting = flagship();
        let m = Mechanism::new(&setting, allocate(&setting).unwrap().rule).unwrap();
        let reports = check_ex_post_ic_ir(&m);
        assert_eq!(reports.iter().map(|r| r.cases).sum::<usize>(), 16);
        assert!(reports.iter().all(CheckReport::passed));
    }

    #[test]
    fn inflated_payments_break_ir() {
        let setting = flagship();
        let mut m = Mechanism::new(&setting, allocate(&setting).unwrap().rule).unwrap();
        let s1 = S::from_bidders([0]);
        m.payments.set_payment(1, s1, r(6, 1));
        let reports = check_ex_post_ic_ir(&m);
        assert_eq!(
            reports[0].violations,
            vec![Violation::IndividualRationality { bidder: 1, profile: s1, utility: r(-1, 1) }]
        );
    }

    #[test]
    fn lemma1_examples() {
        let zero = Setting::from_integer_tables(&[&[0; 8], &[0; 8], &[0; 8]]).unwrap();
        let c = lemma1_oracle(&zero, S::EMPTY, 0, 1, 2);
        assert!(c.all_hold() && c.passed());
        let card: &[i64] = &[0, 1, 1, 2, 1, 2, 2, 3];
        let modular = Setting::from_integer_tables(&[card, card, card]).unwrap();
        let c = lemma1_oracle(&modular, S::EMPTY, 0, 1, 2);
        assert!(c.inequalities[0].holds() && !c.inequalities[0].is_strict());
        assert!(c.inequalities[1].holds() && !c.inequalities[1].is_strict());
        assert_eq!(c.inequalities[2], Inequality { lhs: r(2, 1), rhs: r(4, 1) });
        assert!(c.passed());
    }

    #[test]
    fn lemma2_without_bridges_is_the_three_block_system() {
        let card: &[i64] = &[0, 1, 1, 2, 1, 2, 2, 3];
        let s = Setting::from_integer_tables(&[card, &[0, 2, 1, 3, 1, 3, 2, 4], card]).unwrap();
        let (i, j, k) = (0, 1, 2);
        let top = S::full(3);
        let c = lemma2_oracle(&s, S::EMPTY, &BridgeChains::plain(i, j, k));
        let v = |b, set| s.value(b, set);
        let expected = vec![
            Inequality { lhs: v(i, top.without(i)), rhs: v(k, top.without(i)) + v(j, top.without(i)) },
            Inequality { lhs: v(j, top.without(j)), rhs: v(k, top.without(j)) + v(i, top.without(j)) },
            Inequality { lhs: v(k, top.without(k)), rhs: v(i, top.without(k)) + v(j, top.without(k)) },
        ];
        assert_eq!(c.inequalities, expected);
    }

    #[test]
    fn lemma2_bridge_terms() {
        let chains = BridgeChains { i: 0, j: 1, k: 2, first: vec![3], second: vec![], third: vec![4, 5] };
        let terms = chains.terms();
        assert_eq!(terms.len(), 6);
        assert_eq!(terms[0], (0, 1, 3, S::from_bidders([0])));
        assert_eq!(terms[1], (3, 1, 2, S::from_bidders([0, 3])));
        assert_eq!(terms[2], (1, 0, 2, S::from_bidders([1])));
        assert_eq!(terms[3], (2, 1, 4, S::from_bidders([2])));
        assert_eq!(terms[4], (4, 1, 5, S::from_bidders([2, 4])));
        assert_eq!(terms[5], (5, 1, 0, S::from_bidders([2, 4, 5])));
    }

    #[test]
    fn lemma2_zero_valuations_pass_with_equality() {
        let zeros: &[i64] = &[0; 32];
        let s = Setting::from_integer_tables(&[zeros; 5]).unwrap();
        let chains = BridgeChains { i: 0, j: 1, k: 2, first: vec![3], second: vec![4], third: vec![] };
        let c = lemma2_oracle(&s, S::EMPTY, &chains);
        assert!(c.all_hold() && c.passed());
    }

    #[test]
    fn coincident_bidders_can_break_lemma1_literally() {
        // i = j: v_1 ≡ 0 and v_2 = s_1 satisfy all three with the third strict.
        let s = Setting::from_integer_tables(&[&[0, 0, 0, 0], &[0, 1, 0, 1]]).unwrap();
        let c = lemma1_oracle(&s, S::EMPTY, 0, 0, 1);
        assert!(c.all_hold());
        assert!(!c.passed());
    }

    #[test]
    fn shared_bridge_can_break_lemma2_literally() {
        // t₁ = t′₁ = bidder 3; v_k depends only on s_t, all others are zero.
        let zero: &[i64] = &[0; 16];
        let vk: Vec<i64> = (0..16).map(|m| (m >> 3) & 1).collect();
        let s = Setting::from_integer_tables(&[zero, zero, &vk, zero]).unwrap();
        let chains = BridgeChains { i: 0, j: 1, k: 2, first: vec![3], second: vec![3], third: vec![] };
        let c = lemma2_oracle(&s, S::EMPTY, &chains);
        assert!(c.all_hold());
        assert!(!c.passed());
    }

    #[test]
    fn random_chains_are_distinct() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let c = random_bridge_chains(&mut rng, 6, [1, 1, 1]).unwrap();
            assert_eq!(c.member_set().len(), 6);
        }
        assert_eq!(random_bridge_chains(&mut rng, 6, [2, 1, 1]), None);
        for _ in 0..100 {
            let (_, i, j, k) = random_lemma1_config(&mut rng, 3);
            assert!(i != j && k < 3);
        }
    }

    #[test]
    fn guided_chains_use_each_member_once() {
        let settings = lemma_settings(6, 3, 4);
        let mut rng = rng_from_seed(5);
        let members = [5, 0, 2, 3, 1];
        let c = guided_bridge_chains(&mut rng, &settings[0], S::EMPTY, &members, [1, 0, 1]);
        assert_eq!(c.member_set(), S::from_bidders(members));
        assert_eq!((c.first.len(), c.second.len(), c.third.len()), (1, 0, 1));
    }

    #[test]
    fn small_sweeps_are_clean_and_reproducible() {
        let settings = lemma_settings(4, 30, 9);
        assert_eq!(settings.len(), 30);
        assert!(settings.iter().all(Setting::is_sos));
        let a = lemma1_sweep(&settings, 2000, 1);
        assert!(a.passed());
        assert!(a.active > 0);
        assert_eq!(a, lemma1_sweep(&settings, 2000, 1));
        let b = lemma2_sweep(&settings, [1, 0, 0], 2000, 2);
        assert!(b.passed());
        assert_eq!(subadditivity_sweep(&settings, 500, 3).counterexamples, vec![]);
    }

    #[test]
    fn flagship_trace_observations() {
        let setting = flagship();
        let a = allocate(&setting).unwrap();
        let first = a.trace[0];
        assert_eq!((first.bidder, first.column, first.cause), (0, S::EMPTY, Cause::Priority2));
        let rep = trace_observation_oracle(&setting, &a.trace);
        assert!(rep.passed());
        assert!(rep.cases >= 2);
    }
}
