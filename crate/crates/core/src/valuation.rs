//! SOS valuation profiles over binary signals.
//!
//! A [`Valuation`] is one bidder's value as a set function of the signal set:
//! a table of `2^n` non-negative rationals indexed by [`SignalSet`]. A
//! [`Setting`] bundles one valuation per bidder. The mechanism requires every
//! valuation to be monotone and submodular; [`Valuation::validate`] reports
//! both, plus the (advisory) strict increase in the owner's own signal.

use num_traits::Zero;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rational::Rational;
use crate::seed::{derive_seed, rng_from_seed};
use crate::signal::{SignalSet, MAX_BIDDERS};

/// Attempts [`gen_random_sos`] makes before giving up.
pub const GENERATOR_ATTEMPTS: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValuationError {
    #[error("bidder count {0} outside 1..={MAX_BIDDERS}")]
    BidderCount(usize),
    #[error("bidder {owner}: table has {found} entries, expected {expected}")]
    TableSize { owner: usize, expected: usize, found: usize },
    #[error("bidder {owner}: negative value at {set}")]
    NegativeEntry { owner: usize, set: SignalSet },
    #[error("owner index {owner} out of range for {n} bidders")]
    OwnerOutOfRange { owner: usize, n: usize },
    #[error("valuation at position {position} belongs to bidder {owner}")]
    OwnerMismatch { position: usize, owner: usize },
    #[error("setting has {found} valuations for {n} bidders")]
    ValuationCount { n: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerateError {
    #[error("bidder count {0} outside 1..={MAX_BIDDERS}")]
    BidderCount(usize),
    #[error("value scale must be positive")]
    Scale,
    #[error("owner index {owner} out of range for {n} bidders")]
    Owner { owner: usize, n: usize },
    #[error("no valid instance after {attempts} attempts")]
    BudgetExhausted { attempts: u64 },
}

fn check_bidder_count(n: usize) -> Result<(), ValuationError> {
    if n == 0 || n > MAX_BIDDERS {
        Err(ValuationError::BidderCount(n))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Valuation {
    owner: usize,
    n: usize,
    table: Vec<Rational>,
}

impl Valuation {
    /// Checks the table shape (`2^n` entries) and non-negativity.
    pub fn new(n: usize, owner: usize, table: Vec<Rational>) -> Result<Self, ValuationError> {
        check_bidder_count(n)?;
        if owner >= n {
            return Err(ValuationError::OwnerOutOfRange { owner, n });
        }
        let expected = 1usize << n;
        if table.len() != expected {
            return Err(ValuationError::TableSize { owner, expected, found: table.len() });
        }
        if let Some(pos) = table.iter().position(|v| *v < Rational::zero()) {
            return Err(ValuationError::NegativeEntry { owner, set: SignalSet::from_mask(pos as u32) });
        }
        Ok(Valuation { owner, n, table })
    }

    pub fn from_integers(n: usize, owner: usize, table: &[i64]) -> Result<Self, ValuationError> {
        Self::new(n, owner, table.iter().copied().map(Rational::from_integer).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    #[inline]
    pub fn value(&self, set: SignalSet) -> Rational {
        self.table[set.index()]
    }

    pub fn table(&self) -> &[Rational] {
        &self.table
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport {
            monotone: true,
            submodular: true,
            own_strict: true,
            monotone_witness: None,
            submodular_witness: None,
            own_strict_witness: None,
        };
        for set in SignalSet::all(self.n) {
            let base = self.value(set);
            for a in (0..self.n).filter(|&a| !set.contains(a)) {
                let with_a = self.value(set.with(a));
                if with_a < base && report.monotone {
                    report.monotone = false;
                    report.monotone_witness = Some(MonotoneWitness { set, bidder: a });
                }
                if a == self.owner && with_a <= base && report.own_strict {
                    report.own_strict = false;
                    report.own_strict_witness = Some(set);
                }
                if report.submodular {
                    let gain_a = with_a - base;
                    for b in (a + 1..self.n).filter(|&b| !set.contains(b)) {
                        let with_b = self.value(set.with(b));
                        if gain_a < self.value(set.with(a).with(b)) - with_b {
                            report.submodular = false;
                            report.submodular_witness = Some(SubmodularWitness { set, a, b });
                            break;
                        }
                    }
                }
            }
        }
        report
    }

    /// The conditional set function `T ↦ v(T ∪ base) − v(base)`.
    pub fn conditional(&self, base: SignalSet) -> Vec<Rational> {
        let anchor = self.value(base);
        SignalSet::all(self.n).map(|t| self.value(t.union(base)) - anchor).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonotoneWitness {
    pub set: SignalSet,
    pub bidder: usize,
}

/// `v(S ∪ {a}) − v(S) < v(S ∪ {a, b}) − v(S ∪ {b})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SubmodularWitness {
    pub set: SignalSet,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub monotone: bool,
    pub submodular: bool,
    /// Strictly increasing in the owner's signal. Advisory only.
    pub own_strict: bool,
    pub monotone_witness: Option<MonotoneWitness>,
    pub submodular_witness: Option<SubmodularWitness>,
    pub own_strict_witness: Option<SignalSet>,
}

impl ValidationReport {
    pub fn is_sos(&self) -> bool {
        self.monotone && self.submodular
    }
}

fn table_bidders(len: usize) -> usize {
    debug_assert!(len.is_power_of_two());
    len.trailing_zeros() as usize
}

/// Submodularity checked against the full quantifier: for all `S ⊆ T` and
/// `i ∉ T`, `f(S ∪ {i}) − f(S) ≥ f(T ∪ {i}) − f(T)`. Cost is `O(n·3^n)`.
pub fn is_submodular_exhaustive(table: &[Rational]) -> bool {
    let n = table_bidders(table.len());
    for t in SignalSet::all(n) {
        // Enumerate all submasks s of t.
        let mut sub = t.mask();
        loop {
            let s = SignalSet::from_mask(sub);
            for i in (0..n).filter(|&i| !t.contains(i)) {
                let small = table[s.with(i).index()] - table[s.index()];
                let large = table[t.with(i).index()] - table[t.index()];
                if small < large {
                    return false;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & t.mask();
        }
    }
    true
}

/// First pair `(S, T)` with `f(S) + f(T) < f(S ∪ T)`, if any.
pub fn subadditivity_witness(table: &[Rational]) -> Option<(SignalSet, SignalSet)> {
    let n = table_bidders(table.len());
    for s in SignalSet::all(n) {
        for t in SignalSet::all(n).filter(|t| t.mask() >= s.mask()) {
            if table[s.index()] + table[t.index()] < table[s.union(t).index()] {
                return Some((s, t));
            }
        }
    }
    None
}

pub fn is_subadditive(table: &[Rational]) -> bool {
    subadditivity_witness(table).is_none()
}

/// Highest value at a profile, with every bidder attaining it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Welfare {
    pub value: Rational,
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    n: usize,
    valuations: Vec<Valuation>,
}

impl Setting {
    pub fn new(valuations: Vec<Valuation>) -> Result<Self, ValuationError> {
        let n = valuations.len();
        check_bidder_count(n)?;
        for (position, v) in valuations.iter().enumerate() {
            if v.owner() != position {
                return Err(ValuationError::OwnerMismatch { position, owner: v.owner() });
            }
            if v.n() != n {
                return Err(ValuationError::ValuationCount { n: v.n(), found: n });
            }
        }
        Ok(Setting { n, valuations })
    }

    /// Builds a setting from per-bidder tables (bidder order = row order).
    pub fn from_tables(tables: Vec<Vec<Rational>>) -> Result<Self, ValuationError> {
        let n = tables.len();
        check_bidder_count(n)?;
        let valuations = tables
            .into_iter()
            .enumerate()
            .map(|(owner, t)| Valuation::new(n, owner, t))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(valuations)
    }

    pub fn from_integer_tables(tables: &[&[i64]]) -> Result<Self, ValuationError> {
        Self::from_tables(tables.iter().map(|t| t.iter().copied().map(Rational::from_integer).collect()).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn valuations(&self) -> &[Valuation] {
        &self.valuations
    }

    pub fn valuation(&self, bidder: usize) -> &Valuation {
        &self.valuations[bidder]
    }

    #[inline]
    pub fn value(&self, bidder: usize, set: SignalSet) -> Rational {
        self.valuations[bidder].value(set)
    }

    /// `OPT(S) = max_i v_i(S)`.
    pub fn opt(&self, set: SignalSet) -> Rational {
        self.valuations.iter().map(|v| v.value(set)).max().expect("n >= 1")
    }

    pub fn opt_welfare(&self, set: SignalSet) -> Welfare {
        let value = self.opt(set);
        let argmax = (0..self.n).filter(|&b| self.value(b, set) == value).collect();
        Welfare { value, argmax }
    }

    /// Per-bidder validation reports, bidder order.
    pub fn validate(&self) -> Vec<ValidationReport> {
        self.valuations.iter().map(Valuation::validate).collect()
    }

    /// First bidder whose valuation is not monotone submodular.
    pub fn first_invalid(&self) -> Option<(usize, ValidationReport)> {
        self.valuations.iter().map(Valuation::validate).enumerate().find(|(_, r)| !r.is_sos())
    }

    pub fn is_sos(&self) -> bool {
        self.first_invalid().is_none()
    }

    pub fn tables(&self) -> Vec<Vec<Rational>> {
        self.valuations.iter().map(|v| v.table.clone()).collect()
    }
}

/// Random monotone submodular valuation on the grid `{0, 1/scale, 2/scale, …}`.
///
/// Subsets are filled in inclusion order. Each value is drawn uniformly from
/// `[max_j v(S∖j), min_{a≠b} v(S∖a) + v(S∖b) − v(S∖ab)]`, with the upper end
/// replaced by `lower + 1` for `|S| ≤ 1`. An empty interval discards the whole
/// attempt; the next attempt uses the next derived seed.
pub fn gen_random_sos(n: usize, owner: usize, seed: u64, scale: u32) -> Result<Valuation, GenerateError> {
    if n == 0 || n > MAX_BIDDERS {
        return Err(GenerateError::BidderCount(n));
    }
    if scale == 0 {
        return Err(GenerateError::Scale);
    }
    if owner >= n {
        return Err(GenerateError::Owner { owner, n });
    }
    let order = SignalSet::inclusion_order(n);
    for attempt in 0..GENERATOR_ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(seed, attempt));
        if let Some(units) = sample_layered(&order, scale as i64, &mut rng) {
            let table = units.into_iter().map(|u| Rational::new(u, scale as i64)).collect();
            let v = Valuation::new(n, owner, table).expect("generated table has valid shape");
            if v.validate().is_sos() {
                return Ok(v);
            }
        }
    }
    Err(GenerateError::BudgetExhausted { attempts: GENERATOR_ATTEMPTS })
}

fn sample_layered<R: Rng>(order: &[SignalSet], scale: i64, rng: &mut R) -> Option<Vec<i64>> {
    let mut units = vec![0i64; order.len()];
    for &set in order {
        let lower = set.iter().map(|j| units[set.without(j).index()]).max().unwrap_or(0);
        let upper = if set.len() <= 1 {
            lower + scale
        } else {
            let mut upper = i64::MAX;
            for a in set.iter() {
                for b in set.iter().filter(|&b| b > a) {
                    let bound = units[set.without(a).index()] + units[set.without(b).index()]
                        - units[set.without(a).without(b).index()];
                    upper = upper.min(bound);
                }
            }
            upper
        };
        if upper < lower {
            return None;
        }
        units[set.index()] = rng.gen_range(lower..=upper);
    }
    Some(units)
}

/// Derived streams tried per bidder by [`gen_random_setting`].
pub const SETTING_STREAMS: u64 = 64;

/// `n` independent random SOS valuations. Bidder `b` uses the first stream
/// `derive_seed(derive_seed(seed, b), r)` for `r < SETTING_STREAMS` whose
/// generator run succeeds.
pub fn gen_random_setting(n: usize, seed: u64, scale: u32) -> Result<Setting, GenerateError> {
    if n == 0 || n > MAX_BIDDERS {
        return Err(GenerateError::BidderCount(n));
    }
    let mut valuations = Vec::with_capacity(n);
    for b in 0..n {
        let base = derive_seed(seed, b as u64);
        let mut found = None;
        for stream in 0..SETTING_STREAMS {
            match gen_random_sos(n, b, derive_seed(base, stream), scale) {
                Ok(v) => {
                    found = Some(v);
                    break;
                }
                Err(GenerateError::BudgetExhausted { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        valuations
            .push(found.ok_or(GenerateError::BudgetExhausted { attempts: GENERATOR_ATTEMPTS * SETTING_STREAMS })?);
    }
    Ok(Setting::new(valuations).expect("generated valuations are consistent"))
}

/// Budget-additive valuations `v_b(S) = min(B_b, c_b + Σ_{j∈S} w_bj)` with
/// integer parameters drawn from `0..=scale`. Always SOS, at any `n`, so it
/// serves where the layered generator stalls.
pub fn gen_budget_additive_setting(n: usize, seed: u64, scale: u32) -> Result<Setting, GenerateError> {
    if n == 0 || n > MAX_BIDDERS {
        return Err(GenerateError::BidderCount(n));
    }
    if scale == 0 {
        return Err(GenerateError::Scale);
    }
    let scale = scale as i64;
    let valuations = (0..n)
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, b as u64));
            let base = rng.gen_range(0..=scale);
            let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=scale)).collect();
            let budget = base + rng.gen_range(0..=weights.iter().sum::<i64>());
            let table = SignalSet::all(n)
                .map(|s| Rational::from_integer(budget.min(base + s.iter().map(|j| weights[j]).sum::<i64>())))
                .collect();
            Valuation::new(n, b, table).expect("budget-additive table has valid shape")
        })
        .collect();
    Ok(Setting::new(valuations).expect("generated valuations are consistent"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(values: &[i64]) -> Vec<Rational> {
        values.iter().copied().map(Rational::from_integer).collect()
    }

    fn cardinality(n: usize) -> Valuation {
        Valuation::new(n, 0, SignalSet::all(n).map(|s| Rational::from_integer(s.len() as i64)).collect()).unwrap()
    }

    #[test]
    fn budget_additive_family_is_sos() {
        for seed in 0..20 {
            let s = gen_budget_additive_setting(5, seed, 4).unwrap();
            assert!(s.is_sos());
        }
        assert_eq!(gen_budget_additive_setting(3, 1, 4), gen_budget_additive_setting(3, 1, 4));
    }

    #[test]
    fn setting_generation_succeeds_at_six_bidders() {
        let s = gen_random_setting(6, 11, 100).unwrap();
        assert!(s.is_sos());
        assert_eq!(s, gen_random_setting(6, 11, 100).unwrap());
    }

    #[test]
    fn modular_function_is_sos() {
        let r = cardinality(3).validate();
        assert!(r.monotone && r.submodular);
    }

    #[test]
    fn supermodular_pair_is_rejected() {
        let v = Valuation::from_integers(2, 0, &[0, 1, 1, 4]).unwrap();
        let r = v.validate();
        assert!(r.monotone);
        assert!(!r.submodular);
        assert_eq!(r.submodular_witness, Some(SubmodularWitness { set: SignalSet::EMPTY, a: 0, b: 1 }));
    }

    #[test]
    fn flagship_first_bidder_passes_every_flag() {
        let r = Valuation::from_integers(2, 0, &[1, 2, 1, 2]).unwrap().validate();
        assert!(r.monotone && r.submodular && r.own_strict);
    }

    #[test]
    fn constant_in_own_signal_only_warns() {
        // v2 = 10·s1 does not depend on s2.
        let r = Valuation::from_integers(2, 1, &[0, 10, 0, 10]).unwrap().validate();
        assert!(r.is_sos());
        assert!(!r.own_strict);
        assert_eq!(r.own_strict_witness, Some(SignalSet::EMPTY));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            Valuation::from_integers(2, 0, &[0, 1, 2]),
            Err(ValuationError::TableSize { owner: 0, expected: 4, found: 3 })
        );
        assert_eq!(
            Valuation::from_integers(1, 0, &[0, -1]),
            Err(ValuationError::NegativeEntry { owner: 0, set: SignalSet::from_mask(1) })
        );
        assert_eq!(Valuation::from_integers(0, 0, &[0]), Err(ValuationError::BidderCount(0)));
        assert_eq!(Valuation::from_integers(1, 1, &[0, 0]), Err(ValuationError::OwnerOutOfRange { owner: 1, n: 1 }));
        assert!(Setting::from_integer_tables(&[&[0, 1], &[0, 1, 2, 3]]).is_err());
    }

    #[test]
    fn non_monotone_is_flagged() {
        let r = Valuation::from_integers(2, 0, &[2, 1, 2, 2]).unwrap().validate();
        assert!(!r.monotone);
        assert_eq!(r.monotone_witness, Some(MonotoneWitness { set: SignalSet::EMPTY, bidder: 0 }));
    }

    #[test]
    fn conditional_of_modular() {
        let u = cardinality(2).conditional(SignalSet::from_bidders([0]));
        assert_eq!(u, ints(&[0, 0, 1, 1]));
    }

    #[test]
    fn conditional_of_flagship_second_bidder_vanishes() {
        let v = Valuation::from_integers(2, 1, &[0, 10, 0, 10]).unwrap();
        assert_eq!(v.conditional(SignalSet::from_bidders([0])), ints(&[0, 0, 0, 0]));
    }

    #[test]
    fn subadditivity_examples() {
        let concave =
            vec![Rational::from_integer(0), Rational::from_integer(1), Rational::from_integer(1), Rational::new(3, 2)];
        assert!(is_subadditive(&concave));
        assert!(!is_subadditive(&ints(&[0, 1, 1, 3])));
    }

    #[test]
    fn opt_welfare_on_flagship() {
        let s = Setting::from_integer_tables(&[&[1, 2, 1, 2], &[0, 10, 0, 10]]).unwrap();
        let w = s.opt_welfare(SignalSet::from_bidders([0]));
        assert_eq!(w.value, Rational::from_integer(10));
        assert_eq!(w.argmax, vec![1]);
        let zero = Setting::from_integer_tables(&[&[0, 0, 0, 0], &[0, 0, 0, 0]]).unwrap();
        assert!(SignalSet::all(2).all(|s| zero.opt(s) == Rational::zero()));
        assert_eq!(zero.opt_welfare(SignalSet::EMPTY).argmax, vec![0, 1]);
    }

    #[test]
    fn single_bidder_generator_bounds() {
        for seed in 0..200 {
            let v = gen_random_sos(1, 0, seed, 10).unwrap();
            let empty = v.value(SignalSet::EMPTY);
            let full = v.value(SignalSet::full(1));
            assert!(empty >= Rational::zero() && empty <= Rational::from_integer(1));
            assert!(full >= empty && full <= empty + Rational::from_integer(1));
        }
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let a = gen_random_sos(2, 0, 42, 100).unwrap();
        let b = gen_random_sos(2, 0, 42, 100).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_sos());
        assert_ne!(a, gen_random_sos(2, 0, 43, 100).unwrap());
    }

    #[test]
    fn generator_rejects_bad_parameters() {
        assert_eq!(gen_random_sos(21, 0, 0, 10), Err(GenerateError::BidderCount(21)));
        assert_eq!(gen_random_sos(0, 0, 0, 10), Err(GenerateError::BidderCount(0)));
        assert_eq!(gen_random_sos(2, 0, 0, 0), Err(GenerateError::Scale));
    }

    #[test]
    fn pairwise_and_exhaustive_submodularity_agree() {
        // Random tables, most of which violate something.
        let mut rng = rng_from_seed(5);
        for n in 1..=4 {
            for _ in 0..2000 {
                let table: Vec<Rational> = (0..1 << n).map(|_| Rational::from_integer(rng.gen_range(0..4))).collect();
                let v = Valuation::new(n, 0, table.clone()).unwrap();
                assert_eq!(v.validate().submodular, is_submodular_exhaustive(&table));
            }
        }
    }
}
