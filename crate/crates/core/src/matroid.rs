//! Matroid auction settings.
//!
//! The mechanism runs the single-item allocation once per unit of rank. In
//! each round only the bidders that can still be added to the current winner
//! set `W` take part: `E = {b ∉ W : W ∪ {b} independent}`. Bidders outside `E`
//! keep their reported signals, so a round sees the conditioned valuations
//! `v'_b(T) = v_b(T ∪ (S ∖ E))` for `T ⊆ E`. A round may end without a
//! winner; the next round then repeats with the same `E`.
//!
//! Expected welfare and win probabilities are computed exactly by
//! enumerating every branch.

use std::collections::HashMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{allocate, AllocationError, AllocationRule};
use crate::rational::{serde_rational, serde_rational_vec, Rational};
use crate::signal::{SignalSet, MAX_BIDDERS};
use crate::valuation::Setting;

/// Largest ground set accepted for an explicit list of independent sets.
pub const MAX_EXPLICIT_BIDDERS: usize = 6;
/// Largest ground set accepted for a uniform matroid.
pub const MAX_UNIFORM_BIDDERS: usize = 10;
/// Branch enumeration is refused when `(n + 1)^rank` exceeds this.
pub const BRANCH_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatroidError {
    #[error("ground set of {n} bidders exceeds the limit of {limit}")]
    GroundSet { n: usize, limit: usize },
    #[error("uniform rank {k} exceeds ground set size {n}")]
    UniformRank { n: usize, k: usize },
    #[error("independent set {0} does not fit the ground set")]
    OutOfRange(SignalSet),
    #[error("the empty set is not listed as independent")]
    MissingEmpty,
    #[error("{set} is independent but its subset {subset} is not")]
    NotDownwardClosed { set: SignalSet, subset: SignalSet },
    #[error("exchange fails: no element of {larger} extends {smaller}")]
    Exchange { smaller: SignalSet, larger: SignalSet },
    #[error("matroid has {matroid} bidders, setting has {setting}")]
    BidderCount { matroid: usize, setting: usize },
    #[error("branch enumeration too large: ({n}+1)^{rank} > {BRANCH_LIMIT}")]
    Intractable { n: usize, rank: usize },
    #[error("single-item allocation failed: {0}")]
    Allocation(Box<AllocationError>),
}

/// Independence system over bidders `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Matroid {
    Uniform {
        #[serde(skip)]
        n: usize,
        k: usize,
    },
    Explicit {
        #[serde(skip)]
        n: usize,
        #[serde(rename = "independent_sets")]
        sets: Vec<SignalSet>,
    },
}

impl Matroid {
    pub fn uniform(n: usize, k: usize) -> Result<Self, MatroidError> {
        if n == 0 || n > MAX_UNIFORM_BIDDERS {
            return Err(MatroidError::GroundSet { n, limit: MAX_UNIFORM_BIDDERS });
        }
        if k > n {
            return Err(MatroidError::UniformRank { n, k });
        }
        Ok(Matroid::Uniform { n, k })
    }

    /// Every subset is independent.
    pub fn free(n: usize) -> Result<Self, MatroidError> {
        Self::uniform(n, n)
    }

    /// Validates the matroid axioms on the listed independent sets.
    pub fn explicit(n: usize, sets: impl IntoIterator<Item = SignalSet>) -> Result<Self, MatroidError> {
        if n == 0 || n > MAX_EXPLICIT_BIDDERS {
            return Err(MatroidError::GroundSet { n, limit: MAX_EXPLICIT_BIDDERS });
        }
        let mut member = vec![false; 1 << n];
        for set in sets {
            if !set.fits(n) {
                return Err(MatroidError::OutOfRange(set));
            }
            member[set.index()] = true;
        }
        if !member[0] {
            return Err(MatroidError::MissingEmpty);
        }
        let listed: Vec<SignalSet> = SignalSet::all(n).filter(|s| member[s.index()]).collect();
        for &set in &listed {
            if let Some(b) = set.iter().find(|&b| !member[set.without(b).index()]) {
                return Err(MatroidError::NotDownwardClosed { set, subset: set.without(b) });
            }
        }
        for &small in &listed {
            for &large in listed.iter().filter(|l| l.len() > small.len()) {
                if !large.difference(small).iter().any(|b| member[small.with(b).index()]) {
                    return Err(MatroidError::Exchange { smaller: small, larger: large });
                }
            }
        }
        Ok(Matroid::Explicit { n, sets: listed })
    }

    /// Restores the ground-set size after deserialization, revalidating.
    pub fn with_ground_set(self, n: usize) -> Result<Self, MatroidError> {
        match self {
            Matroid::Uniform { k, .. } => Self::uniform(n, k),
            Matroid::Explicit { sets, .. } => Self::explicit(n, sets),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Matroid::Uniform { n, .. } | Matroid::Explicit { n, .. } => *n,
        }
    }

    pub fn is_independent(&self, set: SignalSet) -> bool {
        match self {
            Matroid::Uniform { n, k } => set.fits(*n) && set.len() <= *k,
            Matroid::Explicit { sets, .. } => sets.contains(&set),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Matroid::Uniform { k, .. } => *k,
            Matroid::Explicit { sets, .. } => sets.iter().map(|s| s.len()).max().unwrap_or(0),
        }
    }

    /// Bidders outside `winners` that can still be added.
    pub fn extensions(&self, winners: SignalSet) -> SignalSet {
        SignalSet::from_bidders((0..self.n()).filter(|&b| !winners.contains(b) && self.is_independent(winners.with(b))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GreedyResult {
    #[serde(with = "serde_rational")]
    pub total: Rational,
    pub winners: Vec<usize>,
}

/// Greedy by descending `v_b(S)`, ties by index.
pub fn greedy_opt(setting: &Setting, matroid: &Matroid, set: SignalSet) -> GreedyResult {
    let mut order: Vec<usize> = (0..setting.n()).collect();
    order.sort_by(|&a, &b| setting.value(b, set).cmp(&setting.value(a, set)).then(a.cmp(&b)));
    let mut chosen = SignalSet::EMPTY;
    let mut result = GreedyResult { total: Rational::zero(), winners: Vec::new() };
    for b in order {
        if matroid.is_independent(chosen.with(b)) {
            chosen = chosen.with(b);
            result.total += setting.value(b, set);
            result.winners.push(b);
        }
    }
    result
}

/// Best independent set by enumeration; the reference for [`greedy_opt`].
pub fn brute_force_opt(setting: &Setting, matroid: &Matroid, set: SignalSet) -> Rational {
    SignalSet::all(setting.n())
        .filter(|w| matroid.is_independent(*w))
        .map(|w| w.iter().map(|b| setting.value(b, set)).sum())
        .max()
        .unwrap_or_else(Rational::zero)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatroidOutcome {
    pub set: SignalSet,
    #[serde(with = "serde_rational")]
    pub expected_welfare: Rational,
    #[serde(with = "serde_rational_vec")]
    pub win_probabilities: Vec<Rational>,
    #[serde(with = "serde_rational")]
    pub greedy: Rational,
}

impl MatroidOutcome {
    /// `2 · E[welfare] ≥ greedy`.
    pub fn meets_bound(&self) -> bool {
        self.expected_welfare * Rational::from_integer(2) >= self.greedy
    }
}

#[derive(Clone)]
struct Branch {
    welfare: Rational,
    wins: Vec<Rational>,
}

/// Exact evaluation of the matroid mechanism for one setting. Single-item
/// allocations are cached per `(E, S ∖ E)`, so sweeping all profiles reuses
/// them.
pub struct MatroidEvaluator<'a> {
    setting: &'a Setting,
    matroid: &'a Matroid,
    rules: HashMap<(SignalSet, SignalSet), AllocationRule>,
}

impl<'a> MatroidEvaluator<'a> {
    pub fn new(setting: &'a Setting, matroid: &'a Matroid) -> Result<Self, MatroidError> {
        let n = setting.n();
        if matroid.n() != n {
            return Err(MatroidError::BidderCount { matroid: matroid.n(), setting: n });
        }
        let rank = matroid.rank();
        let branches = (n as u64 + 1).checked_pow(rank as u32);
        if branches.is_none_or(|b| b > BRANCH_LIMIT) {
            return Err(MatroidError::Intractable { n, rank });
        }
        Ok(MatroidEvaluator { setting, matroid, rules: HashMap::new() })
    }

    pub fn evaluate(&mut self, set: SignalSet) -> Result<MatroidOutcome, MatroidError> {
        let mut memo = HashMap::new();
        let root = self.branch(set, SignalSet::EMPTY, self.matroid.rank(), &mut memo)?;
        Ok(MatroidOutcome {
            set,
            expected_welfare: root.welfare,
            win_probabilities: root.wins,
            greedy: greedy_opt(self.setting, self.matroid, set).total,
        })
    }

    pub fn evaluate_all(&mut self) -> Result<Vec<MatroidOutcome>, MatroidError> {
        SignalSet::all(self.setting.n()).map(|s| self.evaluate(s)).collect()
    }

    fn branch(
        &mut self,
        set: SignalSet,
        winners: SignalSet,
        rounds: usize,
        memo: &mut HashMap<(SignalSet, usize), Branch>,
    ) -> Result<Branch, MatroidError> {
        let n = self.setting.n();
        let eligible = self.matroid.extensions(winners);
        if rounds == 0 || eligible.is_empty() {
            return Ok(Branch { welfare: Rational::zero(), wins: vec![Rational::zero(); n] });
        }
        if let Some(b) = memo.get(&(winners, rounds)) {
            return Ok(b.clone());
        }
        let probs = self.round(set, eligible)?;
        let mut out = Branch { welfare: Rational::zero(), wins: vec![Rational::zero(); n] };
        let mut residual = Rational::one();
        for (b, p) in probs.into_iter().filter(|(_, p)| !p.is_zero()) {
            residual -= p;
            let next = self.branch(set, winners.with(b), rounds - 1, memo)?;
            out.welfare += p * (self.setting.value(b, set) + next.welfare);
            out.wins[b] += p;
            for (w, x) in out.wins.iter_mut().zip(&next.wins) {
                *w += p * x;
            }
        }
        if !residual.is_zero() {
            let next = self.branch(set, winners, rounds - 1, memo)?;
            out.welfare += residual * next.welfare;
            for (w, x) in out.wins.iter_mut().zip(&next.wins) {
                *w += residual * x;
            }
        }
        memo.insert((winners, rounds), out.clone());
        Ok(out)
    }

    /// Winning probabilities `(bidder, p)` of one round among `eligible`.
    fn round(&mut self, set: SignalSet, eligible: SignalSet) -> Result<Vec<(usize, Rational)>, MatroidError> {
        let fixed = set.difference(eligible);
        let members: Vec<usize> = eligible.iter().collect();
        let local =
            SignalSet::from_bidders(members.iter().enumerate().filter(|(_, &b)| set.contains(b)).map(|(l, _)| l));
        if !self.rules.contains_key(&(eligible, fixed)) {
            let rule = allocate(&conditioned(self.setting, &members, fixed))
                .map_err(|e| MatroidError::Allocation(Box::new(e)))?
                .rule;
            self.rules.insert((eligible, fixed), rule);
        }
        let rule = &self.rules[&(eligible, fixed)];
        Ok(members.iter().enumerate().map(|(l, &b)| (b, rule.prob(l, local))).collect())
    }
}

/// Setting over `members` (renumbered `0..m`) with everyone else's signals
/// fixed to `fixed`.
pub fn conditioned(setting: &Setting, members: &[usize], fixed: SignalSet) -> Setting {
    let m = members.len();
    let tables = members
        .iter()
        .map(|&b| {
            SignalSet::all(m)
                .map(|t| setting.value(b, fixed.union(SignalSet::from_bidders(t.iter().map(|l| members[l])))))
                .collect()
        })
        .collect();
    Setting::from_tables(tables).expect("conditioned tables have valid shape")
}

pub fn matroid_expected_welfare(
    setting: &Setting,
    matroid: &Matroid,
    set: SignalSet,
) -> Result<Rational, MatroidError> {
    Ok(MatroidEvaluator::new(setting, matroid)?.evaluate(set)?.expected_welfare)
}

pub fn matroid_win_probability(
    setting: &Setting,
    matroid: &Matroid,
    bidder: usize,
    set: SignalSet,
) -> Result<Rational, MatroidError> {
    Ok(MatroidEvaluator::new(setting, matroid)?.evaluate(set)?.win_probabilities[bidder])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonotonicityViolation {
    pub bidder: usize,
    pub set: SignalSet,
    #[serde(with = "serde_rational")]
    pub low: Rational,
    #[serde(with = "serde_rational")]
    pub high: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatroidReport {
    pub outcomes: Vec<MatroidOutcome>,
    pub bound_violations: Vec<SignalSet>,
    pub monotonicity_violations: Vec<MonotonicityViolation>,
}

impl MatroidReport {
    pub fn passed(&self) -> bool {
        self.bound_violations.is_empty() && self.monotonicity_violations.is_empty()
    }
}

/// Evaluates every profile; checks the welfare bound and that each bidder's
/// win probability is weakly increasing in its own signal.
pub fn check_matroid(setting: &Setting, matroid: &Matroid) -> Result<MatroidReport, MatroidError> {
    let outcomes = MatroidEvaluator::new(setting, matroid)?.evaluate_all()?;
    let bound_violations = outcomes.iter().filter(|o| !o.meets_bound()).map(|o| o.set).collect();
    let mut monotonicity_violations = Vec::new();
    for bidder in 0..setting.n() {
        for set in SignalSet::all(setting.n()).filter(|s| !s.contains(bidder)) {
            let low = outcomes[set.index()].win_probabilities[bidder];
            let high = outcomes[set.with(bidder).index()].win_probabilities[bidder];
            if low > high {
                monotonicity_violations.push(MonotonicityViolation { bidder, set, low, high });
            }
        }
    }
    Ok(MatroidReport { outcomes, bound_violations, monotonicity_violations })
}

const _: () = assert!(MAX_UNIFORM_BIDDERS <= MAX_BIDDERS);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalSet as S;
    use crate::valuation::gen_random_setting;

    fn flagship() -> Setting {
        Setting::from_integer_tables(&[&[1, 2, 1, 2], &[0, 10, 0, 10]]).unwrap()
    }

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn masks(ms: &[u32]) -> Vec<S> {
        ms.iter().map(|&m| S::from_mask(m)).collect()
    }

    #[test]
    fn explicit_validation() {
        assert!(Matroid::explicit(2, masks(&[0, 1, 2])).is_ok());
        assert_eq!(Matroid::explicit(2, masks(&[1])), Err(MatroidError::MissingEmpty));
        assert_eq!(
            Matroid::explicit(2, masks(&[0, 3])),
            Err(MatroidError::NotDownwardClosed { set: S::from_mask(3), subset: S::from_mask(2) })
        );
        // {0} and {1,2} violate exchange.
        assert_eq!(
            Matroid::explicit(3, masks(&[0, 1, 2, 4, 6])),
            Err(MatroidError::Exchange { smaller: S::from_mask(1), larger: S::from_mask(6) })
        );
        assert_eq!(Matroid::explicit(2, masks(&[0, 4])), Err(MatroidError::OutOfRange(S::from_mask(4))));
        assert!(matches!(Matroid::explicit(7, masks(&[0])), Err(MatroidError::GroundSet { .. })));
    }

    #[test]
    fn uniform_basics() {
        let m = Matroid::uniform(4, 2).unwrap();
        assert_eq!(m.rank(), 2);
        assert!(m.is_independent(S::from_mask(0b1010)));
        assert!(!m.is_independent(S::from_mask(0b1011)));
        assert_eq!(m.extensions(S::from_mask(0b0001)), S::from_mask(0b1110));
        assert_eq!(m.extensions(S::from_mask(0b0011)), S::EMPTY);
        assert_eq!(Matroid::uniform(2, 3), Err(MatroidError::UniformRank { n: 2, k: 3 }));
        assert!(Matroid::uniform(11, 1).is_err());
    }

    #[test]
    fn loops_never_win() {
        let m = Matroid::explicit(2, masks(&[0, 1])).unwrap();
        let out = MatroidEvaluator::new(&flagship(), &m).unwrap().evaluate(S::full(2)).unwrap();
        assert_eq!(out.win_probabilities, vec![r(1, 2), r(0, 1)]);
        assert_eq!(out.expected_welfare, r(1, 1));
    }

    #[test]
    fn greedy_on_free_and_rank_one() {
        let s = flagship();
        let s1 = S::from_bidders([0]);
        let free = greedy_opt(&s, &Matroid::free(2).unwrap(), s1);
        assert_eq!(free.total, r(12, 1));
        assert_eq!(free.winners, vec![1, 0]);
        assert_eq!(greedy_opt(&s, &Matroid::uniform(2, 1).unwrap(), s1).total, s.opt(s1));
    }

    #[test]
    fn greedy_matches_brute_force() {
        let m = Matroid::explicit(4, masks(&[0, 1, 2, 4, 8, 3, 5, 9, 6, 10])).unwrap();
        for seed in 0..10 {
            let s = gen_random_setting(4, seed, 100).unwrap();
            for set in S::all(4) {
                assert_eq!(greedy_opt(&s, &m, set).total, brute_force_opt(&s, &m, set));
            }
        }
    }

    #[test]
    fn free_matroid_flagship_second_bidder() {
        let s = flagship();
        let out =
            MatroidEvaluator::new(&s, &Matroid::free(2).unwrap()).unwrap().evaluate(S::from_bidders([0])).unwrap();
        assert_eq!(out.win_probabilities[1], r(3, 4));
        assert_eq!(out.win_probabilities[0], r(3, 4));
        assert_eq!(out.expected_welfare, r(3, 4) * 12);
        assert!(out.meets_bound());
    }

    #[test]
    fn rank_one_is_the_single_item_mechanism() {
        for seed in 0..10 {
            let s = gen_random_setting(3, seed, 100).unwrap();
            let rule = allocate(&s).unwrap().rule;
            let m = Matroid::uniform(3, 1).unwrap();
            let mut ev = MatroidEvaluator::new(&s, &m).unwrap();
            for set in S::all(3) {
                let out = ev.evaluate(set).unwrap();
                assert_eq!(out.win_probabilities, rule.column(set));
                assert_eq!(out.expected_welfare, rule.welfare(&s, set));
                assert_eq!(out.greedy, s.opt(set));
            }
        }
    }

    #[test]
    fn rank_zero_allocates_nothing() {
        let out = matroid_expected_welfare(&flagship(), &Matroid::uniform(2, 0).unwrap(), S::full(2)).unwrap();
        assert_eq!(out, r(0, 1));
    }

    #[test]
    fn guard_rejects_large_branching() {
        let zero: Vec<i64> = vec![0; 1 << 10];
        let tables: Vec<&[i64]> = (0..10).map(|_| zero.as_slice()).collect();
        let big = Setting::from_integer_tables(&tables).unwrap();
        let m = Matroid::uniform(10, 6).unwrap();
        assert_eq!(MatroidEvaluator::new(&big, &m).err(), Some(MatroidError::Intractable { n: 10, rank: 6 }));
        assert!(MatroidEvaluator::new(&big, &Matroid::uniform(10, 5).unwrap()).is_ok());
    }

    #[test]
    fn random_uniform_rank_two_meets_bound() {
        for seed in 0..5 {
            let s = gen_random_setting(4, seed, 100).unwrap();
            let rep = check_matroid(&s, &Matroid::uniform(4, 2).unwrap()).unwrap();
            assert!(rep.bound_violations.is_empty());
            assert_eq!(rep.outcomes.len(), 16);
        }
    }

    #[test]
    fn raising_own_signal_can_lower_total_win_probability() {
        // Bidder 2 low: bidder 1 wins round 1, then bidder 2 beats bidder 0.
        // Bidder 2 high: bidder 0 wins round 1, then bidder 2 loses to bidder 1.
        let s = Setting::from_integer_tables(&[
            &[2, 2, 4, 4, 5, 5, 7, 7],
            &[3, 4, 3, 4, 4, 4, 4, 4],
            &[3, 5, 5, 6, 3, 5, 5, 6],
        ])
        .unwrap();
        let m = Matroid::uniform(3, 2).unwrap();
        let low = matroid_win_probability(&s, &m, 2, S::EMPTY).unwrap();
        let high = matroid_win_probability(&s, &m, 2, S::from_bidders([2])).unwrap();
        assert_eq!((low, high), (r(1, 4), r(0, 1)));
        let rep = check_matroid(&s, &m).unwrap();
        assert!(rep.bound_violations.is_empty());
        assert_eq!(
            rep.monotonicity_violations,
            vec![MonotonicityViolation { bidder: 2, set: S::EMPTY, low: r(1, 4), high: r(0, 1) }]
        );
    }

    #[test]
    fn serde_shapes() {
        let u = serde_json::to_string(&Matroid::uniform(3, 2).unwrap()).unwrap();
        assert_eq!(u, r#"{"type":"uniform","k":2}"#);
        let e = serde_json::to_string(&Matroid::explicit(2, masks(&[0, 1, 2])).unwrap()).unwrap();
        assert_eq!(e, r#"{"type":"explicit","independent_sets":[0,1,2]}"#);
        let back: Matroid = serde_json::from_str(&e).unwrap();
        assert_eq!(back.with_ground_set(2).unwrap(), Matroid::explicit(2, masks(&[0, 1, 2])).unwrap());
    }
}
