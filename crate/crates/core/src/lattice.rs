//! Valuations over integer signal grids `{0..k}ⁿ` and the extended sweep.
//!
//! A profile is stored as its mixed-radix index `Σ_b s_b·(k+1)^b` (bidder 0
//! least significant). Lattice-SOS here means monotone in every coordinate
//! plus decreasing differences, both across coordinates and along a single
//! coordinate. At `k = 1` the grid is the subset lattice and every operation
//! reduces to its binary counterpart.

use std::fmt;

use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::allocation::{Color, FailureKind};
use crate::rational::{serde_rational, serde_rational_matrix, Rational};
use crate::seed::{derive_seed, rng_from_seed};
use crate::signal::{SignalSet, MAX_BIDDERS};
use crate::valuation::{GenerateError, Setting, GENERATOR_ATTEMPTS, SETTING_STREAMS};
use crate::verification::{
    guided_bridge_chains, BridgeChains, LemmaCheck, LemmaConfig, LemmaCounterexample, LemmaSweep, GUIDED_TRIES,
};

/// Largest number of grid profiles accepted.
pub const MAX_PROFILES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("bidder count {0} outside 1..={MAX_BIDDERS}")]
    BidderCount(usize),
    #[error("signal levels must be at least 1")]
    Levels,
    #[error("grid ({k}+1)^{n} exceeds {MAX_PROFILES} profiles")]
    GridTooLarge { n: usize, k: usize },
    #[error("bidder {owner}: table has {found} entries, expected {expected}")]
    TableSize { owner: usize, expected: usize, found: usize },
    #[error("bidder {owner}: negative value at profile {profile}")]
    NegativeEntry { owner: usize, profile: usize },
    #[error("profile has {found} coordinates, expected {expected}")]
    ProfileLength { expected: usize, found: usize },
    #[error("coordinate {bidder} is {value}, above {k}")]
    ProfileRange { bidder: usize, value: u32, k: usize },
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

/// Shape of `{0..k}ⁿ` and the profile arithmetic on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    n: usize,
    k: usize,
    strides: Vec<usize>,
    size: usize,
}

impl Grid {
    pub fn new(n: usize, k: usize) -> Result<Self, LatticeError> {
        if n == 0 || n > MAX_BIDDERS {
            return Err(LatticeError::BidderCount(n));
        }
        if k == 0 {
            return Err(LatticeError::Levels);
        }
        let mut strides = Vec::with_capacity(n);
        let mut size = 1usize;
        for _ in 0..n {
            strides.push(size);
            size = size.checked_mul(k + 1).filter(|&s| s <= MAX_PROFILES).ok_or(LatticeError::GridTooLarge { n, k })?;
        }
        Ok(Grid { n, k, strides, size })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn coord(&self, profile: usize, bidder: usize) -> usize {
        profile / self.strides[bidder] % (self.k + 1)
    }

    pub fn coords(&self, profile: usize) -> Vec<u32> {
        (0..self.n).map(|b| self.coord(profile, b) as u32).collect()
    }

    pub fn index(&self, coords: &[u32]) -> Result<usize, LatticeError> {
        if coords.len() != self.n {
            return Err(LatticeError::ProfileLength { expected: self.n, found: coords.len() });
        }
        let mut idx = 0;
        for (b, &c) in coords.iter().enumerate() {
            if c as usize > self.k {
                return Err(LatticeError::ProfileRange { bidder: b, value: c, k: self.k });
            }
            idx += c as usize * self.strides[b];
        }
        Ok(idx)
    }

    /// `profile + e_b`, if still on the grid.
    #[inline]
    pub fn up(&self, profile: usize, bidder: usize) -> Option<usize> {
        (self.coord(profile, bidder) < self.k).then(|| profile + self.strides[bidder])
    }

    /// `profile − e_b`, if still on the grid.
    #[inline]
    pub fn down(&self, profile: usize, bidder: usize) -> Option<usize> {
        (self.coord(profile, bidder) > 0).then(|| profile - self.strides[bidder])
    }

    pub fn sum(&self, profile: usize) -> usize {
        (0..self.n).map(|b| self.coord(profile, b)).sum()
    }

    /// Profiles by coordinate sum, then index. Every profile precedes all
    /// profiles that dominate it.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.size).collect();
        order.sort_by_key(|&p| (self.sum(p), p));
        order
    }

    /// The profile of signal set `set` at `k = 1`.
    pub fn from_set(&self, set: SignalSet) -> usize {
        set.iter().map(|b| self.strides[b]).sum()
    }

    pub fn render(&self, profile: usize) -> String {
        let coords: Vec<String> = (0..self.n).map(|b| self.coord(profile, b).to_string()).collect();
        format!("({})", coords.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeWitness {
    /// `v(profile) > v(profile + e_bidder)`.
    Monotone { profile: usize, bidder: usize },
    /// Increasing `a` at `profile + e_b` gains more than at `profile`.
    Cross { profile: usize, a: usize, b: usize },
    /// Increasing `a` at `profile + e_a` gains more than at `profile`.
    Same { profile: usize, a: usize },
}

/// First violation of lattice-SOS in one table, in index order.
pub fn lattice_sos_witness(grid: &Grid, table: &[Rational]) -> Option<LatticeWitness> {
    for p in 0..grid.size() {
        for a in 0..grid.n() {
            let Some(pa) = grid.up(p, a) else { continue };
            let gain = table[pa] - table[p];
            if gain < Rational::zero() {
                return Some(LatticeWitness::Monotone { profile: p, bidder: a });
            }
            if let Some(paa) = grid.up(pa, a) {
                if table[paa] - table[pa] > gain {
                    return Some(LatticeWitness::Same { profile: p, a });
                }
            }
            for b in (0..grid.n()).filter(|&b| b != a) {
                if let Some(pb) = grid.up(p, b) {
                    let pab = grid.up(pb, a).expect("coordinate a is below k");
                    if table[pab] - table[pb] > gain {
                        return Some(LatticeWitness::Cross { profile: p, a, b });
                    }
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LatticeSetting {
    pub n: usize,
    pub k: usize,
    #[serde(with = "serde_rational_matrix")]
    pub valuations: Vec<Vec<Rational>>,
    #[serde(skip)]
    grid: Grid,
}

impl LatticeSetting {
    /// Checks shapes and non-negativity; lattice-SOS is left to [`Self::validate`].
    pub fn new(n: usize, k: usize, valuations: Vec<Vec<Rational>>) -> Result<Self, LatticeError> {
        let grid = Grid::new(n, k)?;
        if valuations.len() != n {
            return Err(LatticeError::TableSize { owner: valuations.len(), expected: n, found: valuations.len() });
        }
        for (owner, t) in valuations.iter().enumerate() {
            if t.len() != grid.size() {
                return Err(LatticeError::TableSize { owner, expected: grid.size(), found: t.len() });
            }
            if let Some(profile) = t.iter().position(|x| *x < Rational::zero()) {
                return Err(LatticeError::NegativeEntry { owner, profile });
            }
        }
        Ok(LatticeSetting { n, k, valuations, grid })
    }

    /// The binary setting on the `k = 1` grid.
    pub fn from_binary(setting: &Setting) -> Self {
        LatticeSetting::new(setting.n(), 1, setting.tables()).expect("binary tables fit the k = 1 grid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn value(&self, bidder: usize, profile: usize) -> Rational {
        self.valuations[bidder][profile]
    }

    pub fn opt(&self, profile: usize) -> Rational {
        (0..self.n).map(|b| self.value(b, profile)).max().unwrap_or_else(Rational::zero)
    }

    /// First lattice-SOS violation per bidder.
    pub fn validate(&self) -> Vec<Option<LatticeWitness>> {
        self.valuations.iter().map(|t| lattice_sos_witness(&self.grid, t)).collect()
    }

    pub fn is_sos(&self) -> bool {
        self.validate().iter().all(Option::is_none)
    }
}

/// Random lattice-SOS table on the grid `{0, 1/scale, …}`. Profiles are
/// filled by coordinate sum then index; each value is drawn from
/// `[max_a v(s−e_a), U]` where `U` is the least of `v(s−e_a) + v(s−e_b) −
/// v(s−e_a−e_b)` (a ≠ b) and `2v(s−e_a) − v(s−2e_a)`, or `lower + 1` when no
/// such bound applies. At `k = 1` this is exactly the binary generator.
pub fn gen_random_lattice_sos(n: usize, k: usize, seed: u64, scale: u32) -> Result<Vec<Rational>, LatticeError> {
    let grid = Grid::new(n, k)?;
    if scale == 0 {
        return Err(GenerateError::Scale.into());
    }
    let order = grid.order();
    for attempt in 0..GENERATOR_ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(seed, attempt));
        if let Some(units) = sample_lattice(&grid, &order, scale as i64, &mut rng) {
            let table: Vec<Rational> = units.into_iter().map(|u| Rational::new(u, scale as i64)).collect();
            if lattice_sos_witness(&grid, &table).is_none() {
                return Ok(table);
            }
        }
    }
    Err(GenerateError::BudgetExhausted { attempts: GENERATOR_ATTEMPTS }.into())
}

fn sample_lattice<R: Rng>(grid: &Grid, order: &[usize], scale: i64, rng: &mut R) -> Option<Vec<i64>> {
    let mut units = vec![0i64; grid.size()];
    for &p in order {
        let downs: Vec<(usize, usize)> = (0..grid.n()).filter_map(|a| grid.down(p, a).map(|q| (a, q))).collect();
        let lower = downs.iter().map(|&(_, q)| units[q]).max().unwrap_or(0);
        let mut upper: Option<i64> = None;
        let mut tighten = |bound: i64| upper = Some(upper.map_or(bound, |u| u.min(bound)));
        for (x, &(a, pa)) in downs.iter().enumerate() {
            for &(_, pb) in &downs[x + 1..] {
                let pab = grid.down(pb, a).expect("coordinate a is positive");
                tighten(units[pa] + units[pb] - units[pab]);
            }
            if let Some(paa) = grid.down(pa, a) {
                tighten(2 * units[pa] - units[paa]);
            }
        }
        let upper = upper.unwrap_or(lower + scale);
        if upper < lower {
            return None;
        }
        units[p] = rng.gen_range(lower..=upper);
    }
    Some(units)
}

/// One table per bidder, retrying derived streams the way the binary
/// setting generator does.
pub fn gen_random_lattice_setting(n: usize, k: usize, seed: u64, scale: u32) -> Result<LatticeSetting, LatticeError> {
    let mut valuations = Vec::with_capacity(n);
    for b in 0..n {
        let base = derive_seed(seed, b as u64);
        let mut found = None;
        for stream in 0..SETTING_STREAMS {
            match gen_random_lattice_sos(n, k, derive_seed(base, stream), scale) {
                Ok(t) => {
                    found = Some(t);
                    break;
                }
                Err(LatticeError::Generate(GenerateError::BudgetExhausted { .. })) => continue,
                Err(e) => return Err(e),
            }
        }
        valuations
            .push(found.ok_or(GenerateError::BudgetExhausted { attempts: GENERATOR_ATTEMPTS * SETTING_STREAMS })?);
    }
    LatticeSetting::new(n, k, valuations)
}

/// `v_b(s) = min(B_b, c_b + Σ_j w_bj·s_j)` with integer parameters in
/// `0..=scale`. Concave of linear, hence lattice-SOS.
pub fn gen_budget_additive_lattice(n: usize, k: usize, seed: u64, scale: u32) -> Result<LatticeSetting, LatticeError> {
    let grid = Grid::new(n, k)?;
    if scale == 0 {
        return Err(GenerateError::Scale.into());
    }
    let scale = scale as i64;
    let valuations = (0..n)
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, b as u64));
            let base = rng.gen_range(0..=scale);
            let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=scale)).collect();
            let budget = base + rng.gen_range(0..=weights.iter().sum::<i64>() * k as i64);
            (0..grid.size())
                .map(|p| {
                    let linear: i64 = (0..n).map(|j| weights[j] * grid.coord(p, j) as i64).sum();
                    Rational::from_integer(budget.min(base + linear))
                })
                .collect()
        })
        .collect();
    LatticeSetting::new(n, k, valuations)
}

/// Terminal colors and the induced rule (Red = 1/2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeAllocation {
    n: usize,
    colors: Vec<Color>,
}

impl LatticeAllocation {
    pub fn color(&self, bidder: usize, profile: usize) -> Color {
        self.colors[profile * self.n + bidder]
    }

    pub fn prob(&self, bidder: usize, profile: usize) -> Rational {
        match self.color(bidder, profile) {
            Color::Red => Rational::new(1, 2),
            _ => Rational::zero(),
        }
    }

    pub fn reds(&self, profile: usize) -> usize {
        self.colors[profile * self.n..(profile + 1) * self.n].iter().filter(|c| **c == Color::Red).count()
    }

    pub fn welfare(&self, setting: &LatticeSetting, profile: usize) -> Rational {
        (0..self.n).map(|b| self.prob(b, profile) * setting.value(b, profile)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatticeFailure {
    pub kind: FailureKind,
    pub bidder: usize,
    pub profile: usize,
    /// Profile being processed when the failure occurred.
    pub iteration: usize,
}

impl fmt::Display for LatticeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at bidder {} profile #{} (iteration #{})",
            self.kind,
            self.bidder + 1,
            self.profile,
            self.iteration
        )
    }
}

type Step = Result<(), (FailureKind, usize, usize)>;

struct Sweep<'a> {
    setting: &'a LatticeSetting,
    grid: &'a Grid,
    colors: Vec<Color>,
    reds: Vec<u8>,
}

impl Sweep<'_> {
    fn get(&self, b: usize, p: usize) -> Color {
        self.colors[p * self.grid.n() + b]
    }

    fn set(&mut self, b: usize, p: usize, c: Color) {
        let n = self.grid.n();
        if c == Color::Red {
            self.reds[p] += 1;
        }
        self.colors[p * n + b] = c;
    }

    fn red_at(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.n()).filter(move |&b| self.get(b, p) == Color::Red)
    }

    fn priority1(&self, p: usize, m: usize, opt: Rational) -> Option<(usize, usize)> {
        let mut reds = self.red_at(p);
        let first_red = reds.next();
        let usable = |b: usize| self.grid.coord(p, b) >= m && self.get(b, p) != Color::Black;
        let n = self.grid.n();
        for i in (0..n).filter(|&i| usable(i)) {
            for j in (i + 1..n).filter(|&j| usable(j)) {
                if first_red.is_some_and(|r| r != i && r != j) {
                    continue;
                }
                if self.setting.value(i, p) + self.setting.value(j, p) >= opt {
                    return Some((i, j));
                }
            }
        }
        None
    }

    fn priority2(&self, p: usize, m: usize, opt: Rational) -> Option<usize> {
        (0..self.grid.n()).find(|&b| {
            self.grid.coord(p, b) + 1 >= m && self.get(b, p) != Color::Black && self.setting.value(b, p) == opt
        })
    }

    fn process(&mut self, p: usize) -> Step {
        if self.reds[p] >= 2 {
            return Ok(());
        }
        let opt = self.setting.opt(p);
        for m in (1..=self.grid.k()).rev() {
            if let Some((i, j)) = self.priority1(p, m, opt) {
                self.color_red(i, p)?;
                self.color_red(j, p)?;
                return Ok(());
            }
            if let Some(b) = self.priority2(p, m, opt) {
                self.color_red(b, p)?;
                for other in 0..self.grid.n() {
                    if self.get(other, p) == Color::White {
                        self.color_black(other, p)?;
                    }
                }
                return Ok(());
            }
        }
        Err((FailureKind::NoFavoredBidder, 0, p))
    }

    fn color_red(&mut self, b: usize, p: usize) -> Step {
        match self.get(b, p) {
            Color::Black => return Err((FailureKind::BlackToRed, b, p)),
            Color::Red => return Ok(()),
            Color::White => {}
        }
        if self.reds[p] >= 2 {
            return Err((FailureKind::ThirdRed, b, p));
        }
        self.set(b, p, Color::Red);
        if self.reds[p] == 2 {
            for other in 0..self.grid.n() {
                if self.get(other, p) != Color::Red {
                    self.color_black(other, p)?;
                }
            }
        }
        if let Some(q) = self.grid.up(p, b) {
            self.color_red(b, q)?;
        }
        Ok(())
    }

    fn color_black(&mut self, b: usize, p: usize) -> Step {
        match self.get(b, p) {
            Color::Red => return Err((FailureKind::RedToBlack, b, p)),
            Color::Black => return Ok(()),
            Color::White => {}
        }
        self.set(b, p, Color::Black);
        if let Some(q) = self.grid.down(p, b) {
            self.color_black(b, q)?;
        }
        Ok(())
    }
}

/// The 2k-priority sweep. At each profile with fewer than two Reds, levels
/// `m = k, …, 1` are scanned; at each level a Priority-1 pair (both signals
/// at least `m`) is tried before a Priority-2 bidder (signal at least
/// `m − 1`). Red propagates along `+e_b` up to level `k`, Black along `−e_b`
/// down to 0. Error lines come back as a [`LatticeFailure`].
pub fn extended_allocate(setting: &LatticeSetting) -> Result<LatticeAllocation, LatticeFailure> {
    let grid = setting.grid();
    let mut sweep =
        Sweep { setting, grid, colors: vec![Color::White; grid.size() * grid.n()], reds: vec![0; grid.size()] };
    for p in grid.order() {
        if let Err((kind, bidder, profile)) = sweep.process(p) {
            return Err(LatticeFailure { kind, bidder, profile, iteration: p });
        }
    }
    Ok(LatticeAllocation { n: grid.n(), colors: sweep.colors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuralViolation {
    /// Zero or more than two Reds at a profile.
    RedCount { profile: usize, reds: usize },
    /// `x_b(profile) > x_b(profile + e_b)`.
    Monotonicity { profile: usize, bidder: usize },
}

/// Feasibility (one or two Reds per profile) and own-coordinate monotonicity.
pub fn check_lattice_rule(grid: &Grid, x: &LatticeAllocation) -> Vec<StructuralViolation> {
    let mut out = Vec::new();
    for p in 0..grid.size() {
        let reds = x.reds(p);
        if !(1..=2).contains(&reds) {
            out.push(StructuralViolation::RedCount { profile: p, reds });
        }
        for b in 0..grid.n() {
            if let Some(q) = grid.up(p, b) {
                if x.prob(b, p) > x.prob(b, q) {
                    out.push(StructuralViolation::Monotonicity { profile: p, bidder: b });
                }
            }
        }
    }
    out
}

/// Smallest `ALG/OPT` over profiles with `OPT > 0`, with its profile.
pub fn lattice_min_ratio(setting: &LatticeSetting, x: &LatticeAllocation) -> Option<(Rational, usize)> {
    (0..setting.grid().size())
        .filter(|&p| !setting.opt(p).is_zero())
        .map(|p| (x.welfare(setting, p) / setting.opt(p), p))
        .min()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureDetail {
    Allocation(LatticeFailure),
    Structural {
        violations: Vec<StructuralViolation>,
    },
    Approximation {
        profile: usize,
        #[serde(with = "serde_rational")]
        ratio: Rational,
    },
}

/// Enough to rebuild a failing instance: its seed and its tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reproducer {
    pub instance: u64,
    pub seed: u64,
    pub detail: FailureDetail,
    pub setting: LatticeSetting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimulationSummary {
    pub n: usize,
    pub k: usize,
    pub count: u64,
    pub seed: u64,
    pub scale: u32,
    pub instances_run: u64,
    /// Seeds the generator could not serve.
    pub skipped: u64,
    pub allocation_failures: u64,
    pub structural_failures: u64,
    pub approximation_failures: u64,
    #[serde(with = "crate::rational::serde_rational_option")]
    pub min_ratio: Option<Rational>,
    pub reproducers: Vec<Reproducer>,
}

impl SimulationSummary {
    pub fn failures(&self) -> u64 {
        self.allocation_failures + self.structural_failures + self.approximation_failures
    }

    pub fn render(&self) -> String {
        let ratio = self.min_ratio.map_or("n/a".to_string(), |r| crate::rational::format_rational(&r));
        format!(
            "n={} k={} count={} seed={} scale={}\ninstances_run={} skipped={}\nallocation_failures={} structural_failures={} approximation_failures={}\nmin_ratio={}\n",
            self.n,
            self.k,
            self.count,
            self.seed,
            self.scale,
            self.instances_run,
            self.skipped,
            self.allocation_failures,
            self.structural_failures,
            self.approximation_failures,
            ratio
        )
    }
}

enum Outcome {
    Skipped,
    Ran { ratio: Option<Rational>, failure: Option<Reproducer> },
}

fn simulate_one(n: usize, k: usize, scale: u32, instance: u64, seed: u64) -> Outcome {
    let Ok(setting) = gen_random_lattice_setting(n, k, seed, scale) else {
        return Outcome::Skipped;
    };
    let fail = |detail| Some(Reproducer { instance, seed, detail, setting: setting.clone() });
    let x = match extended_allocate(&setting) {
        Ok(x) => x,
        Err(f) => return Outcome::Ran { ratio: None, failure: fail(FailureDetail::Allocation(f)) },
    };
    let violations = check_lattice_rule(setting.grid(), &x);
    let min = lattice_min_ratio(&setting, &x);
    let failure = if !violations.is_empty() {
        fail(FailureDetail::Structural { violations })
    } else {
        match min {
            Some((ratio, profile)) if ratio < Rational::new(1, 2) => {
                fail(FailureDetail::Approximation { profile, ratio })
            }
            _ => None,
        }
    };
    Outcome::Ran { ratio: min.map(|m| m.0), failure }
}

/// Generates `count` instances (instance `r` seeded by `derive_seed(seed, r)`),
/// runs the extended sweep on each and aggregates. Failures are recorded with
/// reproducers, never raised.
pub fn simulate_batch(
    n: usize,
    k: usize,
    count: u64,
    seed: u64,
    scale: u32,
) -> Result<SimulationSummary, LatticeError> {
    Grid::new(n, k)?;
    if scale == 0 {
        return Err(GenerateError::Scale.into());
    }
    let outcomes: Vec<Outcome> =
        (0..count).into_par_iter().map(|r| simulate_one(n, k, scale, r, derive_seed(seed, r))).collect();
    let mut summary = SimulationSummary {
        n,
        k,
        count,
        seed,
        scale,
        instances_run: 0,
        skipped: 0,
        allocation_failures: 0,
        structural_failures: 0,
        approximation_failures: 0,
        min_ratio: None,
        reproducers: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            Outcome::Skipped => summary.skipped += 1,
            Outcome::Ran { ratio, failure } => {
                summary.instances_run += 1;
                if let Some(r) = ratio {
                    summary.min_ratio = Some(summary.min_ratio.map_or(r, |m| m.min(r)));
                }
                if let Some(f) = failure {
                    match f.detail {
                        FailureDetail::Allocation(_) => summary.allocation_failures += 1,
                        FailureDetail::Structural { .. } => summary.structural_failures += 1,
                        FailureDetail::Approximation { .. } => summary.approximation_failures += 1,
                    }
                    summary.reproducers.push(f);
                }
            }
        }
    }
    Ok(summary)
}

/// Profile taking `s'_h` on `removed` and `s'_h + d_h` elsewhere.
fn shifted(grid: &Grid, s_prime: &[u32], d: &[u32], removed: SignalSet) -> usize {
    let coords: Vec<u32> =
        (0..grid.n()).map(|h| if removed.contains(h) { s_prime[h] } else { s_prime[h] + d[h] }).collect();
    grid.index(&coords).expect("checked against k")
}

fn check_shift(grid: &Grid, s_prime: &[u32], d: &[u32]) -> Result<(), LatticeError> {
    for v in [s_prime, d] {
        if v.len() != grid.n() {
            return Err(LatticeError::ProfileLength { expected: grid.n(), found: v.len() });
        }
    }
    for h in 0..grid.n() {
        let top = s_prime[h] + d[h];
        if top as usize > grid.k() {
            return Err(LatticeError::ProfileRange { bidder: h, value: top, k: grid.k() });
        }
    }
    Ok(())
}

/// The chained system on the grid: the inequality with removed set `R` is
/// evaluated at the profile with `s'_h` for `h ∈ R` and `s_h = s'_h + d_h`
/// elsewhere.
pub fn lemma8_oracle(
    setting: &LatticeSetting,
    s_prime: &[u32],
    d: &[u32],
    chains: &BridgeChains,
) -> Result<LemmaCheck, LatticeError> {
    let grid = setting.grid();
    check_shift(grid, s_prime, d)?;
    Ok(chains.system(|b, removed| setting.value(b, shifted(grid, s_prime, d, removed))))
}

/// The set function `T ↦ v_b(s' + d·1_T)` for every bidder, as a binary
/// setting. It is submodular whenever the lattice valuations are.
pub fn induced_setting(setting: &LatticeSetting, s_prime: &[u32], d: &[u32]) -> Result<Setting, LatticeError> {
    let grid = setting.grid();
    check_shift(grid, s_prime, d)?;
    let n = grid.n();
    let tables = (0..n)
        .map(|b| {
            SignalSet::all(n)
                .map(|t| setting.value(b, shifted(grid, s_prime, d, SignalSet::full(n).difference(t))))
                .collect()
        })
        .collect();
    Ok(Setting::from_tables(tables).expect("induced tables have valid shape"))
}

/// `v(s) = f({h : s_h ≥ 1})` for a binary SOS setting `f`. Each coordinate
/// gains only on its first step, so the result is lattice-SOS.
pub fn lift_setting(setting: &Setting, k: usize) -> Result<LatticeSetting, LatticeError> {
    let grid = Grid::new(setting.n(), k)?;
    let support = |p: usize| SignalSet::from_bidders((0..grid.n()).filter(|&b| grid.coord(p, b) > 0));
    let valuations =
        (0..setting.n()).map(|b| (0..grid.size()).map(|p| setting.value(b, support(p))).collect()).collect();
    LatticeSetting::new(setting.n(), k, valuations)
}

/// Grid instances for Lemma 8 sweeps, cycling on `seed % 3` through the
/// random lattice generator (budget-additive above four bidders), the
/// budget-additive family at scale 1, and lifts of the binary lemma families.
pub fn lattice_lemma_setting(n: usize, k: usize, seed: u64) -> Result<LatticeSetting, LatticeError> {
    match seed % 3 {
        0 if n <= 4 => gen_random_lattice_setting(n, k, seed, 100),
        0 | 1 => gen_budget_additive_lattice(n, k, seed, 1),
        _ => lift_setting(&crate::verification::lemma_setting(n, seed)?, k),
    }
}

/// `draws` Lemma 8 draws with fixed chain lengths over pairwise distinct
/// bidders. Each draw picks `s' + d ≤ k` and the member set, then picks
/// roles as the Lemma 2 sweep does on the induced set function.
pub fn lemma8_sweep(settings: &[LatticeSetting], lens: [usize; 3], draws: u64, seed: u64) -> LemmaSweep {
    let needed = 3 + lens.iter().sum::<usize>();
    let usable: Vec<&LatticeSetting> = settings.iter().filter(|s| s.n >= needed).collect();
    assert!(!usable.is_empty(), "no setting has {needed} bidders");
    let results = (0..draws)
        .into_par_iter()
        .map(|draw| {
            let mut rng = rng_from_seed(derive_seed(seed, draw));
            let setting = usable[rng.gen_range(0..usable.len())];
            let (n, k) = (setting.n, setting.k as u32);
            let top: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=k)).collect();
            let s_prime: Vec<u32> = top.iter().map(|&t| rng.gen_range(0..=t)).collect();
            let d: Vec<u32> = top.iter().zip(&s_prime).map(|(t, s)| t - s).collect();
            let members: Vec<usize> = rand::seq::index::sample(&mut rng, n, needed).into_vec();
            let induced = induced_setting(setting, &s_prime, &d).expect("shift fits the grid");
            let outside = SignalSet::full(n).difference(SignalSet::from_bidders(members.iter().copied()));
            let mut result = None;
            for _ in 0..GUIDED_TRIES {
                let chains = guided_bridge_chains(&mut rng, &induced, outside, &members, lens);
                let check = lemma8_oracle(setting, &s_prime, &d, &chains).expect("shift fits the grid");
                let active = check.all_hold();
                result = Some((chains, check));
                if active {
                    break;
                }
            }
            let (chains, check) = result.expect("at least one try");
            let counterexample = (!check.passed()).then(|| LemmaCounterexample {
                draw,
                config: LemmaConfig::Lemma8 { s_prime: s_prime.clone(), d: d.clone(), chains },
                valuations: setting.valuations.clone(),
            });
            (check.all_hold(), counterexample)
        })
        .collect();
    LemmaSweep::collect(draws, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::allocate;
    use crate::valuation::{gen_random_setting, gen_random_sos};
    use crate::verification::lemma2_oracle;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn grid_arithmetic() {
        let g = Grid::new(3, 3).unwrap();
        assert_eq!(g.size(), 64);
        let p = g.index(&[1, 0, 2]).unwrap();
        assert_eq!(p, 1 + 2 * 16);
        assert_eq!(g.coords(p), vec![1, 0, 2]);
        assert_eq!(g.up(p, 2), Some(p + 16));
        assert_eq!(g.up(g.index(&[0, 0, 3]).unwrap(), 2), None);
        assert_eq!(g.down(p, 1), None);
        assert_eq!(g.render(p), "(1,0,2)");
        let order = g.order();
        assert_eq!(order[0], 0);
        assert_eq!(&order[1..4], &[1, 4, 16]);
        assert!(matches!(Grid::new(3, 0), Err(LatticeError::Levels)));
        assert!(matches!(Grid::new(17, 1), Err(LatticeError::GridTooLarge { .. })));
        assert!(g.index(&[4, 0, 0]).is_err());
    }

    #[test]
    fn order_matches_binary_inclusion_order() {
        let g = Grid::new(4, 1).unwrap();
        let binary: Vec<usize> = SignalSet::inclusion_order(4).into_iter().map(|s| g.from_set(s)).collect();
        assert_eq!(g.order(), binary);
    }

    #[test]
    fn generator_reduces_to_binary_at_k1() {
        for seed in 0..20 {
            let lattice = gen_random_lattice_sos(4, 1, seed, 100).ok();
            let binary = gen_random_sos(4, 0, seed, 100).ok().map(|v| v.table().to_vec());
            assert_eq!(lattice, binary);
        }
        let l = gen_random_lattice_setting(3, 1, 5, 100).unwrap();
        assert_eq!(l.valuations, gen_random_setting(3, 5, 100).unwrap().tables());
    }

    #[test]
    fn pair_upper_bound_matches_closed_form() {
        // v(1,1,0) ∈ [max{v(1,0,0), v(0,1,0)}, v(1,0,0) + v(0,1,0) − v(0,0,0)].
        let g = Grid::new(3, 3).unwrap();
        for seed in 0..50 {
            let t = gen_random_lattice_sos(3, 3, seed, 100).unwrap();
            let at = |c: [u32; 3]| t[g.index(&c).unwrap()];
            let (a, b, o) = (at([1, 0, 0]), at([0, 1, 0]), at([0, 0, 0]));
            let x = at([1, 1, 0]);
            assert!(x >= a.max(b) && x <= a + b - o);
        }
    }

    #[test]
    fn validator_flags_each_kind() {
        let g = Grid::new(1, 2).unwrap();
        let ints = |v: &[i64]| v.iter().map(|&x| Rational::from_integer(x)).collect::<Vec<_>>();
        assert_eq!(lattice_sos_witness(&g, &ints(&[0, 2, 3])), None);
        assert_eq!(lattice_sos_witness(&g, &ints(&[0, 1, 3])), Some(LatticeWitness::Same { profile: 0, a: 0 }));
        assert_eq!(
            lattice_sos_witness(&g, &ints(&[2, 1, 1])),
            Some(LatticeWitness::Monotone { profile: 0, bidder: 0 })
        );
        let g2 = Grid::new(2, 1).unwrap();
        assert_eq!(
            lattice_sos_witness(&g2, &ints(&[0, 1, 1, 4])),
            Some(LatticeWitness::Cross { profile: 0, a: 0, b: 1 })
        );
    }

    #[test]
    fn budget_additive_lattice_is_sos() {
        for seed in 0..20 {
            assert!(gen_budget_additive_lattice(3, 3, seed, 4).unwrap().is_sos());
        }
    }

    #[test]
    fn extended_sweep_is_binary_sweep_at_k1() {
        for seed in 0..200 {
            let s = gen_random_setting(4, seed, 100).unwrap();
            let x = allocate(&s).unwrap();
            let l = LatticeSetting::from_binary(&s);
            let y = extended_allocate(&l).unwrap();
            for set in SignalSet::all(4) {
                let p = l.grid().from_set(set);
                for b in 0..4 {
                    assert_eq!(y.color(b, p), x.table.get(b, set));
                }
            }
        }
    }

    #[test]
    fn single_bidder_is_red_everywhere() {
        for k in 1..=4 {
            let t: Vec<Rational> = (0..=k as i64).map(|v| r(v.min(2), 1)).collect();
            let s = LatticeSetting::new(1, k, vec![t]).unwrap();
            let x = extended_allocate(&s).unwrap();
            assert!((0..=k).all(|p| x.color(0, p) == Color::Red));
        }
    }

    #[test]
    fn small_batch_is_clean_and_deterministic() {
        let a = simulate_batch(3, 3, 200, 7, 100).unwrap();
        assert_eq!(a.instances_run + a.skipped, 200);
        assert_eq!(a.failures(), 0, "{:?}", a.reproducers.first());
        assert!(a.min_ratio.unwrap() >= r(1, 2));
        assert_eq!(a, simulate_batch(3, 3, 200, 7, 100).unwrap());
        let empty = simulate_batch(3, 3, 0, 7, 100).unwrap();
        assert_eq!((empty.instances_run, empty.min_ratio), (0, None));
    }

    #[test]
    fn lemma8_reduces_to_lemma2_at_k1() {
        let s = gen_random_setting(5, 3, 2).unwrap();
        let l = LatticeSetting::from_binary(&s);
        let chains = BridgeChains { i: 0, j: 2, k: 4, first: vec![1], second: vec![], third: vec![3] };
        for mask in 0..32u32 {
            let s_prime_set = SignalSet::from_mask(mask);
            let e = chains.member_set();
            let sp: Vec<u32> = (0..5).map(|h| (s_prime_set.contains(h) && !e.contains(h)) as u32).collect();
            let d: Vec<u32> = (0..5).map(|h| e.contains(h) as u32).collect();
            let a = lemma8_oracle(&l, &sp, &d, &chains).unwrap();
            let b = lemma2_oracle(&s, s_prime_set, &chains);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lemma8_zero_shift_and_bounds() {
        let zero = LatticeSetting::new(3, 3, vec![vec![Rational::zero(); 64]; 3]).unwrap();
        let chains = BridgeChains::plain(0, 1, 2);
        let c = lemma8_oracle(&zero, &[1, 2, 0], &[0, 0, 0], &chains).unwrap();
        assert!(c.all_hold() && c.passed());
        assert!(lemma8_oracle(&zero, &[3, 0, 0], &[1, 0, 0], &chains).is_err());
    }

    #[test]
    fn lemma8_sweeps_find_no_counterexample() {
        for lens in [[0, 0, 0], [1, 0, 0], [0, 1, 1], [1, 1, 1]] {
            let n = 3 + lens.iter().sum::<usize>();
            let settings: Vec<_> =
                (0..16).filter_map(|r| lattice_lemma_setting(n, 3, derive_seed(9, r)).ok()).collect();
            let sweep = lemma8_sweep(&settings, lens, 300, 4);
            assert!(sweep.passed(), "{:?}", sweep.counterexamples.first());
            assert_eq!(sweep, lemma8_sweep(&settings, lens, 300, 4));
        }
    }

    #[test]
    fn lifted_settings_are_lattice_sos() {
        for seed in 0..20 {
            let b = gen_random_setting(4, seed, 100).unwrap();
            let l = lift_setting(&b, 3).unwrap();
            assert!(l.is_sos());
            assert_eq!(l.value(2, l.grid().index(&[3, 0, 1, 0]).unwrap()), b.value(2, SignalSet::from_bidders([0, 2])));
        }
    }

    #[test]
    fn induced_setting_is_submodular() {
        for seed in 0..20 {
            let l = gen_random_lattice_setting(3, 3, seed, 100).unwrap();
            let s = induced_setting(&l, &[0, 1, 2], &[2, 1, 1]).unwrap();
            assert!(s.is_sos());
        }
    }
}
