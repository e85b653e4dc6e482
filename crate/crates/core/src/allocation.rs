//! Construction of the monotone `{0, 1/2}` allocation rule.
//!
//! The table has one row per bidder and one column per signal set. Cells
//! start White and are colored Red (wins with probability 1/2) or Black
//! (never wins) exactly once. Columns are swept in inclusion order; at each
//! column with fewer than two Reds the favored bidder(s) are colored Red:
//!
//! * **Priority 1**: a pair `i < j` of high-signal bidders, neither Black, with
//!   no third Red in the column and `v_i(S) + v_j(S) ≥ OPT(S)`.
//! * **Priority 2**: otherwise, a non-Black bidder with `v_b(S) = OPT(S)`.
//!
//! Red propagates forward to `(b, S ∪ {b})` when `b ∉ S`, Black propagates
//! backward to `(b, S ∖ {b})` when `b ∈ S`, and a column reaching two Reds has
//! all its other cells colored Black. Ties are broken by lowest index.
//!
//! On monotone submodular input none of the four failure paths
//! ([`FailureKind`]) is reachable; reaching one aborts with the trace.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::rational::Rational;
use crate::signal::SignalSet;
use crate::valuation::Setting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Color {
    White,
    Red,
    Black,
}

impl Color {
    pub fn symbol(self) -> char {
        match self {
            Color::White => 'W',
            Color::Red => 'R',
            Color::Black => 'B',
        }
    }
}

/// Colors per `(bidder, signal set)`, stored column by column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorTable {
    n: usize,
    cells: Vec<Color>,
    reds: Vec<u8>,
}

impl ColorTable {
    pub fn new(n: usize) -> Self {
        ColorTable { n, cells: vec![Color::White; n << n], reds: vec![0; 1 << n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, bidder: usize, set: SignalSet) -> Color {
        self.cells[set.index() * self.n + bidder]
    }

    /// Overwrites a cell without any propagation. Used for replays and
    /// synthetic tables in tests.
    pub fn set(&mut self, bidder: usize, set: SignalSet, color: Color) {
        let cell = &mut self.cells[set.index() * self.n + bidder];
        if *cell == Color::Red {
            self.reds[set.index()] -= 1;
        }
        if color == Color::Red {
            self.reds[set.index()] += 1;
        }
        *cell = color;
    }

    pub fn column(&self, set: SignalSet) -> &[Color] {
        let start = set.index() * self.n;
        &self.cells[start..start + self.n]
    }

    pub fn red_count(&self, set: SignalSet) -> usize {
        self.reds[set.index()] as usize
    }

    pub fn reds(&self, set: SignalSet) -> impl Iterator<Item = usize> + '_ {
        self.column(set).iter().enumerate().filter(|(_, c)| **c == Color::Red).map(|(b, _)| b)
    }

    pub fn is_complete(&self) -> bool {
        !self.cells.contains(&Color::White)
    }

    /// First cell breaking the forward/backward consistency invariants or the
    /// two-Red column cap.
    pub fn consistency_violation(&self) -> Option<(usize, SignalSet)> {
        for set in SignalSet::all(self.n) {
            if self.red_count(set) > 2 {
                return Some((0, set));
            }
            for b in 0..self.n {
                match self.get(b, set) {
                    Color::Red if !set.contains(b) && self.get(b, set.with(b)) != Color::Red => {
                        return Some((b, set));
                    }
                    Color::Black if set.contains(b) && self.get(b, set.without(b)) != Color::Black => {
                        return Some((b, set));
                    }
                    _ => {}
                }
            }
        }
        None
    }

    pub fn to_rule(&self) -> AllocationRule {
        let half = Rational::new(1, 2);
        let probs =
            self.cells.iter().map(|c| if *c == Color::Red { half } else { Rational::from_integer(0) }).collect();
        AllocationRule { n: self.n, probs }
    }

    /// One line per signal set: `index set colors`, colors as `W/R/B` by bidder.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for set in SignalSet::all(self.n) {
            let row: String = self.column(set).iter().map(|c| c.symbol()).collect();
            out.push_str(&format!("{:>6} {:<12} {}\n", set.index(), set.to_string(), row));
        }
        out
    }
}

/// Allocation probabilities `x_b(S)` per `(bidder, signal set)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationRule {
    n: usize,
    probs: Vec<Rational>,
}

impl AllocationRule {
    /// `columns[S]` holds the per-bidder probabilities at signal set `S`.
    pub fn from_columns(n: usize, columns: Vec<Vec<Rational>>) -> Option<Self> {
        if columns.len() != 1 << n || columns.iter().any(|c| c.len() != n) {
            return None;
        }
        Some(AllocationRule { n, probs: columns.into_iter().flatten().collect() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn prob(&self, bidder: usize, set: SignalSet) -> Rational {
        self.probs[set.index() * self.n + bidder]
    }

    pub fn set_prob(&mut self, bidder: usize, set: SignalSet, p: Rational) {
        self.probs[set.index() * self.n + bidder] = p;
    }

    pub fn column(&self, set: SignalSet) -> &[Rational] {
        let start = set.index() * self.n;
        &self.probs[start..start + self.n]
    }

    pub fn columns(&self) -> Vec<Vec<Rational>> {
        self.probs.chunks(self.n).map(<[Rational]>::to_vec).collect()
    }

    /// Expected welfare `ALG(S) = Σ_b x_b(S)·v_b(S)`.
    pub fn welfare(&self, setting: &Setting, set: SignalSet) -> Rational {
        self.column(set).iter().enumerate().map(|(b, x)| *x * setting.value(b, set)).sum()
    }
}

/// The canonical inclusion-compatible order: by cardinality, then by mask.
pub fn inclusion_compatible_order(n: usize) -> Vec<SignalSet> {
    SignalSet::inclusion_order(n)
}

/// Lexicographically smallest Priority-1 pair at column `set`, if any.
pub fn find_priority1(setting: &Setting, table: &ColorTable, set: SignalSet) -> Option<(usize, usize)> {
    let opt = setting.opt(set);
    find_priority1_with(setting, table, set, opt)
}

fn find_priority1_with(setting: &Setting, table: &ColorTable, set: SignalSet, opt: Rational) -> Option<(usize, usize)> {
    let mut reds = table.reds(set);
    let (first_red, second_red) = (reds.next(), reds.next());
    if second_red.is_some() {
        return None;
    }
    let usable = |b: usize| table.get(b, set) != Color::Black;
    for i in set.iter().filter(|&i| usable(i)) {
        for j in set.iter().filter(|&j| j > i && usable(j)) {
            if first_red.is_some_and(|r| r != i && r != j) {
                continue;
            }
            if setting.value(i, set) + setting.value(j, set) >= opt {
                return Some((i, j));
            }
        }
    }
    None
}

/// Lowest-index non-Black bidder attaining `OPT(set)`, if any.
pub fn find_priority2(setting: &Setting, table: &ColorTable, set: SignalSet) -> Option<usize> {
    let opt = setting.opt(set);
    find_priority2_with(setting, table, set, opt)
}

fn find_priority2_with(setting: &Setting, table: &ColorTable, set: SignalSet, opt: Rational) -> Option<usize> {
    (0..setting.n()).find(|&b| table.get(b, set) != Color::Black && setting.value(b, set) == opt)
}

/// Why a cell changed color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cause {
    Priority1,
    Priority2,
    /// Red copied from `(b, S ∖ {b})`.
    ForwardPropagation,
    /// Black copied from `(b, S ∪ {b})`.
    BackwardPropagation,
    /// Column reached two Reds.
    ColumnFull,
    /// Remaining White cells after a Priority-2 choice.
    Fill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    /// Column being processed by the sweep when the event happened.
    pub iteration: SignalSet,
    pub column: SignalSet,
    pub bidder: usize,
    pub color: Color,
    pub cause: Cause,
}

/// Error lines of the construction. None is reachable on SOS input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailureKind {
    BlackToRed,
    ThirdRed,
    RedToBlack,
    NoFavoredBidder,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::BlackToRed => "Cannot color a black cell red",
            FailureKind::ThirdRed => "Cannot color more than two cells red",
            FailureKind::RedToBlack => "Cannot color a red cell black",
            FailureKind::NoFavoredBidder => "no favored bidder found with fewer than two reds",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at bidder {bidder} (#{}), column {column}, during iteration {iteration} after {} events", bidder + 1, trace.len())]
pub struct AllocationError {
    pub kind: FailureKind,
    pub bidder: usize,
    pub column: SignalSet,
    pub iteration: SignalSet,
    pub trace: Vec<TraceEvent>,
}

/// Terminal table, its rule, and the ordered coloring events.
#[derive(Debug, Clone)]
pub struct Allocation {
    pub table: ColorTable,
    pub rule: AllocationRule,
    pub trace: Vec<TraceEvent>,
}

/// Runs the sweep on `setting`. The input should pass [`Setting::is_sos`].
pub fn allocate(setting: &Setting) -> Result<Allocation, AllocationError> {
    Allocator::new(setting).run()
}

/// The sweep with optional per-call invariant checking.
pub struct Allocator<'a> {
    setting: &'a Setting,
    table: ColorTable,
    trace: Vec<TraceEvent>,
    iteration: SignalSet,
    check_invariants: bool,
}

type Step = Result<(), (FailureKind, usize, SignalSet)>;

impl<'a> Allocator<'a> {
    pub fn new(setting: &'a Setting) -> Self {
        Allocator {
            setting,
            table: ColorTable::new(setting.n()),
            trace: Vec::new(),
            iteration: SignalSet::EMPTY,
            check_invariants: false,
        }
    }

    /// Assert table consistency after every top-level coloring call.
    pub fn with_invariant_checks(mut self, on: bool) -> Self {
        self.check_invariants = on;
        self
    }

    pub fn run(mut self) -> Result<Allocation, AllocationError> {
        for set in inclusion_compatible_order(self.setting.n()) {
            self.iteration = set;
            if let Err((kind, bidder, column)) = self.process(set) {
                return Err(AllocationError { kind, bidder, column, iteration: set, trace: self.trace });
            }
        }
        debug_assert!(self.table.is_complete());
        let rule = self.table.to_rule();
        Ok(Allocation { table: self.table, rule, trace: self.trace })
    }

    fn process(&mut self, set: SignalSet) -> Step {
        if self.table.red_count(set) >= 2 {
            return Ok(());
        }
        let opt = self.setting.opt(set);
        if let Some((i, j)) = find_priority1_with(self.setting, &self.table, set, opt) {
            self.top_level(|a| a.color_red(i, set, Cause::Priority1))?;
            self.top_level(|a| a.color_red(j, set, Cause::Priority1))?;
            return Ok(());
        }
        let Some(b) = find_priority2_with(self.setting, &self.table, set, opt) else {
            return Err((FailureKind::NoFavoredBidder, 0, set));
        };
        self.top_level(|a| a.color_red(b, set, Cause::Priority2))?;
        for other in 0..self.setting.n() {
            if self.table.get(other, set) == Color::White {
                self.top_level(|a| a.color_black(other, set, Cause::Fill))?;
            }
        }
        Ok(())
    }

    fn top_level(&mut self, call: impl FnOnce(&mut Self) -> Step) -> Step {
        call(self)?;
        if self.check_invariants {
            if let Some((b, s)) = self.table.consistency_violation() {
                panic!(
                    "table invariant broken at bidder {b}, column {s} during iteration {}\n{}",
                    self.iteration,
                    self.table.render()
                );
            }
        }
        Ok(())
    }

    fn record(&mut self, bidder: usize, column: SignalSet, color: Color, cause: Cause) {
        self.table.set(bidder, column, color);
        self.trace.push(TraceEvent { iteration: self.iteration, column, bidder, color, cause });
    }

    /// Recursion depth is bounded by `n`: each forward step grows the set.
    fn color_red(&mut self, b: usize, set: SignalSet, cause: Cause) -> Step {
        match self.table.get(b, set) {
            Color::Black => return Err((FailureKind::BlackToRed, b, set)),
            Color::Red => return Ok(()),
            Color::White => {}
        }
        if self.table.red_count(set) >= 2 {
            return Err((FailureKind::ThirdRed, b, set));
        }
        self.record(b, set, Color::Red, cause);
        if self.table.red_count(set) == 2 {
            for other in 0..self.setting.n() {
                if self.table.get(other, set) != Color::Red {
                    self.color_black(other, set, Cause::ColumnFull)?;
                }
            }
        }
        if !set.contains(b) {
            self.color_red(b, set.with(b), Cause::ForwardPropagation)?;
        }
        Ok(())
    }

    /// Recursion depth is bounded by `n`: each backward step shrinks the set.
    fn color_black(&mut self, b: usize, set: SignalSet, cause: Cause) -> Step {
        match self.table.get(b, set) {
            Color::Red => return Err((FailureKind::RedToBlack, b, set)),
            Color::Black => return Ok(()),
            Color::White => {}
        }
        self.record(b, set, Color::Black, cause);
        if set.contains(b) {
            self.color_black(b, set.without(b), Cause::BackwardPropagation)?;
        }
        Ok(())
    }

    /// Exposes a single coloring step on the current table (testing hook).
    pub fn apply_red(&mut self, b: usize, set: SignalSet) -> Result<(), FailureKind> {
        self.color_red(b, set, Cause::Priority2).map_err(|e| e.0)
    }

    pub fn apply_black(&mut self, b: usize, set: SignalSet) -> Result<(), FailureKind> {
        self.color_black(b, set, Cause::Fill).map_err(|e| e.0)
    }

    pub fn table(&self) -> &ColorTable {
        &self.table
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalSet as S;

    fn flagship() -> Setting {
        Setting::from_integer_tables(&[&[1, 2, 1, 2], &[0, 10, 0, 10]]).unwrap()
    }

    fn half() -> Rational {
        Rational::new(1, 2)
    }

    #[test]
    fn orders_by_cardinality_then_mask() {
        let masks: Vec<u32> = inclusion_compatible_order(2).iter().map(|s| s.mask()).collect();
        assert_eq!(masks, vec![0b00, 0b01, 0b10, 0b11]);
        let masks: Vec<u32> = inclusion_compatible_order(3).iter().map(|s| s.mask()).collect();
        assert_eq!(masks, vec![0, 1, 2, 4, 3, 5, 6, 7]);
    }

    #[test]
    fn order_places_subsets_first() {
        for n in 1..=4 {
            let order = inclusion_compatible_order(n);
            for (k, a) in order.iter().enumerate() {
                for (l, b) in order.iter().enumerate() {
                    if a != b && a.is_subset_of(*b) {
                        assert!(k < l, "{a} must precede {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn flagship_rule_matches_the_worked_example() {
        let a = allocate(&flagship()).unwrap();
        for set in S::all(2) {
            assert_eq!(a.rule.prob(0, set), half());
            let expected = if set.contains(0) { half() } else { Rational::from_integer(0) };
            assert_eq!(a.rule.prob(1, set), expected, "bidder 2 at {set}");
        }
        assert_eq!(
            a.table.render(),
            "     0 {}           RB\n     1 {1}          RR\n     2 {2}          RB\n     3 {1,2}        RR\n"
        );
    }

    #[test]
    fn flagship_never_finds_a_pair() {
        let setting = flagship();
        let mut alloc = Allocator::new(&setting);
        for set in inclusion_compatible_order(2) {
            assert_eq!(find_priority1(&setting, alloc.table(), set), None);
            alloc.process(set).unwrap();
        }
    }

    #[test]
    fn priority2_on_flagship() {
        let setting = flagship();
        let empty = ColorTable::new(2);
        assert_eq!(find_priority2(&setting, &empty, S::EMPTY), Some(0));
        assert_eq!(find_priority2(&setting, &empty, S::from_bidders([0])), Some(1));
        let zero = Setting::from_integer_tables(&[&[0; 4], &[0; 4]]).unwrap();
        for set in S::all(2) {
            assert_eq!(find_priority2(&zero, &empty, set), Some(0));
        }
    }

    #[test]
    fn symmetric_pair_is_priority1() {
        let card: &[i64] = &[0, 1, 1, 2];
        let setting = Setting::from_integer_tables(&[card, card]).unwrap();
        assert_eq!(find_priority1(&setting, &ColorTable::new(2), S::full(2)), Some((0, 1)));
    }

    #[test]
    fn priority1_may_include_the_existing_red() {
        let card: &[i64] = &[0, 1, 1, 2, 1, 2, 2, 3];
        let setting = Setting::from_integer_tables(&[card, card, card]).unwrap();
        let mut table = ColorTable::new(3);
        table.set(1, S::full(3), Color::Red);
        // Pair (0, 2) excluded by the outside Red at bidder 1.
        assert_eq!(find_priority1(&setting, &table, S::full(3)), Some((0, 1)));
        table.set(0, S::full(3), Color::Black);
        assert_eq!(find_priority1(&setting, &table, S::full(3)), Some((1, 2)));
    }

    #[test]
    fn single_bidder_wins_half_everywhere() {
        let setting = Setting::from_integer_tables(&[&[3, 5]]).unwrap();
        let a = allocate(&setting).unwrap();
        assert_eq!(a.rule.prob(0, S::EMPTY), half());
        assert_eq!(a.rule.prob(0, S::full(1)), half());
    }

    #[test]
    fn red_propagates_forward_once() {
        let setting = Setting::from_integer_tables(&[&[0; 4], &[0; 4]]).unwrap();
        let mut alloc = Allocator::new(&setting);
        alloc.apply_red(0, S::EMPTY).unwrap();
        assert_eq!(alloc.table().get(0, S::EMPTY), Color::Red);
        assert_eq!(alloc.table().get(0, S::from_bidders([0])), Color::Red);
        assert_eq!(alloc.table().get(0, S::from_bidders([1])), Color::White);
    }

    #[test]
    fn black_propagates_backward_once() {
        let setting = Setting::from_integer_tables(&[&[0; 4], &[0; 4]]).unwrap();
        let mut alloc = Allocator::new(&setting);
        alloc.apply_black(1, S::full(2)).unwrap();
        assert_eq!(alloc.table().get(1, S::full(2)), Color::Black);
        assert_eq!(alloc.table().get(1, S::from_bidders([0])), Color::Black);
        assert_eq!(alloc.table().get(1, S::from_bidders([1])), Color::White);
    }

    #[test]
    fn second_red_blackens_the_column() {
        let zeros: &[i64] = &[0; 8];
        let setting = Setting::from_integer_tables(&[zeros, zeros, zeros]).unwrap();
        let mut alloc = Allocator::new(&setting);
        let full = S::full(3);
        alloc.apply_red(0, full).unwrap();
        alloc.apply_red(1, full).unwrap();
        assert_eq!(alloc.table().get(2, full), Color::Black);
        assert_eq!(alloc.table().get(2, full.without(2)), Color::Black);
        assert_eq!(alloc.apply_red(2, full), Err(FailureKind::BlackToRed));
        assert_eq!(alloc.apply_black(0, full), Err(FailureKind::RedToBlack));
    }

    #[test]
    fn third_red_is_an_error() {
        let zeros: &[i64] = &[0; 8];
        let setting = Setting::from_integer_tables(&[zeros, zeros, zeros]).unwrap();
        let mut alloc = Allocator::new(&setting);
        // Two Reds in column {3} placed without the column-full rule.
        alloc.table.set(0, S::from_bidders([2]), Color::Red);
        alloc.table.set(1, S::from_bidders([2]), Color::Red);
        assert_eq!(alloc.apply_red(2, S::from_bidders([2])), Err(FailureKind::ThirdRed));
    }

    #[test]
    fn missing_favored_bidder_is_reported() {
        // Not SOS: every cell of the bottom column Black leaves no candidate.
        let setting = Setting::from_integer_tables(&[&[1, 1]]).unwrap();
        let mut alloc = Allocator::new(&setting);
        alloc.table.set(0, S::EMPTY, Color::Black);
        assert_eq!(alloc.process(S::EMPTY), Err((FailureKind::NoFavoredBidder, 0, S::EMPTY)));
    }
}
