//! Critical-signal payments for monotone binary-signal allocation rules.
//!
//! For bidder `i` and the others' signals fixed, let `a = x_i(s_i = 0)` and
//! `b = x_i(s_i = 1)` with `a ≤ b`. The expected payment is
//!
//! * report 0: `a · v_i(s_i = 0)`
//! * report 1: `a · v_i(s_i = 0) + (b − a) · v_i(s_i = 1)`
//!
//! i.e. each increment of winning probability is charged at the value the
//! bidder has at the lowest report that earns it.

use num_traits::Zero;
use thiserror::Error;

use crate::allocation::AllocationRule;
use crate::rational::Rational;
use crate::signal::SignalSet;
use crate::valuation::Setting;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaymentError {
    #[error("allocation not monotone for bidder {bidder} at {set}")]
    NonMonotone { bidder: usize, set: SignalSet },
    #[error("allocation infeasible at {set}")]
    Infeasible { set: SignalSet },
    #[error("probability of bidder {bidder} at {set} is neither 0 nor 1/2")]
    UnsupportedProbability { bidder: usize, set: SignalSet },
    #[error("allocation has {rule} bidders, setting has {setting}")]
    BidderCount { rule: usize, setting: usize },
}

/// Expected payment per `(bidder, reported signal set)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentRule {
    n: usize,
    payments: Vec<Rational>,
}

impl PaymentRule {
    pub fn from_columns(n: usize, columns: Vec<Vec<Rational>>) -> Option<Self> {
        if columns.len() != 1 << n || columns.iter().any(|c| c.len() != n) {
            return None;
        }
        Some(PaymentRule { n, payments: columns.into_iter().flatten().collect() })
    }

    pub fn zero(n: usize) -> Self {
        PaymentRule { n, payments: vec![Rational::zero(); n << n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn payment(&self, bidder: usize, set: SignalSet) -> Rational {
        self.payments[set.index() * self.n + bidder]
    }

    pub fn set_payment(&mut self, bidder: usize, set: SignalSet, p: Rational) {
        self.payments[set.index() * self.n + bidder] = p;
    }

    pub fn columns(&self) -> Vec<Vec<Rational>> {
        self.payments.chunks(self.n).map(<[Rational]>::to_vec).collect()
    }
}

/// Lowest own signal at which bidder `i` wins with positive probability,
/// holding `others` (bidder `i`'s bit ignored) fixed.
pub fn critical_signal(x: &AllocationRule, bidder: usize, others: SignalSet) -> Result<Option<u8>, PaymentError> {
    let low_set = others.without(bidder);
    let (low, high) = (x.prob(bidder, low_set), x.prob(bidder, low_set.with(bidder)));
    if low > high {
        return Err(PaymentError::NonMonotone { bidder, set: low_set });
    }
    Ok(if low > Rational::zero() {
        Some(0)
    } else if high > Rational::zero() {
        Some(1)
    } else {
        None
    })
}

pub fn compute_payments(setting: &Setting, x: &AllocationRule) -> Result<PaymentRule, PaymentError> {
    let n = setting.n();
    if x.n() != n {
        return Err(PaymentError::BidderCount { rule: x.n(), setting: n });
    }
    let half = Rational::new(1, 2);
    for set in SignalSet::all(n) {
        let column = x.column(set);
        if column.iter().sum::<Rational>() > Rational::from_integer(1) {
            return Err(PaymentError::Infeasible { set });
        }
        if let Some(bidder) = column.iter().position(|p| !p.is_zero() && *p != half) {
            return Err(PaymentError::UnsupportedProbability { bidder, set });
        }
    }
    let mut rule = PaymentRule::zero(n);
    for bidder in 0..n {
        for low_set in SignalSet::all(n).filter(|s| !s.contains(bidder)) {
            let high_set = low_set.with(bidder);
            let (a, b) = (x.prob(bidder, low_set), x.prob(bidder, high_set));
            if a > b {
                return Err(PaymentError::NonMonotone { bidder, set: low_set });
            }
            let low_charge = a * setting.value(bidder, low_set);
            rule.set_payment(bidder, low_set, low_charge);
            rule.set_payment(bidder, high_set, low_charge + (b - a) * setting.value(bidder, high_set));
        }
    }
    Ok(rule)
}

/// An allocation rule paired with its payments, bound to the valuations.
#[derive(Debug, Clone)]
pub struct Mechanism<'a> {
    pub setting: &'a Setting,
    pub allocation: AllocationRule,
    pub payments: PaymentRule,
}

impl<'a> Mechanism<'a> {
    pub fn new(setting: &'a Setting, allocation: AllocationRule) -> Result<Self, PaymentError> {
        let payments = compute_payments(setting, &allocation)?;
        Ok(Mechanism { setting, allocation, payments })
    }

    /// `x_i(s_{-i}, s'_i)·v_i(s) − p_i(s_{-i}, s'_i)` for true profile `truth`.
    pub fn expected_utility(&self, bidder: usize, truth: SignalSet, reported_high: bool) -> Rational {
        expected_utility(self, bidder, truth, reported_high)
    }
}

pub fn expected_utility(mechanism: &Mechanism<'_>, bidder: usize, truth: SignalSet, reported_high: bool) -> Rational {
    let reported = if reported_high { truth.with(bidder) } else { truth.without(bidder) };
    mechanism.allocation.prob(bidder, reported) * mechanism.setting.value(bidder, truth)
        - mechanism.payments.payment(bidder, reported)
}
