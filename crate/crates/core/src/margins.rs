//! Certainty and uncertainty profit margins.
//!
//! An agent with scaling parameters `alpha`, `beta`, its own incentive `I`
//! and the extra incentive `I_ex` is certain to profit from a task costing
//! less than `alpha * I` (the certainty radius), may profit up to
//! `alpha * I + beta * I_ex` (the uncertainty radius) depending on its share
//! of `I_ex`, and cannot profit beyond that.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when testing a utility for non-negativity, absorbing
/// floating-point rounding of shares derived from the same cost.
pub const PROFIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MarginError {
    #[error("{name} must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Hunter,
    Gatherer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginParams {
    pub role: Role,
    pub alpha: f64,
    pub beta: f64,
    /// `I_h` for hunters, `I_g` for gatherers.
    pub own_incentive: f64,
    pub extra_incentive: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarginState {
    /// Profitable whatever the share of the extra incentive.
    State1,
    /// Profitable only with a large enough share.
    State2,
    /// Not profitable even with the whole extra incentive.
    State3,
}

/// Range of extra-incentive shares that keep an agent's utility
/// non-negative. The upper bound is always 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfitInterval {
    pub lower: f64,
    pub upper: f64,
    pub empty: bool,
}

impl ProfitInterval {
    pub const EMPTY: ProfitInterval = ProfitInterval {
        lower: 1.0,
        upper: 1.0,
        empty: true,
    };

    pub const FULL: ProfitInterval = ProfitInterval {
        lower: 0.0,
        upper: 1.0,
        empty: false,
    };

    pub fn from_lower(lower: f64) -> Self {
        Self {
            lower: lower.clamp(0.0, 1.0),
            upper: 1.0,
            empty: false,
        }
    }

    pub fn contains(&self, share: f64) -> bool {
        !self.empty && self.lower <= share && share <= self.upper
    }

    pub fn midpoint(&self) -> f64 {
        (self.lower + self.upper) / 2.0
    }
}

impl MarginParams {
    pub fn new(
        role: Role,
        alpha: f64,
        beta: f64,
        own_incentive: f64,
        extra_incentive: f64,
    ) -> Result<Self, MarginError> {
        for (name, value) in [
            ("alpha", alpha),
            ("beta", beta),
            ("own incentive", own_incentive),
            ("extra incentive", extra_incentive),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(MarginError::Negative { name, value });
            }
        }
        Ok(Self {
            role,
            alpha,
            beta,
            own_incentive,
            extra_incentive,
        })
    }

    pub fn hunter(alpha: f64, beta: f64, i_h: f64, i_ex: f64) -> Result<Self, MarginError> {
        Self::new(Role::Hunter, alpha, beta, i_h, i_ex)
    }

    pub fn gatherer(alpha: f64, beta: f64, i_g: f64, i_ex: f64) -> Result<Self, MarginError> {
        Self::new(Role::Gatherer, alpha, beta, i_g, i_ex)
    }

    /// `R_c = alpha * I_own`.
    pub fn certainty_radius(&self) -> f64 {
        self.alpha * self.own_incentive
    }

    /// Scale of the share-dependent part of the utility, `beta * I_ex`.
    fn share_scale(&self) -> f64 {
        self.beta * self.extra_incentive
    }

    /// `R_u = R_c + beta * I_ex`.
    pub fn uncertainty_radius(&self) -> f64 {
        self.certainty_radius() + self.share_scale()
    }

    /// Boundary costs are assigned to `State2`: a zero profit still counts as
    /// acceptable.
    pub fn classify(&self, cost: f64) -> MarginState {
        if cost < self.certainty_radius() {
            MarginState::State1
        } else if cost <= self.uncertainty_radius() {
            MarginState::State2
        } else {
            MarginState::State3
        }
    }

    pub fn profit_interval(&self, cost: f64) -> ProfitInterval {
        if self.classify(cost) == MarginState::State3 {
            return ProfitInterval::EMPTY;
        }
        let excess = cost - self.certainty_radius();
        if excess <= 0.0 {
            return ProfitInterval::FULL;
        }
        // State2 with a positive excess implies a positive share scale.
        ProfitInterval::from_lower(excess / self.share_scale())
    }

    /// `alpha * I_own + beta * share * I_ex - cost`.
    pub fn utility(&self, cost: f64, share: f64) -> f64 {
        self.certainty_radius() + self.beta * share * self.extra_incentive - cost
    }

    pub fn is_profitable(&self, cost: f64, share: f64) -> bool {
        self.utility(cost, share) >= -PROFIT_TOLERANCE
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn symmetric(role: Role, ab: f64, incentive: f64) -> MarginParams {
        MarginParams::new(role, ab, ab, incentive, incentive).unwrap()
    }

    #[test]
    fn radii() {
        let g = MarginParams::gatherer(0.15, 0.15, 140.0, 140.0).unwrap();
        assert!((g.certainty_radius() - 21.0).abs() < 1e-12);
        assert!((g.uncertainty_radius() - 42.0).abs() < 1e-12);
        let g = symmetric(Role::Gatherer, 1.0, 10.0);
        assert_eq!(g.certainty_radius(), 10.0);
        assert_eq!(g.uncertainty_radius(), 20.0);
        let z = MarginParams::gatherer(0.0, 0.5, 77.0, 10.0).unwrap();
        assert_eq!(z.certainty_radius(), 0.0);
        let nb = MarginParams::hunter(0.3, 0.0, 50.0, 10.0).unwrap();
        assert_eq!(nb.uncertainty_radius(), nb.certainty_radius());
    }

    #[test]
    fn rejects_negative_parameters() {
        assert!(matches!(
            MarginParams::hunter(-0.1, 0.0, 1.0, 1.0),
            Err(MarginError::Negative { name: "alpha", .. })
        ));
        assert!(MarginParams::gatherer(0.1, f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn classification_examples() {
        let h = symmetric(Role::Hunter, 1.0, 10.0);
        let g = symmetric(Role::Gatherer, 1.0, 10.0);
        assert_eq!(h.classify(8.0), MarginState::State1);
        assert_eq!(g.classify(10.0), MarginState::State2);
        assert_eq!(g.classify(20.0), MarginState::State2);
        assert_eq!(g.classify(25.0), MarginState::State3);
        assert_eq!(g.classify(f64::INFINITY), MarginState::State3);
    }

    #[test]
    fn interval_examples() {
        let h = symmetric(Role::Hunter, 1.0, 10.0);
        assert_eq!(h.profit_interval(8.0), ProfitInterval::FULL);
        let g = symmetric(Role::Gatherer, 1.0, 10.0);
        let pi = g.profit_interval(10.0);
        assert_eq!(pi.lower, 0.0);
        assert_eq!(pi.upper, 1.0);
        assert!(!pi.empty);
        let g9 = symmetric(Role::Gatherer, 0.9, 10.0);
        let pi = g9.profit_interval(10.0);
        assert!((pi.lower - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(pi.upper, 1.0);
        assert!(g.profit_interval(25.0).empty);
        assert!(g.profit_interval(f64::INFINITY).empty);
    }

    #[test]
    fn degenerate_share_scale() {
        let p = MarginParams::gatherer(0.5, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(p.profit_interval(5.0), ProfitInterval::FULL);
        assert_eq!(p.profit_interval(4.0), ProfitInterval::FULL);
        assert!(p.profit_interval(5.5).empty);
        let p = MarginParams::gatherer(0.5, 0.7, 10.0, 0.0).unwrap();
        assert!(p.profit_interval(6.0).empty);
    }

    #[test]
    fn utility_examples() {
        let g = symmetric(Role::Gatherer, 1.0, 10.0);
        assert_eq!(g.utility(10.0, 0.0), 0.0);
        let g9 = symmetric(Role::Gatherer, 0.9, 10.0);
        assert!((g9.utility(10.0, 0.0) + 1.0).abs() < 1e-12);
        let p = MarginParams::hunter(0.35, 0.2, 140.0, 90.0).unwrap();
        assert!(p.utility(p.uncertainty_radius(), 1.0).abs() < 1e-12);
    }

    fn params() -> impl Strategy<Value = MarginParams> {
        (0.0..2.0f64, 0.0..2.0f64, 0.0..200.0f64, 0.0..200.0f64)
            .prop_map(|(a, b, i, x)| MarginParams::gatherer(a, b, i, x).unwrap())
    }

    proptest! {
        #[test]
        fn lower_bound_breaks_even(p in params(), cost in 0.0..500.0f64) {
            let pi = p.profit_interval(cost);
            prop_assert_eq!(pi.empty, p.classify(cost) == MarginState::State3);
            if !pi.empty {
                let u = p.utility(cost, pi.lower);
                prop_assert!(u >= -1e-9);
                if pi.lower > 0.0 {
                    prop_assert!(u.abs() < 1e-9);
                }
                prop_assert!(0.0 <= pi.lower && pi.lower <= pi.upper && pi.upper == 1.0);
            }
            if p.classify(cost) == MarginState::State1 {
                prop_assert_eq!(pi.lower, 0.0);
            }
            prop_assert_eq!(
                !pi.empty && pi.lower == 0.0,
                cost <= p.certainty_radius()
            );
        }

        #[test]
        fn lower_bound_monotone(
            p in params(),
            c1 in 0.0..500.0f64,
            c2 in 0.0..500.0f64,
            bump in 0.0..1.0f64,
        ) {
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let a = p.profit_interval(lo);
            let b = p.profit_interval(hi);
            if !b.empty {
                prop_assert!(!a.empty && a.lower <= b.lower);
            }
            let q = MarginParams { alpha: p.alpha + bump, ..p };
            let r = MarginParams { beta: p.beta + bump, ..p };
            let s = MarginParams { own_incentive: p.own_incentive + bump, ..p };
            let t = MarginParams { extra_incentive: p.extra_incentive + bump, ..p };
            let base = p.profit_interval(hi);
            if !base.empty {
                for other in [q, r, s, t] {
                    let o = other.profit_interval(hi);
                    prop_assert!(!o.empty && o.lower <= base.lower + 1e-12);
                }
            }
        }

        #[test]
        fn utility_affine_in_share(p in params(), cost in 0.0..500.0f64, s1 in 0.0..1.0f64, s2 in 0.0..1.0f64) {
            let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            let slope = p.beta * p.extra_incentive;
            let d = p.utility(cost, hi) - p.utility(cost, lo);
            prop_assert!((d - slope * (hi - lo)).abs() < 1e-9);
            if slope > 1e-6 && hi - lo > 1e-6 {
                prop_assert!(p.utility(cost, hi) > p.utility(cost, lo));
            }
        }
    }
}
