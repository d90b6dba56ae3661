//! Paired t-test and one-way ANOVA, with the Student t and F distributions
//! evaluated through the regularized incomplete beta function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("significance level must be in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sided {
    /// Alternative: the mean difference exceeds the offset.
    One,
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Degrees of freedom (numerator degrees for F).
    pub df: f64,
    /// Denominator degrees of freedom, for F tests.
    pub df2: Option<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub reject: bool,
    /// Zero variance made the statistic undefined or infinite.
    pub degenerate: bool,
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub fn t_cdf(t: f64, df: f64) -> f64 {
    1.0 - t_sf(t, df)
}

/// `P(F > f)` for the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

pub fn f_cdf(f: f64, d1: f64, d2: f64) -> f64 {
    1.0 - f_sf(f, d1, d2)
}

/// Inverts a decreasing survival function on `[lo, hi]` by bisection.
fn invert_sf(sf: impl Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    while sf(hi) > p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sf(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Upper-`p` critical value of Student's t: `P(T > t) = p`.
pub fn t_critical(p: f64, df: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    if p > 0.5 {
        return -t_critical(1.0 - p, df);
    }
    invert_sf(|t| t_sf(t, df), p, 0.0, 16.0)
}

/// Upper-`p` critical value of F: `P(F > f) = p`.
pub fn f_critical(p: f64, d1: f64, d2: f64) -> f64 {
    invert_sf(|f| f_sf(f, d1, d2), p, 0.0, 16.0)
}

fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatsError::BadAlpha(alpha))
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Paired t-test on the differences `b - a - d0`.
///
/// With `Sided::One` the alternative is `mean(b - a) > d0`.
pub fn paired_t_test(
    a: &[f64],
    b: &[f64],
    d0: f64,
    alpha: f64,
    sided: Sided,
) -> Result<TestResult, StatsError> {
    check_alpha(alpha)?;
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) || !d0.is_finite() {
        return Err(StatsError::NonFinite);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x - d0).collect();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    let degenerate = var == 0.0;
    let statistic = if degenerate {
        if m == 0.0 {
            0.0
        } else {
            m.signum() * f64::INFINITY
        }
    } else {
        m / (var / n as f64).sqrt()
    };
    let (p_value, critical_value) = match sided {
        Sided::One => (t_sf(statistic, df), t_critical(alpha, df)),
        Sided::Two => (
            (2.0 * t_sf(statistic.abs(), df)).min(1.0),
            t_critical(alpha / 2.0, df),
        ),
    };
    Ok(TestResult {
        statistic,
        df,
        df2: None,
        p_value,
        alpha,
        critical_value,
        reject: p_value < alpha,
        degenerate,
    })
}

/// One-way ANOVA F test for equal group means.
pub fn anova_oneway(groups: &[Vec<f64>], alpha: f64) -> Result<TestResult, StatsError> {
    check_alpha(alpha)?;
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups(k));
    }
    for g in groups {
        if g.len() < 2 {
            return Err(StatsError::TooFew {
                need: 2,
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let d1 = (k - 1) as f64;
    let d2 = (n - k) as f64;
    let ms_between = ss_between / d1;
    let ms_within = ss_within / d2;
    let degenerate = ms_within == 0.0;
    let statistic = if degenerate {
        if ms_between == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ms_between / ms_within
    };
    let p_value = f_sf(statistic, d1, d2);
    Ok(TestResult {
        statistic,
        df: d1,
        df2: Some(d2),
        p_value,
        alpha,
        critical_value: f_critical(alpha, d1, d2),
        reject: p_value < alpha,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(close(ln_gamma(1.0), 0.0, 1e-14));
        assert!(close(ln_gamma(2.0), 0.0, 1e-14));
        assert!(close(ln_gamma(5.0), 24f64.ln(), 1e-14));
        assert!(close(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            1e-14
        ));
        // ln(9!) from exact factorial.
        assert!(close(ln_gamma(10.0), 362_880f64.ln(), 1e-14));
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x, I_x(a, 1) = x^a, I_x(1, b) = 1 - (1-x)^b.
        for x in [0.1, 0.37, 0.5, 0.93] {
            assert!(close(incomplete_beta(1.0, 1.0, x), x, 1e-13));
            assert!(close(incomplete_beta(3.5, 1.0, x), x.powf(3.5), 1e-13));
            assert!(close(
                incomplete_beta(1.0, 2.5, x),
                1.0 - (1.0 - x).powf(2.5),
                1e-13
            ));
            // Symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
            let s = incomplete_beta(2.3, 7.1, x) + incomplete_beta(7.1, 2.3, 1.0 - x);
            assert!(close(s, 1.0, 1e-13));
        }
    }

    #[test]
    fn t_distribution_special_cases() {
        // df = 1 is Cauchy: P(T > t) = 1/2 - atan(t)/pi.
        for t in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            let want = 0.5 - f64::atan(t) / std::f64::consts::PI;
            assert!(close(t_sf(t, 1.0), want, 1e-12));
        }
        // df = 2: P(T > t) = 1/2 - t / (2 sqrt(t^2 + 2)).
        for t in [-2.0, 0.3, 4.0] {
            let want = 0.5 - t / (2.0 * (t * t + 2.0f64).sqrt());
            assert!(close(t_sf(t, 2.0), want, 1e-12));
        }
    }

    #[test]
    fn critical_values() {
        assert_eq!(format!("{:.2}", t_critical(0.05, 199.0)), "1.65");
        assert_eq!(format!("{:.2}", f_critical(0.05, 3.0, 796.0)), "2.62");
        let t = t_critical(0.025, 10.0);
        assert!(close(t_sf(t, 10.0), 0.025, 1e-10));
        let f = f_critical(0.01, 4.0, 20.0);
        assert!(close(f_sf(f, 4.0, 20.0), 0.01, 1e-10));
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let a = [1.0, 2.0, 3.0];
        let r = paired_t_test(&a, &a, 0.0, 0.05, Sided::Two).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(r.degenerate);
        assert!(!r.reject);
    }

    #[test]
    fn constant_groups_are_degenerate() {
        let g = vec![vec![2.0; 4], vec![2.0; 4], vec![2.0; 4]];
        let r = anova_oneway(&g, 0.05).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn input_validation() {
        assert_eq!(
            paired_t_test(&[1.0], &[2.0], 0.0, 0.05, Sided::One),
            Err(StatsError::TooFew { need: 2, got: 1 })
        );
        assert_eq!(
            paired_t_test(&[1.0, 2.0], &[2.0], 0.0, 0.05, Sided::One),
            Err(StatsError::LengthMismatch(2, 1))
        );
        assert!(matches!(
            anova_oneway(&[vec![1.0, 2.0]], 0.05),
            Err(StatsError::TooFewGroups(1))
        ));
        assert!(matches!(
            paired_t_test(&[1.0, 2.0], &[2.0, 3.0], 0.0, 1.5, Sided::One),
            Err(StatsError::BadAlpha(_))
        ));
    }

    #[test]
    fn hand_computed_paired_test() {
        // Differences 1,1,2,2,2: mean 1.6, sd sqrt(0.3), t = 1.6 / sqrt(0.06).
        let r = paired_t_test(
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[2.0, 3.0, 5.0, 6.0, 7.0],
            0.0,
            0.05,
            Sided::Two,
        )
        .unwrap();
        assert!(close(r.statistic, 1.6 / 0.06f64.sqrt(), 1e-12));
        assert_eq!(r.df, 4.0);
        assert!(r.reject);
    }
}
