//! Constants that parameterize the equilibrium construction.
//!
//! Integer constants (`n`, `k`, `k_j`, `T`, `S`, ...) are found with exact
//! rational arithmetic so the f64 and the rational paths always agree on them.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, FailedCondition, Result};
use crate::game::GameSpec;
use crate::scalar::{Rational, Scalar};

/// Smallest acceptable value of the per-period log drift of the likelihood ratio.
pub const MIN_LOG_DRIFT: f64 = 1e-6;

/// Outcome of the checks on the discount factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaChecks {
    /// `δ^(T+1)(1 + δ + … + δ^N) > N`.
    pub return_sum: bool,
    /// `2δ^(T+N+2) > 1`.
    pub return_power: bool,
    /// The window-ratio bracket around `γ̃`; informational only.
    pub window_ratio: bool,
    /// Smallest discount factor meeting both return conditions.
    pub threshold: f64,
}

impl DeltaChecks {
    pub fn required_hold(&self) -> bool {
        self.return_sum && self.return_power
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedConstants<S = f64> {
    pub gstar: S,
    pub n: u64,
    pub k: u64,
    pub gamma_tilde: S,
    pub gamma_hat: S,
    pub eta_star: S,
    pub lambda: S,
    /// Per-period log drift of the likelihood ratio at `λ`.
    pub log_drift: f64,
    /// `k_j` for every type; entries for the two lowest-cost types are 1.
    pub kj: Vec<u64>,
    pub k_cap: u64,
    pub t: u64,
    pub s: u64,
    /// `⌈1/(1−γ)⌉`.
    pub big_n: u64,
    /// Consecutive `H` outcomes that take the belief from the prior to one.
    pub reveal_run: u64,
    pub y_bound: S,
    /// Lower bound on the trust weight used by the audits.
    pub q_floor: S,
    /// Upper bound on the number of visits to the screening class.
    pub class2_cap: u64,
    pub delta: DeltaChecks,
}

impl<S: Scalar> DerivedConstants<S> {
    pub fn to_f64(&self) -> DerivedConstants<f64> {
        DerivedConstants {
            gstar: self.gstar.to_f64(),
            n: self.n,
            k: self.k,
            gamma_tilde: self.gamma_tilde.to_f64(),
            gamma_hat: self.gamma_hat.to_f64(),
            eta_star: self.eta_star.to_f64(),
            lambda: self.lambda.to_f64(),
            log_drift: self.log_drift,
            kj: self.kj.clone(),
            k_cap: self.k_cap,
            t: self.t,
            s: self.s,
            big_n: self.big_n,
            reveal_run: self.reveal_run,
            y_bound: self.y_bound.to_f64(),
            q_floor: self.q_floor.to_f64(),
            class2_cap: self.class2_cap,
            delta: self.delta.clone(),
        }
    }

    /// Belief multiplier after `H`.
    pub fn up(&self) -> S {
        S::one() + &(self.lambda.clone() * &(S::one() - &self.gstar))
    }

    /// Belief multiplier after `L`.
    pub fn down(&self) -> S {
        S::one() - &(self.lambda.clone() * &self.gstar)
    }
}

/// Derives every constant and rejects discount factors that fail the return conditions.
pub fn derive_constants<S: Scalar>(spec: &GameSpec) -> Result<DerivedConstants<S>> {
    let c = derive_unchecked::<S>(spec)?;
    if !c.delta.required_hold() {
        return Err(Error::DeltaTooLow {
            delta: spec.delta,
            failed: failed_conditions(spec.delta, c.t, c.big_n),
            threshold: c.delta.threshold,
        });
    }
    Ok(c)
}

/// Same as [`derive_constants`] but returns the constants even when `δ` is too low.
pub fn derive_unchecked<S: Scalar>(spec: &GameSpec) -> Result<DerivedConstants<S>> {
    spec.validate()?;
    let b = Rational::from_decimal(spec.b);
    let c = Rational::from_decimal(spec.c);
    let gstar_q = c.clone() / (b + c);
    let gamma_q = Rational::from_decimal(spec.gamma);
    let prior_q: Vec<Rational> = spec.prior_as::<Rational>();

    let (n, k) = frequency_pair(&gstar_q, &gamma_q);
    let nk = Rational::new(n.into(), k.into());
    let nk1 = Rational::new(n.into(), (k - 1).into());
    let half = Rational::new(1.into(), 2.into());
    let gamma_tilde_q = (nk.clone() + nk1) * half.clone();
    let gamma_hat_q = (nk + gstar_q.clone()) * half.clone();

    let kj = screening_counts(&prior_q, &gstar_q);
    let k_cap = kj.iter().skip(2).sum::<u64>();
    let eta_star_q = eta_star(&prior_q, &kj, &gstar_q);

    let gstar_f = gstar_q.to_f64();
    let gamma_hat_f = gamma_hat_q.to_f64();
    let (lambda_q, log_drift) = choose_lambda(gstar_f, gamma_hat_f)?;

    let pi1 = prior_q[0].to_f64();
    let eta_star_f = eta_star_q.to_f64();
    let up_f = (1.0 + lambda_q.to_f64() * (1.0 - gstar_f)).ln();
    let t = ((1.0 / pi1).ln() / up_f).ceil().max(0.0) as u64;
    let s = (((1.0 - eta_star_f) / (pi1 - eta_star_f)).ln() / log_drift)
        .ceil()
        .max(0.0) as u64;
    let big_n = ceil_rational(&(Rational::one() / (Rational::one() - gamma_q.clone())));
    let reveal_run = reveal_run(&prior_q[0], &eta_star_q, &lambda_q, &gstar_q);

    let theta1 = Rational::from_decimal(spec.thetas[0]);
    let one = Rational::one();
    let y_q = half.clone()
        * (gamma_q.clone()
            - (one.clone() - gamma_q.clone()) * gamma_tilde_q.clone()
                / (one.clone() - gamma_tilde_q.clone()))
        * (one.clone() - theta1.clone())
        / (one.clone() - gamma_q.clone() * theta1);
    let q_floor_q = y_q.clone() * half;

    let class2_cap = k_cap
        + ((1.0 / pi1).ln() / (1.0 / gstar_f.sqrt()).ln())
            .ceil()
            .max(0.0) as u64
        + 1;

    let delta = delta_checks(spec.delta, t, big_n, n, k, gamma_tilde_q.to_f64());

    Ok(DerivedConstants {
        gstar: S::from_rational(&gstar_q),
        n,
        k,
        gamma_tilde: S::from_rational(&gamma_tilde_q),
        gamma_hat: S::from_rational(&gamma_hat_q),
        eta_star: S::from_rational(&eta_star_q),
        lambda: S::from_rational(&lambda_q),
        log_drift,
        kj,
        k_cap,
        t,
        s,
        big_n,
        reveal_run,
        y_bound: S::from_rational(&y_q),
        q_floor: S::from_rational(&q_floor_q),
        class2_cap,
        delta,
    })
}

fn ceil_rational(q: &Rational) -> u64 {
    q.ceil().to_integer().as_u64().unwrap_or(u64::MAX)
}

trait FitsU64 {
    fn as_u64(&self) -> Option<u64>;
}

impl FitsU64 for BigInt {
    fn as_u64(&self) -> Option<u64> {
        num_traits::ToPrimitive::to_u64(self)
    }
}

fn floor_big(q: &Rational) -> BigInt {
    q.floor().to_integer()
}

/// The simplest fraction strictly between `lo` and `hi` (both in `(0, 1)`).
pub fn simplest_between(lo: &Rational, hi: &Rational) -> (u64, u64) {
    // Stern–Brocot descent, taking runs of identical moves in one step.
    let (mut a, mut b) = (BigInt::zero(), BigInt::one());
    let (mut c, mut d) = (BigInt::one(), BigInt::zero());
    loop {
        let med = Rational::new(a.clone() + &c, b.clone() + &d);
        if med <= *lo {
            // largest t with (a + t c)/(b + t d) ≤ lo
            let num = lo.clone() * Rational::from(b.clone()) - Rational::from(a.clone());
            let den = Rational::from(c.clone()) - lo.clone() * Rational::from(d.clone());
            let t = floor_big(&(num / den)).max(BigInt::one());
            a += &t * &c;
            b += &t * &d;
        } else if med >= *hi {
            // largest t with (c + t a)/(d + t b) ≥ hi
            let num = Rational::from(c.clone()) - hi.clone() * Rational::from(d.clone());
            let den = hi.clone() * Rational::from(b.clone()) - Rational::from(a.clone());
            let t = floor_big(&(num / den)).max(BigInt::one());
            c += &t * &a;
            d += &t * &b;
        } else {
            let (n, k) = (med.numer().clone(), med.denom().clone());
            return (
                n.as_u64().expect("numerator fits"),
                k.as_u64().expect("denominator fits"),
            );
        }
    }
}

/// The pair `(n, k)` with `γ* < n/k` and `n/(k−1) < γ`.
pub fn frequency_pair(gstar: &Rational, gamma: &Rational) -> (u64, u64) {
    let (n0, k0) = simplest_between(gstar, gamma);
    // smallest j with n0 j / (k0 j − 1) < γ, i.e. j (γ k0 − n0) > γ
    let gap = gamma.clone() * Rational::from(BigInt::from(k0)) - Rational::from(BigInt::from(n0));
    let j = floor_big(&(gamma.clone() / gap)) + BigInt::one();
    let j = j.as_u64().expect("scale fits");
    (n0 * j, k0 * j)
}

/// `k_j` for each type; only types three and above use more than one visit.
pub fn screening_counts(prior: &[Rational], gstar: &Rational) -> Vec<u64> {
    let one = Rational::one();
    (0..prior.len())
        .map(|j| {
            if j < 2 {
                return 1;
            }
            let between: Rational = prior[1..j]
                .iter()
                .cloned()
                .fold(Rational::zero(), |a, x| a + x);
            // k ≥ π_j γ* (1 − π_1) / ((1 − γ*) Σ_{1<i<j} π_i)
            let bound = prior[j].clone() * gstar.clone() * (one.clone() - prior[0].clone())
                / ((one.clone() - gstar.clone()) * between);
            let k = ceil_rational(&bound).max(1);
            debug_assert!(screening_share(prior, gstar, j, k));
            k
        })
        .collect()
}

fn screening_share(prior: &[Rational], gstar: &Rational, j: usize, k: u64) -> bool {
    let one = Rational::one();
    let x = prior[j].clone() / Rational::from(BigInt::from(k));
    let between: Rational = prior[1..j]
        .iter()
        .cloned()
        .fold(Rational::zero(), |a, y| a + y);
    (one.clone() - gstar.clone() * prior[0].clone()) * x.clone() / (between + x)
        <= one - gstar.clone()
}

/// Midpoint of the admissible interval for the belief floor.
pub fn eta_star(prior: &[Rational], kj: &[u64], gstar: &Rational) -> Rational {
    let one = Rational::one();
    let pi1 = prior[0].clone();
    let mut lo = gstar.clone() * pi1.clone();
    if prior.len() > 2 {
        let r = (2..prior.len())
            .map(|j| {
                let upto: Rational = prior[1..=j]
                    .iter()
                    .cloned()
                    .fold(Rational::zero(), |a, x| a + x);
                prior[j].clone() / Rational::from(BigInt::from(kj[j])) / upto
            })
            .min()
            .expect("at least one type");
        let alt = pi1.clone() * (one.clone() - r.clone()) / (one - r * pi1.clone());
        if alt > lo {
            lo = alt;
        }
    }
    (lo + pi1) / Rational::from(BigInt::from(2))
}

/// Per-period drift of the log likelihood ratio when trust is honored at rate `γ̂`.
pub fn log_drift(lambda: f64, gstar: f64, gamma_hat: f64) -> f64 {
    (1.0 - gamma_hat) * (1.0 - lambda * gstar).ln()
        + gamma_hat * (1.0 + lambda * (1.0 - gstar)).ln()
}

/// Largest power of ten below `(1 − √γ*)/γ*`, capped at 0.1, whose drift is at
/// least [`MIN_LOG_DRIFT`].
pub fn choose_lambda(gstar: f64, gamma_hat: f64) -> Result<(Rational, f64)> {
    let bound = (1.0 - gstar.sqrt()) / gstar;
    for e in 1..=15u32 {
        let lam = 10f64.powi(-(e as i32));
        if lam >= bound {
            continue;
        }
        let drift = log_drift(lam, gstar, gamma_hat);
        if drift >= MIN_LOG_DRIFT {
            let q = Rational::new(BigInt::one(), num_traits::pow(BigInt::from(10), e as usize));
            return Ok((q, drift));
        }
    }
    Err(Error::InvalidSpec(
        "no belief step size gives a positive drift; gamma is too close to the trust threshold"
            .into(),
    ))
}

/// Number of consecutive `H` outcomes needed for the belief to reach one.
pub fn reveal_run(pi1: &Rational, eta_star: &Rational, lambda: &Rational, gstar: &Rational) -> u64 {
    let one = Rational::one();
    let up = one.clone() + lambda.clone() * (one.clone() - gstar.clone());
    let target = one - eta_star.clone();
    let gap0 = pi1.clone() - eta_star.clone();
    if gap0 >= target {
        return 0;
    }
    // estimate in floating point, then settle the boundary exactly
    let est = ((target.to_f64() / gap0.to_f64()).ln() / up.to_f64().ln())
        .ceil()
        .max(1.0) as u64;
    let reaches = |r: u64| gap0.clone() * num_traits::pow(up.clone(), r as usize) >= target;
    let mut r = est.saturating_sub(1).max(1);
    while r > 1 && reaches(r - 1) {
        r -= 1;
    }
    while !reaches(r) {
        r += 1;
    }
    r
}

fn return_margins(delta: f64, t: u64, big_n: u64) -> (f64, f64) {
    let geo: f64 = (0..=big_n).map(|i| delta.powi(i as i32)).sum();
    let sum = delta.powi((t + 1) as i32) * geo - big_n as f64;
    let pow = 2.0 * delta.powi((t + big_n + 2) as i32) - 1.0;
    (sum, pow)
}

fn failed_conditions(delta: f64, t: u64, big_n: u64) -> Vec<FailedCondition> {
    let (sum, pow) = return_margins(delta, t, big_n);
    let mut out = Vec::new();
    if !(sum > 0.0) {
        out.push(FailedCondition {
            id: "return_sum",
            statement: "δ^(T+1)(1 + δ + … + δ^N) > N",
            margin: sum,
        });
    }
    if !(pow > 0.0) {
        out.push(FailedCondition {
            id: "return_power",
            statement: "2δ^(T+N+2) > 1",
            margin: pow,
        });
    }
    out
}

fn delta_checks(delta: f64, t: u64, big_n: u64, n: u64, k: u64, gamma_tilde: f64) -> DeltaChecks {
    let (sum, pow) = return_margins(delta, t, big_n);
    let ok = |d: f64| {
        let (a, b) = return_margins(d, t, big_n);
        a > 0.0 && b > 0.0
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    DeltaChecks {
        return_sum: sum > 0.0,
        return_power: pow > 0.0,
        window_ratio: window_ratio_holds(delta, n, k, gamma_tilde),
        threshold: hi,
    }
}

/// `(δ+…+δ^n)/(δ+…+δ^k) < γ̃ < δ^(k−n−1)(δ+…+δ^n)/(δ+…+δ^(k−1))`.
pub fn window_ratio_holds(delta: f64, n: u64, k: u64, gamma_tilde: f64) -> bool {
    let geo = |m: u64| 1.0 - delta.powf(m as f64);
    let left = geo(n) / geo(k);
    let right = delta.powf(k as f64 - n as f64 - 1.0) * geo(n) / geo(k - 1);
    left < gamma_tilde && gamma_tilde < right
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::ratio(n, d)
    }

    #[test]
    fn canonical_constants() {
        let c = derive_constants::<f64>(&GameSpec::canonical()).unwrap();
        assert_eq!((c.n, c.k), (16, 28));
        assert!((c.gamma_tilde - 0.582011).abs() < 1e-6);
        assert!((c.gamma_hat - 0.535714).abs() < 1e-6);
        assert!((c.eta_star - 0.675).abs() < 1e-12);
        assert_eq!(c.lambda, 0.1);
        assert_eq!((c.t, c.s, c.big_n), (3, 159, 3));
        assert_eq!(c.reveal_run, 8);
        assert_eq!(c.class2_cap, 2);
        assert!(!c.delta.window_ratio);
    }

    #[test]
    fn exact_and_float_agree() {
        let a = derive_constants::<f64>(&GameSpec::canonical()).unwrap();
        let b = derive_constants::<Rational>(&GameSpec::canonical()).unwrap();
        assert_eq!(b.eta_star, q(27, 40));
        assert_eq!(b.lambda, q(1, 10));
        assert_eq!(a, b.to_f64());
    }

    #[test]
    fn simplest_fraction() {
        assert_eq!(simplest_between(&q(1, 2), &q(3, 5)), (4, 7));
        assert_eq!(simplest_between(&q(1, 3), &q(1, 2)), (2, 5));
        assert_eq!(
            simplest_between(&q(1, 2), &q(500001, 1000000)).1,
            1000001 / 2 + 1
        );
    }

    #[test]
    fn low_delta_is_rejected() {
        let mut spec = GameSpec::canonical();
        spec.delta = 0.5;
        match derive_constants::<f64>(&spec) {
            Err(Error::DeltaTooLow {
                failed, threshold, ..
            }) => {
                assert_eq!(failed.len(), 2);
                assert!(threshold > 0.9 && threshold < 0.95);
            }
            other => panic!("expected DeltaTooLow, got {other:?}"),
        }
    }
}
