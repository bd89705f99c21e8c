//! Stage game, parameter validation and closed-form payoff formulas.
//!
//! Outcomes of the stage game are `N` (no trust), `H` (trust honored) and `L`
//! (trust exploited). A seller of cost `θ` earns 0, `1 − θ` and 1 from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lift, Scalar};

/// Stage outcome as observed by everybody.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    N,
    H,
    L,
}

impl Outcome {
    pub fn symbol(self) -> char {
        match self {
            Outcome::N => 'N',
            Outcome::H => 'H',
            Outcome::L => 'L',
        }
    }

    /// Seller payoff of this outcome for a seller with cost `theta`.
    pub fn seller_payoff<S: Scalar>(self, theta: &S) -> S {
        match self {
            Outcome::N => S::zero(),
            Outcome::H => S::one() - theta,
            Outcome::L => S::one(),
        }
    }
}

/// Parameters of the repeated game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub b: f64,
    pub c: f64,
    /// Seller costs in strictly ascending order.
    pub thetas: Vec<f64>,
    pub prior: Vec<f64>,
    pub delta: f64,
    /// Target trust frequency used by the construction.
    pub gamma: f64,
}

impl GameSpec {
    pub fn canonical() -> Self {
        GameSpec {
            b: 1.0,
            c: 1.0,
            thetas: vec![0.2, 0.5],
            prior: vec![0.9, 0.1],
            delta: 0.99,
            gamma: 0.6,
        }
    }

    pub fn n_types(&self) -> usize {
        self.thetas.len()
    }

    pub fn gstar(&self) -> f64 {
        self.c / (self.b + self.c)
    }

    pub fn validate(&self) -> Result<()> {
        gamma_star(&self.b, &self.c)?;
        if self.thetas.is_empty() {
            return Err(Error::InvalidSpec("at least one type is required".into()));
        }
        if self.thetas.len() != self.prior.len() {
            return Err(Error::InvalidSpec(format!(
                "{} costs but {} prior entries",
                self.thetas.len(),
                self.prior.len()
            )));
        }
        for (i, &t) in self.thetas.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidSpec(format!("cost {t} must lie in (0, 1)")));
            }
            if i > 0 && t <= self.thetas[i - 1] {
                return Err(Error::InvalidSpec(
                    "costs must be strictly increasing".into(),
                ));
            }
        }
        if self.prior.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidSpec("prior entries must be positive".into()));
        }
        let total: f64 = self.prior.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "prior must sum to 1, got {total}"
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::ParameterOutOfRange {
                name: "delta",
                value: self.delta,
                range: "(0, 1)",
            });
        }
        let gs = self.gstar();
        if !(self.gamma > gs && self.gamma < 1.0) {
            return Err(Error::GammaOutOfRange {
                gamma: self.gamma,
                lo: gs,
                hi: 1.0,
            });
        }
        Ok(())
    }

    /// Costs in the chosen scalar type.
    pub fn thetas_as<S: Scalar>(&self) -> Vec<S> {
        lift(&self.thetas)
    }

    /// Prior in the chosen scalar type, renormalized so it sums to one exactly.
    pub fn prior_as<S: Scalar>(&self) -> Vec<S> {
        let p: Vec<S> = lift(&self.prior);
        let total = p.iter().fold(S::zero(), |a, x| a + x);
        p.into_iter().map(|x| x / &total).collect()
    }
}

/// Discounted occupation weights over the three outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDist<S = f64> {
    pub n: S,
    pub h: S,
    pub l: S,
}

impl<S: Scalar> OutcomeDist<S> {
    pub fn new(n: S, h: S, l: S) -> Self {
        OutcomeDist { n, h, l }
    }

    pub fn get(&self, y: Outcome) -> &S {
        match y {
            Outcome::N => &self.n,
            Outcome::H => &self.h,
            Outcome::L => &self.l,
        }
    }

    pub fn sum(&self) -> S {
        self.n.clone() + &self.h + &self.l
    }

    /// Value of the distribution for a seller of cost `theta`.
    pub fn value(&self, theta: &S) -> S {
        self.h.clone() * &(S::one() - theta) + &self.l
    }

    pub fn to_f64(&self) -> OutcomeDist<f64> {
        OutcomeDist::new(self.n.to_f64(), self.h.to_f64(), self.l.to_f64())
    }
}

impl Default for OutcomeDist<f64> {
    fn default() -> Self {
        OutcomeDist::new(0.0, 0.0, 0.0)
    }
}

/// One payoff per seller type, in type order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffVector<S = f64>(pub Vec<S>);

impl<S: Scalar> PayoffVector<S> {
    pub fn to_f64(&self) -> PayoffVector<f64> {
        PayoffVector(self.0.iter().map(Scalar::to_f64).collect())
    }
}

/// Probability with which the seller must honor trust to keep buyers indifferent.
pub fn gamma_star<S: Scalar>(b: &S, c: &S) -> Result<S> {
    if !(*b > S::zero()) {
        return Err(Error::NonPositiveParameter {
            name: "b",
            value: b.to_f64(),
        });
    }
    if !(*c > S::zero()) {
        return Err(Error::NonPositiveParameter {
            name: "c",
            value: c.to_f64(),
        });
    }
    Ok(c.clone() / &(b.clone() + c))
}

fn unit_interval<S: Scalar>(name: &'static str, x: &S, open: bool) -> Result<()> {
    let ok = if open {
        *x > S::zero() && *x < S::one()
    } else {
        *x >= S::zero() && *x <= S::one()
    };
    if ok {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value: x.to_f64(),
            range: if open { "(0, 1)" } else { "[0, 1]" },
        })
    }
}

/// Commitment payoff of a type that honors trust with probability `gstar`.
pub fn stackelberg_payoff<S: Scalar>(theta: &S, gstar: &S) -> Result<S> {
    unit_interval("theta", theta, true)?;
    unit_interval("gstar", gstar, false)?;
    Ok(S::one() - gstar.clone() * theta)
}

/// Highest equilibrium payoff of cost type `theta_j` when the lowest cost is `theta_1`.
pub fn v_star<S: Scalar>(theta_j: &S, theta_1: &S, gstar: &S) -> Result<S> {
    unit_interval("theta_j", theta_j, true)?;
    unit_interval("theta_1", theta_1, true)?;
    unit_interval("gstar", gstar, true)?;
    if theta_1 > theta_j {
        return Err(Error::TypeOrderViolation {
            reference: theta_1.to_f64(),
            other: theta_j.to_f64(),
        });
    }
    let one = S::one();
    Ok(
        (one.clone() - gstar.clone() * theta_j) * &(one.clone() - theta_1)
            / &(one - gstar.clone() * theta_1),
    )
}

/// Weights on the all-N, all-H and all-L payoff vectors whose mixture the
/// construction starts from.
pub fn outcome_weights<S: Scalar>(theta_1: &S, gamma: &S) -> OutcomeDist<S> {
    let one = S::one();
    let den = one.clone() - gamma.clone() * theta_1;
    OutcomeDist::new(
        theta_1.clone() * &(one.clone() - gamma) / &den,
        (one.clone() - theta_1) * gamma / &den,
        (one.clone() - theta_1) * &(one - gamma) / &den,
    )
}

/// Payoff vector targeted by the construction at trust frequency `gamma`.
pub fn v_of_gamma<S: Scalar>(spec: &GameSpec, gamma: &S) -> Result<PayoffVector<S>> {
    let gs = gamma_star::<S>(&S::from_decimal(spec.b), &S::from_decimal(spec.c))?;
    if *gamma < gs || *gamma > S::one() {
        return Err(Error::GammaOutOfRange {
            gamma: gamma.to_f64(),
            lo: gs.to_f64(),
            hi: 1.0,
        });
    }
    let thetas: Vec<S> = spec.thetas_as();
    let w = outcome_weights(&thetas[0], gamma);
    Ok(PayoffVector(thetas.iter().map(|t| w.value(t)).collect()))
}

/// Highest payoff in the capital-taxation variant, where `theta` is the
/// government's gain from expropriation.
pub fn capital_taxation_vstar<S: Scalar>(theta_j: &S, theta_1: &S, gstar: &S) -> Result<S> {
    if !(*theta_1 > S::zero()) {
        return Err(Error::NonPositiveParameter {
            name: "theta_1",
            value: theta_1.to_f64(),
        });
    }
    unit_interval("gstar", gstar, true)?;
    if theta_1 > theta_j {
        return Err(Error::TypeOrderViolation {
            reference: theta_1.to_f64(),
            other: theta_j.to_f64(),
        });
    }
    let one = S::one();
    Ok((one.clone() + theta_j - gstar.clone() * theta_j)
        / &(one + theta_1 - gstar.clone() * theta_1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(x: f64) -> Rational {
        Rational::from_decimal(x)
    }

    #[test]
    fn gamma_star_values() {
        assert_eq!(gamma_star(&1.0, &1.0).unwrap(), 0.5);
        assert_eq!(gamma_star(&3.0, &1.0).unwrap(), 0.25);
        assert_eq!(gamma_star(&1.0, &3.0).unwrap(), 0.75);
        assert!(matches!(
            gamma_star(&0.0, &1.0),
            Err(Error::NonPositiveParameter { name: "b", .. })
        ));
    }

    #[test]
    fn stackelberg_values() {
        assert_eq!(stackelberg_payoff(&r(0.2), &r(0.5)).unwrap(), r(0.9));
        assert_eq!(stackelberg_payoff(&r(0.5), &r(0.5)).unwrap(), r(0.75));
        assert_eq!(stackelberg_payoff(&r(0.3), &r(0.0)).unwrap(), r(1.0));
        assert!(stackelberg_payoff(&1.5, &0.5).is_err());
    }

    #[test]
    fn v_star_values() {
        assert_eq!(v_star(&r(0.2), &r(0.2), &r(0.5)).unwrap(), r(0.8));
        assert_eq!(
            v_star(&r(0.5), &r(0.2), &r(0.5)).unwrap(),
            Rational::ratio(2, 3)
        );
        let x = v_star(&0.5, &0.001, &0.5).unwrap();
        assert!((x - 0.749625).abs() < 5e-7);
        assert!(matches!(
            v_star(&0.2, &0.5, &0.5),
            Err(Error::TypeOrderViolation { .. })
        ));
    }

    #[test]
    fn v_of_gamma_values() {
        let spec = GameSpec::canonical();
        let at = |g: f64| v_of_gamma(&spec, &r(g)).unwrap().0;
        assert_eq!(at(1.0), vec![r(0.8), r(0.5)]);
        assert_eq!(at(0.5), vec![r(0.8), Rational::ratio(2, 3)]);
        assert_eq!(at(0.6), vec![r(0.8), Rational::ratio(7, 11)]);
        assert!(matches!(
            v_of_gamma(&spec, &0.4),
            Err(Error::GammaOutOfRange { .. })
        ));
    }

    #[test]
    fn capital_taxation_values() {
        assert_eq!(
            capital_taxation_vstar(&r(0.2), &r(0.2), &r(0.5)).unwrap(),
            r(1.0)
        );
        assert_eq!(
            capital_taxation_vstar(&r(0.5), &r(0.2), &r(0.5)).unwrap(),
            Rational::ratio(25, 22)
        );
        assert_eq!(
            capital_taxation_vstar(&r(0.5), &r(0.5), &r(0.25)).unwrap(),
            r(1.0)
        );
    }

    #[test]
    fn spec_validation() {
        let mut s = GameSpec::canonical();
        assert!(s.validate().is_ok());
        s.prior = vec![0.5, 0.4];
        assert!(
            matches!(s.validate(), Err(Error::InvalidSpec(m)) if m.contains("prior must sum to 1"))
        );
        let mut s = GameSpec::canonical();
        s.gamma = 0.5;
        assert!(matches!(s.validate(), Err(Error::GammaOutOfRange { .. })));
        let mut s = GameSpec::canonical();
        s.thetas = vec![0.5, 0.2];
        assert!(s.validate().is_err());
    }
}
