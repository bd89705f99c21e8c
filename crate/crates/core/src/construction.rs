//! The equilibrium as a deterministic automaton over public histories.
//!
//! A state carries the buyers' posterior over seller types and the convex
//! weights `(p^N, p^H, p^L)` of the promised continuation value. The weight on
//! `L` decides the class of the state:
//!
//! * learning (`p^L ≥ 1−δ`): the belief in the lowest-cost type drifts up after
//!   `H` and down after `L`, and buyers are exactly indifferent;
//! * screening (`0 < p^L < 1−δ`): every type except the highest-cost supported
//!   one honors trust, and that type reveals itself with positive probability;
//! * absorbing (`p^L = 0`): play follows a fixed `H`/`N` schedule;
//! * punish: off-path, buyers never trust again.

use serde::Serialize;

use crate::constants::{derive_constants, DerivedConstants};
use crate::error::{Error, Result};
use crate::game::{outcome_weights, GameSpec, Outcome, OutcomeDist};
use crate::scalar::{max_of, min_of, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Learning,
    Screening,
    Absorbing,
    Punish,
}

impl Class {
    pub fn label(self) -> &'static str {
        match self {
            Class::Learning => "learning",
            Class::Screening => "screening",
            Class::Absorbing => "absorbing",
            Class::Punish => "punish",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqState<S = f64> {
    /// Posterior over types; entry 0 is the belief `η` in the lowest-cost type.
    pub posterior: Vec<S>,
    pub weights: OutcomeDist<S>,
    pub class: Class,
    /// Screening states visited so far, indexed by the highest-cost supported type at the visit.
    pub screen_visits: Vec<u32>,
    /// Trust weight on entry to the absorbing class.
    pub target: Option<S>,
    /// Periods spent in the absorbing class.
    pub cursor: u64,
}

impl<S: Scalar> EqState<S> {
    pub fn eta(&self) -> &S {
        &self.posterior[0]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.posterior.len())
            .filter(|&i| self.posterior[i] > S::zero())
            .collect()
    }

    pub fn in_support(&self, j: usize) -> bool {
        self.posterior[j] > S::zero()
    }

    /// Highest-cost type with positive posterior.
    pub fn bar_theta(&self) -> usize {
        (0..self.posterior.len())
            .rev()
            .find(|&i| self.posterior[i] > S::zero())
            .unwrap_or(0)
    }

    /// Screening visits with the current highest-cost type.
    pub fn l(&self) -> u32 {
        self.screen_visits[self.bar_theta()]
    }

    /// Continuation value of a seller with cost `theta`.
    pub fn value(&self, theta: &S) -> S {
        self.weights.value(theta)
    }

    /// Weights lie on the simplex within `tol`.
    pub fn on_simplex(&self, tol: f64) -> bool {
        let w = self.weights.to_f64();
        [w.n, w.h, w.l].iter().all(|&x| x >= -tol && x <= 1.0 + tol)
            && (w.n + w.h + w.l - 1.0).abs() <= tol
    }
}

/// Predicted incentive pattern of a type at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tightness {
    Indifferent,
    StrictHonor,
    StrictExploit,
    /// Buyers do not trust, so the seller has no move.
    NoChoice,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prescription<S = f64> {
    pub trust: bool,
    /// Probability of `H` given trust, per type.
    pub honor: Vec<S>,
    pub tightness: Vec<Tightness>,
}

impl<S: Scalar> Prescription<S> {
    /// Probability that type `j` produces outcome `y`.
    pub fn prob(&self, j: usize, y: Outcome) -> S {
        match (self.trust, y) {
            (false, Outcome::N) => S::one(),
            (false, _) | (true, Outcome::N) => S::zero(),
            (true, Outcome::H) => self.honor[j].clone(),
            (true, Outcome::L) => S::one() - &self.honor[j],
        }
    }

    /// Probability of `y` given the buyers' posterior.
    pub fn aggregate(&self, posterior: &[S], y: Outcome) -> S {
        posterior.iter().enumerate().fold(S::zero(), |acc, (j, p)| {
            acc + &(p.clone() * &self.prob(j, y))
        })
    }
}

/// Emission rule of the absorbing schedule: `H` when the residual can pay for
/// it and either sits at or above the target or would otherwise overshoot.
pub fn schedule_emits_honor<S: Scalar>(residual: &S, target: &S, delta: &S) -> bool {
    let tol = S::tolerance();
    let cost = S::one() - delta;
    *residual >= cost.clone() - &tol && (*residual >= target.clone() - &tol || *residual > *delta)
}

/// Residual after emitting `y` from `residual`, clamped to `[0, 1]`.
pub fn schedule_advance<S: Scalar>(residual: &S, honor: bool, delta: &S) -> S {
    let next = if honor {
        (residual.clone() - &(S::one() - delta)) / delta
    } else {
        residual.clone() / delta
    };
    max_of(S::zero(), min_of(S::one(), next))
}

/// Generator of the absorbing `H`/`N` schedule for a target trust weight.
#[derive(Debug, Clone)]
pub struct FmSchedule<S = f64> {
    pub target: S,
    pub residual: S,
    pub delta: S,
    pub epsilon: f64,
}

impl<S: Scalar> FmSchedule<S> {
    /// Largest distance between a tail value and the target.
    pub fn tail_band(target: &S, delta: &S) -> S {
        let far = max_of(target.clone(), S::one() - target);
        far * &(S::one() - delta) / delta
    }
}

impl<S: Scalar> Iterator for FmSchedule<S> {
    type Item = Outcome;

    fn next(&mut self) -> Option<Outcome> {
        let honor = schedule_emits_honor(&self.residual, &self.target, &self.delta);
        self.residual = schedule_advance(&self.residual, honor, &self.delta);
        Some(if honor { Outcome::H } else { Outcome::N })
    }
}

pub fn fm_schedule<S: Scalar>(target: S, delta: S, epsilon: f64) -> Result<FmSchedule<S>> {
    if !(target >= S::zero() && target <= S::one()) {
        return Err(Error::ParameterOutOfRange {
            name: "target",
            value: target.to_f64(),
            range: "[0, 1]",
        });
    }
    if !(delta > S::zero() && delta < S::one()) {
        return Err(Error::ParameterOutOfRange {
            name: "delta",
            value: delta.to_f64(),
            range: "(0, 1)",
        });
    }
    let band = FmSchedule::tail_band(&target, &delta).to_f64();
    if 1.0 - delta.to_f64() > epsilon || band > epsilon * (1.0 + 1e-12) {
        return Err(Error::EpsilonTooSmallForDelta {
            epsilon,
            delta: delta.to_f64(),
        });
    }
    Ok(FmSchedule {
        residual: target.clone(),
        target,
        delta,
        epsilon,
    })
}

/// The constructed equilibrium for one game specification.
#[derive(Debug, Clone)]
pub struct Construction<S = f64> {
    pub spec: GameSpec,
    pub consts: DerivedConstants<S>,
    pub thetas: Vec<S>,
    pub prior: Vec<S>,
    pub delta: S,
    pub gamma: S,
    up: S,
    down: S,
}

/// Access to a transition system with the construction's interface. Test
/// fixtures wrap a [`Construction`] and override single methods.
pub trait Dynamics<S: Scalar>: Sync {
    fn model(&self) -> &Construction<S>;

    fn initial_state(&self) -> EqState<S> {
        self.model().initial_state()
    }

    fn prescribe(&self, st: &EqState<S>) -> Prescription<S> {
        self.model().prescribe(st)
    }

    fn transition(&self, st: &EqState<S>, y: Outcome) -> EqState<S> {
        self.model().transition(st, y)
    }
}

impl<S: Scalar> Dynamics<S> for Construction<S> {
    fn model(&self) -> &Construction<S> {
        self
    }
}

impl<S: Scalar> Construction<S> {
    pub fn new(spec: &GameSpec) -> Result<Self> {
        let consts = derive_constants::<S>(spec)?;
        Ok(Self::with_constants(spec, consts))
    }

    /// Builds the automaton from constants that were derived elsewhere.
    pub fn with_constants(spec: &GameSpec, consts: DerivedConstants<S>) -> Self {
        let up = consts.up();
        let down = consts.down();
        Construction {
            thetas: spec.thetas_as(),
            prior: spec.prior_as(),
            delta: S::from_decimal(spec.delta),
            gamma: S::from_decimal(spec.gamma),
            spec: spec.clone(),
            consts,
            up,
            down,
        }
    }

    /// Replaces the belief multipliers after `H` and `L`.
    pub fn with_belief_multipliers(mut self, up: S, down: S) -> Self {
        self.up = up;
        self.down = down;
        self
    }

    pub fn n_types(&self) -> usize {
        self.thetas.len()
    }

    fn cost(&self) -> S {
        S::one() - &self.delta
    }

    /// Promised value for type `j` at the start of the game.
    pub fn target_payoff(&self, j: usize) -> S {
        outcome_weights(&self.thetas[0], &self.gamma).value(&self.thetas[j])
    }

    pub fn initial_state(&self) -> EqState<S> {
        let weights = outcome_weights(&self.thetas[0], &self.gamma);
        self.make_state(self.prior.clone(), weights, vec![0; self.n_types()])
    }

    pub fn punish_state(&self) -> EqState<S> {
        EqState {
            posterior: self.prior.clone(),
            weights: OutcomeDist::new(S::one(), S::zero(), S::zero()),
            class: Class::Punish,
            screen_visits: vec![0; self.n_types()],
            target: None,
            cursor: 0,
        }
    }

    /// Class of a state with weights `w`; the boundary `p^L = 1−δ` is learning.
    pub fn classify(&self, w: &OutcomeDist<S>) -> Class {
        let tol = S::tolerance();
        if w.l >= self.cost() - &tol {
            Class::Learning
        } else if w.l > tol {
            Class::Screening
        } else {
            Class::Absorbing
        }
    }

    fn make_state(
        &self,
        posterior: Vec<S>,
        mut weights: OutcomeDist<S>,
        screen_visits: Vec<u32>,
    ) -> EqState<S> {
        let class = self.classify(&weights);
        let mut target = None;
        if class == Class::Absorbing {
            // p^L is zero up to rounding here
            let h = weights.h.clone();
            weights = OutcomeDist::new(S::one() - &h, h.clone(), S::zero());
            target = Some(h);
        }
        EqState {
            posterior,
            weights,
            class,
            screen_visits,
            target,
            cursor: 0,
        }
    }

    /// Posterior belief after `H` at a learning state, and whether it clamps at one.
    pub fn belief_after_honor(&self, eta: &S) -> (S, bool) {
        let es = &self.consts.eta_star;
        let room = S::one() - es;
        let step = self.up.clone() * &(eta.clone() - es);
        if step >= room.clone() - &S::tolerance() {
            (S::one(), true)
        } else {
            (es.clone() + &step, false)
        }
    }

    pub fn belief_after_exploit(&self, eta: &S) -> S {
        let es = &self.consts.eta_star;
        es.clone() + &(self.down.clone() * &(eta.clone() - es))
    }

    /// Probability that the highest-cost supported type exploits at a screening state.
    pub fn reveal_probability(&self, st: &EqState<S>) -> S {
        let bar = st.bar_theta();
        if bar == 0 {
            return S::zero();
        }
        if bar == 1 {
            let room = S::one() - st.eta();
            if room <= S::zero() {
                return S::one();
            }
            return min_of(S::one(), (S::one() - &self.consts.gstar) / &room);
        }
        let remaining = self.consts.kj[bar] as i64 - st.screen_visits[bar] as i64;
        if remaining <= 1 {
            S::one()
        } else {
            S::ratio(1, remaining)
        }
    }

    pub fn prescribe(&self, st: &EqState<S>) -> Prescription<S> {
        let m = self.n_types();
        let unsupported = |j: usize| !st.in_support(j);
        match st.class {
            Class::Punish => Prescription {
                trust: false,
                honor: vec![S::zero(); m],
                tightness: vec![Tightness::NoChoice; m],
            },
            Class::Absorbing => {
                let target = st.target.clone().unwrap_or_else(|| st.weights.h.clone());
                let trust = schedule_emits_honor(&st.weights.h, &target, &self.delta);
                let (honor, tag) = if trust {
                    (S::one(), Tightness::StrictHonor)
                } else {
                    (S::zero(), Tightness::NoChoice)
                };
                Prescription {
                    trust,
                    honor: vec![honor; m],
                    tightness: (0..m)
                        .map(|j| {
                            if unsupported(j) {
                                Tightness::Unsupported
                            } else {
                                tag
                            }
                        })
                        .collect(),
                }
            }
            Class::Learning => {
                let eta = st.eta().clone();
                let (eh, clamped) = self.belief_after_honor(&eta);
                let el = self.belief_after_exploit(&eta);
                let base = (eta.clone() - &el) / &(eh.clone() - &el);
                let low = base.clone() * &eh / &eta;
                let rest = if eta >= S::one() {
                    S::zero()
                } else {
                    base * &(S::one() - &eh) / &(S::one() - &eta)
                };
                let mut honor = vec![rest; m];
                honor[0] = low;
                let tightness = (0..m)
                    .map(|j| match (unsupported(j), j, clamped) {
                        (true, _, _) => Tightness::Unsupported,
                        (false, 0, _) | (false, _, false) => Tightness::Indifferent,
                        (false, _, true) => Tightness::StrictExploit,
                    })
                    .collect();
                Prescription {
                    trust: true,
                    honor,
                    tightness,
                }
            }
            Class::Screening => {
                let bar = st.bar_theta();
                let reveal = self.reveal_probability(st);
                let mut honor = vec![S::one(); m];
                honor[bar] = S::one() - &reveal;
                // the state after H has belief one iff the revealing type exploits for sure
                // and nobody else but the lowest-cost type remains
                let clamps =
                    self.posterior_after(st, &honor, Outcome::H)[0] >= S::one() - &S::tolerance();
                let tightness = (0..m)
                    .map(|j| {
                        if unsupported(j) {
                            Tightness::Unsupported
                        } else if j < bar {
                            Tightness::StrictHonor
                        } else if clamps {
                            Tightness::StrictExploit
                        } else {
                            Tightness::Indifferent
                        }
                    })
                    .collect();
                Prescription {
                    trust: true,
                    honor,
                    tightness,
                }
            }
        }
    }

    /// Bayes update of the posterior on outcome `y` given per-type honor probabilities.
    fn posterior_after(&self, st: &EqState<S>, honor: &[S], y: Outcome) -> Vec<S> {
        let joint: Vec<S> = st
            .posterior
            .iter()
            .zip(honor)
            .map(|(p, h)| match y {
                Outcome::H => p.clone() * h,
                _ => p.clone() * &(S::one() - h),
            })
            .collect();
        let total = joint.iter().fold(S::zero(), |a, x| a + x);
        if total <= S::zero() {
            return st.posterior.clone();
        }
        let mut post: Vec<S> = joint.into_iter().map(|x| x / &total).collect();
        if post[0] >= S::one() - &S::tolerance() {
            post.iter_mut().for_each(|x| *x = S::zero());
            post[0] = S::one();
        }
        post
    }

    /// Replaces the belief with `eta` and spreads `1 − eta` over the other
    /// types in proportion to `others`.
    fn with_belief(&self, eta: S, others: &[S]) -> Vec<S> {
        let mass = others.iter().skip(1).fold(S::zero(), |a, x| a + x);
        let mut out = Vec::with_capacity(others.len());
        out.push(eta.clone());
        for x in others.iter().skip(1) {
            if mass > S::zero() && eta < S::one() {
                out.push(x.clone() * &(S::one() - &eta) / &mass);
            } else {
                out.push(S::zero());
            }
        }
        out
    }

    /// Weights after `H` that keep every type's value when the belief stays below one.
    fn weights_after_honor(&self, w: &OutcomeDist<S>) -> OutcomeDist<S> {
        let d = &self.delta;
        OutcomeDist::new(
            w.n.clone() / d,
            (w.h.clone() - &self.cost()) / d,
            w.l.clone() / d,
        )
    }

    /// Weights after `H` when the belief reaches one: the lowest-cost type keeps
    /// its value with trust weight only.
    fn weights_after_reveal(&self, w: &OutcomeDist<S>) -> OutcomeDist<S> {
        let t1 = S::one() - &self.thetas[0];
        let v1 = w.value(&self.thetas[0]);
        let v1h = (v1 - &(self.cost() * &t1)) / &self.delta;
        let a = v1h / &t1;
        OutcomeDist::new(S::one() - &a, a, S::zero())
    }

    pub fn transition(&self, st: &EqState<S>, y: Outcome) -> EqState<S> {
        match st.class {
            Class::Punish => st.clone(),
            Class::Absorbing => {
                let target = st.target.clone().unwrap_or_else(|| st.weights.h.clone());
                let honor = schedule_emits_honor(&st.weights.h, &target, &self.delta);
                let expected = if honor { Outcome::H } else { Outcome::N };
                if y != expected {
                    return self.punish_state();
                }
                let h = schedule_advance(&st.weights.h, honor, &self.delta);
                EqState {
                    posterior: st.posterior.clone(),
                    weights: OutcomeDist::new(S::one() - &h, h, S::zero()),
                    class: Class::Absorbing,
                    screen_visits: st.screen_visits.clone(),
                    target: Some(target),
                    cursor: st.cursor + 1,
                }
            }
            Class::Learning | Class::Screening => {
                let pr = self.prescribe(st);
                if y == Outcome::N || pr.aggregate(&st.posterior, y) <= S::zero() {
                    return self.punish_state();
                }
                if st.class == Class::Learning {
                    self.learning_step(st, &pr, y)
                } else {
                    self.screening_step(st, &pr, y)
                }
            }
        }
    }

    fn learning_step(&self, st: &EqState<S>, pr: &Prescription<S>, y: Outcome) -> EqState<S> {
        let w = &st.weights;
        let bayes = self.posterior_after(st, &pr.honor, y);
        match y {
            Outcome::H => {
                let (eh, clamped) = self.belief_after_honor(st.eta());
                let post = self.with_belief(eh, &bayes);
                let weights = if clamped {
                    self.weights_after_reveal(w)
                } else {
                    self.weights_after_honor(w)
                };
                self.make_state(post, weights, st.screen_visits.clone())
            }
            _ => {
                let el = self.belief_after_exploit(st.eta());
                let post = self.with_belief(el, &bayes);
                let d = &self.delta;
                let weights = OutcomeDist::new(
                    w.n.clone() / d,
                    w.h.clone() / d,
                    (w.l.clone() - &self.cost()) / d,
                );
                self.make_state(post, weights, st.screen_visits.clone())
            }
        }
    }

    fn screening_step(&self, st: &EqState<S>, pr: &Prescription<S>, y: Outcome) -> EqState<S> {
        let w = &st.weights;
        let bar = st.bar_theta();
        let mut visits = st.screen_visits.clone();
        visits[bar] += 1;
        let post = self.posterior_after(st, &pr.honor, y);
        match y {
            Outcome::H => {
                let weights = if post[0] >= S::one() {
                    self.weights_after_reveal(w)
                } else {
                    self.weights_after_honor(w)
                };
                self.make_state(post, weights, visits)
            }
            _ => {
                let d = &self.delta;
                let q = w.h.clone() - &((self.cost() - &w.l) / &(S::one() - &self.thetas[bar]));
                let weights = OutcomeDist::new((d.clone() - &q) / d, q / d, S::zero());
                self.make_state(post, weights, visits)
            }
        }
    }

    /// Value of type `j` from playing `y` at a state where buyers trust.
    pub fn deviation_value<D: Dynamics<S> + ?Sized>(
        &self,
        dynamics: &D,
        st: &EqState<S>,
        j: usize,
        y: Outcome,
    ) -> S {
        let next = dynamics.transition(st, y);
        self.cost() * &y.seller_payoff(&self.thetas[j])
            + &(self.delta.clone() * &next.value(&self.thetas[j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn canonical() -> Construction<f64> {
        Construction::new(&GameSpec::canonical()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn initial_state_weights() {
        let c = canonical();
        let s = c.initial_state();
        assert_eq!(s.class, Class::Learning);
        assert!(close(s.weights.n, 1.0 / 11.0, 1e-12));
        assert!(close(s.weights.h, 6.0 / 11.0, 1e-12));
        assert!(close(s.weights.l, 4.0 / 11.0, 1e-12));
    }

    #[test]
    fn learning_prescription_keeps_buyers_indifferent() {
        let c = canonical();
        let s = c.initial_state();
        let p = c.prescribe(&s);
        assert!(close(p.honor[0], 0.50625, 1e-12));
        assert!(close(p.honor[1], 0.44375, 1e-12));
        assert!(close(p.aggregate(&s.posterior, Outcome::H), 0.5, 1e-12));
    }

    #[test]
    fn first_transitions() {
        let c = canonical();
        let s = c.initial_state();
        let l = c.transition(&s, Outcome::L);
        assert!(close(*l.eta(), 0.88875, 1e-12));
        assert!(close(l.weights.n, 0.091827, 1e-6));
        assert!(close(l.weights.h, 0.550964, 1e-6));
        assert!(close(l.weights.l, 0.357209, 1e-6));
        let h = c.transition(&s, Outcome::H);
        assert!(close(*h.eta(), 0.91125, 1e-12));
        assert!(close(h.weights.h, 0.540863, 1e-6));
        assert!(close(h.weights.l, 0.367310, 1e-6));
    }

    #[test]
    fn screening_exploit_enters_absorbing_class() {
        let c = canonical();
        let st = EqState {
            posterior: vec![0.9, 0.1],
            weights: OutcomeDist::new(0.495, 0.5, 0.005),
            class: Class::Screening,
            screen_visits: vec![0, 0],
            target: None,
            cursor: 0,
        };
        let p = c.prescribe(&st);
        assert_eq!(p.honor[1], 0.0);
        let next = c.transition(&st, Outcome::L);
        assert_eq!(next.class, Class::Absorbing);
        assert!(close(next.weights.h, 0.49 / 0.99, 1e-12));
        assert_eq!(next.posterior, vec![0.0, 1.0]);
    }

    #[test]
    fn exact_path_matches_float_path() {
        let spec = GameSpec::canonical();
        let f = Construction::<f64>::new(&spec).unwrap();
        let q = Construction::<Rational>::new(&spec).unwrap();
        let word = [
            Outcome::H,
            Outcome::L,
            Outcome::H,
            Outcome::H,
            Outcome::L,
            Outcome::H,
        ];
        let (mut a, mut b) = (f.initial_state(), q.initial_state());
        for &y in &word {
            a = f.transition(&a, y);
            b = q.transition(&b, y);
            assert_eq!(a.class, b.class);
            assert!(close(*a.eta(), b.eta().to_f64(), 1e-12));
            assert!(close(a.weights.h, b.weights.h.to_f64(), 1e-12));
        }
    }

    #[test]
    fn schedule_fixed_points() {
        let all_h = fm_schedule(1.0, 0.9, 0.2)
            .unwrap()
            .take(50)
            .all(|y| y == Outcome::H);
        let all_n = fm_schedule(0.0, 0.9, 0.2)
            .unwrap()
            .take(50)
            .all(|y| y == Outcome::N);
        assert!(all_h && all_n);
        assert!(matches!(
            fm_schedule(0.5, 0.9, 0.01),
            Err(Error::EpsilonTooSmallForDelta { .. })
        ));
    }

    #[test]
    fn off_path_outcome_punishes() {
        let c = canonical();
        let s = c.transition(&c.initial_state(), Outcome::N);
        assert_eq!(s.class, Class::Punish);
        assert!(!c.prescribe(&s).trust);
    }
}
