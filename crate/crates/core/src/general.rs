//! Finite simultaneous-move stage games with ordered actions and types, the
//! encoders for the application variants, and the structural assumption checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A two-player stage game with a seller of privately known type.
///
/// Type index 0 is the top type in the type order; the order descends with the
/// index. `a2` lists the buyer's two actions in ascending order.
#[derive(Debug, Clone)]
pub struct GeneralGame<S> {
    pub a1: Vec<String>,
    /// `a1_geq[i][j]` is true when `a1[i]` is weakly above `a1[j]`.
    pub a1_geq: Vec<Vec<bool>>,
    pub a2: [String; 2],
    pub types: Vec<String>,
    /// `u1[type][a1][a2]`.
    pub u1: Vec<Vec<[S; 2]>>,
    /// `u2[a1][a2]`.
    pub u2: Vec<[S; 2]>,
}

/// Verdict for one assumption together with the tuples that break it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    pub witnesses: Vec<String>,
}

impl Verdict {
    fn from_witnesses(witnesses: Vec<String>) -> Self {
        Verdict {
            holds: witnesses.is_empty(),
            witnesses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Unique best reply to each pure seller action and a unique pure
    /// commitment action for each type.
    pub unique_replies: Verdict,
    /// Monotonicity and supermodularity of the stage payoffs.
    pub monotone_supermodular: Verdict,
    /// The top type's commitment action is the highest seller action.
    pub top_commitment: Verdict,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.unique_replies.holds && self.monotone_supermodular.holds && self.top_commitment.holds
    }
}

impl<S: Scalar> GeneralGame<S> {
    /// Builds a game whose seller actions form a chain ordered by index
    /// (last index is the highest).
    pub fn with_chain(
        a1: Vec<String>,
        a2: [String; 2],
        types: Vec<String>,
        u1: Vec<Vec<[S; 2]>>,
        u2: Vec<[S; 2]>,
    ) -> Result<Self> {
        let n = a1.len();
        let a1_geq = (0..n).map(|i| (0..n).map(|j| i >= j).collect()).collect();
        let g = GeneralGame {
            a1,
            a1_geq,
            a2,
            types,
            u1,
            u2,
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds a game from covering pairs `(upper, lower)` of the seller's action order.
    pub fn with_order(
        a1: Vec<String>,
        covers: &[(usize, usize)],
        a2: [String; 2],
        types: Vec<String>,
        u1: Vec<Vec<[S; 2]>>,
        u2: Vec<[S; 2]>,
    ) -> Result<Self> {
        let n = a1.len();
        let mut geq = vec![vec![false; n]; n];
        for (i, row) in geq.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(hi, lo) in covers {
            if hi >= n || lo >= n {
                return Err(Error::InvalidSpec(format!(
                    "order pair ({hi}, {lo}) out of range"
                )));
            }
            geq[hi][lo] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if geq[i][k] && geq[k][j] {
                        geq[i][j] = true;
                    }
                }
            }
        }
        let g = GeneralGame {
            a1,
            a1_geq: geq,
            a2,
            types,
            u1,
            u2,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a1.len();
        if n == 0 || self.types.is_empty() {
            return Err(Error::InvalidSpec(
                "action and type sets must be nonempty".into(),
            ));
        }
        if self.u2.len() != n || self.u1.len() != self.types.len() {
            return Err(Error::InvalidSpec("payoff tables are not total".into()));
        }
        if self.u1.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidSpec("payoff tables are not total".into()));
        }
        if self.a1_geq.len() != n || self.a1_geq.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSpec(
                "order matrix has the wrong shape".into(),
            ));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && self.a1_geq[i][j] && self.a1_geq[j][i] {
                    return Err(Error::InvalidSpec(format!(
                        "order is not antisymmetric on {} and {}",
                        self.a1[i], self.a1[j]
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if self.join(i, j).is_none() || self.meet(i, j).is_none() {
                    return Err(Error::InvalidSpec(format!(
                        "{} and {} have no join or meet; seller actions must form a lattice",
                        self.a1[i], self.a1[j]
                    )));
                }
            }
        }
        Ok(())
    }

    fn strictly_above(&self, i: usize, j: usize) -> bool {
        i != j && self.a1_geq[i][j]
    }

    fn join(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.a1.len();
        let ub: Vec<usize> = (0..n)
            .filter(|&k| self.a1_geq[k][i] && self.a1_geq[k][j])
            .collect();
        ub.iter()
            .copied()
            .find(|&k| ub.iter().all(|&u| self.a1_geq[u][k]))
    }

    fn meet(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.a1.len();
        let lb: Vec<usize> = (0..n)
            .filter(|&k| self.a1_geq[i][k] && self.a1_geq[j][k])
            .collect();
        lb.iter()
            .copied()
            .find(|&k| lb.iter().all(|&l| self.a1_geq[k][l]))
    }

    /// Index of the highest seller action.
    pub fn top_action(&self) -> usize {
        let n = self.a1.len();
        (0..n)
            .find(|&i| (0..n).all(|j| self.a1_geq[i][j]))
            .expect("validated lattice has a top element")
    }

    /// Buyer best replies to a pure seller action, as indices into `a2`.
    pub fn best_replies(&self, a1: usize) -> Vec<usize> {
        let [lo, hi] = &self.u2[a1];
        let tol = S::tolerance();
        if hi.clone() - lo > tol {
            vec![1]
        } else if lo.clone() - hi > tol {
            vec![0]
        } else {
            vec![0, 1]
        }
    }

    /// Pure commitment actions of a type: the maximizers of the payoff
    /// guaranteed against the worst best reply.
    pub fn commitment_actions(&self, ty: usize) -> Vec<usize> {
        let guaranteed: Vec<S> = (0..self.a1.len())
            .map(|a| {
                self.best_replies(a)
                    .into_iter()
                    .map(|b| self.u1[ty][a][b].clone())
                    .reduce(crate::scalar::min_of)
                    .expect("at least one best reply")
            })
            .collect();
        let best = guaranteed
            .iter()
            .cloned()
            .reduce(crate::scalar::max_of)
            .expect("nonempty");
        (0..self.a1.len())
            .filter(|&a| best.clone() - &guaranteed[a] <= S::tolerance())
            .collect()
    }

    pub fn check_assumptions(&self) -> AssumptionReport {
        AssumptionReport {
            unique_replies: Verdict::from_witnesses(self.unique_reply_witnesses()),
            monotone_supermodular: Verdict::from_witnesses(self.msm_witnesses()),
            top_commitment: Verdict::from_witnesses(self.top_commitment_witnesses()),
        }
    }

    fn unique_reply_witnesses(&self) -> Vec<String> {
        let mut w = Vec::new();
        for a in 0..self.a1.len() {
            if self.best_replies(a).len() != 1 {
                w.push(format!("buyer indifferent after {}", self.a1[a]));
            }
        }
        for t in 0..self.types.len() {
            let c = self.commitment_actions(t);
            if c.len() != 1 {
                let names: Vec<&str> = c.iter().map(|&a| self.a1[a].as_str()).collect();
                w.push(format!(
                    "type {} has several commitment actions {:?}",
                    self.types[t], names
                ));
            }
        }
        w
    }

    fn top_commitment_witnesses(&self) -> Vec<String> {
        let top = self.top_action();
        let c = self.commitment_actions(0);
        if c == vec![top] {
            Vec::new()
        } else {
            let names: Vec<&str> = c.iter().map(|&a| self.a1[a].as_str()).collect();
            vec![format!(
                "top type {} commits to {:?}, not to {}",
                self.types[0], names, self.a1[top]
            )]
        }
    }

    /// Strict conditions must hold weakly at every buyer action and strictly
    /// at one of them at least.
    fn msm_witnesses(&self) -> Vec<String> {
        let tol = S::tolerance();
        let n1 = self.a1.len();
        let m = self.types.len();
        let mut w = Vec::new();
        let u = &self.u1;

        // seller payoff decreasing in own action
        for t in 0..m {
            for i in 0..n1 {
                for j in 0..n1 {
                    if !self.strictly_above(i, j) {
                        continue;
                    }
                    let gaps: Vec<S> = (0..2).map(|b| u[t][j][b].clone() - &u[t][i][b]).collect();
                    if !weak_and_strict(&gaps, &tol) {
                        w.push(format!(
                            "seller payoff of {} not decreasing from {} to {}",
                            self.types[t], self.a1[j], self.a1[i]
                        ));
                    }
                }
            }
        }
        // seller payoff increasing in buyer action
        for t in 0..m {
            for a in 0..n1 {
                if !(u[t][a][1].clone() - &u[t][a][0] > tol) {
                    w.push(format!(
                        "seller payoff of {} at {} not increasing in buyer action",
                        self.types[t], self.a1[a]
                    ));
                }
            }
        }
        // increasing differences in type and seller action
        for hi_t in 0..m {
            for lo_t in hi_t + 1..m {
                for i in 0..n1 {
                    for j in 0..n1 {
                        if !self.strictly_above(i, j) {
                            continue;
                        }
                        let gaps: Vec<S> = (0..2)
                            .map(|b| {
                                (u[hi_t][i][b].clone() - &u[hi_t][j][b])
                                    - (u[lo_t][i][b].clone() - &u[lo_t][j][b])
                            })
                            .collect();
                        if !weak_and_strict(&gaps, &tol) {
                            w.push(format!(
                                "differences in ({}, {}) vs ({}, {}) not increasing",
                                self.types[hi_t], self.a1[i], self.types[lo_t], self.a1[j]
                            ));
                        }
                    }
                }
            }
        }
        // weakly increasing differences in type and buyer action
        for hi_t in 0..m {
            for lo_t in hi_t + 1..m {
                for a in 0..n1 {
                    let d_hi = u[hi_t][a][1].clone() - &u[hi_t][a][0];
                    let d_lo = u[lo_t][a][1].clone() - &u[lo_t][a][0];
                    if d_hi.clone() - &d_lo < -tol.clone() {
                        w.push(format!(
                            "gain from {} at {}: type {} gains {} < type {} gains {}",
                            self.a2[1],
                            self.a1[a],
                            self.types[hi_t],
                            d_hi.to_f64(),
                            self.types[lo_t],
                            d_lo.to_f64()
                        ));
                    }
                }
            }
        }
        // buyer payoff has strictly increasing differences
        for i in 0..n1 {
            for j in 0..n1 {
                if !self.strictly_above(i, j) {
                    continue;
                }
                let di = self.u2[i][1].clone() - &self.u2[i][0];
                let dj = self.u2[j][1].clone() - &self.u2[j][0];
                if !(di - &dj > tol) {
                    w.push(format!(
                        "buyer differences not strictly increasing between {} and {}",
                        self.a1[i], self.a1[j]
                    ));
                }
            }
        }
        w
    }
}

fn weak_and_strict<S: Scalar>(gaps: &[S], tol: &S) -> bool {
    gaps.iter().all(|g| *g >= -tol.clone()) && gaps.iter().any(|g| g > tol)
}

fn type_names(n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("theta{j}")).collect()
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Trust game in simultaneous form. `d[j]` is the loss of type `j` from
/// honoring when trust is withheld (zero reproduces the sequential game).
pub fn trust_game<S: Scalar>(
    b: &S,
    c: &S,
    thetas: &[S],
    d: Option<&[S]>,
) -> Result<GeneralGame<S>> {
    let zero = vec![S::zero(); thetas.len()];
    let d = d.unwrap_or(&zero);
    if d.len() != thetas.len() {
        return Err(Error::InvalidSpec(
            "one loss entry per type is required".into(),
        ));
    }
    let one = S::one();
    let u1 = thetas
        .iter()
        .zip(d)
        .map(|(t, dj)| vec![[S::zero(), one.clone()], [-dj.clone(), one.clone() - t]])
        .collect();
    let u2 = vec![[S::zero(), -c.clone()], [S::zero(), b.clone()]];
    GeneralGame::with_chain(
        names(&["L", "H"]),
        ["N".into(), "T".into()],
        type_names(thetas.len()),
        u1,
        u2,
    )
}

/// Entry deterrence: the incumbent prices low (costly) or normally, the
/// entrant stays out or enters.
pub fn limit_pricing<S: Scalar>(
    b: &S,
    c: &S,
    thetas: &[S],
    d: Option<&[S]>,
) -> Result<GeneralGame<S>> {
    let zero = vec![S::zero(); thetas.len()];
    let d = d.unwrap_or(&zero);
    if d.len() != thetas.len() {
        return Err(Error::InvalidSpec(
            "one loss entry per type is required".into(),
        ));
    }
    let one = S::one();
    let u1 = thetas
        .iter()
        .zip(d)
        .map(|(t, dj)| vec![[S::zero(), one.clone()], [-dj.clone(), one.clone() - t]])
        .collect();
    let u2 = vec![[c.clone(), S::zero()], [-b.clone(), S::zero()]];
    GeneralGame::with_chain(
        names(&["normal", "low"]),
        ["enter".into(), "out".into()],
        type_names(thetas.len()),
        u1,
        u2,
    )
}

/// Government taxes capital at a low or a high rate; citizens invest or not.
/// `thetas` are the government's gains from expropriation.
pub fn capital_taxation<S: Scalar>(b: &S, c: &S, thetas: &[S]) -> Result<GeneralGame<S>> {
    let one = S::one();
    let u1 = thetas
        .iter()
        .map(|t| vec![[S::zero(), one.clone() + t], [S::zero(), one.clone()]])
        .collect();
    let u2 = vec![[S::zero(), -c.clone()], [S::zero(), b.clone()]];
    GeneralGame::with_chain(
        names(&["high-tax", "low-tax"]),
        ["no-invest".into(), "invest".into()],
        type_names(thetas.len()),
        u1,
        u2,
    )
}

/// Central bank chooses low or high inflation; the public expects low or high.
/// The buyer-side payoffs are free parameters.
#[allow(clippy::too_many_arguments)]
pub fn monetary_policy<S: Scalar>(
    x1: &S,
    x2: &S,
    y1: &S,
    y2: &S,
    thetas: &[S],
    d: Option<&[S]>,
) -> Result<GeneralGame<S>> {
    let zero = vec![S::zero(); thetas.len()];
    let d = d.unwrap_or(&zero);
    if d.len() != thetas.len() {
        return Err(Error::InvalidSpec(
            "one loss entry per type is required".into(),
        ));
    }
    let one = S::one();
    let u1 = thetas
        .iter()
        .zip(d)
        .map(|(t, dj)| vec![[S::zero(), one.clone()], [-dj.clone(), one.clone() - t]])
        .collect();
    let u2 = vec![[x2.clone(), -y2.clone()], [-y1.clone(), x1.clone()]];
    GeneralGame::with_chain(
        names(&["high-inflation", "low-inflation"]),
        ["high-expectation".into(), "low-expectation".into()],
        type_names(thetas.len()),
        u1,
        u2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(x: f64) -> Rational {
        Rational::from_decimal(x)
    }

    fn baseline() -> GeneralGame<Rational> {
        trust_game(&r(1.0), &r(1.0), &[r(0.2), r(0.5)], None).unwrap()
    }

    #[test]
    fn baseline_passes_all() {
        let rep = baseline().check_assumptions();
        assert!(rep.all_hold(), "{rep:?}");
    }

    #[test]
    fn steep_loss_breaks_only_supermodularity() {
        let d = [r(0.0), r(0.4)];
        let g = trust_game(&r(1.0), &r(1.0), &[r(0.2), r(0.5)], Some(&d)).unwrap();
        let rep = g.check_assumptions();
        assert!(rep.unique_replies.holds);
        assert!(rep.top_commitment.holds);
        assert!(!rep.monotone_supermodular.holds);
        assert!(!rep.monotone_supermodular.witnesses.is_empty());
    }

    #[test]
    fn loss_within_slope_keeps_supermodularity() {
        let d = [r(0.1), r(0.3)];
        let g = trust_game(&r(1.0), &r(1.0), &[r(0.2), r(0.5)], Some(&d)).unwrap();
        assert!(g.check_assumptions().all_hold());
    }

    #[test]
    fn limit_pricing_passes_all() {
        let g = limit_pricing(&r(1.0), &r(1.0), &[r(0.2), r(0.5)], None).unwrap();
        assert!(g.check_assumptions().all_hold());
    }

    #[test]
    fn buyer_indifference_breaks_unique_replies() {
        let mut g = baseline();
        g.u2[0] = [Rational::from_decimal(0.0), Rational::from_decimal(0.0)];
        let rep = g.check_assumptions();
        assert!(!rep.unique_replies.holds);
    }

    #[test]
    fn capital_taxation_gains_differ_by_type() {
        let g = capital_taxation(&r(1.0), &r(1.0), &[r(0.2), r(0.5)]).unwrap();
        let rep = g.check_assumptions();
        assert!(rep.unique_replies.holds);
        assert!(rep.top_commitment.holds);
        assert!(!rep.monotone_supermodular.holds);
    }

    #[test]
    fn order_from_covers_and_lattice_check() {
        let u1 = vec![vec![[r(0.0), r(1.0)]; 4]];
        let u2 = vec![[r(0.0), r(1.0)]; 4];
        let diamond = GeneralGame::with_order(
            names(&["bot", "a", "b", "top"]),
            &[(1, 0), (2, 0), (3, 1), (3, 2)],
            ["x".into(), "y".into()],
            names(&["t"]),
            u1.clone(),
            u2.clone(),
        )
        .unwrap();
        assert_eq!(diamond.top_action(), 3);
        assert!(diamond.a1_geq[3][0]);
        let no_top = GeneralGame::with_order(
            names(&["bot", "a", "b", "c"]),
            &[(1, 0), (2, 0), (3, 0)],
            ["x".into(), "y".into()],
            names(&["t"]),
            u1,
            u2,
        );
        assert!(no_top.is_err());
    }
}
