//! Small linear programs over a probability simplex.
//!
//! Programs are solved by enumerating the vertices of the feasible polytope,
//! which is exact in rational arithmetic. A brute-force lattice search serves
//! as an independent check.

use crate::error::{Error, Result};
use crate::game::OutcomeDist;
use crate::general::GeneralGame;
use crate::scalar::Scalar;

/// Maximize `objective · α` over the simplex subject to `row · α ≤ bound`.
#[derive(Debug, Clone)]
pub struct SimplexLp<S> {
    pub objective: Vec<S>,
    pub rows: Vec<(Vec<S>, S)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<S> {
    pub alpha: Vec<S>,
    pub value: S,
}

impl<S: Scalar> SimplexLp<S> {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn is_feasible(&self, alpha: &[S]) -> bool {
        let tol = S::tolerance();
        if alpha.iter().any(|a| *a < -tol.clone()) {
            return false;
        }
        let total = alpha.iter().fold(S::zero(), |acc, a| acc + a);
        if (total - S::one()).abs() > tol {
            return false;
        }
        self.rows
            .iter()
            .all(|(row, bound)| dot(row, alpha) - bound <= tol)
    }

    pub fn evaluate(&self, alpha: &[S]) -> S {
        dot(&self.objective, alpha)
    }

    /// Exact optimum by enumerating every basic feasible point.
    pub fn solve(&self) -> Result<LpSolution<S>> {
        let n = self.n_vars();
        // inequality list as (coefficients, bound) with a·α ≤ b
        let mut ineq: Vec<(Vec<S>, S)> = (0..n)
            .map(|i| {
                let mut row = vec![S::zero(); n];
                row[i] = -S::one();
                (row, S::zero())
            })
            .collect();
        ineq.extend(self.rows.iter().cloned());

        let mut best: Option<LpSolution<S>> = None;
        for active in combinations(ineq.len(), n - 1) {
            let mut a: Vec<Vec<S>> = active.iter().map(|&k| ineq[k].0.clone()).collect();
            let mut rhs: Vec<S> = active.iter().map(|&k| ineq[k].1.clone()).collect();
            a.push(vec![S::one(); n]);
            rhs.push(S::one());
            let Some(alpha) = solve_square(a, rhs) else {
                continue;
            };
            if !self.is_feasible(&alpha) {
                continue;
            }
            let value = self.evaluate(&alpha);
            if best.as_ref().is_none_or(|b| value > b.value) {
                best = Some(LpSolution { alpha, value });
            }
        }
        best.ok_or(Error::Infeasible)
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc + &(x.clone() * y))
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_square<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    let eps = if S::is_exact() {
        S::zero()
    } else {
        S::from_decimal(1e-13)
    };
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= eps {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col].clone() / &a[col][col];
            if f.is_zero() {
                continue;
            }
            for k in col..n {
                let delta = f.clone() * &a[col][k];
                a[row][k] = a[row][k].clone() - &delta;
            }
            let delta = f * &b[col];
            b[row] = b[row].clone() - &delta;
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = acc - &(a[row][k].clone() * &x[k]);
        }
        x[row] = acc / &a[row][row];
    }
    Some(x)
}

/// A program that splits into finitely many simplex LPs whose best value is
/// the program's value.
pub trait Program<S> {
    fn pieces(&self) -> Vec<SimplexLp<S>>;
}

/// The seller's payoff-maximization problem in the trust game, over the
/// outcome distribution `(N, H, L)`.
#[derive(Debug, Clone)]
pub struct TrustLp<S> {
    pub theta_j: S,
    pub theta_1: S,
    pub gstar: S,
    /// Additional `row · (N, H, L) ≤ bound` constraints.
    pub extra_rows: Vec<(Vec<S>, S)>,
}

impl<S: Scalar> TrustLp<S> {
    pub fn new(theta_j: S, theta_1: S, gstar: S) -> Result<Self> {
        if !(gstar > S::zero() && gstar < S::one()) {
            return Err(Error::ParameterOutOfRange {
                name: "gstar",
                value: gstar.to_f64(),
                range: "(0, 1)",
            });
        }
        if theta_1 > theta_j {
            return Err(Error::TypeOrderViolation {
                reference: theta_1.to_f64(),
                other: theta_j.to_f64(),
            });
        }
        Ok(TrustLp {
            theta_j,
            theta_1,
            gstar,
            extra_rows: Vec::new(),
        })
    }

    pub fn lp(&self) -> SimplexLp<S> {
        let one = S::one();
        let cap = one.clone() - &self.theta_1;
        let mut rows = vec![
            // the lowest-cost type cannot get more than its complete-information payoff
            (vec![S::zero(), cap.clone(), one.clone()], cap),
            // buyers must be willing to trust: γ*·L − (1−γ*)·H ≤ 0
            (
                vec![S::zero(), -(one.clone() - &self.gstar), self.gstar.clone()],
                S::zero(),
            ),
        ];
        rows.extend(self.extra_rows.iter().cloned());
        SimplexLp {
            objective: vec![S::zero(), one - &self.theta_j, S::one()],
            rows,
        }
    }
}

impl<S: Scalar> Program<S> for TrustLp<S> {
    fn pieces(&self) -> Vec<SimplexLp<S>> {
        vec![self.lp()]
    }
}

/// Solves the trust-game program; returns the optimal outcome distribution and value.
pub fn solve_trust_lp<S: Scalar>(
    theta_j: &S,
    theta_1: &S,
    gstar: &S,
) -> Result<(OutcomeDist<S>, S)> {
    let p = TrustLp::new(theta_j.clone(), theta_1.clone(), gstar.clone())?;
    let sol = p.lp().solve()?;
    let a = sol.alpha;
    Ok((
        OutcomeDist::new(a[0].clone(), a[1].clone(), a[2].clone()),
        sol.value,
    ))
}

/// Closed-form optimizer of the trust-game program.
pub fn trust_lp_optimizer<S: Scalar>(theta_1: &S, gstar: &S) -> OutcomeDist<S> {
    crate::game::outcome_weights(theta_1, gstar)
}

/// The general program for type `j`: one simplex LP per nonempty support of
/// buyer actions.
#[derive(Debug, Clone)]
pub struct GeneralProgram<S> {
    pieces: Vec<SimplexLp<S>>,
}

impl<S: Scalar> GeneralProgram<S> {
    /// Variables are `α(a1, a2)` at index `2·a1 + a2`.
    pub fn new(game: &GeneralGame<S>, j: usize) -> Result<Self> {
        if j >= game.types.len() {
            return Err(Error::InvalidSpec(format!("type index {j} out of range")));
        }
        let n1 = game.a1.len();
        let nv = 2 * n1;
        let idx = |a: usize, b: usize| 2 * a + b;
        let mut objective = vec![S::zero(); nv];
        let mut cap_row = vec![S::zero(); nv];
        for a in 0..n1 {
            for b in 0..2 {
                objective[idx(a, b)] = game.u1[j][a][b].clone();
                cap_row[idx(a, b)] = game.u1[0][a][b].clone();
            }
        }
        let cap = game.u1[0][game.top_action()][1].clone();

        let mut pieces = Vec::new();
        for support in [vec![0usize], vec![1], vec![0, 1]] {
            let mut rows = vec![(cap_row.clone(), cap.clone())];
            for b in 0..2 {
                if support.contains(&b) {
                    // b must be a best reply to the conditional distribution of a1
                    let other = 1 - b;
                    let mut row = vec![S::zero(); nv];
                    for a in 0..n1 {
                        row[idx(a, b)] = game.u2[a][other].clone() - &game.u2[a][b];
                    }
                    rows.push((row, S::zero()));
                } else {
                    for a in 0..n1 {
                        let mut row = vec![S::zero(); nv];
                        row[idx(a, b)] = S::one();
                        rows.push((row, S::zero()));
                    }
                }
            }
            pieces.push(SimplexLp {
                objective: objective.clone(),
                rows,
            });
        }
        Ok(GeneralProgram { pieces })
    }
}

impl<S: Scalar> Program<S> for GeneralProgram<S> {
    fn pieces(&self) -> Vec<SimplexLp<S>> {
        self.pieces.clone()
    }
}

/// Solves the general program for type `j`.
///
/// The program needs unique buyer replies and a top commitment action for the
/// top type to be well posed; those are enforced. Monotone supermodularity is
/// what ties the value to equilibrium payoffs, so it is reported by
/// [`GeneralGame::check_assumptions`] instead of being required here.
pub fn solve_general_lp<S: Scalar>(game: &GeneralGame<S>, j: usize) -> Result<S> {
    let rep = game.check_assumptions();
    if !rep.unique_replies.holds {
        return Err(Error::AssumptionViolation(
            rep.unique_replies.witnesses.join("; "),
        ));
    }
    if !rep.top_commitment.holds {
        return Err(Error::AssumptionViolation(
            rep.top_commitment.witnesses.join("; "),
        ));
    }
    let program = GeneralProgram::new(game, j)?;
    program
        .pieces()
        .iter()
        .filter_map(|lp| lp.solve().ok())
        .map(|s| s.value)
        .reduce(crate::scalar::max_of)
        .ok_or(Error::Infeasible)
}

/// Brute-force maximization over the lattice `{k·mesh}` of each piece's
/// simplex. Returns `-inf` when no lattice point is feasible.
pub fn grid_oracle<S: Scalar, P: Program<S>>(program: &P, mesh: f64) -> Result<f64> {
    if !(mesh > 0.0 && mesh <= 0.1) {
        return Err(Error::MeshOutOfRange(mesh));
    }
    let steps = (1.0 / mesh).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for lp in program.pieces() {
        let n = lp.objective.len();
        // column `i` holds the objective coefficient then every row coefficient
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                std::iter::once(lp.objective[i].to_f64())
                    .chain(lp.rows.iter().map(|(r, _)| r[i].to_f64()))
                    .collect()
            })
            .collect();
        // bounds scaled to integer lattice counts
        let bounds: Vec<f64> = lp
            .rows
            .iter()
            .map(|(_, b)| (b.to_f64() + 1e-12) * steps as f64)
            .collect();
        let mut partial = vec![vec![0.0; lp.rows.len() + 1]; n];
        let mut walk = LatticeWalk {
            cols: &cols,
            bounds: &bounds,
            partial: &mut partial,
            best: f64::NEG_INFINITY,
        };
        walk.run(0, steps);
        best = best.max(walk.best / steps as f64);
    }
    Ok(best)
}

/// Depth-first walk over integer points summing to `steps`, carrying the
/// partial objective and row sums of the fixed prefix.
struct LatticeWalk<'a> {
    cols: &'a [Vec<f64>],
    bounds: &'a [f64],
    partial: &'a mut [Vec<f64>],
    best: f64,
}

impl LatticeWalk<'_> {
    fn prefix(&self, pos: usize, i: usize) -> f64 {
        if pos == 0 {
            0.0
        } else {
            self.partial[pos - 1][i]
        }
    }

    fn leaf(&mut self, vals: &[f64]) {
        if vals[0] > self.best && vals[1..].iter().zip(self.bounds).all(|(v, b)| v <= b) {
            self.best = vals[0];
        }
    }

    fn run(&mut self, pos: usize, left: usize) {
        let n = self.cols.len();
        let m = self.cols[0].len();
        if pos + 1 == n {
            let vals: Vec<f64> = (0..m)
                .map(|i| self.prefix(pos, i) + left as f64 * self.cols[pos][i])
                .collect();
            self.leaf(&vals);
            return;
        }
        if pos + 2 == n {
            // the last two coordinates split `left`; walk that segment directly
            let (a, b) = (&self.cols[pos], &self.cols[pos + 1]);
            let base: Vec<f64> = (0..m)
                .map(|i| self.prefix(pos, i) + left as f64 * b[i])
                .collect();
            let step: Vec<f64> = (0..m).map(|i| a[i] - b[i]).collect();
            let mut vals = vec![0.0; m];
            for k in 0..=left {
                let kf = k as f64;
                for i in 0..m {
                    vals[i] = base[i] + kf * step[i];
                }
                self.leaf(&vals);
            }
            return;
        }
        for k in 0..=left {
            for i in 0..m {
                self.partial[pos][i] = self.prefix(pos, i) + k as f64 * self.cols[pos][i];
            }
            self.run(pos + 1, left - k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::general::{capital_taxation, trust_game};
    use crate::scalar::Rational;

    fn r(x: f64) -> Rational {
        Rational::from_decimal(x)
    }

    #[test]
    fn canonical_optimizer() {
        let (alpha, value) = solve_trust_lp(&r(0.5), &r(0.2), &r(0.5)).unwrap();
        assert_eq!(value, Rational::ratio(2, 3));
        assert_eq!(
            alpha,
            OutcomeDist::new(
                Rational::ratio(1, 9),
                Rational::ratio(4, 9),
                Rational::ratio(4, 9)
            )
        );
        assert_eq!(alpha, trust_lp_optimizer(&r(0.2), &r(0.5)));
    }

    #[test]
    fn identity_case_and_near_one() {
        let (_, v) = solve_trust_lp(&r(0.2), &r(0.2), &r(0.5)).unwrap();
        assert_eq!(v, r(0.8));
        let (_, v) = solve_trust_lp(&0.5, &0.2, &0.999).unwrap();
        assert!((v - 0.5).abs() < 1e-3);
    }

    #[test]
    fn degenerate_gstar_rejected() {
        assert!(matches!(
            solve_trust_lp(&0.5, &0.2, &1.0),
            Err(Error::ParameterOutOfRange { .. })
        ));
        assert!(matches!(
            solve_trust_lp(&0.2, &0.5, &0.5),
            Err(Error::TypeOrderViolation { .. })
        ));
    }

    #[test]
    fn grid_oracle_matches() {
        let p = TrustLp::new(0.5, 0.2, 0.5).unwrap();
        let v = grid_oracle(&p, 1e-3).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 2e-3);
        let p = TrustLp::new(0.5, 0.2, 1.0 - 1e-9).unwrap();
        let v = grid_oracle(&p, 1e-3).unwrap();
        assert!((v - 0.5).abs() < 2e-3);
        assert!(matches!(
            grid_oracle(&p, 0.2),
            Err(Error::MeshOutOfRange(_))
        ));
    }

    #[test]
    fn infeasible_extra_row() {
        let mut p = TrustLp::new(0.5, 0.2, 0.5).unwrap();
        // N + H + L ≤ 0.5 contradicts the simplex
        p.extra_rows.push((vec![1.0, 1.0, 1.0], 0.5));
        assert_eq!(grid_oracle(&p, 0.01).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(p.lp().solve(), Err(Error::Infeasible)));
    }

    #[test]
    fn general_program_embeds_trust_game() {
        let g = trust_game(&r(1.0), &r(1.0), &[r(0.2), r(0.5)], None).unwrap();
        assert_eq!(solve_general_lp(&g, 1).unwrap(), Rational::ratio(2, 3));
        assert_eq!(solve_general_lp(&g, 0).unwrap(), r(0.8));
    }

    #[test]
    fn general_program_capital_taxation() {
        let g = capital_taxation(&r(1.0), &r(1.0), &[r(0.2), r(0.5)]).unwrap();
        assert_eq!(solve_general_lp(&g, 1).unwrap(), Rational::ratio(25, 22));
        let gf = capital_taxation(&1.0, &1.0, &[0.2, 0.5]).unwrap();
        let p = GeneralProgram::new(&gf, 1).unwrap();
        let v = grid_oracle(&p, 0.02).unwrap();
        assert!((v - 25.0 / 22.0).abs() < 2e-2);
    }

    #[test]
    fn general_program_requires_unique_replies() {
        let mut g = trust_game(&r(1.0), &r(1.0), &[r(0.2), r(0.5)], None).unwrap();
        g.u2[1] = [r(0.0), r(0.0)];
        assert!(matches!(
            solve_general_lp(&g, 1),
            Err(Error::AssumptionViolation(_))
        ));
    }
}
