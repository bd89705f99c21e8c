//! Finite checks of the equilibrium's properties.
//!
//! State-level audits run on a set of explored on-path states: every history
//! up to a given depth plus random deeper histories. Path-level audits read the
//! summaries of a Monte Carlo experiment.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::construction::{Class, Construction, Dynamics, EqState, Tightness};
use crate::error::{Error, Result};
use crate::game::Outcome;
use crate::scalar::Scalar;
use crate::sim::{path_rng, ExperimentStats, KL_THRESHOLDS};

const MAX_WITNESSES: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// The property being checked.
    pub claim: String,
    pub examined: u64,
    /// Smallest distance to the bound; negative values are violations.
    pub worst_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub witnesses: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AuditReport {
    pub checks: Vec<Check>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn extend(&mut self, other: AuditReport) {
        self.checks.extend(other.checks);
    }
}

/// Accumulates observations for one check. A violation is a slack below
/// zero, or not above zero when `strict`.
struct Tally {
    name: &'static str,
    claim: &'static str,
    tolerance: f64,
    strict: bool,
    examined: u64,
    worst: f64,
    violations: u64,
    witnesses: Vec<String>,
    note: Option<String>,
}

impl Tally {
    fn new(name: &'static str, claim: &'static str, tolerance: f64) -> Self {
        Tally {
            name,
            claim,
            tolerance,
            strict: false,
            examined: 0,
            worst: f64::INFINITY,
            violations: 0,
            witnesses: Vec::new(),
            note: None,
        }
    }

    fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    fn observe(&mut self, slack: f64, witness: impl FnOnce() -> String) {
        self.examined += 1;
        if slack < self.worst || slack.is_nan() {
            self.worst = slack;
        }
        let bad = if self.strict {
            !(slack > 0.0)
        } else {
            !(slack >= 0.0)
        };
        if bad {
            self.violations += 1;
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(witness());
            }
        }
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.note = Some(s.into());
        self
    }

    fn finish(self) -> Check {
        Check {
            name: self.name.to_string(),
            claim: self.claim.to_string(),
            examined: self.examined,
            worst_slack: if self.examined == 0 { 0.0 } else { self.worst },
            tolerance: self.tolerance,
            passed: self.violations == 0,
            witnesses: self.witnesses,
            note: self.note,
        }
    }
}

/// An on-path state with the history that reaches it.
#[derive(Debug, Clone)]
pub struct Explored<S = f64> {
    pub state: EqState<S>,
    pub history: Vec<Outcome>,
}

impl<S: Scalar> Explored<S> {
    pub fn label(&self) -> String {
        let h: String = self.history.iter().map(|y| y.symbol()).collect();
        let w = self.state.weights.to_f64();
        format!(
            "h={} class={} eta={:.9} p=({:.9}, {:.9}, {:.9})",
            if h.is_empty() { "∅".to_string() } else { h },
            self.state.class.label(),
            self.state.eta().to_f64(),
            w.n,
            w.h,
            w.l
        )
    }
}

/// Outcomes with positive probability at `st` given the buyers' belief.
pub fn on_path_outcomes<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    st: &EqState<S>,
) -> Vec<Outcome> {
    if st.class == Class::Punish {
        return Vec::new();
    }
    let pr = dynamics.prescribe(st);
    [Outcome::N, Outcome::H, Outcome::L]
        .into_iter()
        .filter(|&y| pr.aggregate(&st.posterior, y) > S::zero())
        .collect()
}

/// Every on-path state up to `depth` periods, then `n_sampled` states at
/// depths spread evenly over `(depth, max_depth]`, reached by choosing
/// uniformly among on-path outcomes.
pub fn explore_states<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    depth: usize,
    n_sampled: usize,
    max_depth: usize,
    seed: u64,
) -> Vec<Explored<S>> {
    let mut out = Vec::new();
    let mut frontier = vec![Explored {
        state: dynamics.initial_state(),
        history: Vec::new(),
    }];
    for d in 0..=depth {
        let mut next = Vec::new();
        for e in &frontier {
            if d < depth {
                for y in on_path_outcomes(dynamics, &e.state) {
                    let mut history = e.history.clone();
                    history.push(y);
                    next.push(Explored {
                        state: dynamics.transition(&e.state, y),
                        history,
                    });
                }
            }
        }
        out.append(&mut frontier);
        frontier = next;
    }
    if max_depth > depth && n_sampled > 0 {
        let span = max_depth - depth;
        let sampled: Vec<Explored<S>> = (0..n_sampled)
            .into_par_iter()
            .map(|i| {
                let target = depth + 1 + i % span;
                let mut rng = path_rng(seed, 0, i as u64);
                let mut st = dynamics.initial_state();
                let mut history = Vec::with_capacity(target);
                for _ in 0..target {
                    let ys = on_path_outcomes(dynamics, &st);
                    if ys.is_empty() {
                        break;
                    }
                    let y = ys[rng.gen_range(0..ys.len())];
                    history.push(y);
                    st = dynamics.transition(&st, y);
                }
                Explored { state: st, history }
            })
            .collect();
        out.extend(sampled);
    }
    out
}

fn indifference_tol<S: Scalar>() -> f64 {
    if S::is_exact() {
        0.0
    } else {
        1e-9
    }
}

fn strict_threshold<S: Scalar>() -> f64 {
    if S::is_exact() {
        0.0
    } else {
        1e-12
    }
}

/// One-shot deviations for every supported type at every state.
pub fn audit_local_ic<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    states: &[Explored<S>],
) -> AuditReport {
    let model = dynamics.model();
    let tol = indifference_tol::<S>();
    let thr = strict_threshold::<S>();
    let tol_s = S::from_decimal(tol);
    let thr_s = S::from_decimal(thr);
    let mut indiff = Tally::new(
        "indifference",
        "types prescribed to mix get the same value from H and L",
        tol,
    );
    let mut strict = Tally::new(
        "strict_preference",
        "types prescribed a pure action strictly prefer it, including compliance in the absorbing class",
        thr,
    )
    .strict();
    let mut deepest = 0usize;
    for e in states {
        let st = &e.state;
        let pr = dynamics.prescribe(st);
        if !pr.trust {
            continue;
        }
        deepest = deepest.max(e.history.len());
        for j in 0..model.n_types() {
            let tag = pr.tightness[j];
            if matches!(tag, Tightness::Unsupported | Tightness::NoChoice) {
                continue;
            }
            let vh = model.deviation_value(dynamics, st, j, Outcome::H);
            let vl = model.deviation_value(dynamics, st, j, Outcome::L);
            let diff = vh - &vl;
            match tag {
                Tightness::Indifferent => {
                    let gap = diff.abs();
                    let ok = gap <= tol_s;
                    let slack = tol - gap.to_f64();
                    let slack = if ok {
                        slack.max(0.0)
                    } else {
                        slack.min(-f64::MIN_POSITIVE)
                    };
                    indiff.observe(slack, || {
                        format!("type {j}: gap {:.3e} at {}", gap.to_f64(), e.label())
                    });
                }
                Tightness::StrictHonor | Tightness::StrictExploit => {
                    let margin = if tag == Tightness::StrictHonor {
                        diff
                    } else {
                        -diff
                    };
                    let ok = margin > thr_s;
                    let slack = margin.to_f64() - thr;
                    let slack = if ok {
                        slack.max(f64::MIN_POSITIVE)
                    } else {
                        slack.min(0.0)
                    };
                    strict.observe(slack, || {
                        format!(
                            "type {j}: {:?} margin {:.3e} at {}",
                            tag,
                            margin.to_f64(),
                            e.label()
                        )
                    });
                }
                _ => {}
            }
        }
    }
    let coverage = format!("{} states, deepest history {}", states.len(), deepest);
    AuditReport {
        checks: vec![
            indiff.note(coverage.clone()).finish(),
            strict.note(coverage).finish(),
        ],
    }
}

/// Buyers are willing to trust wherever they do, and exactly indifferent at
/// unclamped learning states.
pub fn audit_buyer_ic<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    states: &[Explored<S>],
) -> AuditReport {
    let model = dynamics.model();
    let gstar = model.consts.gstar.clone();
    let tol = 1e-12;
    let tol_s = S::tolerance();
    let mut trust = Tally::new("buyer_trust", "P(H) ≥ γ* wherever buyers trust", tol);
    let mut exact = Tally::new(
        "buyer_indifference",
        "P(H) = γ* at learning states where the belief does not reach one after H",
        tol,
    );
    for e in states {
        let st = &e.state;
        let pr = dynamics.prescribe(st);
        if !pr.trust {
            continue;
        }
        let ph = pr.aggregate(&st.posterior, Outcome::H);
        let excess = ph.clone() - &gstar;
        let ok = excess >= -tol_s.clone();
        let slack = excess.to_f64() + tol;
        let slack = if ok {
            slack.max(0.0)
        } else {
            slack.min(-f64::MIN_POSITIVE)
        };
        trust.observe(slack, || {
            format!("P(H)={:.12} at {}", ph.to_f64(), e.label())
        });
        if st.class == Class::Learning && !model.belief_after_honor(st.eta()).1 {
            let gap = excess.abs();
            let ok = gap <= tol_s;
            let slack = tol - gap.to_f64();
            let slack = if ok {
                slack.max(0.0)
            } else {
                slack.min(-f64::MIN_POSITIVE)
            };
            exact.observe(slack, || {
                format!("P(H)={:.12} at {}", ph.to_f64(), e.label())
            });
        }
    }
    AuditReport {
        checks: vec![trust.finish(), exact.finish()],
    }
}

/// The belief in the lowest-cost type is a martingale under the buyers' prediction.
pub fn audit_martingale<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    states: &[Explored<S>],
) -> AuditReport {
    let tol = indifference_tol::<S>();
    let tol_s = S::from_decimal(tol);
    let mut t = Tally::new(
        "martingale",
        "E[η'] = η at learning and screening states",
        tol,
    );
    for e in states {
        let st = &e.state;
        if !matches!(st.class, Class::Learning | Class::Screening) {
            continue;
        }
        let pr = dynamics.prescribe(st);
        let mut expect = S::zero();
        for y in [Outcome::H, Outcome::L] {
            let p = pr.aggregate(&st.posterior, y);
            if p > S::zero() {
                let next = dynamics.transition(st, y);
                expect = expect + &(p * next.eta());
            }
        }
        let gap = (expect - st.eta()).abs();
        let ok = gap <= tol_s;
        let slack = tol - gap.to_f64();
        let slack = if ok {
            slack.max(0.0)
        } else {
            slack.min(-f64::MIN_POSITIVE)
        };
        t.observe(slack, || {
            format!("|E[η']−η|={:.3e} at {}", gap.to_f64(), e.label())
        });
    }
    AuditReport {
        checks: vec![t.finish()],
    }
}

/// Structural invariants of reachable states.
pub fn audit_state_invariants<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    states: &[Explored<S>],
) -> AuditReport {
    let model = dynamics.model();
    let es = model.consts.eta_star.to_f64();
    let qf = model.consts.q_floor.to_f64();
    let mut simplex = Tally::new("simplex", "weights are a probability vector", 1e-9);
    let mut floor = Tally::new(
        "belief_floor",
        "η ≥ η* at learning and screening states",
        1e-12,
    );
    let mut honor = Tally::new(
        "honor_weight_floor",
        "p^H ≥ Y/2 at learning and screening states",
        0.0,
    );
    let mut order = Tally::new(
        "mixing_order",
        "the lowest-cost type honors at least as often as any other type at learning states",
        1e-12,
    );
    for e in states {
        let st = &e.state;
        if st.class == Class::Punish {
            continue;
        }
        let w = st.weights.to_f64();
        let worst = [w.n, w.h, w.l]
            .iter()
            .map(|&x| x.min(1.0 - x))
            .fold(f64::INFINITY, f64::min)
            .min(-(w.n + w.h + w.l - 1.0).abs());
        simplex.observe(worst + 1e-9, || e.label());
        if matches!(st.class, Class::Learning | Class::Screening) {
            let eta = st.eta().to_f64();
            floor.observe(eta - es + 1e-12, || e.label());
            honor.observe(w.h - qf, || e.label());
        }
        if st.class == Class::Learning {
            let pr = dynamics.prescribe(st);
            let low = pr.honor[0].to_f64();
            for j in st.support().into_iter().skip(1) {
                let hj = pr.honor[j].to_f64();
                order.observe(low - hj + 1e-12, || format!("type {j} at {}", e.label()));
            }
        }
    }
    AuditReport {
        checks: vec![
            simplex.finish(),
            floor.finish(),
            honor.finish(),
            order.finish(),
        ],
    }
}

fn expand<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    st: &EqState<S>,
    j: usize,
    depth: u32,
    leaf: bool,
) -> S {
    let model = dynamics.model();
    if depth == 0 {
        return if leaf {
            st.value(&model.thetas[j])
        } else {
            S::zero()
        };
    }
    let pr = dynamics.prescribe(st);
    let mut acc = S::zero();
    for y in [Outcome::N, Outcome::H, Outcome::L] {
        let p = pr.prob(j, y);
        if p > S::zero() {
            let next = dynamics.transition(st, y);
            let cont = expand(dynamics, &next, j, depth - 1, leaf);
            let stage = (S::one() - &model.delta) * &y.seller_payoff(&model.thetas[j]);
            acc = acc + &(p * &(stage + &(model.delta.clone() * &cont)));
        }
    }
    acc
}

/// Expected payoff of type `j` over the next `depth` periods plus the leaves'
/// promised values; equals the promise at `st` when promises are kept.
pub fn expected_value<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    st: &EqState<S>,
    j: usize,
    depth: u32,
    leaf_values: bool,
) -> S {
    expand(dynamics, st, j, depth, leaf_values)
}

/// Promised values are delivered: Monte Carlo means against the targets and
/// exact recursive expansion at sampled states.
pub fn audit_promise_keeping<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    stats: &ExperimentStats,
    states: &[Explored<S>],
    tol: f64,
    depth: u32,
) -> AuditReport {
    let model = dynamics.model();
    let mut mc = Tally::new(
        "promise_keeping_mc",
        "mean realized payoff is within tol + 3·SE of the promise",
        tol,
    );
    for t in &stats.types {
        let err = (t.payoff.mean - t.target_payoff).abs();
        mc.observe(tol + 3.0 * t.payoff.se - err, || {
            format!(
                "type {}: mean {:.6} vs {:.6}",
                t.type_index, t.payoff.mean, t.target_payoff
            )
        });
    }
    let mut cap = Tally::new(
        "lowest_type_cap",
        "the lowest-cost type's mean payoff does not exceed its complete-information payoff",
        0.0,
    );
    if let Some(t) = stats.types.first() {
        let bound = 1.0 - t.theta;
        cap.observe(bound + 3.0 * t.payoff.se - t.payoff.mean, || {
            format!("mean {:.6}", t.payoff.mean)
        });
    }

    let d = model.delta.to_f64();
    let truncation = d.powi(depth as i32);
    let mut rec = Tally::new(
        "promise_keeping_recursion",
        "expanding the prescribed play reproduces the promised value",
        1e-9,
    );
    let stride = (states.len() / 100).max(1);
    let picked: Vec<&Explored<S>> = states
        .iter()
        .step_by(stride)
        .filter(|e| e.state.class != Class::Punish)
        .take(100)
        .collect();
    let rows: Vec<(String, f64, f64)> = picked
        .par_iter()
        .flat_map_iter(|e| {
            e.state
                .support()
                .into_iter()
                .map(|j| {
                    let promised = e.state.value(&model.thetas[j]);
                    let with_leaf = expected_value(dynamics, &e.state, j, depth, true);
                    let truncated = expected_value(dynamics, &e.state, j, depth, false);
                    let exact_gap = (with_leaf - &promised).abs().to_f64();
                    let trunc_gap = (truncated - &promised).abs().to_f64();
                    (format!("type {j} at {}", e.label()), exact_gap, trunc_gap)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    for (label, exact_gap, trunc_gap) in rows {
        let slack = (1e-9 - exact_gap).min(truncation + 1e-9 - trunc_gap);
        rec.observe(slack, || {
            format!("{label}: gaps {exact_gap:.3e} / {trunc_gap:.3e}")
        });
    }
    AuditReport {
        checks: vec![
            mc.finish(),
            cap.finish(),
            rec.note(format!(
                "depth {depth}, truncation bound δ^d = {truncation:.6}"
            ))
            .finish(),
        ],
    }
}

/// `⌈−ln π / ε⌉`: bound on the expected number of periods whose one-period
/// prediction error exceeds `ε`.
pub fn kl_period_bound(eps: f64, prior: f64) -> u64 {
    (-prior.ln() / eps).ceil() as u64
}

/// Cumulative prediction error stays within the prior's information budget.
pub fn audit_kl_budget(stats: &ExperimentStats, prior: &[f64], eps: f64) -> Result<AuditReport> {
    let slot = KL_THRESHOLDS
        .iter()
        .position(|&x| (x - eps).abs() <= 1e-15 * eps.max(1.0))
        .ok_or_else(|| Error::InvalidSpec(format!("eps must be one of {KL_THRESHOLDS:?}")))?;
    let mut budget = Tally::new("kl_budget", "mean path KL ≤ −ln π(θ) + 3·SE", 0.0);
    let mut count = Tally::new(
        "kl_period_count",
        "mean number of periods with KL > ε is at most ⌈−ln π/ε⌉",
        0.0,
    );
    for t in &stats.types {
        let b = -prior[t.type_index].ln();
        budget.observe(b + 3.0 * t.kl.se - t.kl.mean, || {
            format!(
                "type {}: mean {:.6} budget {:.6}",
                t.type_index, t.kl.mean, b
            )
        });
        let bound = kl_period_bound(eps, prior[t.type_index]) as f64;
        let c = t.kl_exceed[slot];
        count.observe(bound + 3.0 * c.se - c.mean, || {
            format!(
                "type {}: mean count {:.3} bound {}",
                t.type_index, c.mean, bound
            )
        });
    }
    Ok(AuditReport {
        checks: vec![budget.finish(), count.note(format!("ε = {eps}")).finish()],
    })
}

/// Long-run outcome frequencies of the realized best replies.
pub fn audit_frequencies(
    stats: &ExperimentStats,
    gstar: f64,
    theta1: f64,
    gamma: f64,
    eps: f64,
    window: f64,
) -> AuditReport {
    let m = stats.types.len();
    let mut report = AuditReport::default();
    if m < 2 {
        let skip = Tally::new("frequency_ratios", "bounds need at least two types", 0.0)
            .note("skipped: a single type");
        report.checks.push(skip.finish());
        return report;
    }
    let lo = (gstar - eps) / (1.0 - gstar + eps);
    let hi = (gstar + eps) / (1.0 - gstar - eps);
    let mut valid = Tally::new(
        "valid_paths",
        "every simulated path keeps its weights on the simplex",
        0.0,
    );
    let mut lower = Tally::new(
        "ratio_lower",
        "α(H)/α(L) ≥ (γ*−ε)/(1−γ*+ε) for every type but the highest-cost one",
        0.0,
    );
    let mut upper = Tally::new(
        "ratio_upper",
        "α(H)/α(L) ≤ (γ*+ε)/(1−γ*−ε) for every type but the lowest-cost one",
        0.0,
    );
    for t in &stats.types {
        let j = t.type_index;
        for (i, s) in t.summaries.iter().enumerate() {
            valid.observe(if s.breakdown_at.is_some() { -1.0 } else { 0.0 }, || {
                format!(
                    "type {j} path {i}: breakdown at period {}",
                    s.breakdown_at.unwrap_or(0)
                )
            });
            if s.breakdown_at.is_some() {
                continue;
            }
            let ratio = if s.freq.l > 0.0 {
                s.freq.h / s.freq.l
            } else {
                f64::INFINITY
            };
            if j + 1 < m {
                lower.observe(ratio - lo, || {
                    format!("type {j} path {i}: ratio {ratio:.6}")
                });
            }
            if j > 0 {
                upper.observe(hi - ratio, || {
                    format!("type {j} path {i}: ratio {ratio:.6}")
                });
            }
        }
    }
    let note = format!("ε = {eps}, bounds [{lo:.6}, {hi:.6}]");
    report.checks.push(valid.finish());
    report.checks.push(lower.note(note.clone()).finish());
    report.checks.push(upper.note(note).finish());

    let den = 1.0 - gstar * theta1;
    let pins = [
        (gstar * (1.0 - theta1) / den, "H"),
        ((1.0 - gstar) * (1.0 - theta1) / den, "L"),
        ((1.0 - gstar) * theta1 / den, "N"),
    ];
    let mut middle = Tally::new(
        "middle_type_pins",
        "middle types' mean frequencies over valid paths sit near the pinned values",
        window,
    );
    for t in stats
        .types
        .iter()
        .filter(|t| t.type_index > 0 && t.type_index + 1 < m)
    {
        let ok: Vec<_> = t
            .summaries
            .iter()
            .filter(|s| s.breakdown_at.is_none())
            .collect();
        let avg = |f: fn(&crate::sim::PathSummary) -> f64| {
            ok.iter().map(|s| f(s)).sum::<f64>() / ok.len().max(1) as f64
        };
        let means = [avg(|s| s.freq.h), avg(|s| s.freq.l), avg(|s| s.freq.n)];
        for ((pin, label), mean) in pins.iter().zip(means) {
            middle.observe(window - (mean - pin).abs(), || {
                format!("type {}: α({label}) = {mean:.4} vs {pin:.4}", t.type_index)
            });
        }
    }
    let middle = if m < 3 {
        middle.note("no middle type")
    } else {
        middle
    };
    report.checks.push(middle.finish());

    // the lowest-cost type honors more often than the targeted frequency once revealed
    let target_h = gamma * (1.0 - theta1) / (1.0 - gamma * theta1);
    let revealed: Vec<f64> = stats.types[0]
        .summaries
        .iter()
        .filter(|s| s.revealed && s.breakdown_at.is_none())
        .map(|s| s.freq.h)
        .collect();
    let mut rev = Tally::new(
        "revealed_honor_frequency",
        "mean H frequency of the lowest-cost type on revealing paths exceeds γ(1−θ₁)/(1−γθ₁)",
        0.0,
    )
    .strict();
    if !revealed.is_empty() {
        let mean = revealed.iter().sum::<f64>() / revealed.len() as f64;
        rev.observe(mean - target_h, || {
            format!("mean {mean:.6} vs {target_h:.6}")
        });
    }
    report.checks.push(
        rev.note(format!("{} revealing paths", revealed.len()))
            .finish(),
    );
    report
}

/// Absorption, screening-visit cap and trust-weight floor over simulated paths.
pub fn audit_absorption<S: Scalar>(
    stats: &ExperimentStats,
    model: &Construction<S>,
) -> AuditReport {
    let cap = model.consts.class2_cap;
    let qf = model.consts.q_floor.to_f64();
    let mut absorbed = Tally::new(
        "absorption",
        "every path reaches the absorbing class before the horizon",
        0.0,
    );
    let mut visits = Tally::new(
        "screening_cap",
        "screening visits per path stay within the derived cap",
        0.0,
    );
    let mut floor = Tally::new(
        "honor_weight_floor_paths",
        "p^H ≥ Y/2 along every simulated path",
        0.0,
    );
    let mut sound = Tally::new(
        "no_breakdown",
        "weights stay on the simplex and no path is punished",
        0.0,
    );
    for t in &stats.types {
        let j = t.type_index;
        for (i, s) in t.summaries.iter().enumerate() {
            absorbed.observe(if s.absorbed_at.is_some() { 0.0 } else { -1.0 }, || {
                format!("type {j} path {i}")
            });
            visits.observe(cap as f64 - s.screening_visits as f64, || {
                format!("type {j} path {i}: {} visits", s.screening_visits)
            });
            if s.min_honor_weight.is_finite() {
                floor.observe(s.min_honor_weight - qf, || {
                    format!("type {j} path {i}: p^H = {:.6}", s.min_honor_weight)
                });
            }
            let ok = s.breakdown_at.is_none() && !s.punished;
            sound.observe(if ok { 0.0 } else { -1.0 }, || {
                format!(
                    "type {j} path {i}: breakdown {:?} punished {}",
                    s.breakdown_at, s.punished
                )
            });
        }
    }
    AuditReport {
        checks: vec![
            absorbed.finish(),
            visits.note(format!("cap {cap}")).finish(),
            floor.note(format!("floor {qf:.6}")).finish(),
            sound.finish(),
        ],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaSummary {
    pub sequences: u64,
    pub violations: u64,
    /// Violations when the slack uses `T` instead of the revelation run.
    pub violations_at_t: u64,
    pub worst_slack: f64,
}

/// Enumerates every `H`/`L` sequence of length at most `max_len` that keeps the
/// play in the learning class without the belief reaching one, and checks
/// that discounted `H` weight ≤ `1 − δ^X` + discounted `L` weight · γ̃/(1−γ̃),
/// with `X` the revelation run.
pub fn audit_lemma_a1<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    max_len: usize,
) -> Result<(AuditReport, LemmaSummary)> {
    if max_len > 20 {
        return Err(Error::LengthTooLarge(max_len));
    }
    let model = dynamics.model();
    let d = model.delta.to_f64();
    let gt = model.consts.gamma_tilde.to_f64();
    let rho = gt / (1.0 - gt);
    let slack_x = 1.0 - d.powi(model.consts.reveal_run as i32);
    let slack_t = 1.0 - d.powi(model.consts.t as i32);
    let mut tally = Tally::new(
        "learning_run_bound",
        "discounted H weight ≤ 1 − δ^X + discounted L weight · γ̃/(1−γ̃) on learning runs",
        1e-12,
    );
    let mut summary = LemmaSummary {
        sequences: 0,
        violations: 0,
        violations_at_t: 0,
        worst_slack: f64::INFINITY,
    };

    struct Frame<S> {
        state: EqState<S>,
        seq: Vec<Outcome>,
        wh: f64,
        wl: f64,
        disc: f64,
    }
    let mut stack = vec![Frame {
        state: dynamics.initial_state(),
        seq: Vec::new(),
        wh: 0.0,
        wl: 0.0,
        disc: 1.0,
    }];
    while let Some(f) = stack.pop() {
        if !f.seq.is_empty() {
            let rhs = f.wl * rho;
            let slack = slack_x + rhs - f.wh;
            summary.sequences += 1;
            summary.worst_slack = summary.worst_slack.min(slack);
            if f.wh > slack_t + rhs + 1e-12 {
                summary.violations_at_t += 1;
            }
            tally.observe(slack + 1e-12, || {
                f.seq.iter().map(|y| y.symbol()).collect::<String>()
            });
        }
        if f.seq.len() == max_len || f.state.class != Class::Learning {
            continue;
        }
        for y in [Outcome::L, Outcome::H] {
            let next = dynamics.transition(&f.state, y);
            if next.class != Class::Learning || next.eta().to_f64() >= 1.0 {
                continue;
            }
            let w = (1.0 - d) * f.disc;
            let mut seq = f.seq.clone();
            seq.push(y);
            let (wh, wl) = if y == Outcome::H {
                (f.wh + w, f.wl)
            } else {
                (f.wh, f.wl + w)
            };
            stack.push(Frame {
                state: next,
                seq,
                wh,
                wl,
                disc: f.disc * d,
            });
        }
    }
    summary.violations = tally.violations;
    let note = format!(
        "X = {}, T = {}; {} of {} sequences exceed the bound with slack 1 − δ^T",
        model.consts.reveal_run, model.consts.t, summary.violations_at_t, summary.sequences
    );
    Ok((
        AuditReport {
            checks: vec![tally.note(note).finish()],
        },
        summary,
    ))
}

/// The equilibrium strategy of every type is neither stationary nor completely mixed.
pub fn audit_behavior<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    states: &[Explored<S>],
    stats: Option<&ExperimentStats>,
) -> AuditReport {
    let model = dynamics.model();
    let m = model.n_types();
    let mut pure = Tally::new(
        "pure_prescription",
        "each type has an on-path state with a pure prescription",
        0.0,
    );
    let mut varies = Tally::new(
        "varying_prescription",
        "each type has two on-path states with different prescriptions",
        0.0,
    );
    if m < 2 {
        let note = "skipped: a single type";
        return AuditReport {
            checks: vec![pure.note(note).finish(), varies.note(note).finish()],
        };
    }
    let learning: Vec<&Explored<S>> = states
        .iter()
        .filter(|e| matches!(e.state.class, Class::Learning | Class::Screening))
        .collect();
    let mut found_pure = Vec::new();
    let mut found_vary = Vec::new();
    for j in 0..m {
        let mut pure_at: Option<String> = None;
        let mut first: Option<(f64, String)> = None;
        let mut differ: Option<String> = None;
        for e in &learning {
            if !e.state.in_support(j) {
                continue;
            }
            let h = dynamics.prescribe(&e.state).honor[j].to_f64();
            if pure_at.is_none() && (h == 0.0 || h == 1.0) {
                pure_at = Some(format!(
                    "type {j} plays {} at {}",
                    if h == 1.0 { "H" } else { "L" },
                    e.label()
                ));
            }
            match &first {
                None => first = Some((h, e.label())),
                Some((h0, l0)) if differ.is_none() && (h - h0).abs() > 1e-9 => {
                    differ = Some(format!(
                        "type {j}: H w.p. {h0:.6} at {l0} and {h:.6} at {}",
                        e.label()
                    ));
                }
                _ => {}
            }
            if pure_at.is_some() && differ.is_some() {
                break;
            }
        }
        pure.observe(if pure_at.is_some() { 0.0 } else { -1.0 }, || {
            format!("type {j}: none found")
        });
        varies.observe(if differ.is_some() { 0.0 } else { -1.0 }, || {
            format!("type {j}: none found")
        });
        found_pure.extend(pure_at);
        found_vary.extend(differ);
    }
    let mut checks = vec![
        pure.note(found_pure.join("; ")).finish(),
        varies.note(found_vary.join("; ")).finish(),
    ];
    if let Some(stats) = stats {
        let t = &stats.types[0];
        let c = Tally::new(
            "revelation_histories",
            "distinct histories at which the belief first reaches one",
            0.0,
        )
        .note(format!(
            "{} distinct revealing histories over {} paths of the lowest-cost type",
            t.distinct_reveal_histories, t.paths
        ));
        checks.push(c.finish());
    }
    AuditReport { checks }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditOptions {
    pub depth: usize,
    pub n_sampled: usize,
    pub max_depth: usize,
    pub n_paths: u64,
    pub horizon: u64,
    pub seed: u64,
    pub payoff_tol: f64,
    pub recursion_depth: u32,
    pub kl_eps: f64,
    pub lemma_len: usize,
    /// Slack for the frequency ratios; defaults to `2(γ − γ*)`.
    pub freq_eps: Option<f64>,
    pub freq_window: f64,
}

impl AuditOptions {
    pub fn for_delta(delta: f64) -> Self {
        AuditOptions {
            depth: 14,
            n_sampled: 10_000,
            max_depth: 200,
            n_paths: 10_000,
            horizon: crate::sim::default_horizon(delta, 1e-4),
            seed: 0,
            payoff_tol: 0.01,
            recursion_depth: 10,
            kl_eps: 0.01,
            lemma_len: 12,
            freq_eps: None,
            freq_window: 0.05,
        }
    }
}

/// Every audit on one construction.
pub fn full_audit(
    model: &Construction<f64>,
    opts: &AuditOptions,
) -> Result<(AuditReport, ExperimentStats)> {
    let states = explore_states(model, opts.depth, opts.n_sampled, opts.max_depth, opts.seed);
    let stats = crate::sim::run_experiment(model, opts.n_paths, opts.horizon, opts.seed);
    let mut report = AuditReport::default();
    report.extend(audit_local_ic(model, &states));
    report.extend(audit_buyer_ic(model, &states));
    report.extend(audit_martingale(model, &states));
    report.extend(audit_state_invariants(model, &states));
    report.extend(audit_promise_keeping(
        model,
        &stats,
        &states,
        opts.payoff_tol,
        opts.recursion_depth,
    ));
    report.extend(audit_absorption(&stats, model));
    report.extend(audit_kl_budget(&stats, &model.spec.prior, opts.kl_eps)?);
    let gstar = model.consts.gstar;
    let eps = opts.freq_eps.unwrap_or(2.0 * (model.spec.gamma - gstar));
    report.extend(audit_frequencies(
        &stats,
        gstar,
        model.spec.thetas[0],
        model.spec.gamma,
        eps,
        opts.freq_window,
    ));
    report.extend(audit_lemma_a1(model, opts.lemma_len)?.0);
    report.extend(audit_behavior(model, &states, Some(&stats)));
    Ok((report, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameSpec;

    #[test]
    fn kl_period_bound_value() {
        assert_eq!(kl_period_bound(0.01, 0.1), 231);
    }

    #[test]
    fn exploration_counts_branches() {
        let c = Construction::<f64>::new(&GameSpec::canonical()).unwrap();
        let s = explore_states(&c, 3, 0, 0, 0);
        // every learning state has two on-path outcomes near the prior
        assert_eq!(s.len(), 1 + 2 + 4 + 8);
    }

    #[test]
    fn lemma_rejects_long_sequences() {
        let c = Construction::<f64>::new(&GameSpec::canonical()).unwrap();
        assert!(matches!(
            audit_lemma_a1(&c, 21),
            Err(Error::LengthTooLarge(21))
        ));
    }
}
