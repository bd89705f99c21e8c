//! Monte Carlo simulation of the automaton for a fixed true seller type.
//!
//! Path `i` of type `j` draws from a ChaCha8 stream keyed by the experiment
//! seed and `(j, i)`, so results do not depend on the thread count.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::construction::{Class, Dynamics};
use crate::error::{Error, Result};
use crate::game::{Outcome, OutcomeDist};
use crate::scalar::Scalar;

/// Thresholds for counting periods with a large one-period prediction error.
pub const KL_THRESHOLDS: [f64; 3] = [1e-3, 1e-2, 1e-1];

/// Weights outside the simplex by more than this mark a breakdown.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Horizon after which the discounted tail weighs at most `tail`.
pub fn default_horizon(delta: f64, tail: f64) -> u64 {
    (tail.ln() / delta.ln()).ceil().max(1.0) as u64
}

pub fn path_rng(seed: u64, type_index: usize, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((type_index as u64) << 48) | path);
    rng
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub t: u64,
    pub class: Class,
    pub eta: f64,
    pub weights: OutcomeDist<f64>,
    pub trust: bool,
    /// Prescribed probability of `H` for the true type.
    pub honor: f64,
    /// Probability of `H` predicted by buyers.
    pub predicted_honor: f64,
    pub outcome: Outcome,
    pub kl: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PathSummary {
    /// Realized discounted payoff, with the tail valued at the final state.
    pub payoff: f64,
    /// Discounted outcome frequencies, tail included.
    pub freq: OutcomeDist<f64>,
    pub absorbed_at: Option<u64>,
    pub screening_visits: u32,
    /// The belief in the lowest-cost type reached one.
    pub revealed: bool,
    /// Hash of the outcome history at the first period the belief hit one.
    pub reveal_history: Option<u64>,
    /// Smallest `p^H` at a learning or screening state.
    pub min_honor_weight: f64,
    /// Smallest residual at which the absorbing schedule emitted `H`.
    pub min_absorbing_residual: f64,
    /// First period whose state left the weight simplex.
    pub breakdown_at: Option<u64>,
    pub punished: bool,
    pub kl_total: f64,
    pub kl_exceed: [u32; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub type_index: usize,
    pub seed: u64,
    pub path: u64,
    pub delta: f64,
    pub steps: Vec<TraceStep>,
    pub final_class: Class,
    pub final_weights: OutcomeDist<f64>,
    pub summary: PathSummary,
}

/// Kullback–Leibler divergence between Bernoulli(p) and Bernoulli(q), in nats.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a <= 0.0 {
            0.0
        } else if b <= 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

fn walk<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    j: usize,
    rng: &mut ChaCha8Rng,
    horizon: u64,
    mut record: Option<&mut Vec<TraceStep>>,
) -> (PathSummary, Class, OutcomeDist<f64>) {
    let model = dynamics.model();
    let delta = model.delta.to_f64();
    let theta = model.thetas[j].to_f64();
    let mut st = dynamics.initial_state();
    let mut sum = PathSummary {
        min_honor_weight: f64::INFINITY,
        min_absorbing_residual: f64::INFINITY,
        ..PathSummary::default()
    };
    let mut disc = 1.0;
    let mut hasher = DefaultHasher::new();

    for t in 0..horizon {
        if sum.breakdown_at.is_none() && st.class != Class::Punish && !st.on_simplex(SIMPLEX_TOL) {
            sum.breakdown_at = Some(t);
        }
        let pr = dynamics.prescribe(&st);
        let honor = pr.honor[j].to_f64();
        let predicted = if pr.trust {
            pr.aggregate(&st.posterior, Outcome::H).to_f64()
        } else {
            0.0
        };
        let mut kl = 0.0;
        match st.class {
            Class::Learning | Class::Screening => {
                if st.class == Class::Screening {
                    sum.screening_visits += 1;
                }
                sum.min_honor_weight = sum.min_honor_weight.min(st.weights.h.to_f64());
                kl = bernoulli_kl(honor, predicted);
            }
            Class::Absorbing => {
                if sum.absorbed_at.is_none() {
                    sum.absorbed_at = Some(t);
                }
                if pr.trust {
                    sum.min_absorbing_residual =
                        sum.min_absorbing_residual.min(st.weights.h.to_f64());
                }
            }
            Class::Punish => sum.punished = true,
        }
        let y = if !pr.trust {
            Outcome::N
        } else if rng.gen::<f64>() < honor {
            Outcome::H
        } else {
            Outcome::L
        };
        sum.kl_total += kl;
        for (k, thr) in KL_THRESHOLDS.iter().enumerate() {
            if kl > *thr {
                sum.kl_exceed[k] += 1;
            }
        }
        let w = (1.0 - delta) * disc;
        sum.payoff += w * y.seller_payoff(&theta);
        match y {
            Outcome::N => sum.freq.n += w,
            Outcome::H => sum.freq.h += w,
            Outcome::L => sum.freq.l += w,
        }
        if let Some(steps) = record.as_deref_mut() {
            steps.push(TraceStep {
                t,
                class: st.class,
                eta: st.eta().to_f64(),
                weights: st.weights.to_f64(),
                trust: pr.trust,
                honor,
                predicted_honor: predicted,
                outcome: y,
                kl,
            });
        }
        y.hash(&mut hasher);
        st = dynamics.transition(&st, y);
        if !sum.revealed && st.class != Class::Punish && st.eta().to_f64() >= 1.0 {
            sum.revealed = true;
            sum.reveal_history = Some(hasher.finish());
        }
        disc *= delta;
    }
    if sum.breakdown_at.is_none() && st.class != Class::Punish && !st.on_simplex(SIMPLEX_TOL) {
        sum.breakdown_at = Some(horizon);
    }
    let fw = st.weights.to_f64();
    sum.payoff += disc * (fw.h * (1.0 - theta) + fw.l);
    sum.freq.n += disc * fw.n;
    sum.freq.h += disc * fw.h;
    sum.freq.l += disc * fw.l;
    (sum, st.class, fw)
}

/// Simulates one path and keeps every period.
pub fn simulate_path<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    j: usize,
    seed: u64,
    path: u64,
    horizon: u64,
) -> Trace {
    let mut rng = path_rng(seed, j, path);
    let mut steps = Vec::with_capacity(horizon as usize);
    let (summary, final_class, final_weights) =
        walk(dynamics, j, &mut rng, horizon, Some(&mut steps));
    Trace {
        type_index: j,
        seed,
        path,
        delta: dynamics.model().delta.to_f64(),
        steps,
        final_class,
        final_weights,
        summary,
    }
}

/// Discounted outcome frequencies of a trace, the tail resolved from the
/// final state's weights, and the weight `δ^horizon` carried by that tail.
pub fn discounted_frequency(trace: &Trace) -> Result<(OutcomeDist<f64>, f64)> {
    if trace.steps.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let d = trace.delta;
    let mut out = OutcomeDist::new(0.0, 0.0, 0.0);
    let mut disc = 1.0;
    for s in &trace.steps {
        let w = (1.0 - d) * disc;
        match s.outcome {
            Outcome::N => out.n += w,
            Outcome::H => out.h += w,
            Outcome::L => out.l += w,
        }
        disc *= d;
    }
    out.n += disc * trace.final_weights.n;
    out.h += disc * trace.final_weights.h;
    out.l += disc * trace.final_weights.l;
    Ok((out, disc))
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        for x in xs {
            n += 1.0;
            let d = x - mean;
            mean += d / n;
            m2 += d * (x - mean);
        }
        if n == 0.0 {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
        MeanSe {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TypeStats {
    pub type_index: usize,
    pub theta: f64,
    pub target_payoff: f64,
    pub paths: u64,
    pub payoff: MeanSe,
    pub freq_n: MeanSe,
    pub freq_h: MeanSe,
    pub freq_l: MeanSe,
    /// Absorption period over the absorbed paths.
    pub absorption: MeanSe,
    pub unabsorbed: u64,
    pub breakdowns: u64,
    pub punished: u64,
    pub screening_histogram: BTreeMap<u32, u64>,
    pub max_screening_visits: u32,
    pub revealed_fraction: f64,
    pub distinct_reveal_histories: usize,
    pub kl: MeanSe,
    pub kl_exceed: [MeanSe; 3],
    pub min_honor_weight: f64,
    pub min_absorbing_residual: f64,
    /// Largest `|payoff − target|` over paths without a breakdown.
    pub max_promise_error: f64,
    #[serde(skip)]
    pub summaries: Vec<PathSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentStats {
    pub seed: u64,
    pub n_paths: u64,
    pub horizon: u64,
    /// Discounted weight of the periods past the horizon.
    pub tail_weight: f64,
    pub types: Vec<TypeStats>,
}

fn summarize(j: usize, theta: f64, target: f64, summaries: Vec<PathSummary>) -> TypeStats {
    let mut hist = BTreeMap::new();
    let mut histories = std::collections::HashSet::new();
    for s in &summaries {
        *hist.entry(s.screening_visits).or_insert(0u64) += 1;
        if let Some(h) = s.reveal_history {
            histories.insert(h);
        }
    }
    let n = summaries.len() as u64;
    let kl_exceed = [0, 1, 2].map(|k| MeanSe::of(summaries.iter().map(|s| s.kl_exceed[k] as f64)));
    TypeStats {
        type_index: j,
        theta,
        target_payoff: target,
        paths: n,
        payoff: MeanSe::of(summaries.iter().map(|s| s.payoff)),
        freq_n: MeanSe::of(summaries.iter().map(|s| s.freq.n)),
        freq_h: MeanSe::of(summaries.iter().map(|s| s.freq.h)),
        freq_l: MeanSe::of(summaries.iter().map(|s| s.freq.l)),
        absorption: MeanSe::of(
            summaries
                .iter()
                .filter_map(|s| s.absorbed_at.map(|t| t as f64)),
        ),
        unabsorbed: summaries.iter().filter(|s| s.absorbed_at.is_none()).count() as u64,
        breakdowns: summaries
            .iter()
            .filter(|s| s.breakdown_at.is_some())
            .count() as u64,
        punished: summaries.iter().filter(|s| s.punished).count() as u64,
        max_screening_visits: summaries
            .iter()
            .map(|s| s.screening_visits)
            .max()
            .unwrap_or(0),
        screening_histogram: hist,
        revealed_fraction: summaries.iter().filter(|s| s.revealed).count() as f64 / n.max(1) as f64,
        distinct_reveal_histories: histories.len(),
        kl: MeanSe::of(summaries.iter().map(|s| s.kl_total)),
        kl_exceed,
        min_honor_weight: summaries
            .iter()
            .map(|s| s.min_honor_weight)
            .fold(f64::INFINITY, f64::min),
        min_absorbing_residual: summaries
            .iter()
            .map(|s| s.min_absorbing_residual)
            .fold(f64::INFINITY, f64::min),
        max_promise_error: summaries
            .iter()
            .filter(|s| s.breakdown_at.is_none())
            .map(|s| (s.payoff - target).abs())
            .fold(0.0, f64::max),
        summaries,
    }
}

/// Simulates `n_paths` paths for type `j` in parallel.
pub fn run_type<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    j: usize,
    n_paths: u64,
    horizon: u64,
    seed: u64,
) -> TypeStats {
    let summaries: Vec<PathSummary> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, j, i);
            walk(dynamics, j, &mut rng, horizon, None).0
        })
        .collect();
    let model = dynamics.model();
    summarize(
        j,
        model.thetas[j].to_f64(),
        model.target_payoff(j).to_f64(),
        summaries,
    )
}

/// Simulates every type.
pub fn run_experiment<S: Scalar, D: Dynamics<S> + ?Sized>(
    dynamics: &D,
    n_paths: u64,
    horizon: u64,
    seed: u64,
) -> ExperimentStats {
    let m = dynamics.model().n_types();
    let delta = dynamics.model().delta.to_f64();
    ExperimentStats {
        seed,
        n_paths,
        horizon,
        tail_weight: delta.powf(horizon as f64),
        types: (0..m)
            .map(|j| run_type(dynamics, j, n_paths, horizon, seed))
            .collect(),
    }
}
