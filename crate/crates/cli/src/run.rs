//! Subcommand execution and the report bundle.

use std::fmt::Display;

use serde::Serialize;
use serde_json::json;
use trustrep::audit::{
    audit_buyer_ic, audit_lemma_a1, audit_local_ic, audit_martingale, explore_states, full_audit,
    AuditOptions, AuditReport, LemmaSummary,
};
use trustrep::constants::{derive_constants, DerivedConstants};
use trustrep::game::{capital_taxation_vstar, gamma_star, stackelberg_payoff, v_of_gamma, v_star};
use trustrep::general::{
    capital_taxation, limit_pricing, monetary_policy, trust_game, AssumptionReport, GeneralGame,
};
use trustrep::lp::{grid_oracle, solve_general_lp, solve_trust_lp, GeneralProgram, TrustLp};
use trustrep::sim::{run_experiment, simulate_path, ExperimentStats, Trace};
use trustrep::{Construction, Error, Outcome, Rational, Scalar};

use crate::config::{ConfigError, RunConfig, Variant};

pub const REPORT_SCHEMA: &str = "trustrep-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Commitment payoffs, payoff bounds and targeted payoffs per type.
    PayoffBounds,
    /// Constants of the equilibrium construction.
    Constants,
    /// Monte Carlo paths of the construction.
    Simulate,
    /// Every audit of the construction.
    Audit,
    /// Enumeration of learning-class runs against the discounted-weight bound.
    #[command(name = "lemma-a1")]
    LemmaA1,
    /// Closed form, exact LP and grid oracle side by side.
    LpCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::PayoffBounds => "payoff-bounds",
            Command::Constants => "constants",
            Command::Simulate => "simulate",
            Command::Audit => "audit",
            Command::LemmaA1 => "lemma-a1",
            Command::LpCheck => "lp-check",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub exact: bool,
    pub depth: Option<usize>,
    pub traces: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Library(#[from] Error),
    #[error("{0}")]
    Unsupported(String),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Unsupported(_) => 2,
            RunError::Library(Error::DeltaTooLow { .. }) => 3,
            RunError::Library(
                Error::InvalidSpec(_)
                | Error::ParameterOutOfRange { .. }
                | Error::NonPositiveParameter { .. }
                | Error::TypeOrderViolation { .. }
                | Error::GammaOutOfRange { .. }
                | Error::AssumptionViolation(_)
                | Error::MeshOutOfRange(_)
                | Error::LengthTooLarge(_),
            ) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(ConfigError::Parse(_)) => "parse_error",
            RunError::Config(_) => "validation_error",
            RunError::Unsupported(_) => "unsupported",
            RunError::Library(Error::DeltaTooLow { .. }) => "delta_too_low",
            RunError::Library(_) if self.exit_code() == 2 => "validation_error",
            RunError::Library(_) => "library_error",
            RunError::Io(_) => "io_error",
        }
    }

    /// Machine-readable error object.
    pub fn to_json(&self) -> serde_json::Value {
        let mut err = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let RunError::Library(Error::DeltaTooLow {
            delta,
            failed,
            threshold,
        }) = self
        {
            err["delta"] = json!(delta);
            err["failed"] = serde_json::to_value(failed).unwrap_or_default();
            err["threshold"] = json!(threshold);
        }
        json!({ "schema_version": REPORT_SCHEMA, "error": err })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PayoffRow {
    pub type_index: usize,
    pub theta: Option<f64>,
    /// Commitment payoff against a best-responding buyer.
    pub v_commit: Option<f64>,
    /// Closed-form payoff bound.
    pub v_star: Option<f64>,
    /// The same bound from the linear program.
    pub v_star_lp: f64,
    /// Payoff targeted by the construction at the configured γ.
    pub v_gamma: Option<f64>,
    pub agree: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactRow {
    pub v_commit: Option<String>,
    pub v_star: Option<String>,
    pub v_star_lp: String,
    pub v_gamma: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpRow {
    pub type_index: usize,
    pub closed_form: Option<String>,
    pub lp_exact: String,
    pub lp_exact_f64: f64,
    pub lp_f64: f64,
    pub grid: f64,
    pub mesh: f64,
    pub grid_gap: f64,
    pub grid_tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsDump {
    #[serde(flatten)]
    pub values: DerivedConstants<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<serde_json::Value>,
}

/// Per-period rows of one simulated path.
#[derive(Debug, Clone)]
pub struct TraceTable {
    pub type_index: usize,
    pub seed: u64,
    pub path: u64,
    pub n_types: usize,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub period: u64,
    pub outcome: Outcome,
    pub eta: f64,
    pub class: &'static str,
    pub weights: [f64; 3],
    pub honor: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub schema_version: &'static str,
    pub subcommand: &'static str,
    pub exact: bool,
    pub passed: bool,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payoff_table: Option<Vec<PayoffRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsDump>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<ExperimentStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma: Option<LemmaSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp_check: Option<Vec<LpRow>>,
    #[serde(skip)]
    pub traces: Vec<TraceTable>,
}

impl ReportBundle {
    fn new(cmd: Command, cfg: &RunConfig, flags: &Flags) -> Self {
        ReportBundle {
            schema_version: REPORT_SCHEMA,
            subcommand: cmd.name(),
            exact: flags.exact,
            passed: true,
            config: cfg.clone(),
            payoff_table: None,
            assumptions: None,
            constants: None,
            stats: None,
            audit: None,
            lemma: None,
            lp_check: None,
            traces: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            4
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, flags: &Flags) -> Result<ReportBundle, RunError> {
    let mut bundle = ReportBundle::new(cmd, cfg, flags);
    match cmd {
        Command::PayoffBounds => {
            let (rows, ok) = if flags.exact {
                payoff_rows::<Rational>(cfg)?
            } else {
                payoff_rows::<f64>(cfg)?
            };
            bundle.passed = ok;
            bundle.payoff_table = Some(rows);
            if cfg.variant != Variant::TrustSequential {
                bundle.assumptions = Some(stage_game::<Rational>(cfg)?.check_assumptions());
            }
        }
        Command::Constants => {
            require_construction(cfg)?;
            let spec = cfg.spec();
            let values = derive_constants::<f64>(&spec)?;
            let exact = if flags.exact {
                Some(exact_constants(&derive_constants::<Rational>(&spec)?))
            } else {
                None
            };
            bundle.constants = Some(ConstantsDump { values, exact });
        }
        Command::Simulate => {
            require_construction(cfg)?;
            let traces = flags.traces.unwrap_or(cfg.experiment.traces);
            if flags.exact {
                simulate(
                    &Construction::<Rational>::new(&cfg.spec())?,
                    cfg,
                    traces,
                    &mut bundle,
                );
            } else {
                simulate(
                    &Construction::<f64>::new(&cfg.spec())?,
                    cfg,
                    traces,
                    &mut bundle,
                );
            }
        }
        Command::Audit => {
            require_construction(cfg)?;
            let model = Construction::<f64>::new(&cfg.spec())?;
            let opts = audit_options(cfg, flags);
            let (mut report, stats) = full_audit(&model, &opts)?;
            if flags.exact {
                let exact = Construction::<Rational>::new(&cfg.spec())?;
                let depth = flags.depth.unwrap_or(cfg.audit.exact_depth);
                let states = explore_states(&exact, depth, 0, 0, cfg.experiment.seed0);
                for mut part in [
                    audit_local_ic(&exact, &states),
                    audit_buyer_ic(&exact, &states),
                    audit_martingale(&exact, &states),
                ] {
                    for c in &mut part.checks {
                        c.name = format!("exact_{}", c.name);
                    }
                    report.extend(part);
                }
            }
            bundle.passed = report.passed();
            bundle.audit = Some(report);
            bundle.stats = Some(stats);
        }
        Command::LemmaA1 => {
            require_construction(cfg)?;
            let (report, summary) = if flags.exact {
                audit_lemma_a1(
                    &Construction::<Rational>::new(&cfg.spec())?,
                    cfg.audit.max_len,
                )?
            } else {
                audit_lemma_a1(&Construction::<f64>::new(&cfg.spec())?, cfg.audit.max_len)?
            };
            bundle.passed = report.passed();
            bundle.audit = Some(report);
            bundle.lemma = Some(summary);
        }
        Command::LpCheck => {
            let rows = lp_rows(cfg)?;
            bundle.passed = rows.iter().all(|r| r.passed);
            bundle.lp_check = Some(rows);
        }
    }
    Ok(bundle)
}

fn require_construction(cfg: &RunConfig) -> Result<(), RunError> {
    if !cfg.variant.has_construction() {
        return Err(RunError::Unsupported(
            "the equilibrium construction needs variant trust-sequential or trust-simultaneous"
                .into(),
        ));
    }
    if cfg
        .game
        .loss
        .as_ref()
        .is_some_and(|l| l.iter().any(|&d| d != 0.0))
    {
        return Err(RunError::Unsupported(
            "the equilibrium construction needs zero game.loss (the sequential trust game)".into(),
        ));
    }
    Ok(())
}

fn audit_options(cfg: &RunConfig, flags: &Flags) -> AuditOptions {
    let a = &cfg.audit;
    AuditOptions {
        depth: flags.depth.unwrap_or(a.depth),
        n_sampled: a.n_sampled,
        max_depth: a.max_depth,
        n_paths: cfg.experiment.n_paths,
        horizon: cfg.experiment.horizon,
        seed: cfg.experiment.seed0,
        payoff_tol: a.payoff_tol,
        recursion_depth: a.recursion_depth,
        kl_eps: a.kl_eps,
        lemma_len: a.max_len,
        freq_eps: a.freq_eps,
        freq_window: a.freq_window,
    }
}

fn simulate<S: Scalar>(
    model: &Construction<S>,
    cfg: &RunConfig,
    traces: u64,
    bundle: &mut ReportBundle,
) {
    let e = &cfg.experiment;
    let stats = run_experiment(model, e.n_paths, e.horizon, e.seed0);
    bundle.passed = stats.types.iter().all(|t| t.breakdowns == 0);
    bundle.stats = Some(stats);
    for j in 0..model.n_types() {
        for p in 0..traces.min(e.n_paths) {
            let trace = simulate_path(model, j, e.seed0, p, e.horizon);
            bundle.traces.push(trace_table(model, &trace));
        }
    }
}

/// Replays a trace to recover every type's prescribed `H` probability.
fn trace_table<S: Scalar>(model: &Construction<S>, trace: &Trace) -> TraceTable {
    let m = model.n_types();
    let mut st = model.initial_state();
    let mut rows = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        let pr = model.prescribe(&st);
        rows.push(TraceRow {
            period: step.t,
            outcome: step.outcome,
            eta: step.eta,
            class: step.class.label(),
            weights: [step.weights.n, step.weights.h, step.weights.l],
            honor: (0..m).map(|j| pr.prob(j, Outcome::H).to_f64()).collect(),
        });
        st = model.transition(&st, step.outcome);
    }
    TraceTable {
        type_index: trace.type_index,
        seed: trace.seed,
        path: trace.path,
        n_types: m,
        rows,
    }
}

fn exact_constants(c: &DerivedConstants<Rational>) -> serde_json::Value {
    json!({
        "gstar": c.gstar.to_string(),
        "gamma_tilde": c.gamma_tilde.to_string(),
        "gamma_hat": c.gamma_hat.to_string(),
        "eta_star": c.eta_star.to_string(),
        "lambda": c.lambda.to_string(),
        "y_bound": c.y_bound.to_string(),
        "q_floor": c.q_floor.to_string(),
    })
}

fn lift<S: Scalar>(x: f64) -> S {
    S::from_decimal(x)
}

/// The configured variant as a finite stage game.
pub fn stage_game<S: Scalar>(cfg: &RunConfig) -> Result<GeneralGame<S>, RunError> {
    let g = &cfg.game;
    let thetas: Vec<S> = g.thetas.iter().map(|&t| lift(t)).collect();
    let loss: Option<Vec<S>> = g
        .loss
        .as_ref()
        .map(|l| l.iter().map(|&d| lift(d)).collect());
    let (b, c) = (lift::<S>(g.b), lift::<S>(g.c));
    let game = match cfg.variant {
        Variant::TrustSequential | Variant::TrustSimultaneous => {
            trust_game(&b, &c, &thetas, loss.as_deref())?
        }
        Variant::CapitalTaxation => capital_taxation(&b, &c, &thetas)?,
        Variant::LimitPricing => limit_pricing(&b, &c, &thetas, loss.as_deref())?,
        Variant::MonetaryPolicy => {
            let s = cfg.stage.clone().unwrap_or_default();
            let p = |x: Option<f64>| lift::<S>(x.unwrap_or_default());
            monetary_policy(
                &p(s.x1),
                &p(s.x2),
                &p(s.y1),
                &p(s.y2),
                &thetas,
                loss.as_deref(),
            )?
        }
        Variant::General => {
            let s = cfg.stage.clone().unwrap_or_default();
            let u1 =
                s.u1.unwrap_or_default()
                    .iter()
                    .map(|ty| ty.iter().map(|r| [lift(r[0]), lift(r[1])]).collect())
                    .collect();
            let u2 =
                s.u2.unwrap_or_default()
                    .iter()
                    .map(|r| [lift(r[0]), lift(r[1])])
                    .collect();
            let (a1, a2, types) = (
                s.a1.unwrap_or_default(),
                s.a2.unwrap_or_default(),
                s.types.unwrap_or_default(),
            );
            match s.covers {
                Some(covers) => {
                    let pairs: Vec<(usize, usize)> = covers.iter().map(|p| (p[0], p[1])).collect();
                    GeneralGame::with_order(a1, &pairs, a2, types, u1, u2)?
                }
                None => GeneralGame::with_chain(a1, a2, types, u1, u2)?,
            }
        }
    };
    Ok(game)
}

fn has_loss(cfg: &RunConfig) -> bool {
    cfg.game
        .loss
        .as_ref()
        .is_some_and(|l| l.iter().any(|&d| d != 0.0))
}

/// Closed-form bound for type `j`, where the variant has one.
fn closed_form<S: Scalar>(cfg: &RunConfig, j: usize) -> Result<Option<S>, RunError> {
    let g = &cfg.game;
    let (tj, t1) = (lift::<S>(g.thetas[j]), lift::<S>(g.thetas[0]));
    let gs = || gamma_star::<S>(&lift(g.b), &lift(g.c));
    Ok(match cfg.variant {
        Variant::TrustSequential => Some(v_star(&tj, &t1, &gs()?)?),
        Variant::TrustSimultaneous if !has_loss(cfg) => Some(v_star(&tj, &t1, &gs()?)?),
        Variant::CapitalTaxation => Some(capital_taxation_vstar(&tj, &t1, &gs()?)?),
        _ => None,
    })
}

fn same<S: Scalar>(a: &S, b: &S) -> bool {
    if S::is_exact() {
        a == b
    } else {
        (a.to_f64() - b.to_f64()).abs() <= 1e-12
    }
}

fn payoff_rows<S: Scalar + Display>(cfg: &RunConfig) -> Result<(Vec<PayoffRow>, bool), RunError> {
    let g = &cfg.game;
    let trust = cfg.variant.has_construction() && !has_loss(cfg);
    let game = stage_game::<S>(cfg)?;
    let v_gamma = if trust {
        Some(v_of_gamma::<S>(&cfg.spec(), &lift(g.gamma))?)
    } else {
        None
    };
    let gs = if trust {
        Some(gamma_star::<S>(&lift(g.b), &lift(g.c))?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut all = true;
    for j in 0..game.types.len() {
        let closed = closed_form::<S>(cfg, j)?;
        let lp = if cfg.variant == Variant::TrustSequential {
            let gs = gs.clone().expect("trust variant");
            solve_trust_lp(&lift::<S>(g.thetas[j]), &lift(g.thetas[0]), &gs)?.1
        } else {
            solve_general_lp(&game, j)?
        };
        let commit = match &gs {
            Some(gs) => Some(stackelberg_payoff(&lift::<S>(g.thetas[j]), gs)?),
            None => None,
        };
        let vg = v_gamma.as_ref().map(|v| v.0[j].clone());
        let agree = closed.as_ref().is_none_or(|c| same(c, &lp));
        all &= agree;
        let exact = S::is_exact().then(|| ExactRow {
            v_commit: commit.as_ref().map(|x| x.to_string()),
            v_star: closed.as_ref().map(|x| x.to_string()),
            v_star_lp: lp.to_string(),
            v_gamma: vg.as_ref().map(|x| x.to_string()),
        });
        rows.push(PayoffRow {
            type_index: j,
            theta: (cfg.variant != Variant::General).then(|| g.thetas[j]),
            v_commit: commit.map(|x| x.to_f64()),
            v_star: closed.map(|x| x.to_f64()),
            v_star_lp: lp.to_f64(),
            v_gamma: vg.map(|x| x.to_f64()),
            agree,
            exact,
        });
    }
    Ok((rows, all))
}

fn lp_rows(cfg: &RunConfig) -> Result<Vec<LpRow>, RunError> {
    let g = &cfg.game;
    let exact_game = stage_game::<Rational>(cfg)?;
    let float_game = stage_game::<f64>(cfg)?;
    let trust_program = cfg.variant == Variant::TrustSequential;
    let mesh = cfg
        .audit
        .mesh
        .unwrap_or(if trust_program { 1e-3 } else { 1e-2 });
    let grid_tol = cfg.audit.grid_tol.unwrap_or(5.0 * mesh);
    let mut rows = Vec::new();
    for j in 0..exact_game.types.len() {
        let closed = closed_form::<Rational>(cfg, j)?;
        let (lp_exact, lp_f64, grid) = if trust_program {
            let gs = gamma_star::<Rational>(&lift(g.b), &lift(g.c))?;
            let gsf = gamma_star(&g.b, &g.c)?;
            let (tj, t1) = (g.thetas[j], g.thetas[0]);
            let exact = solve_trust_lp(&lift::<Rational>(tj), &lift(t1), &gs)?.1;
            let float = solve_trust_lp(&tj, &t1, &gsf)?.1;
            let grid = grid_oracle(&TrustLp::new(tj, t1, gsf)?, mesh)?;
            (exact, float, grid)
        } else {
            let exact = solve_general_lp(&exact_game, j)?;
            let float = solve_general_lp(&float_game, j)?;
            let grid = grid_oracle(&GeneralProgram::new(&float_game, j)?, mesh)?;
            (exact, float, grid)
        };
        let exact_f = lp_exact.to_f64();
        let gap = (grid - exact_f).abs();
        let passed = closed.as_ref().is_none_or(|c| *c == lp_exact)
            && (lp_f64 - exact_f).abs() <= 1e-12
            && gap <= grid_tol;
        rows.push(LpRow {
            type_index: j,
            closed_form: closed.map(|c| c.to_string()),
            lp_exact: lp_exact.to_string(),
            lp_exact_f64: exact_f,
            lp_f64,
            grid,
            mesh,
            grid_gap: gap,
            grid_tol,
            passed,
        });
    }
    Ok(rows)
}
