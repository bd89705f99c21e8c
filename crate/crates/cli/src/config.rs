//! Run configuration: a TOML document with `game`, `stage`, `experiment`,
//! `audit` and `output` blocks. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use trustrep::game::GameSpec;
use trustrep::sim::default_horizon;

pub const CONFIG_SCHEMA: &str = "trustrep-config/1";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    TrustSequential,
    TrustSimultaneous,
    CapitalTaxation,
    LimitPricing,
    MonetaryPolicy,
    General,
}

impl Variant {
    /// Variants the equilibrium construction applies to.
    pub fn has_construction(self) -> bool {
        matches!(self, Variant::TrustSequential | Variant::TrustSimultaneous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: Option<String>,
    variant: Option<Variant>,
    game: RawGame,
    stage: Option<StageParams>,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    audit: RawAudit,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    b: Option<f64>,
    c: Option<f64>,
    thetas: Option<Vec<f64>>,
    prior: Option<Vec<f64>>,
    delta: Option<f64>,
    gamma: Option<f64>,
    /// Per-type loss from honoring without trust (simultaneous-move variants).
    loss: Option<Vec<f64>>,
}

/// Extra stage-game parameters for the monetary-policy and general variants.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageParams {
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    pub y1: Option<f64>,
    pub y2: Option<f64>,
    pub a1: Option<Vec<String>>,
    pub a2: Option<[String; 2]>,
    pub types: Option<Vec<String>>,
    /// `u1[type][a1] = [payoff against a2[0], payoff against a2[1]]`.
    pub u1: Option<Vec<Vec<[f64; 2]>>>,
    pub u2: Option<Vec<[f64; 2]>>,
    /// Covering pairs `[upper, lower]` of the seller's action order; a chain
    /// by index when absent.
    pub covers: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    n_paths: Option<u64>,
    horizon: Option<u64>,
    seed0: Option<u64>,
    traces: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAudit {
    depth: Option<usize>,
    n_sampled: Option<usize>,
    max_depth: Option<usize>,
    payoff_tol: Option<f64>,
    recursion_depth: Option<u32>,
    kl_eps: Option<f64>,
    max_len: Option<usize>,
    freq_eps: Option<f64>,
    freq_window: Option<f64>,
    mesh: Option<f64>,
    grid_tol: Option<f64>,
    exact_depth: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameParams {
    pub b: f64,
    pub c: f64,
    pub thetas: Vec<f64>,
    pub prior: Vec<f64>,
    pub delta: f64,
    pub gamma: f64,
    pub loss: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentParams {
    pub n_paths: u64,
    pub horizon: u64,
    pub seed0: u64,
    /// Full traces written per type.
    pub traces: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditParams {
    pub depth: usize,
    pub n_sampled: usize,
    pub max_depth: usize,
    pub payoff_tol: f64,
    pub recursion_depth: u32,
    pub kl_eps: f64,
    pub max_len: usize,
    pub freq_eps: Option<f64>,
    pub freq_window: f64,
    /// Grid oracle mesh; `None` picks 1e-3 for the trust program and 1e-2 for
    /// the general one.
    pub mesh: Option<f64>,
    /// Allowed gap between the grid oracle and the exact optimum; `None` means
    /// five times the mesh.
    pub grid_tol: Option<f64>,
    /// Exploration depth for the rational-mode incentive audit.
    pub exact_depth: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputParams {
    pub dir: Option<PathBuf>,
    pub format: Format,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub schema: String,
    pub variant: Variant,
    pub game: GameParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<StageParams>,
    pub experiment: ExperimentParams,
    pub audit: AuditParams,
    pub output: OutputParams,
}

impl RunConfig {
    /// The canonical two-type instance with all defaults.
    pub fn canonical() -> Self {
        let g = GameSpec::canonical();
        Self::materialize(
            Variant::TrustSequential,
            GameParams {
                b: g.b,
                c: g.c,
                thetas: g.thetas,
                prior: g.prior,
                delta: g.delta,
                gamma: g.gamma,
                loss: None,
            },
            None,
            RawExperiment::default(),
            RawAudit::default(),
            RawOutput::default(),
        )
    }

    pub fn spec(&self) -> GameSpec {
        GameSpec {
            b: self.game.b,
            c: self.game.c,
            thetas: self.game.thetas.clone(),
            prior: self.game.prior.clone(),
            delta: self.game.delta,
            gamma: self.game.gamma,
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        parse_config(&text)
    }

    fn materialize(
        variant: Variant,
        game: GameParams,
        stage: Option<StageParams>,
        e: RawExperiment,
        a: RawAudit,
        o: RawOutput,
    ) -> Self {
        RunConfig {
            schema: CONFIG_SCHEMA.to_string(),
            variant,
            experiment: ExperimentParams {
                n_paths: e.n_paths.unwrap_or(10_000),
                horizon: e
                    .horizon
                    .unwrap_or_else(|| default_horizon(game.delta, 1e-4)),
                seed0: e.seed0.unwrap_or(0),
                traces: e.traces.unwrap_or(0),
            },
            audit: AuditParams {
                depth: a.depth.unwrap_or(14),
                n_sampled: a.n_sampled.unwrap_or(10_000),
                max_depth: a.max_depth.unwrap_or(200),
                payoff_tol: a.payoff_tol.unwrap_or(0.01),
                recursion_depth: a.recursion_depth.unwrap_or(10),
                kl_eps: a.kl_eps.unwrap_or(0.01),
                max_len: a.max_len.unwrap_or(12),
                freq_eps: a.freq_eps,
                freq_window: a.freq_window.unwrap_or(0.05),
                mesh: a.mesh,
                grid_tol: a.grid_tol,
                exact_depth: a.exact_depth.unwrap_or(14),
            },
            output: OutputParams {
                dir: o.dir,
                format: o.format.unwrap_or(Format::Json),
            },
            game,
            stage,
        }
    }
}

fn missing(field: &str, variant: Variant) -> ConfigError {
    ConfigError::Invalid(format!(
        "game.{field} is required for variant {}",
        serde_json::to_string(&variant)
            .unwrap_or_default()
            .trim_matches('"')
    ))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
    if let Some(s) = &raw.schema {
        if s != CONFIG_SCHEMA {
            return Err(ConfigError::Invalid(format!(
                "schema `{s}` is not supported (expected `{CONFIG_SCHEMA}`)"
            )));
        }
    }
    let variant = raw.variant.unwrap_or(Variant::TrustSequential);
    let g = raw.game;
    let needs_prior = variant.has_construction();
    let thetas = match (&g.thetas, variant) {
        (None, Variant::General) => raw
            .stage
            .as_ref()
            .and_then(|s| s.types.as_ref())
            .map(|t| vec![0.0; t.len()])
            .unwrap_or_default(),
        (None, _) => return Err(missing("thetas", variant)),
        (Some(t), _) => t.clone(),
    };
    let b = match (g.b, variant) {
        (Some(b), _) => b,
        (None, Variant::MonetaryPolicy | Variant::General) => 1.0,
        (None, _) => return Err(missing("b", variant)),
    };
    let c = match (g.c, variant) {
        (Some(c), _) => c,
        (None, Variant::MonetaryPolicy | Variant::General) => 1.0,
        (None, _) => return Err(missing("c", variant)),
    };
    let prior = match g.prior {
        Some(p) => p,
        None if needs_prior => return Err(missing("prior", variant)),
        None => vec![1.0 / thetas.len().max(1) as f64; thetas.len()],
    };
    let delta = match g.delta {
        Some(d) => d,
        None if needs_prior => return Err(missing("delta", variant)),
        None => 0.99,
    };
    let gamma = match g.gamma {
        Some(x) => x,
        None if needs_prior => return Err(missing("gamma", variant)),
        None => 1.0,
    };
    if let Some(loss) = &g.loss {
        if loss.len() != thetas.len() {
            return Err(ConfigError::Invalid(format!(
                "game.loss has {} entries for {} types",
                loss.len(),
                thetas.len()
            )));
        }
        if variant == Variant::TrustSequential
            || variant == Variant::CapitalTaxation
            || variant == Variant::General
        {
            return Err(ConfigError::Invalid(
                "game.loss applies only to simultaneous-move variants".into(),
            ));
        }
    }
    let game = GameParams {
        b,
        c,
        thetas,
        prior,
        delta,
        gamma,
        loss: g.loss,
    };
    let cfg = RunConfig::materialize(
        variant,
        game,
        raw.stage,
        raw.experiment,
        raw.audit,
        raw.output,
    );
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    let invalid = |m: String| Err(ConfigError::Invalid(m));
    if cfg.variant.has_construction() {
        cfg.spec()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if cfg.variant == Variant::TrustSimultaneous {
            if let Some(loss) = &cfg.game.loss {
                if loss.iter().any(|&d| d < 0.0) {
                    return invalid("game.loss entries must be nonnegative".into());
                }
            }
        }
    }
    match cfg.variant {
        Variant::MonetaryPolicy => {
            let s = cfg.stage.clone().unwrap_or_default();
            if [s.x1, s.x2, s.y1, s.y2].iter().any(Option::is_none) {
                return invalid("variant monetary-policy needs stage.x1, x2, y1 and y2".into());
            }
        }
        Variant::General => {
            let s = cfg.stage.clone().unwrap_or_default();
            if s.a1.is_none()
                || s.a2.is_none()
                || s.types.is_none()
                || s.u1.is_none()
                || s.u2.is_none()
            {
                return invalid("variant general needs stage.a1, a2, types, u1 and u2".into());
            }
        }
        _ => {}
    }
    if !cfg.variant.has_construction() && cfg.variant != Variant::General {
        if cfg.game.thetas.is_empty() {
            return invalid("at least one type is required".into());
        }
        if cfg.game.thetas.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("costs must be strictly increasing".into());
        }
    }
    let a = &cfg.audit;
    if let Some(m) = a.mesh {
        if !(m > 0.0 && m <= 0.1) {
            return invalid(format!("audit.mesh = {m} is outside (0, 0.1]"));
        }
    }
    if a.max_len > 20 {
        return invalid(format!("audit.max_len = {} exceeds 20", a.max_len));
    }
    if cfg.experiment.n_paths == 0 || cfg.experiment.horizon == 0 {
        return invalid("experiment.n_paths and experiment.horizon must be positive".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"
        [game]
        b = 1.0
        c = 1.0
        thetas = [0.2, 0.5]
        prior = [0.9, 0.1]
        delta = 0.99
        gamma = 0.6
    "#;

    #[test]
    fn canonical_document() {
        let cfg = parse_config(CANONICAL).unwrap();
        assert_eq!(cfg.spec(), GameSpec::canonical());
        assert_eq!(cfg.spec().gstar(), 0.5);
        assert_eq!(cfg.experiment.horizon, 917);
        assert_eq!(cfg.output.format, Format::Json);
    }

    #[test]
    fn prior_must_sum_to_one() {
        let doc = CANONICAL.replace("[0.9, 0.1]", "[0.9, 0.08]");
        let err = parse_config(&doc).unwrap_err().to_string();
        assert!(err.contains("prior must sum to 1"), "{err}");
    }

    #[test]
    fn gamma_below_threshold() {
        let doc = CANONICAL.replace("gamma = 0.6", "gamma = 0.4");
        let err = parse_config(&doc).unwrap_err().to_string();
        assert!(err.contains("gamma = 0.4 is outside [0.5, 1]"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = format!("{CANONICAL}\nfoo = 1\n");
        assert!(matches!(parse_config(&doc), Err(ConfigError::Parse(_))));
        let doc = CANONICAL.replace("gamma = 0.6", "gamma = 0.6\nbeta = 2");
        let err = parse_config(&doc).unwrap_err().to_string();
        assert!(err.contains("beta") && err.contains("line"), "{err}");
    }

    #[test]
    fn variant_specific_fields() {
        let doc = "variant = \"capital-taxation\"\n[game]\nb = 1.0\nc = 1.0\nthetas = [0.2, 0.5]\n";
        let cfg = parse_config(doc).unwrap();
        assert_eq!(cfg.variant, Variant::CapitalTaxation);
        let doc = "variant = \"monetary-policy\"\n[game]\nthetas = [0.2, 0.5]\n";
        assert!(parse_config(doc)
            .unwrap_err()
            .to_string()
            .contains("stage.x1"));
    }
}
