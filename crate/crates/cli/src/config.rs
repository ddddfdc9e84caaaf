//! Run configuration resolved as flags > config file > environment > defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hippocampus::cogmap::TrustMode;
use hippocampus::engine::GateMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// `stub` or `remote`.
    pub embedder: String,
    pub dimension: usize,
    pub embed_url: Option<String>,
    /// `scripted:<scenario.json>`, `sim:<task.json>` or `openai`.
    pub backend: Option<String>,
    pub llm_url: Option<String>,
    pub llm_model: Option<String>,
    pub tau_cluster: f64,
    pub trust_mode: TrustMode,
    pub alpha: f64,
    pub hint_trust: f64,
    pub deadlock_trust: f64,
    pub nav_hint: f64,
    pub nav_perturb: f64,
    pub intervention_prob: f64,
    pub perturb_temperature: f64,
    pub base_temperature: f64,
    pub t_max: usize,
    pub gate: GateMode,
    pub red_k: usize,
    pub min_success: u64,
    pub epochs: usize,
    pub hidden: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            embedder: "stub".into(),
            dimension: hippocampus::embed::DEFAULT_DIMENSION,
            embed_url: None,
            backend: None,
            llm_url: None,
            llm_model: None,
            tau_cluster: 0.75,
            trust_mode: TrustMode::Static,
            alpha: 0.9,
            hint_trust: 0.7,
            deadlock_trust: 0.3,
            nav_hint: 0.6,
            nav_perturb: 0.5,
            intervention_prob: 0.5,
            perturb_temperature: 1.5,
            base_temperature: 0.7,
            t_max: 5,
            gate: GateMode::Trust,
            red_k: 20,
            min_success: 2,
            epochs: 100,
            hidden: 256,
        }
    }
}

/// Values given on the command line; `None` leaves lower layers in place.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML file with any RunConfig keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for outputs, the config snapshot and the run log.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Embedding provider: stub or remote.
    #[arg(long, global = true)]
    pub embedder: Option<String>,
    #[arg(long = "dim", global = true)]
    pub dimension: Option<usize>,
    /// Generation backend: scripted:<file>, sim:<task.json> or openai.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long = "tau", global = true)]
    pub tau_cluster: Option<f64>,
    #[arg(long, global = true)]
    pub trust_mode: Option<TrustMode>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub hint_trust: Option<f64>,
    #[arg(long, global = true)]
    pub deadlock_trust: Option<f64>,
    /// Probability of applying a perturbation when a deadlock is detected.
    #[arg(long = "p", global = true)]
    pub intervention_prob: Option<f64>,
    #[arg(long, global = true)]
    pub perturb_temperature: Option<f64>,
    #[arg(long, global = true)]
    pub t_max: Option<usize>,
    /// Intervention gate: trust or navigator.
    #[arg(long, global = true)]
    pub gate: Option<GateMode>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub hidden: Option<usize>,
}

macro_rules! overlay {
    ($cfg:expr, $src:expr, [$($field:ident),* $(,)?]) => {
        $(if let Some(v) = $src.$field.clone() { $cfg.$field = v.into(); })*
    };
}

fn env_value<T: std::str::FromStr>(name: &str) -> anyhow::Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match std::env::var(name) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|e| anyhow::anyhow!("invalid value {v:?} for {name}: {e}")),
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    fn apply_env(&mut self) -> anyhow::Result<()> {
        if let Some(v) = env_value("HIPPO_SEED")? {
            self.seed = v;
        }
        if let Some(v) = env_value::<PathBuf>("HIPPO_OUT_DIR")? {
            self.out_dir = v;
        }
        if let Some(v) = env_value("HIPPO_EMBEDDER")? {
            self.embedder = v;
        }
        if let Some(v) = env_value("HIPPO_DIM")? {
            self.dimension = v;
        }
        if let Some(v) = env_value("HIPPO_BACKEND")? {
            self.backend = Some(v);
        }
        if let Some(v) = env_value(hippocampus::embed::EMBED_URL_ENV)? {
            self.embed_url = Some(v);
        }
        if let Some(v) = env_value(hippocampus::engine::LLM_URL_ENV)? {
            self.llm_url = Some(v);
        }
        if let Some(v) = env_value(hippocampus::engine::LLM_MODEL_ENV)? {
            self.llm_model = Some(v);
        }
        Ok(())
    }

    fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let mut merged = toml::Table::try_from(&*self)?;
        for (k, v) in file {
            merged.insert(k, v);
        }
        *self = merged
            .try_into()
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(())
    }

    fn apply_flags(&mut self, o: &Overrides) {
        overlay!(
            self,
            o,
            [
                seed,
                out_dir,
                embedder,
                dimension,
                tau_cluster,
                trust_mode,
                alpha,
                hint_trust,
                deadlock_trust,
                intervention_prob,
                perturb_temperature,
                t_max,
                gate,
                epochs,
                hidden,
            ]
        );
        if let Some(b) = &o.backend {
            self.backend = Some(b.clone());
        }
    }

    pub fn resolve(o: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_env()?;
        if let Some(path) = &o.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(o);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let unit = [
            ("tau_cluster", self.tau_cluster),
            ("alpha", self.alpha),
            ("hint_trust", self.hint_trust),
            ("deadlock_trust", self.deadlock_trust),
            ("nav_hint", self.nav_hint),
            ("nav_perturb", self.nav_perturb),
            ("intervention_prob", self.intervention_prob),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} = {v} must lie in [0, 1]");
            }
        }
        for (name, v) in [
            ("perturb_temperature", self.perturb_temperature),
            ("base_temperature", self.base_temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} = {v} must be positive");
            }
        }
        if self.dimension == 0 || self.t_max == 0 || self.hidden == 0 {
            bail!("dimension, t_max and hidden must be positive");
        }
        if !matches!(self.embedder.as_str(), "stub" | "remote") {
            bail!("unknown embedder {:?} (expected stub or remote)", self.embedder);
        }
        Ok(())
    }
}
