use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::gateway::BackendConfig;
use crate::prompting::ShotMode;
use crate::verifier::{Engine, NuxmvConfig, NuxmvVerifier, StubVerifier, Verifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanGate {
    #[default]
    Off,
    ConfirmEachStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierKind {
    #[default]
    Nuxmv,
    /// Reports every property as true.
    Stub,
    /// Replays raw checker outputs from `script`, one file per call.
    Scripted,
}

fn yes() -> bool {
    true
}

fn default_verifier_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub kind: VerifierKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<PathBuf>,
    #[serde(default = "default_verifier_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            enabled: true,
            kind: VerifierKind::Nuxmv,
            binary: None,
            timeout_secs: default_verifier_timeout(),
            engine: Engine::Default,
            script: None,
        }
    }
}

impl VerifierConfig {
    pub fn build(&self) -> Result<Option<Arc<dyn Verifier>>, PipelineError> {
        if !self.enabled {
            return Ok(None);
        }
        let v: Arc<dyn Verifier> = match self.kind {
            VerifierKind::Nuxmv => Arc::new(NuxmvVerifier {
                config: NuxmvConfig {
                    binary: self.binary.clone(),
                    timeout_secs: self.timeout_secs,
                    engine: self.engine,
                },
            }),
            VerifierKind::Stub => Arc::new(StubVerifier::AlwaysProven),
            VerifierKind::Scripted => {
                let dir = self
                    .script
                    .as_deref()
                    .ok_or_else(|| PipelineError::Config("scripted verifier requires a script directory".into()))?;
                Arc::new(StubVerifier::load(dir)?)
            }
        };
        Ok(Some(v))
    }
}

fn default_generation_temperature() -> f64 {
    0.7
}

fn default_fix_temperature() -> f64 {
    0.2
}

fn default_max_tokens() -> u32 {
    2048
}

fn default_syntax_budget() -> u32 {
    10
}

fn default_smv_budget() -> u32 {
    5
}

fn default_verify_budget() -> u32 {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_max_steps() -> usize {
    20
}

/// Everything that determines a run. Budgets count LLM fix calls per run,
/// summed over all passes through a loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub shot_mode: ShotMode,
    pub backend: BackendConfig,
    #[serde(default = "default_generation_temperature")]
    pub generation_temperature: f64,
    #[serde(default = "default_fix_temperature")]
    pub fix_temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_syntax_budget")]
    pub max_syntax_fix_iterations: u32,
    #[serde(default = "default_smv_budget")]
    pub max_smv_fix_iterations: u32,
    #[serde(default = "default_verify_budget")]
    pub max_verify_fix_iterations: u32,
    #[serde(default)]
    pub verifier: VerifierConfig,
    #[serde(default)]
    pub human_gate: HumanGate,
    /// Generate without a design plan, as in the plain prompting baselines.
    #[serde(default)]
    pub skip_plan: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Overrides the built-in prompt templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    #[serde(default = "default_max_steps")]
    pub counterexample_max_steps: usize,
    /// Directory relative paths were resolved against. Not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(backend: BackendConfig) -> Self {
        PipelineConfig {
            shot_mode: ShotMode::default(),
            backend,
            generation_temperature: default_generation_temperature(),
            fix_temperature: default_fix_temperature(),
            max_tokens: default_max_tokens(),
            max_syntax_fix_iterations: default_syntax_budget(),
            max_smv_fix_iterations: default_smv_budget(),
            max_verify_fix_iterations: default_verify_budget(),
            verifier: VerifierConfig::default(),
            human_gate: HumanGate::Off,
            skip_plan: false,
            output_dir: default_output_dir(),
            seed: DEFAULT_SEED,
            templates_dir: None,
            counterexample_max_steps: default_max_steps(),
            base_dir: None,
        }
    }

    /// Reads a JSON config. Relative paths inside it are resolved against
    /// the directory containing the file.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.base_dir = Some(base.to_path_buf());
        self.backend.resolve_paths(base);
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [&mut self.templates_dir, &mut self.verifier.script].into_iter().flatten() {
            fix(p);
        }
        if let Some(b) = &mut self.verifier.binary {
            // Bare names are looked up on the search path.
            if b.components().count() > 1 {
                fix(b);
            }
        }
    }

    /// The effective configuration as recorded in `run.json`. Paths under the
    /// config directory are shown relative to it and the output directory is
    /// omitted, so the record does not depend on where it was produced.
    pub fn echo(&self) -> serde_json::Value {
        let mut c = self.clone();
        if let Some(base) = &self.base_dir {
            let rel = |p: &mut PathBuf| {
                if let Ok(r) = p.strip_prefix(base) {
                    *p = r.to_path_buf();
                }
            };
            for p in [
                &mut c.backend.script,
                &mut c.backend.cache,
                &mut c.templates_dir,
                &mut c.verifier.script,
                &mut c.verifier.binary,
            ]
            .into_iter()
            .flatten()
            {
                rel(p);
            }
        }
        let mut v = serde_json::to_value(&c).unwrap_or_default();
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        v
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, v) in [
            ("max_syntax_fix_iterations", self.max_syntax_fix_iterations),
            ("max_smv_fix_iterations", self.max_smv_fix_iterations),
            ("max_verify_fix_iterations", self.max_verify_fix_iterations),
        ] {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, t) in
            [("generation_temperature", self.generation_temperature), ("fix_temperature", self.fix_temperature)]
        {
            if !t.is_finite() || !(0.0..=2.0).contains(&t) {
                return Err(PipelineError::Config(format!("{name} must be within 0..2")));
            }
        }
        if self.max_tokens == 0 {
            return Err(PipelineError::Config("max_tokens must be positive".into()));
        }
        if self.counterexample_max_steps == 0 {
            return Err(PipelineError::Config("counterexample_max_steps must be positive".into()));
        }
        self.backend.validate()?;
        Ok(())
    }
}
