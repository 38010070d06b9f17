//! Line-oriented `key = value` run configuration.
//!
//! Unknown keys are rejected; all values are validated at load. The
//! canonical serialization (fixed key order) is what checkpoints embed and
//! digest.

use crate::error::{Error, Result};
use crate::tuning::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub image_size: usize,
    pub cond_dim: usize,
    pub cond_len: usize,
    pub timesteps: usize,
    pub ddim_steps: usize,
    pub lora_rank: usize,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lr: f64,
    pub iterations: usize,
    pub batch: usize,
    pub k_images: usize,
    pub out_dir: String,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            image_size: 32,
            cond_dim: 32,
            cond_len: 8,
            timesteps: 100,
            ddim_steps: 50,
            lora_rank: 4,
            lambda2: 0.01,
            lambda3: 0.001,
            lr: 1e-4,
            iterations: 3000,
            batch: 1,
            k_images: 4,
            out_dir: "out".into(),
            deterministic: true,
        }
    }
}

impl RunConfig {
    /// Parse `key = value` lines. Blank lines and `#` comments are allowed;
    /// unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::Config(format!("line {}: bad {what} value {value:?}", lineno + 1))
            };
            match key {
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "image_size" => cfg.image_size = value.parse().map_err(|_| bad("image_size"))?,
                "cond_dim" => cfg.cond_dim = value.parse().map_err(|_| bad("cond_dim"))?,
                "cond_len" => cfg.cond_len = value.parse().map_err(|_| bad("cond_len"))?,
                "timesteps" => cfg.timesteps = value.parse().map_err(|_| bad("timesteps"))?,
                "ddim_steps" => cfg.ddim_steps = value.parse().map_err(|_| bad("ddim_steps"))?,
                "lora_rank" => cfg.lora_rank = value.parse().map_err(|_| bad("lora_rank"))?,
                "lambda2" => cfg.lambda2 = value.parse().map_err(|_| bad("lambda2"))?,
                "lambda3" => cfg.lambda3 = value.parse().map_err(|_| bad("lambda3"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
                "iterations" => cfg.iterations = value.parse().map_err(|_| bad("iterations"))?,
                "batch" => cfg.batch = value.parse().map_err(|_| bad("batch"))?,
                "k_images" => cfg.k_images = value.parse().map_err(|_| bad("k_images"))?,
                "out_dir" => cfg.out_dir = value.to_string(),
                "deterministic" => {
                    cfg.deterministic = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad("deterministic")),
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Canonical serialization: fixed key order, one `key = value` per line.
    pub fn canonical_text(&self) -> String {
        format!(
            "seed = {}\nimage_size = {}\ncond_dim = {}\ncond_len = {}\ntimesteps = {}\n\
             ddim_steps = {}\nlora_rank = {}\nlambda2 = {}\nlambda3 = {}\nlr = {}\n\
             iterations = {}\nbatch = {}\nk_images = {}\nout_dir = {}\ndeterministic = {}\n",
            self.seed,
            self.image_size,
            self.cond_dim,
            self.cond_len,
            self.timesteps,
            self.ddim_steps,
            self.lora_rank,
            self.lambda2,
            self.lambda3,
            self.lr,
            self.iterations,
            self.batch,
            self.k_images,
            self.out_dir,
            self.deterministic,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.image_size < 8 || self.image_size % 4 != 0 {
            return err(format!(
                "image_size must be >= 8 and divisible by 4, got {}",
                self.image_size
            ));
        }
        if self.cond_dim < 4 || self.cond_dim % 4 != 0 {
            return err(format!("cond_dim must be >= 4 and divisible by 4, got {}", self.cond_dim));
        }
        if self.cond_len < 1 {
            return err("cond_len must be >= 1".into());
        }
        if self.timesteps < 2 {
            return err(format!("timesteps must be >= 2, got {}", self.timesteps));
        }
        if self.ddim_steps < 1 || self.ddim_steps > self.timesteps {
            return err(format!(
                "ddim_steps must lie in 1..={}, got {}",
                self.timesteps, self.ddim_steps
            ));
        }
        if self.k_images < 1 || self.k_images > 432 {
            return err(format!("k_images must lie in 1..=432, got {}", self.k_images));
        }
        if self.out_dir.is_empty() {
            return err("out_dir must not be empty".into());
        }
        // optimizer-side constraints live in TrainConfig validation
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            lr: self.lr,
            iterations: self.iterations,
            batch: self.batch,
            seed: self.seed,
            lora_rank: self.lora_rank,
            ..TrainConfig::default()
        }
    }
}
