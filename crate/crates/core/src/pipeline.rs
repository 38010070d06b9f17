//! End-to-end assembly: frozen components from a run config, condition
//! composition, tuned-state sampling, and checkpoint persistence.

use crate::adaptation::LoraSet;
use crate::autodiff::Tape;
use crate::diffusion::{ddim_sample_opts, Denoiser, DenoiserConfig, NoiseSchedule, ScheduleKind};
use crate::encoders::{IdentityCodec, ImageEncoder, TextEncoder, Vocabulary, ENCODER_SEED};
use crate::error::{Error, Result};
use crate::io::checkpoint::{Checkpoint, CkptEntry, CONFIG_ENTRY};
use crate::io::runconfig::RunConfig;
use crate::kernels as k;
use crate::rng::subseed;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tuning::{IrrelevantBranch, StagedBranch, Trainer, TrainConfig, TunedState};

/// Architecture constants not exposed through run configs.
pub const BASE_CHANNELS: usize = 16;
pub const DEPTH: usize = 1;
pub const TIME_EMBED_DIM: usize = 32;
pub const GROUPS: usize = 4;

/// Reserved checkpoint entry names.
pub const SUBJECT_ENTRY: &str = "__subject__";
pub const VARIANT_ENTRY: &str = "__variant__";
pub const OPTIM_STEP_ENTRY: &str = "__optim_step__";

/// The frozen stack built deterministically from one run config.
pub struct Pipeline<E> {
    pub run: RunConfig,
    pub denoiser: Denoiser<E>,
    pub text: TextEncoder<E>,
    pub image: ImageEncoder<E>,
    pub codec: IdentityCodec,
    pub schedule: NoiseSchedule<E>,
}

impl<E: Scalar> Pipeline<E> {
    pub fn from_run_config(run: &RunConfig) -> Result<Self> {
        run.validate()?;
        let dcfg = DenoiserConfig {
            latent: (3, run.image_size, run.image_size),
            cond_dim: run.cond_dim,
            cond_len: run.cond_len,
            base_channels: BASE_CHANNELS,
            depth: DEPTH,
            time_embed_dim: TIME_EMBED_DIM,
            groups: GROUPS,
        };
        Ok(Pipeline {
            denoiser: Denoiser::init(dcfg, run.seed)?,
            text: TextEncoder::init(
                Vocabulary::canonical().len(),
                run.cond_len,
                run.cond_dim,
                ENCODER_SEED,
            ),
            image: ImageEncoder::init((3, run.image_size, run.image_size), run.cond_dim, ENCODER_SEED),
            codec: IdentityCodec,
            schedule: NoiseSchedule::make(run.timesteps, ScheduleKind::Cosine)?,
            run: run.clone(),
        })
    }

    /// Pipeline for verification at a different element type.
    pub fn cast<F: Scalar>(&self) -> Result<Pipeline<F>> {
        Pipeline::from_run_config(&self.run)
    }

    /// Tokenize and encode a prompt into the `(cond_len, cond_dim)` token
    /// matrix.
    pub fn encode_prompt(&self, prompt: &str) -> Result<Tensor<E>> {
        let ids = Vocabulary::canonical().tokenize(prompt, self.run.cond_len)?;
        self.text.encode(&ids)
    }

    /// Fresh trainable state for one finetuning run.
    pub fn fresh_state(&self, cfg: &TrainConfig, with_adapter: bool) -> Result<TunedState<E>> {
        let lora = LoraSet::inject(&self.denoiser, cfg.lora_rank, cfg.seed)?;
        let branch = if with_adapter {
            IrrelevantBranch::adapter(self.run.cond_dim, cfg.seed)
        } else {
            IrrelevantBranch::frozen_projection(self.run.cond_dim, cfg.seed)
        };
        Ok(TunedState { lora, branch })
    }

    /// The identity-irrelevant embedding of one image under the tuned state.
    pub fn visual_embedding(&self, state: &TunedState<E>, image: &Tensor<E>) -> Result<Tensor<E>> {
        let f_p = self.image.encode(image)?;
        let mut tape = Tape::no_grad();
        let staged = match &state.branch {
            IrrelevantBranch::Adapter(a) => StagedBranch::Adapter(a.stage(&mut tape, false)?),
            IrrelevantBranch::FrozenProjection(p) => {
                StagedBranch::FrozenProjection(tape.constant(p.clone())?)
            }
        };
        let fp_var = tape.constant(f_p)?;
        let out = staged.forward(&mut tape, fp_var)?;
        Ok(tape.value(out).clone())
    }

    /// Compose a condition: prompt tokens plus an optional weighted visual
    /// embedding broadcast onto every token.
    pub fn compose_condition(
        &self,
        fs_tokens: &Tensor<E>,
        visual: Option<(&Tensor<E>, f64)>,
    ) -> Result<Tensor<E>> {
        let (l, d) = (self.run.cond_len, self.run.cond_dim);
        if fs_tokens.shape() != [l, d] {
            return Err(Error::Dimension {
                op: "compose_condition",
                lhs: fs_tokens.shape().to_vec(),
                rhs: vec![l, d],
            });
        }
        match visual {
            None => Ok(fs_tokens.clone()),
            Some((f_i, eta)) => {
                if f_i.shape() != [d] {
                    return Err(Error::Dimension {
                        op: "compose_condition",
                        lhs: f_i.shape().to_vec(),
                        rhs: vec![d],
                    });
                }
                let scaled = k::ew_scale(f_i.data(), E::from_f64(eta));
                let data = k::add_bias_row(fs_tokens.data(), &scaled, l, d);
                Tensor::new(vec![l, d], data)
            }
        }
    }

    /// Zero text tokens with the visual embedding broadcast onto every
    /// position (the "visual only" condition).
    pub fn visual_only_condition(&self, f_i: &Tensor<E>) -> Result<Tensor<E>> {
        let zeros = Tensor::zeros(vec![self.run.cond_len, self.run.cond_dim]);
        self.compose_condition(&zeros, Some((f_i, 1.0)))
    }

    /// One noise prediction without gradients.
    pub fn predict(
        &self,
        state: &TunedState<E>,
        z_t: &Tensor<E>,
        t: usize,
        cond: &Tensor<E>,
    ) -> Result<Tensor<E>> {
        let mut tape = Tape::no_grad();
        let staged = self.denoiser.stage(&mut tape)?;
        let lora = state.lora.stage(&mut tape, false)?;
        let zv = tape.constant(z_t.clone())?;
        let cv = tape.constant(cond.clone())?;
        let coeffs = (self.schedule.alpha(t)?, self.schedule.sigma(t)?);
        let out = self.denoiser.predict_noise(&mut tape, &staged, Some(&lora.map), zv, t, coeffs, cv)?;
        Ok(tape.value(out).clone())
    }

    /// Deterministic DDIM sampling under a composed condition, returning
    /// the decoded image.
    pub fn sample(
        &self,
        state: &TunedState<E>,
        cond: &Tensor<E>,
        steps: usize,
        seed: u64,
    ) -> Result<Tensor<E>> {
        let (c, h, w) = self.denoiser.config().latent;
        let latent = ddim_sample_opts(
            |z_t, t| self.predict(state, z_t, t, cond),
            &self.schedule,
            vec![c, h, w],
            steps,
            seed,
            true,
        )?;
        Ok(self.codec.decode(&latent))
    }

    /// Build a trainer plus the per-image inputs for one subject.
    pub fn trainer_inputs(
        &self,
        prompt: &str,
        images: &[Tensor<E>],
    ) -> Result<(Tensor<E>, Vec<Tensor<E>>, Vec<Tensor<E>>)> {
        let fs_tokens = self.encode_prompt(prompt)?;
        let latents: Vec<Tensor<E>> = images.iter().map(|x| self.codec.encode(x)).collect();
        let pooled: Vec<Tensor<E>> = images
            .iter()
            .map(|x| self.image.encode(x))
            .collect::<Result<_>>()?;
        Ok((fs_tokens, latents, pooled))
    }

    /// Run a full finetuning session and return the tuned state with its
    /// step records.
    pub fn train_subject(
        &self,
        prompt: &str,
        images: &[Tensor<E>],
        cfg: &TrainConfig,
        with_adapter: bool,
    ) -> Result<(TunedState<E>, Vec<crate::tuning::StepRecord>)> {
        let (fs_tokens, latents, pooled) = self.trainer_inputs(prompt, images)?;
        let state = self.fresh_state(cfg, with_adapter)?;
        let mut trainer = Trainer::new(&self.denoiser, &self.schedule, cfg.clone(), state)?;
        let mut records = Vec::with_capacity(cfg.iterations);
        trainer.train(
            &latents,
            &pooled,
            &fs_tokens,
            |r| records.push(r.clone()),
            |_, _, _| Ok(()),
        )?;
        Ok((trainer.state, records))
    }
}

// ── checkpoint persistence of tuned state ───────────────────────────

/// Serialize a tuned state (plus optional optimizer moments) into the
/// checkpoint format, embedding the run config and subject id.
pub fn state_to_checkpoint<E: Scalar>(
    run: &RunConfig,
    subject_id: usize,
    variant: &str,
    state: &TunedState<E>,
    optimizer: Option<&crate::tuning::AdamW<E>>,
) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new();
    ckpt.push(CkptEntry::from_text(CONFIG_ENTRY, &run.canonical_text()))?;
    ckpt.push(CkptEntry::from_text(SUBJECT_ENTRY, &subject_id.to_string()))?;
    ckpt.push(CkptEntry::from_text(VARIANT_ENTRY, variant))?;
    let mut push_err = None;
    state.visit_trainables(|name, tensor| {
        if push_err.is_none() {
            if let Err(e) = ckpt.push(CkptEntry::from_tensor(name, tensor)) {
                push_err = Some(e);
            }
        }
    });
    if let Some(e) = push_err {
        return Err(e);
    }
    if let IrrelevantBranch::FrozenProjection(p) = &state.branch {
        ckpt.push(CkptEntry::from_tensor("branch.projection", p))?;
    }
    if let Some(opt) = optimizer {
        ckpt.push(CkptEntry::from_text(OPTIM_STEP_ENTRY, &opt.step_count().to_string()))?;
        let (ms, vs) = opt.moments();
        let mut names = Vec::new();
        state.visit_trainables(|name, _| names.push(name.to_string()));
        for (i, name) in names.iter().enumerate() {
            let m = Tensor::<E>::new(vec![ms[i].len()], ms[i].clone())?;
            let v = Tensor::<E>::new(vec![vs[i].len()], vs[i].clone())?;
            ckpt.push(CkptEntry::from_tensor(format!("optim.{name}.m"), &m))?;
            ckpt.push(CkptEntry::from_tensor(format!("optim.{name}.v"), &v))?;
        }
    }
    Ok(ckpt)
}

/// A tuned run reconstructed from a checkpoint.
pub struct LoadedRun<E> {
    pub pipeline: Pipeline<E>,
    pub subject_id: usize,
    pub variant: String,
    pub state: TunedState<E>,
}

/// Rebuild the pipeline from the embedded config and restore the tuned
/// state from a checkpoint.
pub fn load_run<E: Scalar>(ckpt: &Checkpoint) -> Result<LoadedRun<E>> {
    let run = RunConfig::parse(&ckpt.config_text()?)?;
    let pipeline = Pipeline::<E>::from_run_config(&run)?;
    let subject_id: usize = ckpt
        .get(SUBJECT_ENTRY)
        .ok_or_else(|| Error::format("checkpoint", "missing __subject__ entry"))?
        .text()?
        .parse()
        .map_err(|_| Error::format("checkpoint", "bad __subject__ entry"))?;
    let variant = match ckpt.get(VARIANT_ENTRY) {
        Some(e) => e.text()?,
        None => "full".to_string(),
    };

    let mut lora = LoraSet::inject(&pipeline.denoiser, run.lora_rank, run.seed)?;
    let mut load_err: Option<Error> = None;
    lora.visit_params_mut(|name, tensor| {
        if load_err.is_some() {
            return;
        }
        match ckpt.get(name) {
            Some(entry) => match entry.to_tensor::<E>() {
                Ok(t) if t.shape() == tensor.shape() => *tensor = t,
                Ok(t) => {
                    load_err = Some(Error::Dimension {
                        op: "checkpoint load",
                        lhs: t.shape().to_vec(),
                        rhs: tensor.shape().to_vec(),
                    })
                }
                Err(e) => load_err = Some(e),
            },
            None => load_err = Some(Error::format("checkpoint", format!("missing entry {name}"))),
        }
    });
    if let Some(e) = load_err {
        return Err(e);
    }

    let branch = if ckpt.get("adapter.m_raw").is_some() {
        let mut adapter = crate::adaptation::MaskAdapter::<E>::init(run.cond_dim, run.seed);
        let mut err = None;
        adapter.visit_params_mut(|name, tensor| {
            if err.is_some() {
                return;
            }
            match ckpt.get(name).map(|e| e.to_tensor::<E>()) {
                Some(Ok(t)) if t.shape() == tensor.shape() => *tensor = t,
                Some(Ok(_)) | None => {
                    err = Some(Error::format("checkpoint", format!("bad adapter entry {name}")))
                }
                Some(Err(e)) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        IrrelevantBranch::Adapter(adapter)
    } else if let Some(entry) = ckpt.get("branch.projection") {
        IrrelevantBranch::FrozenProjection(entry.to_tensor::<E>()?)
    } else {
        return Err(Error::format("checkpoint", "missing identity-irrelevant branch entries"));
    };

    Ok(LoadedRun { pipeline, subject_id, variant, state: TunedState { lora, branch } })
}

/// Seed for the n-th sampled image of an evaluation stream.
pub fn sample_seed(base: u64, stream: &str, index: u64) -> u64 {
    subseed(base, &format!("sample.{stream}.{index}"))
}
