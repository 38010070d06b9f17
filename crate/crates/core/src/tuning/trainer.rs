//! The finetuning loop: round-robin over a subject's images, one
//! AdamW update of exactly the low-rank factors and adapter per step.

use crate::adaptation::{LoraSet, MaskAdapter};
use crate::autodiff::Tape;
use crate::diffusion::{Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, rng_from_seed, subseed, uniform_usize, Prng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tuning::config::TrainConfig;
use crate::tuning::loss::{compute_losses, StagedBranch};
use crate::tuning::optim::AdamW;

/// The identity-irrelevant branch: the trainable mask adapter, or a frozen
/// random projection for the adapter-less ablation.
#[derive(Debug, Clone)]
pub enum IrrelevantBranch<E> {
    Adapter(MaskAdapter<E>),
    FrozenProjection(Tensor<E>),
}

impl<E: Scalar> IrrelevantBranch<E> {
    pub fn adapter(dim: usize, seed: u64) -> Self {
        IrrelevantBranch::Adapter(MaskAdapter::init(dim, seed))
    }

    /// Frozen `(dim, dim)` Gaussian projection; keeps the ablated variant
    /// runnable with a dimension-matching visual embedding.
    pub fn frozen_projection(dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(subseed(seed, "frozen-projection"));
        IrrelevantBranch::FrozenProjection(normal_tensor(
            &mut rng,
            vec![dim, dim],
            1.0 / (dim as f64).sqrt(),
        ))
    }

    fn stage(&self, tape: &mut Tape<E>, trainable: bool) -> Result<StagedBranch> {
        Ok(match self {
            IrrelevantBranch::Adapter(a) => StagedBranch::Adapter(a.stage(tape, trainable)?),
            IrrelevantBranch::FrozenProjection(p) => {
                StagedBranch::FrozenProjection(tape.constant(p.clone())?)
            }
        })
    }

    pub fn visit_params(&self, f: impl FnMut(&str, &Tensor<E>)) {
        if let IrrelevantBranch::Adapter(a) = self {
            a.visit_params(f);
        }
    }

    pub fn visit_params_mut(&mut self, f: impl FnMut(&str, &mut Tensor<E>)) {
        if let IrrelevantBranch::Adapter(a) = self {
            a.visit_params_mut(f);
        }
    }

    pub fn cast<F: Scalar>(&self) -> IrrelevantBranch<F> {
        match self {
            IrrelevantBranch::Adapter(a) => IrrelevantBranch::Adapter(a.cast()),
            IrrelevantBranch::FrozenProjection(p) => IrrelevantBranch::FrozenProjection(p.cast()),
        }
    }
}

/// Everything training updates.
#[derive(Debug, Clone)]
pub struct TunedState<E> {
    pub lora: LoraSet<E>,
    pub branch: IrrelevantBranch<E>,
}

impl<E: Scalar> TunedState<E> {
    /// Visit trainable tensors in canonical order: low-rank factors in
    /// registry order, then the adapter.
    pub fn visit_trainables(&self, mut f: impl FnMut(&str, &Tensor<E>)) {
        self.lora.visit_params(&mut f);
        self.branch.visit_params(&mut f);
    }

    pub fn visit_trainables_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<E>)) {
        self.lora.visit_params_mut(&mut f);
        self.branch.visit_params_mut(&mut f);
    }

    pub fn trainable_tensor_count(&self) -> usize {
        let mut n = 0;
        self.visit_trainables(|_, _| n += 1);
        n
    }
}

/// Closed-form trainable parameter count: `sum (d + k) * r` over wrapped
/// maps plus the adapter's own parameters.
pub fn trainable_param_count<E: Scalar>(state: &TunedState<E>) -> usize {
    let adapter = match &state.branch {
        IrrelevantBranch::Adapter(a) => a.param_count(),
        IrrelevantBranch::FrozenProjection(_) => 0,
    };
    state.lora.param_count_formula() + adapter
}

/// Diagnostics of one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub t: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub grad_norm: f64,
}

/// One subject's finetuning session over a frozen denoiser and schedule.
pub struct Trainer<'a, E> {
    denoiser: &'a Denoiser<E>,
    sched: &'a NoiseSchedule<E>,
    cfg: TrainConfig,
    pub state: TunedState<E>,
    optimizer: AdamW<E>,
    rng: Prng,
    iteration: usize,
}

impl<'a, E: Scalar> Trainer<'a, E> {
    pub fn new(
        denoiser: &'a Denoiser<E>,
        sched: &'a NoiseSchedule<E>,
        cfg: TrainConfig,
        state: TunedState<E>,
    ) -> Result<Self> {
        cfg.validate()?;
        let optimizer = AdamW::new(&cfg);
        let rng = rng_from_seed(subseed(cfg.seed, "train-noise"));
        Ok(Trainer { denoiser, sched, cfg, state, optimizer, rng, iteration: 0 })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn optimizer(&self) -> &AdamW<E> {
        &self.optimizer
    }

    /// One optimization step on one image: draw `(eps, t)` once, assemble
    /// the loss, backpropagate, and update exactly the trainable set.
    pub fn train_step(
        &mut self,
        z: &Tensor<E>,
        f_p: &Tensor<E>,
        fs_tokens: &Tensor<E>,
    ) -> Result<StepRecord> {
        let (c, h, w) = self.denoiser.config().latent;
        // one (eps, t) pair per step, shared by both denoising passes;
        // eps is drawn first, then t
        let eps = normal_tensor::<E>(&mut self.rng, vec![c, h, w], 1.0);
        let t = uniform_usize(&mut self.rng, 1, self.sched.timesteps());

        let mut tape = Tape::<E>::new();
        let staged_den = self.denoiser.stage(&mut tape)?;
        let staged_lora = self.state.lora.stage(&mut tape, true)?;
        let staged_branch = self.state.branch.stage(&mut tape, true)?;

        let parts = compute_losses(
            &mut tape,
            self.denoiser,
            &staged_den,
            Some(&staged_lora.map),
            &staged_branch,
            self.sched,
            fs_tokens,
            f_p,
            z,
            eps,
            t,
            self.cfg.lambda2,
            self.cfg.lambda3,
        )
        .map_err(|e| Error::NonFinite(format!("iteration {}: {e}", self.iteration + 1)))?;

        let record = StepRecord {
            iteration: self.iteration + 1,
            t,
            l1: tape.value(parts.l1).item().to_f64(),
            l2: tape.value(parts.l2).item().to_f64(),
            l3: tape.value(parts.l3).item().to_f64(),
            total: tape.value(parts.total).item().to_f64(),
            grad_norm: 0.0,
        };

        tape.backward(parts.total)?;

        // gradients in canonical order, matching visit_trainables_mut
        let mut ordered = staged_lora.vars_in_order();
        if let StagedBranch::Adapter(a) = &staged_branch {
            ordered.extend(a.vars_in_order());
        }
        let mut grads = Vec::with_capacity(ordered.len());
        let mut sq_sum = 0.0f64;
        for (name, var) in &ordered {
            let g = tape
                .grad(*var)
                .ok_or_else(|| Error::Contract(format!("missing gradient for {name}")))?;
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
            sq_sum += g.data().iter().map(|v| v.to_f64() * v.to_f64()).sum::<f64>();
            grads.push(g);
        }

        self.optimizer.begin_step();
        let mut slot = 0usize;
        let optimizer = &mut self.optimizer;
        let mut update_err = None;
        self.state.visit_trainables_mut(|_, tensor| {
            if update_err.is_some() {
                return;
            }
            if let Err(e) = optimizer.update(slot, tensor.data_mut(), grads[slot].data()) {
                update_err = Some(e);
            }
            slot += 1;
        });
        if let Some(e) = update_err {
            return Err(e);
        }
        debug_assert_eq!(slot, grads.len());

        self.iteration += 1;
        Ok(StepRecord { grad_norm: sq_sum.sqrt(), ..record })
    }

    /// Run the full loop, cycling images round-robin. `on_record` sees every
    /// step; `on_save` fires at each save interval and at the end.
    pub fn train(
        &mut self,
        images: &[Tensor<E>],
        pooled_features: &[Tensor<E>],
        fs_tokens: &Tensor<E>,
        mut on_record: impl FnMut(&StepRecord),
        mut on_save: impl FnMut(usize, &TunedState<E>, &AdamW<E>) -> Result<()>,
    ) -> Result<()> {
        if images.is_empty() || images.len() != pooled_features.len() {
            return Err(Error::Input(format!(
                "need matching images and features, got {} and {}",
                images.len(),
                pooled_features.len()
            )));
        }
        for step in 0..self.cfg.iterations {
            let idx = step % images.len();
            let record = self.train_step(&images[idx], &pooled_features[idx], fs_tokens)?;
            on_record(&record);
            if record.iteration % self.cfg.save_interval == 0
                || record.iteration == self.cfg.iterations
            {
                on_save(record.iteration, &self.state, &self.optimizer)?;
            }
        }
        Ok(())
    }
}
