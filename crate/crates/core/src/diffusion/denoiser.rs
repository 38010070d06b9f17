//! The conditional noise-prediction network.
//!
//! A small U-Net over `(c, h, w)` latents with two conditioning pathways:
//! a sinusoidal timestep embedding injected through frozen per-block
//! projections, and the token-sequence condition injected through (a) FiLM
//! scale/shift projections of the mean-pooled tokens in every residual
//! block and (b) one cross-attention block at the bottleneck.
//!
//! All weights constructed here are frozen; adaptation happens exclusively
//! through low-rank updates of the maps named in [`Denoiser::lora_sites`].

use std::collections::HashMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, rng_from_seed, subseed, Prng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Lower bound on the noise-to-content conversion divisor inside
/// [`Denoiser::predict_noise`].
pub const SIGMA_FLOOR: f64 = 0.3;

/// Shape and width settings of the denoiser.
#[derive(Debug, Clone)]
pub struct DenoiserConfig {
    /// `(channels, height, width)` of the latent the model denoises.
    pub latent: (usize, usize, usize),
    /// Width of each conditioning token.
    pub cond_dim: usize,
    /// Number of conditioning tokens.
    pub cond_len: usize,
    pub base_channels: usize,
    /// Number of down/up resolution stages.
    pub depth: usize,
    pub time_embed_dim: usize,
    /// Group count for all group normalizations.
    pub groups: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            latent: (3, 32, 32),
            cond_dim: 32,
            cond_len: 8,
            base_channels: 16,
            depth: 2,
            time_embed_dim: 32,
            groups: 4,
        }
    }
}

impl DenoiserConfig {
    /// Tiny configuration used by verification tests.
    pub fn micro() -> Self {
        DenoiserConfig {
            latent: (3, 8, 8),
            cond_dim: 8,
            cond_len: 8,
            base_channels: 8,
            depth: 2,
            time_embed_dim: 8,
            groups: 2,
        }
    }

    /// Channels at down/up stage `i`.
    fn stage_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.base_channels
        } else {
            2 * self.base_channels
        }
    }

    fn bottleneck_channels(&self) -> usize {
        2 * self.base_channels
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.latent;
        for (name, v) in [
            ("latent channels", c),
            ("latent height", h),
            ("latent width", w),
            ("cond_dim", self.cond_dim),
            ("cond_len", self.cond_len),
            ("base_channels", self.base_channels),
            ("depth", self.depth),
            ("time_embed_dim", self.time_embed_dim),
            ("groups", self.groups),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        let div = 1usize << self.depth;
        if h % div != 0 || w % div != 0 {
            return Err(Error::Config(format!(
                "latent {h}x{w} not divisible by 2^depth = {div}"
            )));
        }
        for i in 0..self.depth {
            if self.stage_channels(i) % self.groups != 0 {
                return Err(Error::Config(format!(
                    "stage {i} channels {} not divisible by groups {}",
                    self.stage_channels(i),
                    self.groups
                )));
            }
        }
        if self.time_embed_dim % 2 != 0 {
            return Err(Error::Config("time_embed_dim must be even".into()));
        }
        Ok(())
    }
}

/// Token-sequence condition `(cond_len, cond_dim)` fed to the denoiser.
#[derive(Debug, Clone)]
pub struct Condition<E> {
    pub tokens: Tensor<E>,
}

impl<E: Scalar> Condition<E> {
    pub fn new(tokens: Tensor<E>) -> Result<Self> {
        if tokens.shape().len() != 2 {
            return Err(Error::Dimension {
                op: "Condition::new",
                lhs: tokens.shape().to_vec(),
                rhs: vec![],
            });
        }
        if !tokens.all_finite() {
            return Err(Error::NonFinite("condition tokens".into()));
        }
        Ok(Condition { tokens })
    }
}

/// A map eligible for low-rank adaptation: applied as `x * W0^T` with
/// `W0: (d, k)`, bias-free.
#[derive(Debug, Clone)]
pub struct LoraSite {
    pub name: String,
    pub d: usize,
    pub k: usize,
}

struct Conv<E> {
    w: Tensor<E>,
    b: Tensor<E>,
}

impl<E: Scalar> Conv<E> {
    fn init(rng: &mut Prng, co: usize, ci: usize) -> Self {
        let std = 1.0 / ((ci * 9) as f64).sqrt();
        Conv {
            w: normal_tensor(rng, vec![co, ci, 3, 3], std),
            b: Tensor::zeros(vec![co]),
        }
    }
}

struct ResBlock<E> {
    /// FiLM projection of the pooled condition -> per-channel scale/shift.
    /// `(2c, cond_dim)`, bias-free; this is the LoRA site of the block.
    cond_proj: Tensor<E>,
    /// Frozen projection of the time embedding -> per-channel scale/shift.
    time_w: Tensor<E>,
    time_b: Tensor<E>,
    conv1: Conv<E>,
    conv2: Conv<E>,
}

impl<E: Scalar> ResBlock<E> {
    fn init(rng: &mut Prng, c: usize, cond_dim: usize, time_dim: usize) -> Self {
        // conditioning and time projections carry unit-order responses so
        // the frozen network reacts to its inputs; adaptation reshapes the
        // response rather than bootstrapping it from nothing
        ResBlock {
            cond_proj: normal_tensor(rng, vec![2 * c, cond_dim], 1.0 / (cond_dim as f64).sqrt()),
            time_w: normal_tensor(rng, vec![2 * c, time_dim], 1.0 / (time_dim as f64).sqrt()),
            time_b: Tensor::zeros(vec![2 * c]),
            conv1: Conv::init(rng, c, c),
            conv2: Conv::init(rng, c, c),
        }
    }
}

struct CrossAttention<E> {
    wq: Tensor<E>,
    wk: Tensor<E>,
    wv: Tensor<E>,
    wo: Tensor<E>,
    /// Frozen positional embedding added to the query tokens; routing from
    /// condition tokens to spatial positions stays learnable even when the
    /// feature queries are noise-dominated.
    pos: Tensor<E>,
}

impl<E: Scalar> CrossAttention<E> {
    fn init(rng: &mut Prng, c: usize, cond_dim: usize, positions: usize) -> Self {
        let std_c = 1.0 / (c as f64).sqrt();
        let std_d = 1.0 / (cond_dim as f64).sqrt();
        CrossAttention {
            wq: normal_tensor(rng, vec![c, c], std_c),
            wk: normal_tensor(rng, vec![c, cond_dim], std_d),
            wv: normal_tensor(rng, vec![c, cond_dim], std_d),
            wo: normal_tensor(rng, vec![c, c], 0.3 * std_c),
            pos: normal_tensor(rng, vec![positions, c], 1.0),
        }
    }
}

struct TimeMlp<E> {
    w1: Tensor<E>,
    b1: Tensor<E>,
    w2: Tensor<E>,
    b2: Tensor<E>,
}

/// The frozen conditional denoiser.
pub struct Denoiser<E> {
    cfg: DenoiserConfig,
    stem: Conv<E>,
    down_blocks: Vec<ResBlock<E>>,
    down_samplers: Vec<Conv<E>>,
    mid_block0: ResBlock<E>,
    attn: CrossAttention<E>,
    mid_block1: ResBlock<E>,
    up_samplers: Vec<Conv<E>>,
    up_blocks: Vec<ResBlock<E>>,
    /// Projection of the attention content tokens added to the head input
    /// after upsampling: the short, adaptable path from conditioned content
    /// to pixels. Registered for low-rank adaptation.
    content_proj: Tensor<E>,
    head: Conv<E>,
    time_mlp: TimeMlp<E>,
}

impl<E: Scalar> Denoiser<E> {
    /// Deterministically initialize all frozen weights from `seed`.
    pub fn init(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from_seed(subseed(seed, "denoiser-init"));
        let (lc, _, _) = cfg.latent;
        let td = cfg.time_embed_dim;

        let stem = Conv::init(&mut rng, cfg.stage_channels(0), lc);
        let mut down_blocks = Vec::new();
        let mut down_samplers = Vec::new();
        for i in 0..cfg.depth {
            let c = cfg.stage_channels(i);
            down_blocks.push(ResBlock::init(&mut rng, c, cfg.cond_dim, td));
            let c_next = if i + 1 < cfg.depth {
                cfg.stage_channels(i + 1)
            } else {
                cfg.bottleneck_channels()
            };
            down_samplers.push(Conv::init(&mut rng, c_next, c));
        }
        let cb = cfg.bottleneck_channels();
        let (_, lh, lw) = cfg.latent;
        let bottleneck_hw = (lh >> cfg.depth) * (lw >> cfg.depth);
        let mid_block0 = ResBlock::init(&mut rng, cb, cfg.cond_dim, td);
        let attn = CrossAttention::init(&mut rng, cb, cfg.cond_dim, bottleneck_hw);
        let mid_block1 = ResBlock::init(&mut rng, cb, cfg.cond_dim, td);

        let mut up_samplers = Vec::new();
        let mut up_blocks = Vec::new();
        for i in (0..cfg.depth).rev() {
            let c_from = if i + 1 < cfg.depth {
                cfg.stage_channels(i + 1)
            } else {
                cb
            };
            let c = cfg.stage_channels(i);
            up_samplers.push(Conv::init(&mut rng, c, c_from));
            up_blocks.push(ResBlock::init(&mut rng, c, cfg.cond_dim, td));
        }
        let content_proj =
            normal_tensor(&mut rng, vec![cfg.stage_channels(0), cb], 1.0 / (cb as f64).sqrt());
        let head = Conv::init(&mut rng, lc, cfg.stage_channels(0));
        let time_mlp = TimeMlp {
            w1: normal_tensor(&mut rng, vec![td, td], 1.0 / (td as f64).sqrt()),
            b1: Tensor::zeros(vec![td]),
            w2: normal_tensor(&mut rng, vec![td, td], 1.0 / (td as f64).sqrt()),
            b2: Tensor::zeros(vec![td]),
        };

        Ok(Denoiser {
            cfg,
            stem,
            down_blocks,
            down_samplers,
            mid_block0,
            attn,
            mid_block1,
            up_samplers,
            up_blocks,
            content_proj,
            head,
            time_mlp,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    /// The maps eligible for low-rank adaptation, in a fixed canonical
    /// order. Every resolution stage contributes its condition projection;
    /// the bottleneck attention contributes its q/k/v/o maps.
    pub fn lora_sites(&self) -> Vec<LoraSite> {
        let c = &self.cfg;
        let mut sites = Vec::new();
        let mut cond_site = |name: String, ch: usize| LoraSite {
            name,
            d: 2 * ch,
            k: c.cond_dim,
        };
        for i in 0..c.depth {
            sites.push(cond_site(format!("down{i}.cond"), c.stage_channels(i)));
        }
        let cb = c.bottleneck_channels();
        sites.push(cond_site("mid.block0.cond".into(), cb));
        for (suffix, d, k) in [
            ("q", cb, cb),
            ("k", cb, c.cond_dim),
            ("v", cb, c.cond_dim),
            ("o", cb, cb),
        ] {
            sites.push(LoraSite { name: format!("mid.attn.{suffix}"), d, k });
        }
        sites.push(cond_site("mid.block1.cond".into(), cb));
        for i in (0..c.depth).rev() {
            sites.push(cond_site(format!("up{i}.cond"), c.stage_channels(i)));
        }
        sites.push(LoraSite {
            name: "head.content".into(),
            d: c.stage_channels(0),
            k: cb,
        });
        sites
    }

    /// Walk every frozen parameter in canonical order.
    pub fn visit_params(&self, mut f: impl FnMut(&str, &Tensor<E>)) {
        f("stem.w", &self.stem.w);
        f("stem.b", &self.stem.b);
        let mut block = |prefix: &str, b: &ResBlock<E>, f: &mut dyn FnMut(&str, &Tensor<E>)| {
            f(&format!("{prefix}.cond_proj"), &b.cond_proj);
            f(&format!("{prefix}.time_w"), &b.time_w);
            f(&format!("{prefix}.time_b"), &b.time_b);
            f(&format!("{prefix}.conv1.w"), &b.conv1.w);
            f(&format!("{prefix}.conv1.b"), &b.conv1.b);
            f(&format!("{prefix}.conv2.w"), &b.conv2.w);
            f(&format!("{prefix}.conv2.b"), &b.conv2.b);
        };
        for (i, b) in self.down_blocks.iter().enumerate() {
            block(&format!("down{i}"), b, &mut f);
            f(&format!("down{i}.sampler.w"), &self.down_samplers[i].w);
            f(&format!("down{i}.sampler.b"), &self.down_samplers[i].b);
        }
        block("mid.block0", &self.mid_block0, &mut f);
        f("mid.attn.wq", &self.attn.wq);
        f("mid.attn.wk", &self.attn.wk);
        f("mid.attn.wv", &self.attn.wv);
        f("mid.attn.wo", &self.attn.wo);
        f("mid.attn.pos", &self.attn.pos);
        block("mid.block1", &self.mid_block1, &mut f);
        for (slot, i) in (0..self.cfg.depth).rev().enumerate() {
            f(&format!("up{i}.sampler.w"), &self.up_samplers[slot].w);
            f(&format!("up{i}.sampler.b"), &self.up_samplers[slot].b);
            block(&format!("up{i}"), &self.up_blocks[slot], &mut f);
        }
        f("head.content_proj", &self.content_proj);
        f("head.w", &self.head.w);
        f("head.b", &self.head.b);
        f("time_mlp.w1", &self.time_mlp.w1);
        f("time_mlp.b1", &self.time_mlp.b1);
        f("time_mlp.w2", &self.time_mlp.w2);
        f("time_mlp.b2", &self.time_mlp.b2);
    }

    /// Register every frozen weight on a tape for one or more forward passes.
    pub fn stage(&self, tape: &mut Tape<E>) -> Result<StagedDenoiser> {
        let mut conv = |tape: &mut Tape<E>, c: &Conv<E>| -> Result<(Var, Var)> {
            Ok((tape.constant(c.w.clone())?, tape.constant(c.b.clone())?))
        };
        let mut blocks = Vec::new();
        let mut stage_block = |tape: &mut Tape<E>, b: &ResBlock<E>| -> Result<StagedBlock> {
            Ok(StagedBlock {
                cond_proj: tape.constant(b.cond_proj.clone())?,
                time_w: tape.constant(b.time_w.clone())?,
                time_b: tape.constant(b.time_b.clone())?,
                conv1: (tape.constant(b.conv1.w.clone())?, tape.constant(b.conv1.b.clone())?),
                conv2: (tape.constant(b.conv2.w.clone())?, tape.constant(b.conv2.b.clone())?),
            })
        };

        let stem = conv(tape, &self.stem)?;
        for b in &self.down_blocks {
            blocks.push(stage_block(tape, b)?);
        }
        let down_samplers = self
            .down_samplers
            .iter()
            .map(|c| conv(tape, c))
            .collect::<Result<Vec<_>>>()?;
        let mid_block0 = stage_block(tape, &self.mid_block0)?;
        let attn = StagedAttention {
            wq: tape.constant(self.attn.wq.clone())?,
            wk: tape.constant(self.attn.wk.clone())?,
            wv: tape.constant(self.attn.wv.clone())?,
            wo: tape.constant(self.attn.wo.clone())?,
            pos: tape.constant(self.attn.pos.clone())?,
        };
        let mid_block1 = stage_block(tape, &self.mid_block1)?;
        let up_samplers = self
            .up_samplers
            .iter()
            .map(|c| conv(tape, c))
            .collect::<Result<Vec<_>>>()?;
        let up_blocks = self
            .up_blocks
            .iter()
            .map(|b| stage_block(tape, b))
            .collect::<Result<Vec<_>>>()?;
        let content_proj = tape.constant(self.content_proj.clone())?;
        let head = conv(tape, &self.head)?;
        let time_mlp = StagedTimeMlp {
            w1: tape.constant(self.time_mlp.w1.clone())?,
            b1: tape.constant(self.time_mlp.b1.clone())?,
            w2: tape.constant(self.time_mlp.w2.clone())?,
            b2: tape.constant(self.time_mlp.b2.clone())?,
        };
        Ok(StagedDenoiser {
            stem,
            down_blocks: blocks,
            down_samplers,
            mid_block0,
            attn,
            mid_block1,
            up_samplers,
            up_blocks,
            content_proj,
            head,
            time_mlp,
        })
    }

    /// Predict the injected noise from a noisy latent, a timestep, and a
    /// staged condition. `lora` maps site names to staged `(A, B)` factors;
    /// when absent the frozen base maps apply alone.
    ///
    /// `coeffs` are the schedule's `(alpha_t, sigma_t)`. Internally the
    /// network emits a clean-content estimate
    /// `x_hat = content + alpha_t * z_t` and the noise prediction is the
    /// algebraic inversion `(z_t - alpha_t * x_hat) / sigma_t`; the
    /// interface and the training objective stay in epsilon space.
    pub fn predict_noise(
        &self,
        tape: &mut Tape<E>,
        staged: &StagedDenoiser,
        lora: Option<&HashMap<String, (Var, Var)>>,
        z_t: Var,
        t: usize,
        coeffs: (E, E),
        cond: Var,
    ) -> Result<Var> {
        let (lc, lh, lw) = self.cfg.latent;
        let zs = tape.value(z_t).shape().to_vec();
        if zs != [lc, lh, lw] {
            return Err(Error::Dimension {
                op: "predict_noise latent",
                lhs: zs,
                rhs: vec![lc, lh, lw],
            });
        }
        let cs = tape.value(cond).shape().to_vec();
        if cs != [self.cfg.cond_len, self.cfg.cond_dim] {
            return Err(Error::Dimension {
                op: "predict_noise condition",
                lhs: cs,
                rhs: vec![self.cfg.cond_len, self.cfg.cond_dim],
            });
        }

        // Pooled condition row and time-embedding row, shared by all blocks.
        let pooled_vec = tape.mean_rows(cond)?;
        let pooled = tape.reshape(pooled_vec, vec![1, self.cfg.cond_dim])?;
        let temb = self.time_embedding(tape, staged, t)?;

        let site = |name: &str| -> Option<(Var, Var)> {
            lora.and_then(|m| m.get(name).copied())
        };

        let mut x = tape.conv2d(z_t, staged.stem.0, Some(staged.stem.1), 1)?;
        let mut skips = Vec::new();
        for i in 0..self.cfg.depth {
            x = self.res_block(
                tape,
                &staged.down_blocks[i],
                site(&format!("down{i}.cond")),
                x,
                pooled,
                temb,
            )?;
            skips.push(x);
            let ds = &staged.down_samplers[i];
            x = tape.conv2d(x, ds.0, Some(ds.1), 2)?;
        }

        x = self.res_block(tape, &staged.mid_block0, site("mid.block0.cond"), x, pooled, temb)?;
        let (trunk, content_tokens) = self.cross_attention(tape, staged, lora, x, cond)?;
        x = trunk;
        x = self.res_block(tape, &staged.mid_block1, site("mid.block1.cond"), x, pooled, temb)?;

        for (slot, i) in (0..self.cfg.depth).rev().enumerate() {
            x = tape.upsample_nearest2x(x)?;
            let us = &staged.up_samplers[slot];
            x = tape.conv2d(x, us.0, Some(us.1), 1)?;
            x = tape.add(x, skips[i])?;
            x = self.res_block(
                tape,
                &staged.up_blocks[slot],
                site(&format!("up{i}.cond")),
                x,
                pooled,
                temb,
            )?;
        }

        let (alpha, sigma) = coeffs;
        let n = tape.group_norm(x, self.cfg.groups, E::from_f64(1e-5))?;
        let mut head_in = tape.silu(n)?;
        // short content path: project the attention content tokens per
        // position (an adaptable 1x1 map) and upsample into the head input
        let (_, lh2, lw2) = self.cfg.latent;
        let (bh, bw) = (lh2 >> self.cfg.depth, lw2 >> self.cfg.depth);
        let projected =
            self.lora_linear(tape, content_tokens, staged.content_proj, site("head.content"))?;
        let back = tape.transpose2d(projected)?;
        let mut ls = tape.reshape(back, vec![self.cfg.stage_channels(0), bh, bw])?;
        for _ in 0..self.cfg.depth {
            ls = tape.upsample_nearest2x(ls)?;
        }
        head_in = tape.add(head_in, ls)?;
        let content = tape.conv2d(head_in, staged.head.0, Some(staged.head.1), 1)?;
        let z_scaled = tape.scale(z_t, alpha)?;
        let x_hat = tape.add(content, z_scaled)?;
        // eps_hat = (z_t - alpha * x_hat) / sigma, with the amplification
        // floored so near-clean timesteps cannot blow up gradient scales
        let divisor = sigma.max(E::from_f64(SIGMA_FLOOR));
        let ax = tape.scale(x_hat, alpha)?;
        let num = tape.sub(z_t, ax)?;
        tape.scale(num, E::ONE / divisor)
    }

    fn time_embedding(&self, tape: &mut Tape<E>, staged: &StagedDenoiser, t: usize) -> Result<Var> {
        let td = self.cfg.time_embed_dim;
        let half = td / 2;
        let mut feats = Vec::with_capacity(td);
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            let phase = t as f64 * freq;
            feats.push(E::from_f64(phase.sin()));
            feats.push(E::from_f64(phase.cos()));
        }
        let raw = tape.constant(Tensor::new(vec![1, td], feats)?)?;
        let h = tape.matmul_nt(raw, staged.time_mlp.w1)?;
        let h = tape.add_bias_row(h, staged.time_mlp.b1)?;
        let h = tape.silu(h)?;
        let h = tape.matmul_nt(h, staged.time_mlp.w2)?;
        tape.add_bias_row(h, staged.time_mlp.b2)
    }

    /// Apply a bias-free linear map with an optional low-rank delta:
    /// `x (W0 + BA)^T = x W0^T + (x A^T) B^T`.
    fn lora_linear(
        &self,
        tape: &mut Tape<E>,
        x: Var,
        w0: Var,
        lora: Option<(Var, Var)>,
    ) -> Result<Var> {
        let base = tape.matmul_nt(x, w0)?;
        match lora {
            None => Ok(base),
            Some((a, b)) => {
                let xa = tape.matmul_nt(x, a)?;
                let delta = tape.matmul_nt(xa, b)?;
                tape.add(base, delta)
            }
        }
    }

    fn res_block(
        &self,
        tape: &mut Tape<E>,
        block: &StagedBlock,
        lora: Option<(Var, Var)>,
        x: Var,
        pooled: Var,
        temb: Var,
    ) -> Result<Var> {
        let c = tape.value(x).shape()[0];
        let eps = E::from_f64(1e-5);

        let n1 = tape.group_norm(x, self.cfg.groups, eps)?;
        // scale/shift from condition (adapted) plus time (frozen)
        let film_c = self.lora_linear(tape, pooled, block.cond_proj, lora)?;
        let film_t = tape.matmul_nt(temb, block.time_w)?;
        let film_t = tape.add_bias_row(film_t, block.time_b)?;
        let film = tape.add(film_c, film_t)?;
        let film = tape.reshape(film, vec![2 * c])?;
        let gamma = tape.slice1d(film, 0, c)?;
        let beta = tape.slice1d(film, c, c)?;
        let ones = tape.constant(Tensor::filled(vec![c], E::ONE))?;
        let gain = tape.add(gamma, ones)?;
        let h = tape.mul_channel(n1, gain)?;
        let h = tape.add_channel(h, beta)?;
        let h = tape.silu(h)?;
        let h = tape.conv2d(h, block.conv1.0, Some(block.conv1.1), 1)?;

        let n2 = tape.group_norm(h, self.cfg.groups, eps)?;
        let h = tape.silu(n2)?;
        let h = tape.conv2d(h, block.conv2.0, Some(block.conv2.1), 1)?;
        tape.add(x, h)
    }

    /// Cross-attention with purely positional queries: routing from
    /// condition tokens to spatial positions is independent of the noisy
    /// features, so the attention output is a stable per-condition content
    /// map. Returns the residual-updated trunk and the raw content tokens
    /// `(hw, c)` feeding the head's content projection.
    fn cross_attention(
        &self,
        tape: &mut Tape<E>,
        staged: &StagedDenoiser,
        lora: Option<&HashMap<String, (Var, Var)>>,
        x: Var,
        cond: Var,
    ) -> Result<(Var, Var)> {
        let shape = tape.value(x).shape().to_vec();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let site = |name: &str| lora.and_then(|m| m.get(name).copied());

        let q = self.lora_linear(tape, staged.attn.pos, staged.attn.wq, site("mid.attn.q"))?;
        let k = self.lora_linear(tape, cond, staged.attn.wk, site("mid.attn.k"))?;
        let v = self.lora_linear(tape, cond, staged.attn.wv, site("mid.attn.v"))?;

        let scores = tape.matmul_nt(q, k)?;
        let scores = tape.scale(scores, E::from_f64(1.0 / (c as f64).sqrt()))?;
        let attn = tape.softmax_rows(scores)?;
        let mixed = tape.matmul(attn, v)?;
        let out = self.lora_linear(tape, mixed, staged.attn.wo, site("mid.attn.o"))?;

        let out_t = tape.transpose2d(out)?; // (c, hw)
        let out_map = tape.reshape(out_t, vec![c, h, w])?;
        let trunk = tape.add(x, out_map)?;
        Ok((trunk, out))
    }
}

pub struct StagedBlock {
    cond_proj: Var,
    time_w: Var,
    time_b: Var,
    conv1: (Var, Var),
    conv2: (Var, Var),
}

pub struct StagedAttention {
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    pos: Var,
}

pub struct StagedTimeMlp {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

/// Tape handles for one staged copy of the frozen weights.
pub struct StagedDenoiser {
    stem: (Var, Var),
    down_blocks: Vec<StagedBlock>,
    down_samplers: Vec<(Var, Var)>,
    mid_block0: StagedBlock,
    attn: StagedAttention,
    mid_block1: StagedBlock,
    up_samplers: Vec<(Var, Var)>,
    up_blocks: Vec<StagedBlock>,
    content_proj: Var,
    head: (Var, Var),
    time_mlp: StagedTimeMlp,
}
