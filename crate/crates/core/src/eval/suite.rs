//! Generation-based evaluation: text-only and visual-only probes, the eta
//! sweep, and the ablation runner.

use crate::error::{Error, Result};
use crate::eval::metrics::{
    embedding_cosine, identity_score, nearest_centroid, prompt_fidelity, subject_centroids,
};
use crate::eval::report::{config_digest_hex, EvalReport};
use crate::io::ppm;
use crate::pipeline::{sample_seed, Pipeline};
use crate::scalar::Scalar;
use crate::synthbench::{prompt_for, BgColor, ProbeSet, SubjectSet, Texture};
use crate::tensor::Tensor;
use crate::tuning::{StepRecord, TrainConfig, TunedState};

/// Default number of generations per probe.
pub const EVAL_SAMPLES: usize = 32;

/// The default mixing-weight grid of the eta sweep.
pub const ETA_GRID: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// Fixed (background, texture) battery for prompt-fidelity scoring.
const FIDELITY_BATTERY: [(BgColor, Texture); 4] = [
    (BgColor::White, Texture::Plain),
    (BgColor::Teal, Texture::Checker),
    (BgColor::Navy, Texture::Stripes),
    (BgColor::Pink, Texture::Plain),
];

/// Everything needed to score generations of one benchmark.
pub struct EvalContext<'a, E> {
    pub pipeline: &'a Pipeline<E>,
    pub probes: &'a ProbeSet<E>,
    /// All benchmark subjects (centroid references), indexed by subject id.
    pub subject_sets: &'a [SubjectSet<E>],
    pub n_samples: usize,
}

impl<'a, E: Scalar> EvalContext<'a, E> {
    pub fn new(
        pipeline: &'a Pipeline<E>,
        probes: &'a ProbeSet<E>,
        subject_sets: &'a [SubjectSet<E>],
    ) -> Self {
        EvalContext { pipeline, probes, subject_sets, n_samples: EVAL_SAMPLES }
    }

    /// Sample one 8-bit-quantized image under a composed condition.
    pub fn sample_image(
        &self,
        state: &TunedState<E>,
        cond: &Tensor<E>,
        seed: u64,
    ) -> Result<Tensor<E>> {
        let raw = self.pipeline.sample(state, cond, self.pipeline.run.ddim_steps, seed)?;
        Ok(ppm::quantize(&raw.map(|v| v.max(-E::ONE).min(E::ONE))))
    }

    fn centroids(&self) -> Result<Vec<Vec<f64>>> {
        let mut per_subject = Vec::new();
        for set in self.subject_sets {
            let embeds: Vec<Vec<E>> = set
                .images
                .iter()
                .map(|im| self.probes.subject.embed(im).map(Tensor::into_data))
                .collect::<Result<_>>()?;
            per_subject.push(embeds);
        }
        Ok(subject_centroids(&per_subject))
    }

    fn bg_prediction(&self, image: &Tensor<E>) -> Result<(BgColor, Texture)> {
        let preds = self.probes.background.classify(image)?;
        Ok((BgColor::ALL[preds[0]], Texture::ALL[preds[1]]))
    }
}

/// Accuracies plus the generated images of one probe run.
pub struct ProbeOutcome<E> {
    pub subject_acc: f64,
    pub background_acc: f64,
    pub images: Vec<Tensor<E>>,
}

/// Text-only generation probe: sample with the subject prompt alone and
/// score (subject accuracy, background leak).
///
/// Subject accuracy is nearest-centroid agreement with the true subject;
/// background leak is the fraction of generations whose predicted
/// (color, texture) pair reproduces one of the subject's training scenes.
pub fn fs_only_probe<E: Scalar>(
    ctx: &EvalContext<E>,
    state: &TunedState<E>,
    subject_id: usize,
    seed: u64,
) -> Result<ProbeOutcome<E>> {
    let set = &ctx.subject_sets[subject_id];
    let fs = ctx.pipeline.encode_prompt(&set.prompt)?;
    let centroids = ctx.centroids()?;
    let train_pairs: Vec<(BgColor, Texture)> =
        set.scenes.iter().map(|s| (s.bg, s.texture)).collect();

    let mut subj_hits = 0usize;
    let mut bg_hits = 0usize;
    let mut images = Vec::with_capacity(ctx.n_samples);
    for i in 0..ctx.n_samples {
        let img = ctx.sample_image(state, &fs, sample_seed(seed, "fs_only", i as u64))?;
        let embed = ctx.probes.subject.embed(&img)?;
        if nearest_centroid(embed.data(), &centroids) == subject_id {
            subj_hits += 1;
        }
        let pred = ctx.bg_prediction(&img)?;
        if train_pairs.contains(&pred) {
            bg_hits += 1;
        }
        images.push(img);
    }
    Ok(ProbeOutcome {
        subject_acc: subj_hits as f64 / ctx.n_samples as f64,
        background_acc: bg_hits as f64 / ctx.n_samples as f64,
        images,
    })
}

/// Visual-only generation probe: condition on each exemplar's visual
/// embedding over zero text tokens; score (subject accuracy,
/// background-color accuracy against the source image's own label).
pub fn fi_only_probe<E: Scalar>(
    ctx: &EvalContext<E>,
    state: &TunedState<E>,
    subject_id: usize,
    seed: u64,
) -> Result<ProbeOutcome<E>> {
    let set = &ctx.subject_sets[subject_id];
    let centroids = ctx.centroids()?;

    let mut subj_hits = 0usize;
    let mut bg_hits = 0usize;
    let mut images = Vec::with_capacity(ctx.n_samples);
    for i in 0..ctx.n_samples {
        let source_idx = i % set.images.len();
        let f_i = ctx.pipeline.visual_embedding(state, &set.images[source_idx])?;
        let cond = ctx.pipeline.visual_only_condition(&f_i)?;
        let img = ctx.sample_image(state, &cond, sample_seed(seed, "fi_only", i as u64))?;
        let embed = ctx.probes.subject.embed(&img)?;
        if nearest_centroid(embed.data(), &centroids) == subject_id {
            subj_hits += 1;
        }
        let (color, _texture) = ctx.bg_prediction(&img)?;
        if color == set.scenes[source_idx].bg {
            bg_hits += 1;
        }
        images.push(img);
    }
    Ok(ProbeOutcome {
        subject_acc: subj_hits as f64 / ctx.n_samples as f64,
        background_acc: bg_hits as f64 / ctx.n_samples as f64,
        images,
    })
}

/// Stitch images (all the same shape) into one grid tensor, row-major.
pub fn stitch_images<E: Scalar>(images: &[Tensor<E>], cols: usize) -> Result<Tensor<E>> {
    if images.is_empty() || cols == 0 {
        return Err(Error::Input("cannot stitch an empty grid".into()));
    }
    let shape = images[0].shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let rows = images.len().div_ceil(cols);
    let (gh, gw) = (rows * h, cols * w);
    let mut data = vec![E::ZERO; c * gh * gw];
    for (idx, im) in images.iter().enumerate() {
        let (r, col) = (idx / cols, idx % cols);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data[ch * gh * gw + (r * h + y) * gw + col * w + x] =
                        im.data()[ch * h * w + y * w + x];
                }
            }
        }
    }
    Tensor::new(vec![c, gh, gw], data)
}

/// Generate under `f'_s + eta * f_i` for each eta (same sampling seed
/// across the grid) and record the embedding cosine to the reference.
pub fn eta_sweep<E: Scalar>(
    ctx: &EvalContext<E>,
    state: &TunedState<E>,
    prompt: &str,
    reference: &Tensor<E>,
    etas: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if etas.is_empty() || etas[0] != 0.0 {
        return Err(Error::Input("eta grid must start at 0".into()));
    }
    for w in etas.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Input("eta grid must be strictly increasing".into()));
        }
    }
    let fs = ctx.pipeline.encode_prompt(prompt)?;
    let f_i = ctx.pipeline.visual_embedding(state, reference)?;
    let ref_embed = ctx.probes.subject.embed(reference)?;

    let mut curve = Vec::with_capacity(etas.len());
    for &eta in etas {
        let cond = ctx.pipeline.compose_condition(&fs, Some((&f_i, eta)))?;
        let img = ctx.sample_image(state, &cond, seed)?;
        let embed = ctx.probes.subject.embed(&img)?;
        curve.push((eta, embedding_cosine(embed.data(), ref_embed.data())));
    }
    Ok(curve)
}

/// The full per-checkpoint evaluation.
pub fn full_evaluation<E: Scalar>(
    ctx: &EvalContext<E>,
    state: &TunedState<E>,
    subject_id: usize,
    seed: u64,
    with_eta: bool,
) -> Result<EvalReport> {
    let set = &ctx.subject_sets[subject_id];
    let fs_tokens = ctx.pipeline.encode_prompt(&set.prompt)?;

    // identity score: text-only generations against the exemplars
    let mut generated_embeds = Vec::new();
    for i in 0..ctx.n_samples {
        let img = ctx.sample_image(state, &fs_tokens, sample_seed(seed, "identity", i as u64))?;
        generated_embeds.push(ctx.probes.subject.embed(&img)?.into_data());
    }
    let real_embeds: Vec<Vec<E>> = set
        .images
        .iter()
        .map(|im| ctx.probes.subject.embed(im).map(Tensor::into_data))
        .collect::<Result<_>>()?;
    let identity = identity_score(&generated_embeds, &real_embeds)?;

    // prompt fidelity over the fixed battery
    let per_prompt = (ctx.n_samples / FIDELITY_BATTERY.len()).max(1);
    let mut predictions = Vec::new();
    let mut targets_hit = 0.0f64;
    for (pi, &(bg, texture)) in FIDELITY_BATTERY.iter().enumerate() {
        let prompt = prompt_for(set.spec.shape, bg, texture);
        let cond = ctx.pipeline.encode_prompt(&prompt)?;
        predictions.clear();
        for i in 0..per_prompt {
            let img = ctx.sample_image(
                state,
                &cond,
                sample_seed(seed, "fidelity", (pi * per_prompt + i) as u64),
            )?;
            predictions.push(ctx.bg_prediction(&img)?);
        }
        targets_hit += prompt_fidelity(&predictions, (bg, texture))?;
    }
    let fidelity = targets_hit / FIDELITY_BATTERY.len() as f64;

    let fs_probe = fs_only_probe(ctx, state, subject_id, seed)?;
    let fi_probe = fi_only_probe(ctx, state, subject_id, seed)?;
    let fs_only = (fs_probe.subject_acc, fs_probe.background_acc);
    let fi_only = (fi_probe.subject_acc, fi_probe.background_acc);

    let eta_curve = if with_eta {
        eta_sweep(ctx, state, &set.prompt, &set.images[0], &ETA_GRID, sample_seed(seed, "eta", 0))?
    } else {
        Vec::new()
    };

    let report = EvalReport {
        identity_score: identity,
        prompt_fidelity: fidelity,
        fs_only,
        fi_only,
        eta_curve,
        config_digest: config_digest_hex(&ctx.pipeline.run.canonical_text()),
        seed,
        n_samples: ctx.n_samples,
    };
    report.validate()?;
    Ok(report)
}

/// Identifier of one ablation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoWeakDenoising,
    NoContrastive,
    NoAdapter,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoWeakDenoising,
        Variant::NoContrastive,
        Variant::NoAdapter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoWeakDenoising => "no_l2",
            Variant::NoContrastive => "no_l3",
            Variant::NoAdapter => "no_adapter",
        }
    }

    pub fn apply(self, base: &TrainConfig) -> (TrainConfig, bool) {
        match self {
            Variant::Full => (base.clone(), true),
            Variant::NoWeakDenoising => (TrainConfig { lambda2: 0.0, ..base.clone() }, true),
            Variant::NoContrastive => (TrainConfig { lambda3: 0.0, ..base.clone() }, true),
            Variant::NoAdapter => (base.clone(), false),
        }
    }
}

/// Train-and-evaluate result of one ablation variant.
pub struct AblationRow<E> {
    pub variant: Variant,
    pub outcome: Result<(TunedState<E>, EvalReport)>,
    pub records: Vec<StepRecord>,
}

/// Train and evaluate all four variants on identical seeds. Per-variant
/// failures are carried in the row, not propagated, so remaining variants
/// still run.
pub fn run_ablations<E: Scalar>(
    ctx: &EvalContext<E>,
    subject_id: usize,
    base: &TrainConfig,
    eval_seed: u64,
) -> Vec<AblationRow<E>> {
    let set = &ctx.subject_sets[subject_id];
    Variant::ALL
        .iter()
        .map(|&variant| {
            let (cfg, with_adapter) = variant.apply(base);
            let mut records = Vec::new();
            let outcome = ctx
                .pipeline
                .train_subject(&set.prompt, &set.images, &cfg, with_adapter)
                .and_then(|(state, recs)| {
                    records = recs;
                    let report = full_evaluation(ctx, &state, subject_id, eval_seed, false)?;
                    Ok((state, report))
                });
            AblationRow { variant, outcome, records }
        })
        .collect()
}
