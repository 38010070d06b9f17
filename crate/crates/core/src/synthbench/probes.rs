//! Frozen probe classifiers over the ground-truth factors.
//!
//! Two small convolutional networks trained once per benchmark seed on the
//! labeled grid and then frozen: the subject probe predicts (shape, fill,
//! marker count), the background probe predicts (background color,
//! texture). Their penultimate (pooled) embeddings serve as the scoring
//! space for identity metrics.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, rng_from_seed, subseed, Prng};
use crate::scalar::Scalar;
use crate::synthbench::dataset::LabeledImage;
use crate::tensor::Tensor;
use crate::tuning::{AdamW, TrainConfig};

/// Held-out accuracy below this is a benchmark-quality failure.
pub const PROBE_ACCURACY_FLOOR: f64 = 0.9;

struct ConvStage<E> {
    w: Tensor<E>,
    b: Tensor<E>,
    ci: usize,
    co: usize,
}

struct Head<E> {
    name: &'static str,
    w: Tensor<E>,
    b: Tensor<E>,
    classes: usize,
}

/// Three stride-2 conv stages, global average pool, and one linear head
/// per predicted factor.
pub struct ProbeNet<E> {
    input_size: usize,
    embed_dim: usize,
    stages: Vec<ConvStage<E>>,
    heads: Vec<Head<E>>,
}

pub struct StagedProbe {
    stages: Vec<(Var, Var)>,
    heads: Vec<(Var, Var)>,
}

impl<E: Scalar> ProbeNet<E> {
    pub fn init(input_size: usize, head_specs: &[(&'static str, usize)], seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let plan = [(3usize, 16usize), (16, 32), (32, 64)];
        let stages = plan
            .iter()
            .map(|&(ci, co)| ConvStage {
                w: normal_tensor(&mut rng, vec![co, ci, 3, 3], 1.0 / ((ci * 9) as f64).sqrt()),
                b: Tensor::zeros(vec![co]),
                ci,
                co,
            })
            .collect();
        let embed_dim = 64;
        let heads = head_specs
            .iter()
            .map(|&(name, classes)| Head {
                name,
                w: normal_tensor(&mut rng, vec![classes, embed_dim], 1.0 / (embed_dim as f64).sqrt()),
                b: Tensor::zeros(vec![classes]),
                classes,
            })
            .collect();
        ProbeNet { input_size, embed_dim, stages, heads }
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn head_names(&self) -> Vec<&'static str> {
        self.heads.iter().map(|h| h.name).collect()
    }

    pub fn stage(&self, tape: &mut Tape<E>, trainable: bool) -> Result<StagedProbe> {
        let mut stages = Vec::new();
        for s in &self.stages {
            stages.push((tape.leaf(s.w.clone(), trainable)?, tape.leaf(s.b.clone(), trainable)?));
        }
        let mut heads = Vec::new();
        for h in &self.heads {
            heads.push((tape.leaf(h.w.clone(), trainable)?, tape.leaf(h.b.clone(), trainable)?));
        }
        Ok(StagedProbe { stages, heads })
    }

    /// Trunk + heads; returns the pooled embedding and one logit vector per
    /// head.
    pub fn forward(
        &self,
        tape: &mut Tape<E>,
        staged: &StagedProbe,
        x: Var,
    ) -> Result<(Var, Vec<Var>)> {
        let mut h = x;
        for (i, stage) in self.stages.iter().enumerate() {
            let _ = stage.ci;
            h = tape.conv2d(h, staged.stages[i].0, Some(staged.stages[i].1), 2)?;
            h = tape.relu(h)?;
        }
        // global average pool: (c, s, s) -> (c)
        let shape = tape.value(h).shape().to_vec();
        let (c, hw) = (shape[0], shape[1] * shape[2]);
        let flat = tape.reshape(h, vec![c, hw])?;
        let cols = tape.transpose2d(flat)?; // (hw, c)
        let embed = tape.mean_rows(cols)?; // (c)
        let embed_row = tape.reshape(embed, vec![1, c])?;

        let mut logits = Vec::new();
        for (i, head) in self.heads.iter().enumerate() {
            let _ = head.classes;
            let l = tape.matmul_nt(embed_row, staged.heads[i].0)?;
            let l = tape.add_bias_row(l, staged.heads[i].1)?;
            let n = tape.value(l).numel();
            logits.push(tape.reshape(l, vec![n])?);
        }
        Ok((embed, logits))
    }

    /// Pooled embedding without gradients.
    pub fn embed(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let mut tape = Tape::no_grad();
        let staged = self.stage(&mut tape, false)?;
        let xv = tape.constant(x.clone())?;
        let (embed, _) = self.forward(&mut tape, &staged, xv)?;
        Ok(tape.value(embed).clone())
    }

    /// Argmax class per head, without gradients.
    pub fn classify(&self, x: &Tensor<E>) -> Result<Vec<usize>> {
        let mut tape = Tape::no_grad();
        let staged = self.stage(&mut tape, false)?;
        let xv = tape.constant(x.clone())?;
        let (_, logits) = self.forward(&mut tape, &staged, xv)?;
        Ok(logits
            .iter()
            .map(|&l| {
                let data = tape.value(l).data();
                let mut best = 0usize;
                for i in 1..data.len() {
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    fn visit_params_mut(&mut self, mut f: impl FnMut(&mut Tensor<E>)) {
        for s in &mut self.stages {
            f(&mut s.w);
            f(&mut s.b);
        }
        for h in &mut self.heads {
            f(&mut h.w);
            f(&mut h.b);
        }
    }

    /// Walk parameters with stable names (persistence order).
    pub fn visit_named(&self, mut f: impl FnMut(&str, &Tensor<E>)) {
        for (i, s) in self.stages.iter().enumerate() {
            f(&format!("stage{i}.w"), &s.w);
            f(&format!("stage{i}.b"), &s.b);
        }
        for h in &self.heads {
            f(&format!("head.{}.w", h.name), &h.w);
            f(&format!("head.{}.b", h.name), &h.b);
        }
    }

    pub fn visit_named_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<E>)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            f(&format!("stage{i}.w"), &mut s.w);
            f(&format!("stage{i}.b"), &mut s.b);
        }
        for h in &mut self.heads {
            f(&format!("head.{}.w", h.name), &mut h.w);
            f(&format!("head.{}.b", h.name), &mut h.b);
        }
    }

    pub fn weight_checksum(&self) -> f64 {
        let mut sum = 0.0;
        for s in &self.stages {
            sum += s.w.data().iter().chain(s.b.data().iter()).map(|v| v.to_f64()).sum::<f64>();
        }
        for h in &self.heads {
            sum += h.w.data().iter().chain(h.b.data().iter()).map(|v| v.to_f64()).sum::<f64>();
        }
        sum
    }
}

/// A training example: image plus one class label per head.
pub struct ProbeExample<E> {
    pub image: Tensor<E>,
    pub labels: Vec<usize>,
}

/// Probe training hyperparameters (fixed; not part of run configs).
const PROBE_LR: f64 = 2e-3;
const PROBE_EPOCHS: usize = 4;
const PROBE_BATCH: usize = 8;

/// Supervised training with mini-batch gradient accumulation. Order of
/// examples is reshuffled deterministically each epoch.
pub fn train_probe_net<E: Scalar>(
    net: &mut ProbeNet<E>,
    examples: &[ProbeExample<E>],
    seed: u64,
) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Input("probe training set is empty".into()));
    }
    let cfg = TrainConfig {
        lr: PROBE_LR,
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut opt = AdamW::<E>::new(&cfg);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng: Prng = rng_from_seed(subseed(seed, "probe-shuffle"));

    for _epoch in 0..PROBE_EPOCHS {
        shuffle(&mut order, &mut rng);
        for batch in order.chunks(PROBE_BATCH) {
            let mut grad_acc: Vec<Vec<E>> = Vec::new();
            for &idx in batch {
                let ex = &examples[idx];
                let mut tape = Tape::<E>::new();
                let staged = net.stage(&mut tape, true)?;
                let xv = tape.constant(ex.image.clone())?;
                let (_, logits) = net.forward(&mut tape, &staged, xv)?;
                if logits.len() != ex.labels.len() {
                    return Err(Error::Input(format!(
                        "expected {} labels, got {}",
                        logits.len(),
                        ex.labels.len()
                    )));
                }
                let mut loss = None;
                for (l, &target) in logits.iter().zip(&ex.labels) {
                    let ce = tape.cross_entropy(*l, target)?;
                    loss = Some(match loss {
                        None => ce,
                        Some(acc) => tape.add(acc, ce)?,
                    });
                }
                let loss = loss.expect("at least one head");
                tape.backward(loss)?;

                let mut vars = Vec::new();
                for (w, b) in staged.stages.iter().chain(staged.heads.iter()) {
                    vars.push(*w);
                    vars.push(*b);
                }
                if grad_acc.is_empty() {
                    grad_acc = vars
                        .iter()
                        .map(|v| tape.grad(*v).expect("trainable").into_data())
                        .collect();
                } else {
                    for (acc, v) in grad_acc.iter_mut().zip(&vars) {
                        let g = tape.grad(*v).expect("trainable");
                        for (a, gv) in acc.iter_mut().zip(g.data()) {
                            *a += *gv;
                        }
                    }
                }
            }
            let inv = E::from_f64(1.0 / batch.len() as f64);
            for g in &mut grad_acc {
                g.iter_mut().for_each(|v| *v *= inv);
            }
            opt.begin_step();
            let mut slot = 0usize;
            let mut update_err = None;
            net.visit_params_mut(|t| {
                if update_err.is_some() {
                    return;
                }
                if let Err(e) = opt.update(slot, t.data_mut(), &grad_acc[slot]) {
                    update_err = Some(e);
                }
                slot += 1;
            });
            if let Some(e) = update_err {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn shuffle(order: &mut [usize], rng: &mut Prng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Mean per-head accuracy of a probe over labeled examples.
pub fn probe_accuracy<E: Scalar>(net: &ProbeNet<E>, examples: &[ProbeExample<E>]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Input("empty probe evaluation set".into()));
    }
    let heads = net.heads.len();
    let mut correct = vec![0usize; heads];
    for ex in examples {
        let preds = net.classify(&ex.image)?;
        for (h, (&p, &t)) in preds.iter().zip(&ex.labels).enumerate() {
            if p == t {
                correct[h] += 1;
            }
        }
    }
    let per_head: Vec<f64> =
        correct.iter().map(|&c| c as f64 / examples.len() as f64).collect();
    Ok(per_head.iter().sum::<f64>() / heads as f64)
}

/// The two frozen probes plus their training metadata.
pub struct ProbeSet<E> {
    pub subject: ProbeNet<E>,
    pub background: ProbeNet<E>,
    pub seed: u64,
    pub subject_accuracy: f64,
    pub background_accuracy: f64,
}

pub fn subject_labels(item: &LabeledImage<impl Scalar>) -> Vec<usize> {
    vec![
        item.subject.shape.index(),
        item.subject.fill.index(),
        item.subject.markers as usize,
    ]
}

pub fn background_labels(item: &LabeledImage<impl Scalar>) -> Vec<usize> {
    vec![item.scene.bg.index(), item.scene.texture.index()]
}

pub const SUBJECT_PROBE_HEADS: [(&str, usize); 3] =
    [("shape", 4), ("fill", 8), ("markers", 4)];
pub const BACKGROUND_PROBE_HEADS: [(&str, usize); 2] = [("bg_color", 8), ("texture", 3)];

/// Serialize a trained probe set into the checkpoint format.
pub fn save_probes<E: Scalar>(probes: &ProbeSet<E>, path: &std::path::Path) -> Result<()> {
    use crate::io::checkpoint::{Checkpoint, CkptEntry, CONFIG_ENTRY};
    let meta = format!(
        "probe_seed = {}\nsubject_accuracy = {}\nbackground_accuracy = {}\n",
        probes.seed, probes.subject_accuracy, probes.background_accuracy
    );
    let mut ckpt = Checkpoint::new();
    ckpt.push(CkptEntry::from_text(CONFIG_ENTRY, &meta))?;
    let mut err = None;
    probes.subject.visit_named(|name, t| {
        if err.is_none() {
            if let Err(e) = ckpt.push(CkptEntry::from_tensor(format!("subject.{name}"), t)) {
                err = Some(e);
            }
        }
    });
    probes.background.visit_named(|name, t| {
        if err.is_none() {
            if let Err(e) = ckpt.push(CkptEntry::from_tensor(format!("background.{name}"), t)) {
                err = Some(e);
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    ckpt.save(path)
}

/// Restore a probe set saved by [`save_probes`].
pub fn load_probes<E: Scalar>(path: &std::path::Path, input_size: usize) -> Result<ProbeSet<E>> {
    use crate::io::checkpoint::Checkpoint;
    let ckpt = Checkpoint::load(path)?;
    let meta = ckpt.config_text()?;
    let mut seed = 0u64;
    let mut subject_accuracy = 0.0f64;
    let mut background_accuracy = 0.0f64;
    for line in meta.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "probe_seed" => {
                    seed = v.trim().parse().map_err(|_| {
                        Error::format("probes", "bad probe_seed in metadata")
                    })?
                }
                "subject_accuracy" => {
                    subject_accuracy = v.trim().parse().unwrap_or(0.0);
                }
                "background_accuracy" => {
                    background_accuracy = v.trim().parse().unwrap_or(0.0);
                }
                _ => {}
            }
        }
    }
    let mut subject =
        ProbeNet::<E>::init(input_size, &SUBJECT_PROBE_HEADS, crate::rng::subseed(seed, "subject-probe"));
    let mut background = ProbeNet::<E>::init(
        input_size,
        &BACKGROUND_PROBE_HEADS,
        crate::rng::subseed(seed, "background-probe"),
    );
    for (prefix, net) in [("subject", &mut subject), ("background", &mut background)] {
        let mut err = None;
        net.visit_named_mut(|name, tensor| {
            if err.is_some() {
                return;
            }
            match ckpt.get(&format!("{prefix}.{name}")).map(|e| e.to_tensor::<E>()) {
                Some(Ok(t)) if t.shape() == tensor.shape() => *tensor = t,
                _ => err = Some(Error::format("probes", format!("missing or bad entry {prefix}.{name}"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(ProbeSet { subject, background, seed, subject_accuracy, background_accuracy })
}

/// Train both probes on a labeled grid with a deterministic 80/20 split,
/// verify the held-out floor, and freeze them.
pub fn train_probes<E: Scalar>(grid: &[LabeledImage<E>], seed: u64) -> Result<ProbeSet<E>> {
    if grid.is_empty() {
        return Err(Error::Input("probe grid is empty".into()));
    }
    let input_size = grid[0].image.shape()[1];
    let mut order: Vec<usize> = (0..grid.len()).collect();
    let mut rng = rng_from_seed(subseed(seed, "probe-split"));
    shuffle(&mut order, &mut rng);
    let holdout_len = (grid.len() / 5).max(1);
    let (holdout_idx, train_idx) = order.split_at(holdout_len);

    let build = |idxs: &[usize], labeler: fn(&LabeledImage<E>) -> Vec<usize>| {
        idxs.iter()
            .map(|&i| ProbeExample { image: grid[i].image.clone(), labels: labeler(&grid[i]) })
            .collect::<Vec<_>>()
    };

    let mut subject = ProbeNet::init(input_size, &SUBJECT_PROBE_HEADS, subseed(seed, "subject-probe"));
    let subj_train = build(train_idx, subject_labels);
    let subj_hold = build(holdout_idx, subject_labels);
    train_probe_net(&mut subject, &subj_train, subseed(seed, "subject-probe-train"))?;
    let subject_accuracy = probe_accuracy(&subject, &subj_hold)?;

    let mut background =
        ProbeNet::init(input_size, &BACKGROUND_PROBE_HEADS, subseed(seed, "background-probe"));
    let bg_train = build(train_idx, background_labels);
    let bg_hold = build(holdout_idx, background_labels);
    train_probe_net(&mut background, &bg_train, subseed(seed, "background-probe-train"))?;
    let background_accuracy = probe_accuracy(&background, &bg_hold)?;

    for (name, acc) in [("subject", subject_accuracy), ("background", background_accuracy)] {
        if acc < PROBE_ACCURACY_FLOOR {
            return Err(Error::BenchmarkQuality(format!(
                "{name} probe held-out accuracy {acc:.3} below floor {PROBE_ACCURACY_FLOOR}"
            )));
        }
    }

    Ok(ProbeSet { subject, background, seed, subject_accuracy, background_accuracy })
}
