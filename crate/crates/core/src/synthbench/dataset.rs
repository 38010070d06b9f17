//! Subject sets, prompts, and the benchmark grid.

use crate::error::{Error, Result};
use crate::io::ppm;
use crate::rng::{rng_from_seed, sample_without_replacement, subseed_indexed};
use crate::scalar::Scalar;
use crate::synthbench::factors::{
    all_scenes, BgColor, SceneSpec, SubjectShape, SubjectSpec, Texture,
};
use crate::synthbench::render::{render, IMAGE_SIZE};
use crate::tensor::Tensor;

/// The exemplar images of one subject together with its special prompt and
/// ground-truth factor labels. Images are stored 8-bit quantized so the
/// in-memory pipeline matches what lands on disk.
#[derive(Debug, Clone)]
pub struct SubjectSet<E> {
    pub subject_id: usize,
    pub spec: SubjectSpec,
    pub prompt: String,
    pub scenes: Vec<SceneSpec>,
    pub images: Vec<Tensor<E>>,
}

impl<E: Scalar> SubjectSet<E> {
    pub fn k(&self) -> usize {
        self.images.len()
    }
}

/// The subject-binding prompt `a S* <class>`.
pub fn subject_prompt(shape: SubjectShape) -> String {
    format!("a S* {}", shape.word())
}

/// A scene-description prompt in the closed grammar:
/// `a S* <class> on <color> <texture>`.
pub fn prompt_for(shape: SubjectShape, bg: BgColor, texture: Texture) -> String {
    format!("a S* {} on {} {}", shape.word(), bg.word(), texture.word())
}

/// Sample `k` distinct scenes for one subject and render its exemplars.
pub fn make_subject_set<E: Scalar>(
    subject_id: usize,
    spec: SubjectSpec,
    k: usize,
    seed: u64,
) -> Result<SubjectSet<E>> {
    let scenes_all = all_scenes();
    if k == 0 || k > scenes_all.len() {
        return Err(Error::Config(format!(
            "subject set size {k} must lie in 1..={}",
            scenes_all.len()
        )));
    }
    let mut rng = rng_from_seed(subseed_indexed(seed, "subject-scenes", subject_id as u64));
    let picks = sample_without_replacement(&mut rng, scenes_all.len(), k);
    let scenes: Vec<SceneSpec> = picks.iter().map(|&i| scenes_all[i]).collect();
    let images = scenes
        .iter()
        .map(|scene| ppm::quantize(&render::<E>(&spec, scene)))
        .collect();
    let set = SubjectSet {
        subject_id,
        spec,
        prompt: subject_prompt(spec.shape),
        scenes,
        images,
    };
    debug_assert_eq!(
        set.prompt.split_whitespace().filter(|w| *w == "S*").count(),
        1,
        "prompt must contain the placeholder exactly once"
    );
    Ok(set)
}

/// One labeled benchmark image.
#[derive(Debug, Clone)]
pub struct LabeledImage<E> {
    pub image: Tensor<E>,
    pub subject_id: usize,
    pub subject: SubjectSpec,
    pub scene: SceneSpec,
}

/// The full cross-product grid of subjects x scenes, quantized, in
/// canonical order (subject-major).
pub fn full_grid<E: Scalar>(subjects: &[SubjectSpec]) -> Vec<LabeledImage<E>> {
    let scenes = all_scenes();
    let mut out = Vec::with_capacity(subjects.len() * scenes.len());
    for (sid, subject) in subjects.iter().enumerate() {
        for scene in &scenes {
            out.push(LabeledImage {
                image: ppm::quantize(&render::<E>(subject, scene)),
                subject_id: sid,
                subject: *subject,
                scene: *scene,
            });
        }
    }
    out
}

/// Canonical on-disk name for one grid image.
pub fn grid_image_name(subject_id: usize, scene: &SceneSpec) -> String {
    format!(
        "s{subject_id}_{}_{}_p{}_{}.ppm",
        scene.bg.word(),
        scene.texture.word(),
        scene.position,
        scene.scale.word()
    )
}

/// Benchmark image side length re-exported for convenience.
pub const BENCH_IMAGE_SIZE: usize = IMAGE_SIZE;
