//! Procedural synthetic benchmark: factor-labeled renders, subject sets,
//! prompts, and frozen probe classifiers.

pub mod dataset;
pub mod factors;
pub mod probes;
pub mod render;

pub use dataset::{
    full_grid, grid_image_name, make_subject_set, prompt_for, subject_prompt, LabeledImage,
    SubjectSet, BENCH_IMAGE_SIZE,
};
pub use factors::{
    all_scenes, default_subjects, BgColor, FillColor, SceneSpec, SubjectScale, SubjectShape,
    SubjectSpec, Texture, POSITION_WORDS,
};
pub use probes::{
    background_labels, load_probes, probe_accuracy, save_probes, subject_labels,
    train_probe_net, train_probes, ProbeExample, ProbeNet, ProbeSet, BACKGROUND_PROBE_HEADS,
    PROBE_ACCURACY_FLOOR, SUBJECT_PROBE_HEADS,
};
pub use render::{render, render_background, render_sized, IMAGE_SIZE};
