//! Probe training quality on the benchmark grid.

use std::sync::OnceLock;

use disentune::synthbench::{
    default_subjects, full_grid, train_probes, ProbeSet,
};

fn trained_probes() -> &'static ProbeSet<f32> {
    static SHARED: OnceLock<ProbeSet<f32>> = OnceLock::new();
    SHARED.get_or_init(|| {
        let grid = full_grid::<f32>(&default_subjects());
        train_probes(&grid, 2024).expect("probe training reaches the quality floor")
    })
}

#[test]
fn probes_reach_accuracy_target_on_full_grid() {
    let probes = trained_probes();
    println!(
        "subject probe acc {:.4}, background probe acc {:.4}",
        probes.subject_accuracy, probes.background_accuracy
    );
    assert!(
        probes.subject_accuracy >= 0.95,
        "subject probe held-out accuracy {:.4} < 0.95",
        probes.subject_accuracy
    );
    assert!(
        probes.background_accuracy >= 0.95,
        "background probe held-out accuracy {:.4} < 0.95",
        probes.background_accuracy
    );
}

#[test]
fn probes_are_deterministic_at_fixed_seed() {
    // a thinned grid keeps this cheap; determinism does not depend on size,
    // and the quality floor is waived by training nets directly
    use disentune::synthbench::{
        background_labels, train_probe_net, ProbeExample, ProbeNet, BACKGROUND_PROBE_HEADS,
    };
    let grid = full_grid::<f32>(&default_subjects());
    let examples: Vec<ProbeExample<f32>> = grid
        .iter()
        .step_by(9)
        .map(|item| ProbeExample { image: item.image.clone(), labels: background_labels(item) })
        .collect();
    let run = || {
        let mut net = ProbeNet::<f32>::init(32, &BACKGROUND_PROBE_HEADS, 7);
        train_probe_net(&mut net, &examples, 7).unwrap();
        net.weight_checksum()
    };
    assert_eq!(run(), run());
}

#[test]
fn same_subject_embeddings_are_closer_than_cross_subject() {
    let probes = trained_probes();
    let grid = full_grid::<f32>(&default_subjects());
    // average within-subject vs cross-subject embedding cosine over a
    // deterministic subsample
    let sample: Vec<_> = grid.iter().step_by(37).collect();
    let embeds: Vec<(usize, Vec<f32>)> = sample
        .iter()
        .map(|item| {
            (
                item.subject_id,
                probes.subject.embed(&item.image).unwrap().into_data(),
            )
        })
        .collect();
    let cos = |a: &[f32], b: &[f32]| {
        let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
        let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
        dot / (na * nb + 1e-8)
    };
    let (mut same, mut same_n, mut cross, mut cross_n) = (0.0f64, 0usize, 0.0f64, 0usize);
    for i in 0..embeds.len() {
        for j in (i + 1)..embeds.len() {
            let c = cos(&embeds[i].1, &embeds[j].1) as f64;
            if embeds[i].0 == embeds[j].0 {
                same += c;
                same_n += 1;
            } else {
                cross += c;
                cross_n += 1;
            }
        }
    }
    let (same_avg, cross_avg) = (same / same_n as f64, cross / cross_n as f64);
    println!("within-subject avg cos {same_avg:.4}, cross-subject {cross_avg:.4}");
    assert!(same_avg > cross_avg);
}
