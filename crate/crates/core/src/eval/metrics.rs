//! Score computations over embeddings and factor predictions.
//!
//! Metric definitions used throughout evaluation:
//!
//! * identity score: mean pairwise cosine between probe embeddings of
//!   generated and real images.
//! * subject match: nearest subject centroid (by cosine over subject-probe
//!   embeddings of the training exemplars).
//! * prompt fidelity: fraction of prompt factors (background color,
//!   texture) matched by the background probe, averaged over images.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::synthbench::factors::{BgColor, Texture};

/// Cosine similarity of two embedding slices (f64 accumulation).
pub fn embedding_cosine<E: Scalar>(a: &[E], b: &[E]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for i in 0..a.len() {
        let (x, y) = (a[i].to_f64(), b[i].to_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / ((na * nb).sqrt() + 1e-12)
}

/// Mean pairwise cosine between two embedding sets (every generated
/// against every real).
pub fn identity_score<E: Scalar>(generated: &[Vec<E>], real: &[Vec<E>]) -> Result<f64> {
    if generated.is_empty() || real.is_empty() {
        return Err(Error::Input("identity score needs at least one image per side".into()));
    }
    let mut acc = 0.0f64;
    for g in generated {
        for r in real {
            acc += embedding_cosine(g, r);
        }
    }
    Ok(acc / (generated.len() * real.len()) as f64)
}

/// Per-subject mean embeddings of the training exemplars.
pub fn subject_centroids<E: Scalar>(embeds_per_subject: &[Vec<Vec<E>>]) -> Vec<Vec<f64>> {
    embeds_per_subject
        .iter()
        .map(|set| {
            let dim = set.first().map(|e| e.len()).unwrap_or(0);
            let mut c = vec![0.0f64; dim];
            for e in set {
                for (ci, ei) in c.iter_mut().zip(e) {
                    *ci += ei.to_f64() / set.len() as f64;
                }
            }
            c
        })
        .collect()
}

/// Index of the nearest centroid by cosine.
pub fn nearest_centroid<E: Scalar>(embed: &[E], centroids: &[Vec<f64>]) -> usize {
    let ef: Vec<f64> = embed.iter().map(|v| v.to_f64()).collect();
    let mut best = 0usize;
    let mut best_cos = f64::NEG_INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for (x, y) in ef.iter().zip(c) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        let cos = dot / ((na * nb).sqrt() + 1e-12);
        if cos > best_cos {
            best_cos = cos;
            best = i;
        }
    }
    best
}

/// Fraction of prompt factors matched, averaged over images: each image
/// contributes (color match + texture match) / 2.
pub fn prompt_fidelity(
    predictions: &[(BgColor, Texture)],
    target: (BgColor, Texture),
) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Input("prompt fidelity needs at least one image".into()));
    }
    let mut acc = 0.0f64;
    for (color, texture) in predictions {
        let mut hits = 0.0;
        if *color == target.0 {
            hits += 1.0;
        }
        if *texture == target.1 {
            hits += 1.0;
        }
        acc += hits / 2.0;
    }
    Ok(acc / predictions.len() as f64)
}

/// Spearman rank correlation between two equal-length sequences.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            // average ranks over ties
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        let (dx, dy) = (rx[i] - mx, ry[i] - my);
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    cov / (vx * vy).sqrt().max(1e-12)
}
