//! Deterministic rasterization of subjects onto textured backgrounds.
//!
//! Integer-only geometry: the subject mask is a pure function of the
//! center-relative offset, so the same subject at two grid positions
//! produces identical subject pixels up to translation.

use crate::scalar::Scalar;
use crate::synthbench::factors::{SceneSpec, SubjectScale, SubjectShape, SubjectSpec, Texture};
use crate::tensor::Tensor;

/// Benchmark image side length.
pub const IMAGE_SIZE: usize = 32;

fn unit_to_signed(u: f64) -> f64 {
    u * 2.0 - 1.0
}

fn darken(u: f64) -> f64 {
    u * 0.5
}

/// Center pixel of a grid cell (row-major position index).
pub fn grid_center(position: u8, size: usize) -> (usize, usize) {
    let (row, col) = ((position / 3) as usize, (position % 3) as usize);
    let cx = (2 * col + 1) * size / 6;
    let cy = (2 * row + 1) * size / 6;
    (cx, cy)
}

pub fn subject_radius(scale: SubjectScale, size: usize) -> isize {
    match scale {
        SubjectScale::Small => (size / 8) as isize,
        SubjectScale::Medium => (size * 5 / 32).max(3) as isize,
    }
}

/// Whether the center-relative offset `(dx, dy)` lies inside the shape of
/// radius `r`.
pub fn shape_mask(shape: SubjectShape, dx: isize, dy: isize, r: isize) -> bool {
    match shape {
        SubjectShape::Circle => dx * dx + dy * dy <= r * r,
        SubjectShape::Square => dx.abs() <= r && dy.abs() <= r,
        SubjectShape::Triangle => {
            if dy < -r || dy > r {
                return false;
            }
            let halfwidth = (dy + r) / 2;
            dx.abs() <= halfwidth
        }
        SubjectShape::Cross => {
            (dx.abs() <= 1 && dy.abs() <= r) || (dy.abs() <= 1 && dx.abs() <= r)
        }
    }
}

/// Top-left corners of the 2x2 marker dots, chosen per shape so the dots
/// survive clipping to the silhouette at both scales.
fn marker_offsets(shape: SubjectShape) -> [(isize, isize); 3] {
    match shape {
        SubjectShape::Circle | SubjectShape::Square => [(-2, -2), (2, -2), (0, 2)],
        SubjectShape::Triangle => [(0, 0), (-2, 2), (2, 2)],
        SubjectShape::Cross => [(0, -2), (0, 2), (-2, 0)],
    }
}

fn background_rgb(scene: &SceneSpec, x: usize, y: usize) -> [f64; 3] {
    let base = scene.bg.rgb();
    let darker = match scene.texture {
        Texture::Plain => false,
        Texture::Stripes => (y / 4) % 2 == 1,
        Texture::Checker => (x / 4 + y / 4) % 2 == 1,
    };
    if darker {
        [darken(base[0]), darken(base[1]), darken(base[2])]
    } else {
        base
    }
}

/// Rasterize one subject in one scene to a `(3, size, size)` tensor in
/// `[-1, 1]`.
pub fn render_sized<E: Scalar>(subject: &SubjectSpec, scene: &SceneSpec, size: usize) -> Tensor<E> {
    let plane = size * size;
    let mut data = vec![E::ZERO; 3 * plane];
    for y in 0..size {
        for x in 0..size {
            let rgb = background_rgb(scene, x, y);
            for c in 0..3 {
                data[c * plane + y * size + x] = E::from_f64(unit_to_signed(rgb[c]));
            }
        }
    }

    let (cx, cy) = grid_center(scene.position, size);
    let r = subject_radius(scene.scale, size);
    let fill = subject.fill.rgb();
    for dy in -r..=r {
        for dx in -r..=r {
            if !shape_mask(subject.shape, dx, dy, r) {
                continue;
            }
            let (x, y) = (cx as isize + dx, cy as isize + dy);
            if x < 0 || y < 0 || x >= size as isize || y >= size as isize {
                continue;
            }
            let idx = y as usize * size + x as usize;
            for c in 0..3 {
                data[c * plane + idx] = E::from_f64(unit_to_signed(fill[c]));
            }
        }
    }

    // identity markers: 2x2 black dots clipped to the silhouette
    let offsets = marker_offsets(subject.shape);
    for &(ox, oy) in offsets.iter().take(subject.markers as usize) {
        for sy in 0..2isize {
            for sx in 0..2isize {
                let (dx, dy) = (ox + sx, oy + sy);
                if !shape_mask(subject.shape, dx, dy, r) {
                    continue;
                }
                let (x, y) = (cx as isize + dx, cy as isize + dy);
                if x < 0 || y < 0 || x >= size as isize || y >= size as isize {
                    continue;
                }
                let idx = y as usize * size + x as usize;
                for c in 0..3 {
                    data[c * plane + idx] = E::from_f64(-1.0);
                }
            }
        }
    }

    Tensor::new(vec![3, size, size], data).expect("render buffer matches shape")
}

/// Rasterize at the benchmark's canonical 32x32 resolution.
pub fn render<E: Scalar>(subject: &SubjectSpec, scene: &SceneSpec) -> Tensor<E> {
    render_sized(subject, scene, IMAGE_SIZE)
}

/// Background-only render (no subject); used by construction tests.
pub fn render_background<E: Scalar>(scene: &SceneSpec, size: usize) -> Tensor<E> {
    let plane = size * size;
    let mut data = vec![E::ZERO; 3 * plane];
    for y in 0..size {
        for x in 0..size {
            let rgb = background_rgb(scene, x, y);
            for c in 0..3 {
                data[c * plane + y * size + x] = E::from_f64(unit_to_signed(rgb[c]));
            }
        }
    }
    Tensor::new(vec![3, size, size], data).expect("render buffer matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::factors::{default_subjects, BgColor};

    fn scene(position: u8, scale: SubjectScale) -> SceneSpec {
        SceneSpec { bg: BgColor::White, texture: Texture::Plain, position, scale }
    }

    #[test]
    fn deterministic_rendering() {
        let subject = default_subjects()[0];
        let s = scene(4, SubjectScale::Medium);
        let a = render::<f32>(&subject, &s);
        let b = render::<f32>(&subject, &s);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn subject_pixels_translate_between_positions() {
        // compare center-relative subject pixels across two grid cells
        let subject = default_subjects()[1];
        let s0 = scene(0, SubjectScale::Medium);
        let s8 = scene(8, SubjectScale::Medium);
        let (a, b) = (render::<f32>(&subject, &s0), render::<f32>(&subject, &s8));
        let size = IMAGE_SIZE;
        let plane = size * size;
        let r = subject_radius(SubjectScale::Medium, size);
        let (cx0, cy0) = grid_center(0, size);
        let (cx8, cy8) = grid_center(8, size);
        for dy in -r..=r {
            for dx in -r..=r {
                if !shape_mask(subject.shape, dx, dy, r) {
                    continue;
                }
                let ia = (cy0 as isize + dy) as usize * size + (cx0 as isize + dx) as usize;
                let ib = (cy8 as isize + dy) as usize * size + (cx8 as isize + dx) as usize;
                for c in 0..3 {
                    assert_eq!(a.data()[c * plane + ia], b.data()[c * plane + ib]);
                }
            }
        }
    }

    #[test]
    fn background_only_render_has_no_fill_pixels_in_cell() {
        let s = SceneSpec {
            bg: BgColor::Navy,
            texture: Texture::Plain,
            position: 4,
            scale: SubjectScale::Medium,
        };
        let bg = render_background::<f32>(&s, IMAGE_SIZE);
        let subject = default_subjects()[0]; // red fill
        let red = subject.fill.rgb();
        let red_signed: Vec<f32> = red.iter().map(|&u| (u * 2.0 - 1.0) as f32).collect();
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        let (cx, cy) = grid_center(4, IMAGE_SIZE);
        let r = subject_radius(SubjectScale::Medium, IMAGE_SIZE);
        for dy in -r..=r {
            for dx in -r..=r {
                let idx = (cy as isize + dy) as usize * IMAGE_SIZE + (cx as isize + dx) as usize;
                let px: Vec<f32> = (0..3).map(|c| bg.data()[c * plane + idx]).collect();
                assert_ne!(px, red_signed, "background contains subject fill at {dx},{dy}");
            }
        }
    }

    #[test]
    fn markers_are_visible_at_both_scales() {
        for subject in default_subjects().iter().filter(|s| s.markers > 0) {
            for scale in SubjectScale::ALL {
                let s = scene(4, scale);
                let with = render::<f32>(subject, &s);
                let without =
                    render::<f32>(&SubjectSpec { markers: 0, ..*subject }, &s);
                let diff = with.max_abs_diff(&without);
                assert!(
                    diff > 0.5,
                    "markers invisible for {:?} at {:?}",
                    subject.shape,
                    scale
                );
            }
        }
    }

    #[test]
    fn distinct_marker_counts_render_distinctly() {
        let base = default_subjects()[0];
        let s = scene(4, SubjectScale::Medium);
        let mut renders = Vec::new();
        for m in 0..=3u8 {
            renders.push(render::<f32>(&SubjectSpec { markers: m, ..base }, &s));
        }
        for i in 0..renders.len() {
            for j in (i + 1)..renders.len() {
                assert!(renders[i].max_abs_diff(&renders[j]) > 0.0);
            }
        }
    }
}
