//! Gradient soundness: every differentiable tape operation against the
//! central-difference oracle, in f64, with random seeded inputs.

mod common;

use disentune::autodiff::{Tape, Var};
use disentune::rng::{normal_tensor, rng_from_seed};
use disentune::tensor::Tensor;

use common::{central_diff, max_rel_err};

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;
const CLAMP: f64 = 1e-12;

/// Run one gradcheck: `build` assembles a scalar loss from leaves of the
/// given shapes; analytic tape gradients must match central differences.
fn gradcheck(
    seed: u64,
    shapes: &[&[usize]],
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
) {
    gradcheck_at(seed, shapes, build, |v| v)
}

fn gradcheck_at(
    seed: u64,
    shapes: &[&[usize]],
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
    remap: impl Fn(f64) -> f64,
) {
    let mut rng = rng_from_seed(seed);
    let mut flat: Vec<f64> = Vec::new();
    let mut offsets = vec![0usize];
    for shape in shapes {
        let t: Tensor<f64> = normal_tensor(&mut rng, shape.to_vec(), 0.7);
        flat.extend(t.data().iter().map(|v| remap(*v)));
        offsets.push(flat.len());
    }

    let eval = |xs: &[f64]| -> f64 {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = shapes
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let data = xs[offsets[i]..offsets[i + 1]].to_vec();
                tape.leaf(Tensor::new(shape.to_vec(), data).unwrap(), true).unwrap()
            })
            .collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).item()
    };

    // analytic gradients
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = shapes
        .iter()
        .enumerate()
        .map(|(i, shape)| {
            let data = flat[offsets[i]..offsets[i + 1]].to_vec();
            tape.leaf(Tensor::new(shape.to_vec(), data).unwrap(), true).unwrap()
        })
        .collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let mut analytic = Vec::with_capacity(flat.len());
    for v in &vars {
        analytic.extend_from_slice(tape.grad(*v).unwrap().data());
    }

    let numeric = central_diff(&eval, &flat, H);
    let err = max_rel_err(&analytic, &numeric, CLAMP);
    assert!(
        err <= TOL,
        "gradient mismatch: max rel err {err:.3e} > {TOL:.0e} (seed {seed})"
    );
}

/// Mix the op output into a scalar through a fixed random weighting so every
/// output element receives a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape<f64>, x: Var, seed: u64) -> Var {
    let shape = tape.value(x).shape().to_vec();
    let mut rng = rng_from_seed(seed ^ 0xabcd);
    let w = tape.constant(normal_tensor(&mut rng, shape, 1.0)).unwrap();
    let prod = tape.hadamard(x, w).unwrap();
    tape.sum_all(prod).unwrap()
}

#[test]
fn grad_add_sub_hadamard_scale() {
    gradcheck(1, &[&[3, 4], &[3, 4]], |t, v| {
        let s = t.add(v[0], v[1]).unwrap();
        weighted_sum(t, s, 1)
    });
    gradcheck(2, &[&[5], &[5]], |t, v| {
        let s = t.sub(v[0], v[1]).unwrap();
        weighted_sum(t, s, 2)
    });
    gradcheck(3, &[&[2, 3], &[2, 3]], |t, v| {
        let s = t.hadamard(v[0], v[1]).unwrap();
        weighted_sum(t, s, 3)
    });
    gradcheck(4, &[&[7]], |t, v| {
        let s = t.scale(v[0], -1.7).unwrap();
        weighted_sum(t, s, 4)
    });
}

#[test]
fn grad_matmul_both_orientations() {
    gradcheck(5, &[&[3, 4], &[4, 2]], |t, v| {
        let s = t.matmul(v[0], v[1]).unwrap();
        weighted_sum(t, s, 5)
    });
    gradcheck(6, &[&[3, 4], &[5, 4]], |t, v| {
        let s = t.matmul_nt(v[0], v[1]).unwrap();
        weighted_sum(t, s, 6)
    });
}

#[test]
fn grad_sum_of_matmul_matches_finite_differences() {
    // plain sum(A x B): the rel-err <= 1e-6 contract case
    gradcheck(7, &[&[4, 3], &[3, 5]], |t, v| {
        let s = t.matmul(v[0], v[1]).unwrap();
        t.sum_all(s).unwrap()
    });
}

#[test]
fn grad_broadcasts() {
    gradcheck(8, &[&[4, 3], &[3]], |t, v| {
        let s = t.add_bias_row(v[0], v[1]).unwrap();
        weighted_sum(t, s, 8)
    });
    gradcheck(9, &[&[4, 3, 3], &[4]], |t, v| {
        let s = t.add_channel(v[0], v[1]).unwrap();
        weighted_sum(t, s, 9)
    });
    gradcheck(10, &[&[4, 3, 3], &[4]], |t, v| {
        let s = t.mul_channel(v[0], v[1]).unwrap();
        weighted_sum(t, s, 10)
    });
}

#[test]
fn grad_activations() {
    // relu is non-differentiable at 0; push inputs away from the kink
    gradcheck_at(
        11,
        &[&[8]],
        |t, v| {
            let s = t.relu(v[0]).unwrap();
            weighted_sum(t, s, 11)
        },
        |v| if v.abs() < 0.05 { v + 0.2 } else { v },
    );
    gradcheck(12, &[&[8]], |t, v| {
        let s = t.silu(v[0]).unwrap();
        weighted_sum(t, s, 12)
    });
    gradcheck(13, &[&[8]], |t, v| {
        let s = t.sigmoid(v[0]).unwrap();
        weighted_sum(t, s, 13)
    });
}

#[test]
fn grad_group_norm() {
    gradcheck(14, &[&[4, 3, 3]], |t, v| {
        let s = t.group_norm(v[0], 2, 1e-5).unwrap();
        weighted_sum(t, s, 14)
    });
    gradcheck(15, &[&[6, 2, 2]], |t, v| {
        let s = t.group_norm(v[0], 3, 1e-5).unwrap();
        weighted_sum(t, s, 15)
    });
}

#[test]
fn grad_softmax_and_means() {
    gradcheck(16, &[&[3, 5]], |t, v| {
        let s = t.softmax_rows(v[0]).unwrap();
        weighted_sum(t, s, 16)
    });
    gradcheck(17, &[&[4, 3]], |t, v| {
        let s = t.mean_rows(v[0]).unwrap();
        weighted_sum(t, s, 17)
    });
    gradcheck(18, &[&[6]], |t, v| t.mean_all(v[0]).unwrap());
}

#[test]
fn grad_conv2d_stride_1_and_2() {
    for (seed, stride) in [(19u64, 1usize), (20, 2)] {
        gradcheck(seed, &[&[2, 5, 5], &[3, 2, 3, 3], &[3]], |t, v| {
            let s = t.conv2d(v[0], v[1], Some(v[2]), stride).unwrap();
            weighted_sum(t, s, seed)
        });
    }
    // bias-free path
    gradcheck(21, &[&[2, 4, 4], &[2, 2, 3, 3]], |t, v| {
        let s = t.conv2d(v[0], v[1], None, 1).unwrap();
        weighted_sum(t, s, 21)
    });
}

#[test]
fn grad_upsample() {
    gradcheck(22, &[&[3, 3, 3]], |t, v| {
        let s = t.upsample_nearest2x(v[0]).unwrap();
        weighted_sum(t, s, 22)
    });
}

#[test]
fn grad_mse_matches_closed_form_and_fd() {
    gradcheck(23, &[&[6], &[6]], |t, v| t.mse(v[0], v[1]).unwrap());

    // analytic gradient equals 2(a-b)/n exactly
    let mut tape = Tape::<f64>::new();
    let a = tape
        .leaf(Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 0.25]).unwrap(), true)
        .unwrap();
    let b = tape
        .leaf(Tensor::new(vec![4], vec![0.0, 1.0, 2.0, -0.75]).unwrap(), true)
        .unwrap();
    let loss = tape.mse(a, b).unwrap();
    tape.backward(loss).unwrap();
    let ga = tape.grad(a).unwrap();
    let av = tape.value(a).data().to_vec();
    let bv = tape.value(b).data().to_vec();
    for i in 0..4 {
        assert_eq!(ga.data()[i], 2.0 * (av[i] - bv[i]) / 4.0);
    }
}

#[test]
fn grad_cosine() {
    gradcheck(24, &[&[5], &[5]], |t, v| t.cosine(v[0], v[1], 1e-8).unwrap());
    gradcheck(25, &[&[3], &[3]], |t, v| {
        let c = t.cosine(v[0], v[1], 1e-8).unwrap();
        t.scale(c, 2.5).unwrap()
    });
}

#[test]
fn grad_cross_entropy() {
    for target in 0..3 {
        gradcheck(26 + target as u64, &[&[3]], |t, v| t.cross_entropy(v[0], target).unwrap());
    }
}

#[test]
fn grad_reshape_transpose() {
    gradcheck(30, &[&[2, 6]], |t, v| {
        let r = t.reshape(v[0], vec![3, 4]).unwrap();
        let tr = t.transpose2d(r).unwrap();
        weighted_sum(t, tr, 30)
    });
}

#[test]
fn grad_slice() {
    gradcheck(32, &[&[8]], |t, v| {
        let lo = t.slice1d(v[0], 0, 4).unwrap();
        let hi = t.slice1d(v[0], 4, 4).unwrap();
        let p = t.hadamard(lo, hi).unwrap();
        weighted_sum(t, p, 32)
    });
}

#[test]
fn grad_composite_mlp_block() {
    // chained linear -> relu -> linear -> mse against a target
    gradcheck_at(
        31,
        &[&[1, 4], &[5, 4], &[5], &[4, 5], &[4]],
        |t, v| {
            let h = t.matmul_nt(v[0], v[1]).unwrap();
            let h = t.add_bias_row(h, v[2]).unwrap();
            let h = t.relu(h).unwrap();
            let h = t.matmul_nt(h, v[3]).unwrap();
            let h = t.add_bias_row(h, v[4]).unwrap();
            let mut rng = rng_from_seed(777);
            let target = t.constant(normal_tensor(&mut rng, vec![1, 4], 1.0)).unwrap();
            t.mse(h, target).unwrap()
        },
        |v| if v.abs() < 0.05 { v + 0.1 } else { v },
    );
}

#[test]
fn tape_replay_reproduces_gradients() {
    // forward/backward twice from scratch yields identical gradients
    let run = || {
        let mut tape = Tape::<f64>::new();
        let mut rng = rng_from_seed(99);
        let x = tape.leaf(normal_tensor(&mut rng, vec![3, 3], 1.0), true).unwrap();
        let w = tape.leaf(normal_tensor(&mut rng, vec![3, 3], 1.0), true).unwrap();
        let y = tape.matmul(x, w).unwrap();
        let y = tape.silu(y).unwrap();
        let loss = tape.sum_all(y).unwrap();
        tape.backward(loss).unwrap();
        (
            tape.grad(x).unwrap().data().to_vec(),
            tape.grad(w).unwrap().data().to_vec(),
        )
    };
    let (gx1, gw1) = run();
    let (gx2, gw2) = run();
    assert_eq!(gx1, gx2);
    assert_eq!(gw1, gw2);
}
