use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn check<F>(f: F, params: &[Tensor<f64>])
where
    F: Fn(&mut Tape<f64>, &[Var]) -> crate::Result<Var>,
{
    let r = grad_check(f, params, 1e-6).unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
}

/// Weighted sum with fixed pseudo-random weights, so every output entry
/// carries a distinct upstream gradient.
fn probe(tape: &mut Tape<f64>, x: Var) -> crate::Result<Var> {
    let n = tape.value(x).len();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7919 % 23) as f64 - 11.0) / 7.0).collect();
    let wt = tape.constant(Tensor::new(tape.shape(x).to_vec(), w)?);
    let p = tape.mul(x, wt)?;
    tape.sum(p)
}

#[test]
fn square_at_three() {
    let x = Tensor::from_f64(vec![1], &[3.0]).unwrap();
    let r = grad_check(
        |t, v| {
            let y = t.mul(v[0], v[0])?;
            t.sum(y)
        },
        &[x],
        1e-4,
    )
    .unwrap();
    assert!((r.analytic - 6.0).abs() < 1e-12);
    assert!((r.numeric - 6.0).abs() < 1e-8);
    assert!(r.max_rel_error < 1e-9);
}

#[test]
fn matmul_variants_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 4]);
    let b = rand_tensor(&mut rng, &[4, 5]);
    let c = rand_tensor(&mut rng, &[2, 5]);
    check(
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let z = t.matmul_t(y, v[2])?;
            probe(t, z)
        },
        &[a, b, c.clone()],
    );
}

#[test]
fn elementwise_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[3, 4]);
    let b = rand_tensor(&mut rng, &[3, 4]);
    let bias = rand_tensor(&mut rng, &[4]);
    check(
        |t, v| {
            let s = t.add(v[0], v[1])?;
            let d = t.sub(s, v[1])?;
            let m = t.mul(d, v[1])?;
            let r = t.add_row(m, v[2])?;
            let g = t.gelu(r)?;
            let sg = t.sigmoid(g)?;
            let om = t.one_minus(sg)?;
            let af = t.affine(om, 2.5, -0.3)?;
            probe(t, af)
        },
        &[a, b, bias],
    );
}

#[test]
fn softmax_any_axis_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[2, 3, 4]);
    for axis in 0..3 {
        check(
            |t, v| {
                let s = t.softmax(v[0], axis)?;
                probe(t, s)
            },
            std::slice::from_ref(&x),
        );
    }
}

#[test]
fn masked_softmax_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&mut rng, &[3, 3]);
    let mask = [0.0, f64::NEG_INFINITY, 0.0, 0.0, 0.0, f64::NEG_INFINITY, 0.0, 0.0, 0.0];
    check(
        |t, v| {
            let m = t.add_const(v[0], &mask)?;
            let s = t.softmax(m, 1)?;
            probe(t, s)
        },
        &[x],
    );
}

#[test]
fn layer_norm_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[3, 5]);
    let g = rand_tensor(&mut rng, &[5]);
    let b = rand_tensor(&mut rng, &[5]);
    check(
        |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            probe(t, y)
        },
        &[x, g, b],
    );
}

#[test]
fn gather_slice_concat_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let table = rand_tensor(&mut rng, &[5, 4]);
    let other = rand_tensor(&mut rng, &[2, 4]);
    check(
        |t, v| {
            let g = t.gather_rows(v[0], &[1, 3, 1, 0])?;
            let top = t.slice_rows(g, 1, 2)?;
            let left = t.slice_cols(top, 0, 3)?;
            let right = t.slice_cols(v[1], 1, 3)?;
            let cc = t.concat_cols(&[left, right])?;
            let cr = t.concat_rows(&[cc, cc])?;
            let cmask = std::rc::Rc::new((0..24).map(|i| (i % 3) as f64).collect::<Vec<_>>());
            let mc = t.mul_const(cr, cmask)?;
            probe(t, mc)
        },
        &[table, other],
    );
}

#[test]
fn cross_entropy_gradcheck_and_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let logits = rand_tensor(&mut rng, &[4, 6]);
    check(
        |t, v| t.cross_entropy(v[0], &[1, 5, 0, 2], &[true, false, true, true]),
        &[logits],
    );

    let mut t = Tape::<f64>::new();
    let z = t.constant(Tensor::zeros(vec![2, 4]));
    let l = t.cross_entropy(z, &[0, 3], &[true, true]).unwrap();
    assert!((t.value(l).data()[0] - 4f64.ln()).abs() < 1e-15);
    assert!(t.cross_entropy(z, &[0, 3], &[false, false]).is_err());
}

#[test]
fn layer_norm_examples() {
    let mut t = Tape::<f64>::new();
    let ones = t.constant(Tensor::full(vec![3], 1.0));
    let zeros = t.constant(Tensor::zeros(vec![3]));
    let x = t.constant(Tensor::full(vec![1, 3], 1.0));
    let y = t.layer_norm(x, ones, zeros, 1e-12).unwrap();
    assert!(t.value(y).data().iter().all(|&v| v == 0.0));

    let g2 = t.constant(Tensor::full(vec![2], 1.0));
    let s2 = t.constant(Tensor::zeros(vec![2]));
    let x2 = t.constant(Tensor::from_f64(vec![1, 2], &[-1.0, 1.0]).unwrap());
    let y2 = t.layer_norm(x2, g2, s2, 1e-12).unwrap();
    assert!((t.value(y2).data()[0] + 1.0).abs() < 1e-9);
    assert!((t.value(y2).data()[1] - 1.0).abs() < 1e-9);

    let g0 = t.constant(Tensor::zeros(vec![2]));
    let s5 = t.constant(Tensor::full(vec![2], 5.0));
    let y3 = t.layer_norm(x2, g0, s5, 1e-5).unwrap();
    assert_eq!(t.value(y3).data(), &[5.0, 5.0]);

    assert!(t.layer_norm(x2, g2, s2, 0.0).is_err());
    assert!(t.layer_norm(x2, ones, zeros, 1e-5).is_err());
}

#[test]
fn backward_populates_every_tracked_leaf() {
    let mut t = Tape::<f64>::new();
    let a = t.leaf(Tensor::from_f64(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap().with_grad());
    let b = t.leaf(Tensor::from_f64(vec![2], &[0.5, -0.5]).unwrap().with_grad());
    let c = t.constant(Tensor::full(vec![2, 2], 2.0));
    let x = t.add_row(a, b).unwrap();
    let y = t.mul(x, c).unwrap();
    let s = t.sum(y).unwrap();
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(a).unwrap(), &[2.0; 4]);
    assert_eq!(g.get(b).unwrap(), &[4.0, 4.0]);
    assert!(g.get(c).is_none());
    assert!(t.backward(y).is_err());
}

#[test]
fn non_finite_function_is_a_numeric_error() {
    let x = Tensor::from_f64(vec![1], &[0.0]).unwrap();
    let err = grad_check(
        |t, v| {
            let big = t.affine(v[0], 1.0, f64::INFINITY)?;
            t.sum(big)
        },
        &[x],
        1e-6,
    )
    .unwrap_err();
    assert!(matches!(err, crate::ChimeError::Numeric(_)));
}

proptest! {
    #[test]
    fn softmax_is_probability_vector(xs in prop::collection::vec(-1e3f64..1e3, 1..16)) {
        let t = Tensor::new(vec![xs.len()], xs).unwrap();
        let s = softmax(&t, 0).unwrap();
        prop_assert!(s.data().iter().all(|&p| p >= 0.0));
        prop_assert!((s.data().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn clip_bounds_norm_and_keeps_direction(
        xs in prop::collection::vec(-50f64..50.0, 1..20),
        max_norm in 0.01f64..10.0,
    ) {
        let mut g = xs.clone();
        clip_global_norm(&mut [g.as_mut_slice()], max_norm).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm(&g) <= max_norm + 1e-9);
        let (n0, n1) = (norm(&xs), norm(&g));
        if n0 > 0.0 {
            let cos = xs.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / (n0 * n1);
            prop_assert!((cos - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_is_piecewise_linear_and_bounded(total in 1u64..5000, peak in 1e-6f64..1.0) {
        let s = LrSchedule { peak, total_steps: total, warmup_fraction: 0.2 };
        prop_assert_eq!(s.at(0).unwrap(), 0.0);
        prop_assert_eq!(s.at(total).unwrap(), 0.0);
        let warm = s.warmup_steps();
        if warm > 0 {
            prop_assert_eq!(s.at(warm).unwrap(), peak);
        }
        let mut prev = s.at(0).unwrap();
        for step in 1..=total.min(300) {
            let cur = s.at(step).unwrap();
            prop_assert!(cur >= 0.0 && cur <= peak);
            prop_assert!((cur - prev).abs() <= peak / (warm.max(1).min(total - warm).max(1)) as f64 + 1e-15);
            prev = cur;
        }
    }
}
