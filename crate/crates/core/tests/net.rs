use dtd_core::net::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn naive_conv(x: &Tensor, k: &[f64], b: &[f64], kh: usize, kw: usize, s: usize) -> Vec<f64> {
    let (cin, h, w) = x.shape();
    let (oh, ow) = ((h - kh) / s + 1, (w - kw) / s + 1);
    let mut out = Vec::new();
    for o in 0..b.len() {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b[o];
                for c in 0..cin {
                    for u in 0..kh {
                        for v in 0..kw {
                            acc += k[((o * cin + c) * kh + u) * kw + v] * x.at(c, i * s + u, j * s + v);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn naive_pool(x: &Tensor, size: usize, s: usize) -> Vec<f64> {
    let (c, h, w) = x.shape();
    let mut out = Vec::new();
    for ch in 0..c {
        for i in 0..(h - size) / s + 1 {
            for j in 0..(w - size) / s + 1 {
                let mut m = f64::NEG_INFINITY;
                for u in 0..size {
                    for v in 0..size {
                        m = m.max(x.at(ch, i * s + u, j * s + v));
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn conv_matches_naive(seed in any::<u64>(), cin in 1usize..4, cout in 1usize..4,
                          h in 3usize..12, w in 3usize..12, kh in 1usize..4, kw in 1usize..4, s in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::new(cin, h, w, rand_vec(&mut rng, cin * h * w)).unwrap();
        let k = rand_vec(&mut rng, cout * cin * kh * kw);
        let b = rand_vec(&mut rng, cout);
        let y = conv_forward(&x, &k, &b, kh, kw, s).unwrap();
        prop_assert!(max_abs_diff(&y.data, &naive_conv(&x, &k, &b, kh, kw, s)) <= 1e-6);
    }

    #[test]
    fn pool_matches_naive(seed in any::<u64>(), c in 1usize..4, h in 2usize..12, w in 2usize..12,
                          size in 1usize..4, s in 1usize..3) {
        prop_assume!(size <= h && size <= w);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::new(c, h, w, rand_vec(&mut rng, c * h * w)).unwrap();
        let (y, _) = maxpool_forward(&x, size, s).unwrap();
        prop_assert!(max_abs_diff(&y.data, &naive_pool(&x, size, s)) <= 1e-6);
    }

    #[test]
    fn fc_matches_naive(seed in any::<u64>(), n_in in 1usize..40, n_out in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::flat(rand_vec(&mut rng, n_in));
        let m = rand_vec(&mut rng, n_in * n_out);
        let b = rand_vec(&mut rng, n_out);
        let y = fc_forward(&x, &m, &b).unwrap();
        let mut oracle = Vec::new();
        for o in 0..n_out {
            let mut acc = b[o];
            for i in 0..n_in {
                acc += m[o * n_in + i] * x.data[i];
            }
            oracle.push(acc);
        }
        prop_assert!(max_abs_diff(&y.data, &oracle) <= 1e-6);
    }
}

#[test]
fn two_layer_network_is_composition_of_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = NetworkSpec {
        name: "toy".into(),
        input_h: 6,
        input_w: 5,
        layers: vec![LayerSpec::conv(2, 3), LayerSpec::fc(3)],
        output_dim: 3,
    };
    let mut w = NetworkWeights::zeros(&spec).unwrap();
    for p in w.params_mut() {
        *p = rng.gen_range(-1.0..1.0);
    }
    let x = Tensor::new(1, 6, 5, rand_vec(&mut rng, 30)).unwrap();
    let hidden = naive_conv(&x, &w.layers[0].weights, &w.layers[0].bias, 3, 3, 1);
    let m = &w.layers[1].weights;
    let oracle: Vec<f64> = (0..3)
        .map(|o| w.layers[1].bias[o] + (0..hidden.len()).map(|i| m[o * hidden.len() + i] * hidden[i]).sum::<f64>())
        .collect();
    let out = net_forward(&spec, &w, &x).unwrap();
    assert!(max_abs_diff(&out, &oracle) < 1e-12);
}

/// Largest relative error between backprop and central differences.
fn gradcheck(spec: &NetworkSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = NetworkWeights::init(spec, seed).unwrap();
    for l in w.layers.iter_mut() {
        for b in l.bias.iter_mut() {
            *b = rng.gen_range(-0.2..0.2);
        }
    }
    let x = Tensor::new(1, spec.input_h, spec.input_w, rand_vec(&mut rng, spec.input_h * spec.input_w)).unwrap();
    let target = rand_vec(&mut rng, spec.output_dim);
    let (_, g) = backward(spec, &w, &x, &target).unwrap();
    let loss = |w: &NetworkWeights| mse_loss(&net_forward(spec, w, &x).unwrap(), &target).unwrap();
    let h = 1e-3;
    let mut worst = 0.0f64;
    for li in 0..w.layers.len() {
        for which in 0..2 {
            let n = if which == 0 { w.layers[li].weights.len() } else { w.layers[li].bias.len() };
            for k in 0..n {
                let mut wp = w.clone();
                let mut wm = w.clone();
                if which == 0 {
                    wp.layers[li].weights[k] += h;
                    wm.layers[li].weights[k] -= h;
                } else {
                    wp.layers[li].bias[k] += h;
                    wm.layers[li].bias[k] -= h;
                }
                let numeric = (loss(&wp) - loss(&wm)) / (2.0 * h);
                let analytic = if which == 0 { g.layers[li].weights[k] } else { g.layers[li].bias[k] };
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let specs = [
        NetworkSpec { name: "a".into(), input_h: 7, input_w: 6, layers: vec![LayerSpec::conv(2, 3), LayerSpec::Relu, LayerSpec::fc(3)], output_dim: 3 },
        NetworkSpec {
            name: "b".into(),
            input_h: 8,
            input_w: 8,
            layers: vec![LayerSpec::conv(3, 3), LayerSpec::pool2(), LayerSpec::Relu, LayerSpec::fc(2)],
            output_dim: 2,
        },
        NetworkSpec {
            name: "c".into(),
            input_h: 9,
            input_w: 7,
            layers: vec![
                LayerSpec::Conv { out_channels: 2, kernel_h: 3, kernel_w: 2, stride: 2 },
                LayerSpec::Relu,
                LayerSpec::fc(4),
                LayerSpec::fc(2),
            ],
            output_dim: 2,
        },
    ];
    for (i, s) in specs.iter().enumerate() {
        for seed in 0..3 {
            let e = gradcheck(s, seed * 10 + i as u64);
            assert!(e <= 1e-4, "spec {i} seed {seed}: {e}");
        }
    }
}

#[test]
fn cascade_outputs_five_points_in_frame() {
    let spec = CascadeSpec::toy();
    let casc = LandmarkCascade::init(spec, 3).unwrap();
    let img = dtd_core::synth::render_background(120, 90, 2);
    for b in [
        dtd_core::BoundingBox::new(10.0, 10.0, 50.0, 50.0).unwrap(),
        dtd_core::BoundingBox::new(100.0, 70.0, 50.0, 50.0).unwrap(),
    ] {
        let lm = casc.predict(&img, &b).unwrap();
        assert_eq!(lm.points.len(), 5);
        assert!(lm.points.iter().all(|p| p.x >= 0.0 && p.x <= 119.0 && p.y >= 0.0 && p.y <= 89.0));
    }
}

#[test]
fn mismatched_weights_rejected() {
    let spec = CascadeSpec::toy();
    let mut w = center_predicting_weights(&spec).unwrap();
    w.pop();
    assert_eq!(LandmarkCascade::new(spec.clone(), w), Err(NetError::WeightsMismatch));
    let other = center_predicting_weights(&CascadeSpec::default_architecture()).unwrap();
    assert_eq!(LandmarkCascade::new(spec, other), Err(NetError::WeightsMismatch));
}
