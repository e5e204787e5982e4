use slimconv::gradcheck::{check_layer, GradCheckConfig};
use slimconv::{reference, Cache, Dims, Error, Layer, LayerKind, LayerSpec, Rng, Tensor};

fn random_tensor(rng: &mut Rng, dims: (usize, usize, usize, usize)) -> Tensor<f64> {
    let d: Dims = dims.into();
    let values = (0..d.len()).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
    Tensor::from_values(d, values).unwrap()
}

fn max_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn layer_with(spec: LayerSpec, params: Vec<Vec<f64>>) -> Layer<f64> {
    let tensors = spec
        .param_shapes()
        .into_iter()
        .zip(params)
        .map(|((_, dims), v)| Tensor::from_values(dims, v).unwrap())
        .collect();
    Layer::with_params(spec, tensors).unwrap()
}

fn delta_kernel(channels_out: usize, channels_in: usize, diagonal_only: bool) -> Vec<f64> {
    let mut w = vec![0.0; channels_out * channels_in * 9];
    for co in 0..channels_out {
        for ci in 0..channels_in {
            if !diagonal_only || co == ci {
                w[(co * channels_in + ci) * 9 + 4] = 1.0;
            }
        }
    }
    w
}

#[test]
fn conv3_identity_kernel() {
    let mut rng = Rng::new(1);
    let x = random_tensor(&mut rng, (2, 1, 5, 6));
    let layer = layer_with(LayerSpec::conv3(1, 1), vec![delta_kernel(1, 1, false), vec![0.0]]);
    assert_eq!(layer.forward(&x).unwrap(), x);
}

#[test]
fn conv3_zero_kernel_gives_bias() {
    let mut rng = Rng::new(2);
    let x = random_tensor(&mut rng, (1, 2, 4, 4));
    let layer = layer_with(LayerSpec::conv3(2, 3), vec![vec![0.0; 54], vec![0.5, -1.0, 2.0]]);
    let y = layer.forward(&x).unwrap();
    for c in 0..3 {
        for h in 0..4 {
            for w in 0..4 {
                assert_eq!(y.get(0, c, h, w), [0.5, -1.0, 2.0][c]);
            }
        }
    }
}

#[test]
fn conv3_matches_direct_oracle() {
    let mut rng = Rng::new(3);
    // The 2→3-channel 6×6 case first, then assorted shapes and strides.
    let mut cases = vec![((2, 2, 6, 6), 3, 1)];
    for _ in 0..30 {
        let dims = (1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(9), 1 + rng.below(9));
        cases.push((dims, 1 + rng.below(5), 1 + rng.below(2)));
    }
    for (dims, cout, stride) in cases {
        let spec = LayerSpec::conv3(dims.1, cout).with_stride(stride);
        let layer = Layer::<f64>::new(spec, &mut rng).unwrap();
        let mut layer = layer;
        for v in layer.params_mut()[1].data_mut() {
            *v = rng.uniform(-1.0, 1.0).unwrap();
        }
        let x = random_tensor(&mut rng, dims);
        let got = layer.forward(&x).unwrap();
        let expect = reference::conv3x3(&x, &layer.params()[0], layer.params()[1].data(), stride);
        assert!(max_diff(&got, &expect) < 1e-10, "{dims:?} -> {cout}, stride {stride}");
    }
}

#[test]
fn conv3_rejects_channel_mismatch() {
    let mut rng = Rng::new(4);
    let layer = Layer::<f64>::new(LayerSpec::conv3(2, 3), &mut rng).unwrap();
    let x = random_tensor(&mut rng, (1, 3, 4, 4));
    assert!(matches!(layer.forward(&x), Err(Error::ShapeMismatch(_))));
}

#[test]
fn depthwise_separable_identity() {
    let mut rng = Rng::new(5);
    let x = random_tensor(&mut rng, (2, 3, 5, 5));
    let mut pw = vec![0.0; 9];
    for c in 0..3 {
        pw[c * 3 + c] = 1.0;
    }
    let layer = layer_with(
        LayerSpec::conv_dw(3, 3),
        vec![delta_kernel(3, 1, false), vec![0.0; 3], pw, vec![0.0; 3]],
    );
    assert_eq!(layer.forward(&x).unwrap(), x);
}

#[test]
fn depthwise_separable_weight_count() {
    let dw = LayerSpec::conv_dw(32, 64);
    let full = LayerSpec::conv3(32, 64);
    let dw_weights = 9 * 32 + 32 * 64;
    let full_weights = 9 * 32 * 64;
    assert_eq!(dw_weights, 2336);
    assert_eq!(full_weights, 18432);
    assert_eq!(dw.param_count(), dw_weights + 32 + 64);
    assert_eq!(full.param_count(), full_weights + 64);
    assert!((full_weights as f64 / dw_weights as f64 - 7.9).abs() < 0.05);
}

#[test]
fn depthwise_separable_matches_two_stage_oracle() {
    let mut rng = Rng::new(6);
    for _ in 0..30 {
        let dims = (1 + rng.below(3), 1 + rng.below(4), 2 + rng.below(8), 2 + rng.below(8));
        let stride = 1 + rng.below(2);
        let spec = LayerSpec::conv_dw(dims.1, 1 + rng.below(5)).with_stride(stride);
        let mut layer = Layer::<f64>::new(spec, &mut rng).unwrap();
        for p in [1, 3] {
            for v in layer.params_mut()[p].data_mut() {
                *v = rng.uniform(-1.0, 1.0).unwrap();
            }
        }
        let x = random_tensor(&mut rng, dims);
        let got = layer.forward(&x).unwrap();
        let expect = reference::depthwise_separable(&x, layer.params(), stride);
        assert!(max_diff(&got, &expect) < 1e-10);
    }
}

#[test]
fn pointwise_matches_oracle() {
    let mut rng = Rng::new(7);
    let layer = Layer::<f64>::new(LayerSpec::pointwise(4, 6), &mut rng).unwrap();
    let x = random_tensor(&mut rng, (2, 4, 3, 5));
    let expect = reference::pointwise(&x, &layer.params()[0], layer.params()[1].data());
    assert!(max_diff(&layer.forward(&x).unwrap(), &expect) < 1e-12);
}

#[test]
fn gap_cases() {
    let mut rng = Rng::new(8);
    let layer = Layer::<f64>::new(LayerSpec::gap(1), &mut rng).unwrap();
    let ones = Tensor::full((1, 1, 3, 3), 1.0).unwrap();
    assert_eq!(layer.forward(&ones).unwrap().data(), &[1.0]);
    let x = Tensor::from_values((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(layer.forward(&x).unwrap().data(), &[2.5]);

    let layer = Layer::<f64>::new(LayerSpec::gap(5), &mut rng).unwrap();
    for _ in 0..20 {
        let dims = (3, 5, 1 + rng.below(8), 1 + rng.below(8));
        let x = random_tensor(&mut rng, dims);
        let got = layer.forward(&x).unwrap();
        assert_eq!(got.dims(), Dims::new(3, 5, 1, 1).unwrap());
        assert_eq!(got, reference::gap(&x));
    }
}

#[test]
fn blurpool_preserves_constants() {
    let mut rng = Rng::new(9);
    let layer = Layer::<f64>::new(LayerSpec::blur_pool2(2), &mut rng).unwrap();
    let ones = Tensor::full((1, 2, 4, 4), 1.0).unwrap();
    let y = layer.forward(&ones).unwrap();
    assert_eq!(y.dims(), Dims::new(1, 2, 2, 2).unwrap());
    assert!(y.data().iter().all(|&v| v == 1.0));
    for _ in 0..20 {
        let c = rng.uniform(-5.0, 5.0).unwrap();
        let dims = (1, 2, 2 + rng.below(9), 2 + rng.below(9));
        let y = layer.forward(&Tensor::full(dims, c).unwrap()).unwrap();
        assert!(y.data().iter().all(|&v| (v - c).abs() < 1e-12));
    }
}

#[test]
fn blurpool_matches_oracle() {
    let mut rng = Rng::new(10);
    for _ in 0..30 {
        let c = 1 + rng.below(3);
        let layer = Layer::<f64>::new(LayerSpec::blur_pool2(c), &mut rng).unwrap();
        let dims = (1 + rng.below(2), c, 2 + rng.below(9), 2 + rng.below(9));
        let x = random_tensor(&mut rng, dims);
        assert!(max_diff(&layer.forward(&x).unwrap(), &reference::blur_pool2(&x)) < 1e-10);
    }
}

#[test]
fn blurpool_needs_two_pixels() {
    let mut rng = Rng::new(11);
    let layer = Layer::<f64>::new(LayerSpec::blur_pool2(1), &mut rng).unwrap();
    assert!(layer.forward(&Tensor::zeros((1, 1, 1, 4)).unwrap()).is_err());
}

#[test]
fn squeeze_excite_zero_gate_halves() {
    let mut rng = Rng::new(12);
    let mut layer = Layer::<f64>::new(LayerSpec::squeeze_excite(8, 4), &mut rng).unwrap();
    layer.params_mut()[2].fill(0.0);
    layer.params_mut()[3].fill(0.0);
    let x = random_tensor(&mut rng, (2, 8, 3, 3));
    assert_eq!(layer.forward(&x).unwrap(), x.scale(0.5));
}

#[test]
fn squeeze_excite_saturated_gate_passes_through() {
    let mut rng = Rng::new(13);
    let mut layer = Layer::<f64>::new(LayerSpec::squeeze_excite(8, 4), &mut rng).unwrap();
    layer.params_mut()[2].fill(0.0);
    layer.params_mut()[3].fill(40.0);
    let x = random_tensor(&mut rng, (2, 8, 3, 3));
    assert!(max_diff(&layer.forward(&x).unwrap(), &x) < 1e-9);
}

#[test]
fn squeeze_excite_gate_is_constant_per_channel() {
    let mut rng = Rng::new(14);
    for _ in 0..10 {
        let c = 2 + rng.below(10);
        let layer = Layer::<f64>::new(LayerSpec::squeeze_excite(c, 1 + rng.below(4)), &mut rng).unwrap();
        let x = random_tensor(&mut rng, (2, c, 4, 5));
        let y = layer.forward(&x).unwrap();
        for n in 0..2 {
            for k in 0..c {
                let ratio0 = y.get(n, k, 0, 0) / x.get(n, k, 0, 0);
                assert!(ratio0 > 0.0 && ratio0 < 1.0);
                for h in 0..4 {
                    for w in 0..5 {
                        let r = y.get(n, k, h, w) / x.get(n, k, h, w);
                        assert!((r - ratio0).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn squeeze_excite_hidden_width_clamps_to_one() {
    let spec = LayerSpec::squeeze_excite(3, 4);
    assert_eq!(spec.se_hidden(), 1);
    assert_eq!(spec.param_count(), 2 * 3 + 1 + 3);
}

#[test]
fn elementary_layers() {
    let mut rng = Rng::new(15);
    let softmax = Layer::<f64>::new(LayerSpec::softmax(10), &mut rng).unwrap();
    let y = softmax.forward(&Tensor::full((1, 10, 1, 1), 3.0).unwrap()).unwrap();
    assert!(y.data().iter().all(|&v| (v - 0.1).abs() < 1e-15));

    let relu = Layer::<f64>::new(LayerSpec::relu(1), &mut rng).unwrap();
    let y = relu.forward(&Tensor::from_values((1, 1, 1, 2), vec![-3.0, 3.0]).unwrap()).unwrap();
    assert_eq!(y.data(), &[0.0, 3.0]);

    let pool = Layer::<f64>::new(LayerSpec::max_pool2(1), &mut rng).unwrap();
    let y = pool.forward(&Tensor::from_values((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    assert_eq!(y.data(), &[4.0]);

    // Ceil mode: 7 -> 4 with a clipped final window.
    let y = pool.forward(&random_tensor(&mut rng, (1, 1, 7, 7))).unwrap();
    assert_eq!(y.dims(), Dims::new(1, 1, 4, 4).unwrap());
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = Rng::new(16);
    let layer = Layer::<f64>::new(LayerSpec::softmax(12), &mut rng).unwrap();
    for _ in 0..50 {
        let x = random_tensor(&mut rng, (4, 12, 1, 1)).scale(20.0);
        let y = layer.forward(&x).unwrap();
        for row in y.data().chunks(12) {
            assert!(row.iter().all(|&v| v > 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn dense_is_affine_on_flattened_features() {
    let layer = layer_with(LayerSpec::dense(4, 2), vec![vec![1.0, 0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0], vec![0.5, -0.5]]);
    let x = Tensor::from_values((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = layer.forward(&x).unwrap();
    assert_eq!(y.dims(), Dims::new(1, 2, 1, 1).unwrap());
    assert_eq!(y.data(), &[5.5, 3.5]);
}

#[test]
fn parameter_count_formulas() {
    let mut rng = Rng::new(17);
    for _ in 0..20 {
        let (cin, cout) = (1 + rng.below(20), 1 + rng.below(20));
        let conv3 = Layer::<f32>::new(LayerSpec::conv3(cin, cout), &mut rng).unwrap();
        assert_eq!(conv3.num_params(), 9 * cin * cout + cout);
        let dw = Layer::<f32>::new(LayerSpec::conv_dw(cin, cout), &mut rng).unwrap();
        assert_eq!(dw.num_params(), 9 * cin + cin + cin * cout + cout);
    }
    assert_eq!(LayerSpec::conv3(1, 8).param_count(), 80);
    for spec in [
        LayerSpec::blur_pool2(4),
        LayerSpec::max_pool2(4),
        LayerSpec::gap(4),
        LayerSpec::relu(4),
        LayerSpec::softmax(4),
    ] {
        assert_eq!(spec.param_count(), 0);
        assert_eq!(Layer::<f32>::new(spec, &mut rng).unwrap().num_params(), 0);
    }
}

#[test]
fn invalid_specs_rejected() {
    let mut rng = Rng::new(18);
    assert!(Layer::<f32>::new(LayerSpec::conv3(0, 4), &mut rng).is_err());
    assert!(Layer::<f32>::new(LayerSpec::conv3(1, 4).with_stride(3), &mut rng).is_err());
    assert!(Layer::<f32>::new(LayerSpec::relu(2).with_stride(2), &mut rng).is_err());
    let mut bad = LayerSpec::gap(2);
    bad.out_channels = 3;
    assert!(Layer::<f32>::new(bad, &mut rng).is_err());
}

#[test]
fn backward_requires_forward_cache() {
    let mut rng = Rng::new(19);
    let layer = Layer::<f64>::new(LayerSpec::conv3(1, 1), &mut rng).unwrap();
    let g = Tensor::zeros((1, 1, 3, 3)).unwrap();
    assert!(matches!(layer.backward(&Cache::Empty, &g), Err(Error::BackwardBeforeForward)));
}

#[test]
fn forward_is_deterministic() {
    let mut rng = Rng::new(20);
    let layer = Layer::<f32>::new(LayerSpec::conv_dw(3, 5), &mut rng).unwrap();
    let x = random_tensor(&mut rng, (2, 3, 7, 7)).cast::<f32>();
    let a = layer.forward(&x).unwrap();
    let b = layer.forward(&x).unwrap();
    assert_eq!(a.data(), b.data());
}

fn gradcheck_kind(kind: LayerKind, seed: u64) {
    let mut rng = Rng::new(seed);
    for instance in 0..5 {
        let (c, cout) = (1 + rng.below(4), 1 + rng.below(4));
        let (h, w) = (2 + rng.below(5), 2 + rng.below(5));
        let stride = 1 + rng.below(2);
        let (spec, dims) = match kind {
            LayerKind::Conv3 => (LayerSpec::conv3(c, cout).with_stride(stride), (2, c, h, w)),
            LayerKind::ConvDW => (LayerSpec::conv_dw(c, cout).with_stride(stride), (2, c, h, w)),
            LayerKind::PointwiseConv => (LayerSpec::pointwise(c, cout), (2, c, h, w)),
            LayerKind::ReLU => (LayerSpec::relu(c), (2, c, h, w)),
            LayerKind::MaxPool2 => (LayerSpec::max_pool2(c), (2, c, h, w)),
            LayerKind::BlurPool2 => (LayerSpec::blur_pool2(c), (2, c, h, w)),
            LayerKind::GAP => (LayerSpec::gap(c), (2, c, h, w)),
            LayerKind::SqueezeExcite => (LayerSpec::squeeze_excite(c + 3, 2), (2, c + 3, h, w)),
            LayerKind::Dense => (LayerSpec::dense(c * h * w, cout), (2, c, h, w)),
            LayerKind::Softmax => (LayerSpec::softmax(c * h * w), (2, c, h, w)),
        };
        let mut layer = Layer::<f64>::new(spec, &mut rng).unwrap();
        for p in layer.params_mut() {
            for v in p.data_mut() {
                *v = rng.uniform(-1.0, 1.0).unwrap();
            }
        }
        let x = random_tensor(&mut rng, dims);
        let report = check_layer(&layer, &x, &mut rng, GradCheckConfig::default()).unwrap();
        assert!(
            report.max_rel() < 1e-4,
            "{kind} instance {instance}: input {:.3e}, params {:.3e}",
            report.max_rel_input,
            report.max_rel_param
        );
    }
}

#[test]
fn gradients_match_finite_differences() {
    for (i, kind) in LayerKind::ALL.into_iter().enumerate() {
        gradcheck_kind(kind, 100 + i as u64);
    }
}

mod invariants {
    use super::*;
    use proptest::prelude::*;
    use slimconv::Rng;

    fn shape() -> impl Strategy<Value = (usize, usize, usize, u64)> {
        (1usize..4, 1usize..5, 2usize..8, any::<u64>())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn relu_is_idempotent_and_nonnegative((n, c, s, seed) in shape()) {
            let mut rng = Rng::new(seed);
            let relu = Layer::<f64>::new(LayerSpec::relu(c), &mut rng).unwrap();
            let y = relu.forward(&random_tensor(&mut rng, (n, c, s, s))).unwrap();
            prop_assert!(y.data().iter().all(|&v| v >= 0.0));
            prop_assert_eq!(relu.forward(&y).unwrap(), y);
        }

        #[test]
        fn conv_layers_are_affine((n, c, s, seed) in shape(), cout in 1usize..5) {
            let mut rng = Rng::new(seed);
            for spec in [LayerSpec::conv3(c, cout), LayerSpec::conv_dw(c, cout), LayerSpec::pointwise(c, cout)] {
                let layer = Layer::<f64>::new(spec, &mut rng).unwrap();
                let a = random_tensor(&mut rng, (n, c, s, s));
                let b = random_tensor(&mut rng, (n, c, s, s));
                let zero = layer.forward(&a.zeros_like()).unwrap();
                let lhs = layer.forward(&a.add(&b).unwrap()).unwrap().add(&zero).unwrap();
                let rhs = layer.forward(&a).unwrap().add(&layer.forward(&b).unwrap()).unwrap();
                prop_assert!(max_diff(&lhs, &rhs) < 1e-10);
            }
        }

        #[test]
        fn output_dims_agree_with_forward((n, c, s, seed) in shape()) {
            let mut rng = Rng::new(seed);
            let specs = [
                LayerSpec::conv3(c, 3),
                LayerSpec::conv_dw(c, 2).with_stride(2),
                LayerSpec::max_pool2(c),
                LayerSpec::blur_pool2(c),
                LayerSpec::gap(c),
                LayerSpec::squeeze_excite(c, 4),
            ];
            for spec in specs {
                let layer = Layer::<f64>::new(spec, &mut rng).unwrap();
                let x = random_tensor(&mut rng, (n, c, s, s));
                let y = layer.forward(&x).unwrap();
                prop_assert_eq!(y.dims(), spec.output_dims(x.dims()).unwrap());
            }
        }

        #[test]
        fn pooling_never_exceeds_input_range((n, c, s, seed) in shape()) {
            let mut rng = Rng::new(seed);
            let x = random_tensor(&mut rng, (n, c, s, s));
            let (lo, hi) = x.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            for spec in [LayerSpec::max_pool2(c), LayerSpec::blur_pool2(c), LayerSpec::gap(c)] {
                let y = Layer::<f64>::new(spec, &mut rng).unwrap().forward(&x).unwrap();
                prop_assert!(y.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
            }
        }
    }
}
