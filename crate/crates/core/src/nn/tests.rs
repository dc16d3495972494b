use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn batch(shape: Vec<usize>, data: Vec<f64>, labels: Vec<usize>) -> Batch {
    Batch::new(Tensor::new(shape, data).unwrap(), labels).unwrap()
}

fn set(spec: &ModelSpec, values: Vec<f64>) -> ParameterVector {
    ParameterVector::new(spec.layout(), values).unwrap()
}

/// Central differences of the mean loss, one coordinate at a time.
fn fd_grad(spec: &ModelSpec, p: &ParameterVector, b: &Batch, h: f64) -> Vec<f64> {
    (0..p.len())
        .map(|i| {
            let mut plus = p.clone();
            plus.values_mut()[i] += h;
            let mut minus = p.clone();
            minus.values_mut()[i] -= h;
            (loss(spec, &plus, b).unwrap() - loss(spec, &minus, b).unwrap()) / (2.0 * h)
        })
        .collect()
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale < 1e-7 {
                // both effectively zero: compare absolutely
                (x - y).abs()
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

fn linear(inputs: usize, classes: usize, bias: bool) -> ModelSpec {
    ModelSpec::new(
        vec![inputs],
        classes,
        Architecture::Mlp {
            hidden: vec![],
            activation: Activation::Identity,
            bias,
        },
    )
    .unwrap()
}

fn mlp_222(activation: Activation) -> ModelSpec {
    ModelSpec::new(
        vec![2],
        2,
        Architecture::Mlp {
            hidden: vec![2],
            activation,
            bias: true,
        },
    )
    .unwrap()
}

fn small_cnn() -> ModelSpec {
    ModelSpec::new(
        vec![1, 7, 7],
        3,
        Architecture::Cnn {
            stages: [
                ConvStage {
                    channels: 2,
                    kernel: 2,
                },
                ConvStage {
                    channels: 2,
                    kernel: 2,
                },
            ],
            hidden: 4,
            activation: Activation::Tanh,
        },
    )
    .unwrap()
}

fn random_batch(spec: &ModelSpec, n: usize, rng: &mut impl Rng) -> Batch {
    let data = (0..n * spec.input_len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..spec.classes())).collect();
    let mut shape = vec![n];
    shape.extend_from_slice(spec.input_shape());
    batch(shape, data, labels)
}

fn random_params(spec: &ModelSpec, rng: &mut impl Rng) -> ParameterVector {
    let values = (0..spec.param_count())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    set(spec, values)
}

#[test]
fn identity_linear_model_passes_input_through() {
    let spec = linear(2, 2, true);
    // weights [in, out] = identity, bias 0
    let p = set(&spec, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let b = batch(vec![1, 2], vec![1.0, 2.0], vec![0]);
    let logits = forward(&spec, &p, &b).unwrap();
    assert_eq!(logits.data(), &[1.0, 2.0]);
}

#[test]
fn hand_evaluated_two_layer_mlp() {
    let spec = mlp_222(Activation::Relu);
    // W1 = [[0.5, -1], [0.25, 0.5]], b1 = [0.1, 0.2]
    // W2 = [[2, -1], [3, 4]],        b2 = [0.5, -0.5]
    let p = set(
        &spec,
        vec![
            0.5, -1.0, 0.25, 0.5, 0.1, 0.2, 2.0, -1.0, 3.0, 4.0, 0.5, -0.5,
        ],
    );
    let b = batch(vec![1, 2], vec![1.0, -2.0], vec![0]);
    // z1 = [0.5 - 0.5 + 0.1, -1 - 1 + 0.2] = [0.1, -1.8]; relu -> [0.1, 0]
    // z2 = [0.1*2 + 0.5, 0.1*(-1) - 0.5] = [0.7, -0.6]
    let logits = forward(&spec, &p, &b).unwrap();
    assert!((logits.data()[0] - 0.7).abs() < 1e-15);
    assert!((logits.data()[1] + 0.6).abs() < 1e-15);
}

#[test]
fn forward_is_deterministic() {
    let spec = small_cnn();
    let p = spec.init_params(3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = random_batch(&spec, 5, &mut rng);
    let a = forward(&spec, &p, &b).unwrap();
    let c = forward(&spec, &p, &b).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&c));
}

#[test]
fn input_shape_mismatch_names_input_layer() {
    let spec = linear(3, 2, true);
    let p = spec.init_params(0);
    let b = batch(vec![1, 2], vec![1.0, 2.0], vec![0]);
    match forward(&spec, &p, &b) {
        Err(Error::ShapeMismatch { layer, .. }) => assert_eq!(layer, "input"),
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn foreign_layout_is_rejected() {
    let spec = linear(3, 2, true);
    let other = linear(4, 2, true);
    let b = batch(vec![1, 3], vec![1.0, 2.0, 3.0], vec![0]);
    assert!(matches!(
        forward(&spec, &other.init_params(0), &b),
        Err(Error::LayoutMismatch(_))
    ));
}

#[test]
fn out_of_range_label_is_rejected() {
    let spec = linear(2, 2, true);
    let b = batch(vec![1, 2], vec![1.0, 2.0], vec![2]);
    assert!(loss(&spec, &spec.init_params(0), &b).is_err());
}

#[test]
fn uniform_logits_give_log_class_count() {
    for classes in [2, 3, 10] {
        let spec = linear(4, classes, true);
        let p = ParameterVector::zeros(spec.layout());
        let b = batch(vec![2, 4], vec![0.3; 8], vec![0, classes - 1]);
        let (l, _) = loss_and_grad(&spec, &p, &b).unwrap();
        assert_eq!(l, (classes as f64).ln());
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for act in [Activation::Relu, Activation::Tanh] {
        let spec = mlp_222(act);
        let p = spec.init_params(rng.gen());
        let b = random_batch(&spec, 4, &mut rng);
        let (_, g) = loss_and_grad(&spec, &p, &b).unwrap();
        let fd = fd_grad(&spec, &p, &b, 1e-5);
        let err = max_rel_err(g.values(), &fd);
        assert!(err < 1e-6, "{act:?}: max rel err {err}");
    }
}

#[test]
fn cnn_gradient_matches_finite_differences() {
    let spec = small_cnn();
    assert!(spec.param_count() <= 200);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = spec.init_params(11);
    let b = random_batch(&spec, 3, &mut rng);
    let (_, g) = loss_and_grad(&spec, &p, &b).unwrap();
    let fd = fd_grad(&spec, &p, &b, 1e-5);
    let err = max_rel_err(g.values(), &fd);
    assert!(err < 1e-5, "max rel err {err}");
}

#[test]
fn duplicated_sample_batch_matches_single_sample() {
    let spec = mlp_222(Activation::Tanh);
    let p = spec.init_params(5);
    let one = batch(vec![1, 2], vec![0.3, -0.7], vec![1]);
    let (l1, g1) = loss_and_grad(&spec, &p, &one).unwrap();
    for k in [2usize, 3, 7] {
        let many = batch(vec![k, 2], [0.3, -0.7].repeat(k), vec![1; k]);
        let (lk, gk) = loss_and_grad(&spec, &p, &many).unwrap();
        assert!((lk - l1).abs() <= 1e-15 * l1.abs().max(1.0));
        assert!(max_rel_err(g1.values(), gk.values()) < 1e-14);
    }
}

#[test]
fn per_sample_grads_average_to_negative_loss_grad() {
    let spec = mlp_222(Activation::Relu);
    let p = spec.init_params(8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = random_batch(&spec, 6, &mut rng);
    let (_, g) = loss_and_grad(&spec, &p, &b).unwrap();
    let mut sum = vec![0.0; p.len()];
    for i in 0..b.len() {
        let s = batch(vec![1, 2], b.inputs().row(i).to_vec(), vec![b.labels()[i]]);
        let gs = per_sample_loglik_grad(&spec, &p, &s).unwrap();
        for (acc, v) in sum.iter_mut().zip(gs.values()) {
            *acc += v;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|v| -v / b.len() as f64).collect();
    assert!(max_rel_err(&mean, g.values()) < 1e-12);
}

#[test]
fn per_sample_grad_rejects_batches() {
    let spec = linear(2, 2, true);
    let b = batch(vec![2, 2], vec![0.0; 4], vec![0, 1]);
    assert!(per_sample_loglik_grad(&spec, &spec.init_params(0), &b).is_err());
}

#[test]
fn perfect_prediction_has_zero_gradient() {
    let spec = linear(1, 2, false);
    // logits = [0, 2000 x]; with x = 1 the softmax is exactly one-hot at 1
    let p = set(&spec, vec![0.0, 2000.0]);
    let s = batch(vec![1, 1], vec![1.0], vec![1]);
    let g = per_sample_loglik_grad(&spec, &p, &s).unwrap();
    assert!(g.values().iter().all(|&v| v == 0.0));
}

#[test]
fn two_parameter_logistic_matches_closed_form() {
    // p(y=1|x) = σ((w1 - w0) x); ∂/∂w1 log p = (y - σ)x, ∂/∂w0 = -(y - σ)x
    let spec = linear(1, 2, false);
    let (w0, w1) = (0.4, -1.3);
    let p = set(&spec, vec![w0, w1]);
    for (x, y) in [(0.5, 1usize), (-2.0, 0), (1.7, 0)] {
        let s = batch(vec![1, 1], vec![x], vec![y]);
        let g = per_sample_loglik_grad(&spec, &p, &s).unwrap();
        let sigma = 1.0 / (1.0 + (-(w1 - w0) * x).exp());
        let expected = (y as f64 - sigma) * x;
        assert!((g.values()[1] - expected).abs() < 1e-15);
        assert!((g.values()[0] + expected).abs() < 1e-15);
    }
}

#[test]
fn sgd_step_arithmetic() {
    let layout = Arc::new(Layout::packed([(0, Role::Weight, vec![2])]));
    let p = ParameterVector::new(layout.clone(), vec![1.0, 1.0]).unwrap();
    let g = ParameterVector::new(layout.clone(), vec![2.0, -2.0]).unwrap();
    assert_eq!(sgd_step(&p, &g, 0.5).unwrap().values(), &[0.0, 2.0]);

    let zero = ParameterVector::zeros(layout.clone());
    assert_eq!(sgd_step(&p, &zero, 0.5).unwrap(), p);

    let (a, b) = (0.25, 0.5);
    let two = sgd_step(&sgd_step(&p, &g, a).unwrap(), &g, b).unwrap();
    let once = sgd_step(&p, &g, a + b).unwrap();
    assert_eq!(two.values(), once.values());

    let other = ParameterVector::zeros(Arc::new(Layout::packed([(0, Role::Bias, vec![2])])));
    assert!(sgd_step(&p, &other, 0.1).is_err());
    assert!(sgd_step(&p, &g, -1.0).is_err());
}

#[test]
fn lr_schedule_decays_by_three_every_five_epochs() {
    assert_eq!(lr_schedule(0.001, 0), 0.001);
    assert_eq!(lr_schedule(0.001, 4), 0.001);
    assert_eq!(lr_schedule(0.001, 5), 0.001 / 3.0);
    assert_eq!(lr_schedule(0.001, 10), 0.001 / 9.0);
    assert_eq!(lr_schedule(1e-4, 4), 1e-4);
}

#[test]
fn cnn_spec_shape_rules() {
    let spec = ModelSpec::cnn(vec![1, 28, 28], 64, 10).unwrap();
    // 26 -> 13 -> 11 -> 5 ; 16*5*5 = 400
    let segs = spec.layout();
    let fc1 = segs.segment(2, Role::Weight).unwrap();
    assert_eq!(fc1.shape, vec![400, 64]);
    assert_eq!(segs.segment(3, Role::Weight).unwrap().shape, vec![64, 10]);
    assert!(ModelSpec::cnn(vec![28, 28], 64, 10).is_err());
    assert!(ModelSpec::cnn(vec![1, 5, 5], 64, 10).is_err());
    assert!(ModelSpec::mlp(vec![4], vec![3], 0).is_err());
}

#[test]
fn init_is_seeded() {
    let spec = ModelSpec::mlp(vec![4], vec![3], 2).unwrap();
    assert_eq!(spec.init_params(1), spec.init_params(1));
    assert_ne!(spec.init_params(1), spec.init_params(2));
    let limit = (6.0f64 / 7.0).sqrt();
    let seg = spec.layout().segment(0, Role::Weight).unwrap().clone();
    assert!(spec.init_params(1).values()[seg.range()]
        .iter()
        .all(|w| w.abs() <= limit));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_mlp_gradients_are_exact(
        seed in any::<u64>(),
        hidden in prop::collection::vec(1usize..5, 0..3),
        inputs in 1usize..5,
        classes in 2usize..5,
        tanh in any::<bool>(),
    ) {
        let act = if tanh { Activation::Tanh } else { Activation::Relu };
        let spec = ModelSpec::new(
            vec![inputs],
            classes,
            Architecture::Mlp { hidden, activation: act, bias: true },
        ).unwrap();
        prop_assume!(spec.param_count() <= 200);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // random biases keep ReLU pre-activations off the kink at 0
        let p = random_params(&spec, &mut rng);
        let b = random_batch(&spec, 3, &mut rng);
        let (_, g) = loss_and_grad(&spec, &p, &b).unwrap();
        let fd = fd_grad(&spec, &p, &b, 1e-5);
        let err = max_rel_err(g.values(), &fd);
        prop_assert!(err < 1e-5, "max rel err {}", err);
    }

    #[test]
    fn softmax_rows_sum_to_one(logits in prop::collection::vec(-700.0f64..700.0, 1..12)) {
        let p = softmax(&logits);
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
