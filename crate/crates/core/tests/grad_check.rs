//! Randomized finite-difference verification of every autodiff primitive.
//!
//! Each check rebuilds the graph from scratch inside a closure, perturbs one
//! input entry at a time by +/- h, and compares the central difference
//! against the tape gradient. Losses contract the op output with a fixed
//! random matrix so upstream gradients are non-uniform.

use dagsurv_core::autodiff::Tape;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| lo + (hi - lo) * rng.random::<f64>())
}

/// Keeps every entry at least `margin` away from zero, for kinked ops.
fn away_from_zero(mut m: Array2<f64>, margin: f64) -> Array2<f64> {
    m.mapv_inplace(|x| {
        if x.abs() < margin {
            if x >= 0.0 {
                x + margin
            } else {
                x - margin
            }
        } else {
            x
        }
    });
    m
}

fn central_difference(f: &dyn Fn(&[Array2<f64>]) -> f64, inputs: &[Array2<f64>], which: usize) -> Array2<f64> {
    let mut grad = Array2::zeros(inputs[which].dim());
    let mut work: Vec<Array2<f64>> = inputs.to_vec();
    for idx in 0..inputs[which].len() {
        let (r, c) = (idx / inputs[which].ncols(), idx % inputs[which].ncols());
        let orig = work[which][[r, c]];
        work[which][[r, c]] = orig + H;
        let up = f(&work);
        work[which][[r, c]] = orig - H;
        let down = f(&work);
        work[which][[r, c]] = orig;
        grad[[r, c]] = (up - down) / (2.0 * H);
    }
    grad
}

/// Runs one check: `build` maps leaf values (on a fresh tape) to a scalar
/// loss value; tape gradients of every input must match central differences.
fn check_op(name: &str, inputs: &[Array2<f64>], build: &dyn Fn(&Tape, &[dagsurv_core::Value]) -> dagsurv_core::Value) {
    let forward = |arrays: &[Array2<f64>]| -> f64 {
        let tape = Tape::new();
        let leaves: Vec<_> = arrays.iter().map(|a| tape.value(a.clone())).collect();
        let loss = build(&tape, &leaves);
        tape.scalar(loss).unwrap()
    };
    let tape = Tape::new();
    let leaves: Vec<_> = inputs.iter().map(|a| tape.value(a.clone())).collect();
    let loss = build(&tape, &leaves);
    tape.backward(loss).unwrap();
    for which in 0..inputs.len() {
        let ad = tape.grad(leaves[which]).unwrap();
        let fd = central_difference(&forward, inputs, which);
        for (idx, (a, f)) in ad.iter().zip(fd.iter()).enumerate() {
            let scale = 1.0f64.max(a.abs()).max(f.abs());
            assert!(
                (a - f).abs() <= REL_TOL * scale,
                "{name}: input {which} entry {idx}: autodiff {a} vs finite difference {f}"
            );
        }
    }
}

#[test]
fn primitives_match_central_differences_over_randomized_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240817);
    let mut trials = 0usize;
    for trial in 0..10 {
        let n = 1 + (trial % 4);
        let k = 2 + (trial % 3);
        let m = 1 + ((trial + 1) % 4);

        // Contraction weights reused by all single-output checks this trial.
        let w_nk = random_matrix(&mut rng, n, k, -2.0, 2.0);
        let w_nm = random_matrix(&mut rng, n, m, -2.0, 2.0);

        let a = random_matrix(&mut rng, n, k, -2.0, 2.0);
        let b = random_matrix(&mut rng, k, m, -2.0, 2.0);
        let c = random_matrix(&mut rng, n, k, -2.0, 2.0);
        let bias = random_matrix(&mut rng, n, 1, -1.0, 1.0);

        {
            let w = w_nm.clone();
            check_op("matmul", &[a.clone(), b.clone()], &move |t, v| {
                let wv = t.value(w.clone());
                let y = t.matmul(v[0], v[1]).unwrap();
                t.sum_all(t.mul(y, wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        for (name, op) in [
            ("add", 0usize),
            ("sub", 1),
            ("mul", 2),
        ] {
            let w = w_nk.clone();
            check_op(name, &[a.clone(), c.clone()], &move |t, v| {
                let wv = t.value(w.clone());
                let y = match op {
                    0 => t.add(v[0], v[1]).unwrap(),
                    1 => t.sub(v[0], v[1]).unwrap(),
                    _ => t.mul(v[0], v[1]).unwrap(),
                };
                t.sum_all(t.mul(y, wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        {
            let w = w_nk.clone();
            check_op("add_bias", &[a.clone(), bias.clone()], &move |t, v| {
                let wv = t.value(w.clone());
                let y = t.add_bias(v[0], v[1]).unwrap();
                t.sum_all(t.mul(y, wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        for (name, idx) in [("cos", 0usize), ("exp", 1), ("scale", 2), ("add_scalar", 3)] {
            let w = w_nk.clone();
            check_op(name, &[a.clone()], &move |t, v| {
                let wv = t.value(w.clone());
                let y = match idx {
                    0 => t.cos(v[0]).unwrap(),
                    1 => t.exp(v[0]).unwrap(),
                    2 => t.scale(v[0], -1.7).unwrap(),
                    _ => t.add_scalar(v[0], 3.3).unwrap(),
                };
                t.sum_all(t.mul(y, wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        {
            // log needs positive inputs, bounded away from zero.
            let pos = random_matrix(&mut rng, n, k, 0.2, 2.0);
            let w = w_nk.clone();
            check_op("log", &[pos], &move |t, v| {
                let wv = t.value(w.clone());
                t.sum_all(t.mul(t.log(v[0]).unwrap(), wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        {
            // Kinked activations: keep entries at least 1e-3 from the kink
            // so the central difference never straddles it.
            let safe = away_from_zero(random_matrix(&mut rng, n, k, -2.0, 2.0), 1e-3);
            for (name, which) in [("max0", 0usize), ("relu", 1), ("selu", 2)] {
                let w = w_nk.clone();
                check_op(name, &[safe.clone()], &move |t, v| {
                    let wv = t.value(w.clone());
                    let y = match which {
                        0 => t.max0(v[0]).unwrap(),
                        1 => t.relu(v[0]).unwrap(),
                        _ => t.selu(v[0]).unwrap(),
                    };
                    t.sum_all(t.mul(y, wv).unwrap()).unwrap()
                });
                trials += 1;
            }
        }
        {
            let w = w_nk.clone();
            check_op("softmax_rows", &[a.clone()], &move |t, v| {
                let wv = t.value(w.clone());
                let y = t.softmax_rows(v[0]).unwrap();
                t.sum_all(t.mul(y, wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        {
            let w = random_matrix(&mut rng, k, n, -2.0, 2.0);
            check_op("transpose", &[a.clone()], &move |t, v| {
                let wv = t.value(w.clone());
                let y = t.transpose(v[0]).unwrap();
                t.sum_all(t.mul(y, wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        {
            let d = random_matrix(&mut rng, m, k, -2.0, 2.0);
            let w = random_matrix(&mut rng, n + m, k, -2.0, 2.0);
            check_op("concat_rows", &[a.clone(), d], &move |t, v| {
                let wv = t.value(w.clone());
                let y = t.concat_rows(v[0], v[1]).unwrap();
                t.sum_all(t.mul(y, wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        {
            let w = random_matrix(&mut rng, n, 1, -2.0, 2.0);
            check_op("sum_rows", &[a.clone()], &move |t, v| {
                let wv = t.value(w.clone());
                let y = t.sum_rows(v[0]).unwrap();
                t.sum_all(t.mul(y, wv).unwrap()).unwrap()
            });
            trials += 1;
        }
        check_op("sum_all", &[a.clone()], &|t, v| t.sum_all(v[0]).unwrap());
        check_op("mean_all", &[a.clone()], &|t, v| t.mean_all(v[0]).unwrap());
        trials += 2;
        {
            // A composite chain touching several ops at once.
            let w = w_nk.clone();
            check_op("composite", &[a.clone(), c.clone()], &move |t, v| {
                let wv = t.value(w.clone());
                let y = t.mul(t.cos(v[0]).unwrap(), t.exp(t.scale(v[1], 0.5).unwrap()).unwrap()).unwrap();
                let z = t.softmax_rows(t.add(y, wv).unwrap()).unwrap();
                t.mean_all(t.log(t.add_scalar(z, 1e-3).unwrap()).unwrap()).unwrap()
            });
            trials += 1;
        }
    }
    assert!(trials >= 100, "only {trials} randomized trials ran");
}

#[test]
fn sem_linear_maps_match_central_differences() {
    // The constant SEM operators enter the tape through apply_map; their
    // backward is the transposed solve/multiply, checked here numerically.
    use dagsurv_core::graph::{sample_erdos_renyi_dag, DagSampleConfig};
    use dagsurv_core::model::{SemBackwardMap, SemForwardMap};
    use std::rc::Rc;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..6 {
        let dag = sample_erdos_renyi_dag(&DagSampleConfig {
            num_nodes: 6,
            expected_degree: 2.0,
            weight_range: (0.4, 1.3),
            seed,
        })
        .unwrap();
        let x = random_matrix(&mut rng, 6, 3, -1.0, 1.0);
        let w = random_matrix(&mut rng, 6, 3, -2.0, 2.0);

        for forward in [true, false] {
            let dag = dag.clone();
            let w = w.clone();
            check_op(
                if forward { "sem_forward_map" } else { "sem_backward_map" },
                &[x.clone()],
                &move |t, v| {
                    let map: Rc<dyn dagsurv_core::LinearMap> = if forward {
                        Rc::new(SemForwardMap::new(dag.clone()))
                    } else {
                        Rc::new(SemBackwardMap::new(dag.clone()))
                    };
                    let wv = t.value(w.clone());
                    let y = t.apply_map(map, v[0]).unwrap();
                    t.sum_all(t.mul(y, wv).unwrap()).unwrap()
                },
            );
        }
    }
}

#[test]
fn full_objective_gradients_match_central_differences() {
    // End-to-end check through encoder, reparameterization, decoder,
    // censored likelihood, and the KL penalty, at fixed latent noise. The
    // tolerance is looser than for single primitives because values pass
    // through long chains of kinked activations.
    use dagsurv_core::graph::{sample_erdos_renyi_dag, DagSampleConfig};
    use dagsurv_core::model::{Activation, DagSurvModel, ModelConfig};
    use dagsurv_core::synth::SurvivalDataset;
    use ndarray::Array1;

    const ELBO_REL_TOL: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(424);
    for (trial, &activation) in [Activation::Relu, Activation::Selu, Activation::Relu]
        .iter()
        .enumerate()
    {
        let dag = sample_erdos_renyi_dag(&DagSampleConfig {
            num_nodes: 4,
            expected_degree: 1.5,
            weight_range: (0.3, 0.8),
            seed: 1000 + trial as u64,
        })
        .unwrap();
        let horizon = 5;
        let config = ModelConfig {
            encoder_layers: 2,
            encoder_hidden: 6,
            decoder_layers: 2,
            decoder_hidden: 6,
            activation,
        };
        let model = DagSurvModel::new(dag, horizon, config, 77 + trial as u64).unwrap();

        let n = 7;
        let covariates = random_matrix(&mut rng, n, 3, -1.0, 1.0);
        let bins: Vec<usize> = (0..n).map(|_| rng.random_range(0..=horizon)).collect();
        let events: Vec<u8> = (0..n).map(|i| u8::from(i % 3 != 0)).collect();
        let dataset = SurvivalDataset::new(
            covariates,
            Array1::zeros(n),
            bins,
            events,
            horizon,
        )
        .unwrap();
        let indices: Vec<usize> = (0..n).collect();
        let noise = random_matrix(&mut rng, 4, n, -0.7, 0.7);
        let kl_weight = 0.7;

        let (_, grads) = model
            .loss_and_gradients(&dataset, &indices, &noise, kl_weight)
            .unwrap();

        let mut checked = 0usize;
        for (k, tensor) in model.parameters().iter().enumerate() {
            // Probe a handful of entries per tensor instead of all of them.
            let total = tensor.len();
            let probes: Vec<usize> = (0..total.min(4))
                .map(|p| (p * 7919) % total)
                .collect();
            for idx in probes {
                let (r, c) = (idx / tensor.ncols(), idx % tensor.ncols());
                let mut up = model.clone();
                up.parameters_mut()[k][[r, c]] += H;
                let mut down = model.clone();
                down.parameters_mut()[k][[r, c]] -= H;
                let fd = (up.training_loss(&dataset, &indices, &noise, kl_weight).unwrap()
                    - down
                        .training_loss(&dataset, &indices, &noise, kl_weight)
                        .unwrap())
                    / (2.0 * H);
                let ad = grads[k][[r, c]];
                let denom = 1.0f64.max(ad.abs()).max(fd.abs());
                assert!(
                    (ad - fd).abs() <= ELBO_REL_TOL * denom,
                    "trial {trial} tensor {k} entry ({r}, {c}): tape {ad} vs central difference {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 30, "only {checked} entries probed");
    }
}
