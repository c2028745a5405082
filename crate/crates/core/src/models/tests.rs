use super::*;
use crate::math::{CaseControlRatios, SingleTrainingProbs};
use crate::params::ordinal_reparam;
use approx::assert_relative_eq;
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cc(kappa: &[f64]) -> Scenario {
    Scenario::CaseControl(CaseControlRatios::new(kappa.to_vec()).unwrap())
}

fn st(pi: &[f64]) -> Scenario {
    Scenario::SingleTraining(SingleTrainingProbs::new(pi.to_vec()).unwrap())
}

fn little_mn() -> (PUDataset, MultinomialParams) {
    let x = array![
        [0.5, -1.2, 0.3],
        [1.1, 0.4, -0.7],
        [-0.3, 0.9, 1.5],
        [0.0, -0.5, 0.8],
        [2.0, 0.1, -1.0]
    ];
    let data = PUDataset::new(x, vec![0, 1, 2, 0, 1], cc(&[1.5, 0.6]), None).unwrap();
    let params =
        MultinomialParams::new(array![[0.4, -0.3], [0.2, 0.5], [-0.6, 0.1]], array![0.1, -0.2]).unwrap();
    (data, params)
}

fn little_on(scenario: Scenario) -> (PUDataset, OrdinalParams) {
    let x = array![[0.3, -0.8], [1.2, 0.5], [-0.6, 1.1], [0.9, -0.2]];
    let data = PUDataset::new(x, vec![0, 3, 1, 2], scenario, None).unwrap();
    (data, ordinal_reparam(&array![0.7, -0.4], &[-0.5, 0.3, 1.4]).unwrap())
}

#[test]
fn mn_zero_parameter_values() {
    let d0 = PUDataset::new(array![[0.0]], vec![0], cc(&[1.0]), None).unwrap();
    let d1 = PUDataset::new(array![[0.0]], vec![1], cc(&[1.0]), None).unwrap();
    let zero = MultinomialParams::zeros(1, 1);
    assert_relative_eq!(mn_observed_loss(&zero, &d0).unwrap(), 1.5f64.ln(), epsilon = 1e-15);
    assert_relative_eq!(mn_observed_loss(&zero, &d1).unwrap(), 3f64.ln(), epsilon = 1e-15);
}

#[test]
fn mn_loss_matches_direct_oracle() {
    let (data, params) = little_mn();
    assert_relative_eq!(mn_observed_loss(&params, &data).unwrap(), 0.79749899618048662099, epsilon = 1e-14);
    let st_data = data.with_scenario(st(&[0.7, 0.4])).unwrap();
    assert_relative_eq!(mn_observed_loss(&params, &st_data).unwrap(), 0.75887655188859263037, epsilon = 1e-14);
}

#[test]
fn on_loss_matches_direct_oracle() {
    let d = PUDataset::new(array![[0.0]], vec![0], cc(&[1.0, 1.0]), None).unwrap();
    let theta = OrdinalParams::new(array![0.0, 0.0, 1.0], 1).unwrap();
    assert_relative_eq!(on_observed_loss(&theta, &d).unwrap(), 0.40546510810816438198, epsilon = 1e-14);
    let (data, theta) = little_on(cc(&[0.8, 1.7, 0.5]));
    assert_relative_eq!(on_observed_loss(&theta, &data).unwrap(), 1.6601558211515115143, epsilon = 1e-13);
    let (data, theta) = little_on(st(&[0.3, 0.6, 0.8]));
    assert_relative_eq!(on_observed_loss(&theta, &data).unwrap(), 1.6883549657200986119, epsilon = 1e-13);
}

#[test]
fn dimension_mismatch_is_reported() {
    let (data, _) = little_mn();
    assert!(matches!(
        mn_observed_loss(&MultinomialParams::zeros(2, 2), &data),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn symmetric_offsets_gradient() {
    let x = array![[0.0], [0.0], [0.0], [0.0]];
    let data = PUDataset::new(x, vec![0, 1, 2, 0], cc(&[1.0, 1.0]), None).unwrap();
    let (_, gb) = mn_observed_grad(&MultinomialParams::zeros(1, 2), &data).unwrap();
    assert_relative_eq!(gb[0], gb[1], epsilon = 1e-15);
}

#[test]
fn full_loss_values() {
    // single-training with full-weight targets is the ordinary likelihood
    let (data, params) = little_mn();
    let st_data = data.with_scenario(st(&[0.5, 0.5])).unwrap();
    let mut w = Array2::zeros((5, 2));
    for (i, &z) in st_data.z().iter().enumerate() {
        if z > 0 {
            w[(i, z - 1)] = 1.0;
        }
    }
    assert_relative_eq!(
        mn_full_loss(&params, &st_data, &w).unwrap(),
        mn_naive_loss(&params, &st_data).unwrap(),
        epsilon = 1e-15
    );
    // zero parameters, K=1: A(0 + log c) - w * 0
    let d = PUDataset::new(array![[0.3], [-0.4]], vec![0, 0], cc(&[1.0]), None).unwrap();
    let w = Array2::from_elem((2, 1), 0.5);
    assert_relative_eq!(mn_full_loss(&MultinomialParams::zeros(1, 1), &d, &w).unwrap(), 3f64.ln());
    let d = d.with_scenario(st(&[0.5])).unwrap();
    assert_relative_eq!(mn_full_loss(&MultinomialParams::zeros(1, 1), &d, &w).unwrap(), 2f64.ln());
    // nonzero parameters enter through the weighted linear term
    let p = MultinomialParams::new(array![[1.0]], array![0.5]).unwrap();
    let u = [0.8_f64, 0.1];
    let expect = ((1.0 + u[0].exp()).ln() - 0.5 * u[0] + (1.0 + u[1].exp()).ln() - 0.5 * u[1]) / 2.0;
    assert_relative_eq!(mn_full_loss(&p, &d, &w).unwrap(), expect, epsilon = 1e-15);
}

#[test]
fn k1_models_coincide() {
    let x = array![[0.4, -1.0], [1.3, 0.2], [-0.7, 0.6], [0.1, 0.1]];
    for scenario in [cc(&[0.7]), st(&[0.35])] {
        let data = PUDataset::new(x.clone(), vec![0, 1, 0, 1], scenario, None).unwrap();
        let beta = array![0.8, -0.3];
        let on = ordinal_reparam(&beta, &[0.25]).unwrap();
        let mn = MultinomialParams::new(beta.clone().insert_axis(ndarray::Axis(1)), array![-0.25]).unwrap();
        assert_relative_eq!(
            on_observed_loss(&on, &data).unwrap(),
            mn_observed_loss(&mn, &data).unwrap(),
            epsilon = 1e-12
        );
        let g_on = on_observed_grad(&on, &data).unwrap();
        let (g_t, g_b) = mn_observed_grad(&mn, &data).unwrap();
        assert_relative_eq!(g_on[0], g_t[(0, 0)], epsilon = 1e-12);
        assert_relative_eq!(g_on[1], g_t[(1, 0)], epsilon = 1e-12);
        assert_relative_eq!(g_on[2], -g_b[0], epsilon = 1e-12);
    }
}

#[test]
fn single_training_equals_shifted_case_control() {
    let (data, params) = little_mn();
    let probs = SingleTrainingProbs::new(vec![0.7, 0.4]).unwrap();
    let st_data = data.with_scenario(Scenario::SingleTraining(probs.clone())).unwrap();
    let cc_data = data.with_scenario(Scenario::CaseControl(probs.odds())).unwrap();
    let shifted = MultinomialParams::new(
        params.theta.clone(),
        params.b.iter().zip(probs.log_complement()).map(|(b, s)| b + s).collect(),
    )
    .unwrap();
    assert_eq!(
        mn_observed_loss(&params, &st_data).unwrap(),
        mn_observed_loss(&shifted, &cc_data).unwrap()
    );
}

#[test]
fn predict_proba_examples() {
    let pr = mn_predict_proba(&MultinomialParams::zeros(3, 2), array![1.0, 2.0, 3.0].view()).unwrap();
    for v in pr {
        assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
    }
    let theta = OrdinalParams::new(array![0.0, 0.0], 1).unwrap();
    assert_eq!(on_predict_proba(&theta, array![5.0].view()).unwrap(), vec![0.5, 0.5]);
    assert!(mn_predict_proba(&MultinomialParams::zeros(3, 2), array![1.0].view()).is_err());
}

#[test]
fn ordinal_proba_matches_cumulative_logit() {
    let (data, theta) = little_on(cc(&[1.0, 1.0, 1.0]));
    let nu = [-0.5, 0.3, 1.4];
    for row in data.x().rows() {
        let xb = 0.7 * row[0] - 0.4 * row[1];
        let c: Vec<f64> = nu.iter().map(|n| sigmoid(n - xb)).collect();
        let expect = [c[0], c[1] - c[0], c[2] - c[1], 1.0 - c[2]];
        let pr = on_predict_proba(&theta, row).unwrap();
        for (a, b) in pr.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }
}

#[test]
fn predict_label_rule() {
    assert_eq!(predict_label(&[0.2, 0.5, 0.3]), 1);
    assert_eq!(predict_label(&[0.5, 0.5]), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let v: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let mut best = 0;
        for j in 0..5 {
            if v[j] > v[best] {
                best = j;
            }
        }
        assert_eq!(predict_label(&v), best);
    }
}

#[test]
fn posterior_rows() {
    let x = array![[0.0], [0.0]];
    let data = PUDataset::new(x, vec![2, 0], cc(&[1.0, 1.0]), None).unwrap();
    let w = mn_posterior(&MultinomialParams::zeros(1, 2), &data).unwrap();
    assert_eq!(w.row(0).to_vec(), vec![0.0, 1.0]);
    assert_relative_eq!(w[(1, 0)], 1.0 / 3.0, epsilon = 1e-15);
    assert_relative_eq!(w[(1, 1)], 1.0 / 3.0, epsilon = 1e-15);
}

#[test]
fn posterior_matches_bayes_rule() {
    // single-training: P(y=j | x, z=0) = P(y=j|x)(1-pi_j) / P(z=0|x)
    let (data, params) = little_mn();
    let pi = [0.7, 0.4];
    let st_data = data.with_scenario(st(&pi)).unwrap();
    let w = mn_posterior(&params, &st_data).unwrap();
    let (pdata, theta) = little_on(st(&[0.3, 0.6, 0.8]));
    let w_on = on_posterior(&theta, &pdata).unwrap();
    for i in 0..st_data.n() {
        if st_data.z()[i] != 0 {
            continue;
        }
        let pr = mn_predict_proba(&params, st_data.row(i)).unwrap();
        let pz0 = pr[0] + pr[1] * (1.0 - pi[0]) + pr[2] * (1.0 - pi[1]);
        assert_relative_eq!(w[(i, 0)], pr[1] * (1.0 - pi[0]) / pz0, epsilon = 1e-14);
        assert_relative_eq!(w[(i, 1)], pr[2] * (1.0 - pi[1]) / pz0, epsilon = 1e-14);
    }
    let pi3 = [0.3, 0.6, 0.8];
    let pr = on_predict_proba(&theta, pdata.row(0)).unwrap();
    let pz0 = pr[0] + (0..3).map(|j| pr[j + 1] * (1.0 - pi3[j])).sum::<f64>();
    for j in 0..3 {
        assert_relative_eq!(w_on[(0, j)], pr[j + 1] * (1.0 - pi3[j]) / pz0, epsilon = 1e-14);
    }
    // case-control: an unlabeled row is a population draw
    let (cdata, theta) = little_on(cc(&[0.8, 1.7, 0.5]));
    let w = on_posterior(&theta, &cdata).unwrap();
    let pr = on_predict_proba(&theta, cdata.row(0)).unwrap();
    for j in 0..3 {
        assert_relative_eq!(w[(0, j)], pr[j + 1], epsilon = 1e-14);
    }
    assert_eq!(w.row(1).to_vec(), vec![0.0, 0.0, 1.0]);
}

fn fd_check(f: &dyn Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) {
    let h = 1e-5;
    let mut fd = vec![0.0; x.len()];
    for j in 0..x.len() {
        let mut a = x.to_vec();
        a[j] += h;
        let mut b = x.to_vec();
        b[j] -= h;
        fd[j] = (f(&a) - f(&b)) / (2.0 * h);
    }
    let err: f64 = fd.iter().zip(grad).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = grad.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
    assert!(err / scale <= 1e-6, "relative gradient error {}", err / scale);
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &k in &[1usize, 2, 4] {
        for &p in &[1usize, 5] {
            let n = 12;
            let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.5..1.5));
            let z: Vec<usize> = (0..n).map(|_| rng.random_range(0..=k)).collect();
            let kappa: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
            let pi: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..0.9)).collect();
            for scenario in [cc(&kappa), st(&pi)] {
                let data = PUDataset::new(x.clone(), z.clone(), scenario, None).unwrap();
                let w = Array2::from_shape_fn((n, k), |_| rng.random_range(0.0..1.0 / k as f64));
                let mn_flat: Vec<f64> = (0..p * k + k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut theta: Vec<f64> = (0..p + k).map(|_| rng.random_range(-1.0..1.0)).collect();
                for v in &mut theta[p + 1..] {
                    *v = rng.random_range(0.05..1.5);
                }
                for kind in [LossKind::Observed, LossKind::Naive, LossKind::Full(&w)] {
                    let obj = MultinomialObjective::new(&data, kind).unwrap();
                    let mut g = vec![0.0; obj.dim()];
                    obj.value_and_grad(&mn_flat, &mut g);
                    fd_check(&|v| obj.value(v), &mn_flat, &g);
                    let obj = OrdinalObjective::new(&data, kind).unwrap();
                    let mut g = vec![0.0; obj.dim()];
                    obj.value_and_grad(&theta, &mut g);
                    fd_check(&|v| obj.value(v), &theta, &g);
                }
            }
        }
    }
}

#[test]
fn value_and_grad_agree_on_value() {
    let (data, params) = little_mn();
    let obj = MultinomialObjective::new(&data, LossKind::Observed).unwrap();
    let mut g = vec![0.0; obj.dim()];
    assert_eq!(obj.value_and_grad(&params.to_flat(), &mut g), obj.value(&params.to_flat()));
}
