use muse_autograd::{Graph, Tensor};
use muse_core::objectives::{ce_loss, ce_loss_term, si_sdr, si_sdr_loss_term, si_sdri, total_loss};
use proptest::prelude::*;

fn signal() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (16usize..64)
        .prop_flat_map(|n| (proptest::collection::vec(-1.0f64..1.0, n), proptest::collection::vec(-1.0f64..1.0, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scale_and_sign_invariance((est, reference) in signal(), alpha in 0.01f64..100.0, negate in any::<bool>()) {
        let base = si_sdr(&est, &reference).unwrap();
        prop_assume!(base.abs() < 59.0);
        let k = if negate { -alpha } else { alpha };
        let scaled: Vec<f64> = est.iter().map(|v| k * v).collect();
        let refs: Vec<f64> = reference.iter().map(|v| alpha * v).collect();
        let value = si_sdr(&scaled, &reference).unwrap();
        prop_assert!((value - base).abs() < 1e-6);
        prop_assert!((si_sdr(&est, &refs).unwrap() - base).abs() < 1e-6);
    }

    #[test]
    fn improvement_of_mixture_is_zero((mix, reference) in signal()) {
        prop_assert_eq!(si_sdri(&mix, &reference, &mix).unwrap(), 0.0);
    }

    #[test]
    fn value_is_bounded((est, reference) in signal()) {
        let v = si_sdr(&est, &reference).unwrap();
        prop_assert!((-60.0..=60.0).contains(&v));
    }
}

#[test]
fn hand_case_is_zero_db() {
    assert_eq!(si_sdr(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
}

#[test]
fn perfect_estimate_is_capped() {
    let r = [0.3, -0.2, 0.9];
    assert_eq!(si_sdr(&r, &r).unwrap(), 60.0);
}

#[test]
fn degenerate_inputs_rejected() {
    assert!(si_sdr(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    assert!(si_sdr(&[1.0, 0.0], &[0.0, 0.0]).is_err());
    assert!(si_sdr(&[1.0], &[1.0, 0.0]).is_err());
}

#[test]
fn uniform_logits_give_r_ln_c() {
    let heads = vec![Tensor::zeros(&[10, 6]); 4];
    let emb = vec![vec![0.5; 6]; 4];
    for y in 0..10 {
        assert!((ce_loss(&emb, &heads, y).unwrap() - 4.0 * 10f64.ln()).abs() < 1e-12);
    }
    let total = total_loss(&[1.0, 0.0], &[1.0, 1.0], &emb, &heads, 2, 0.1).unwrap();
    assert!((total - 0.4 * 10f64.ln()).abs() < 1e-12);
}

/// Graph SI-SDR loss gradient against central differences of the scalar metric.
#[test]
fn si_sdr_loss_gradient_matches_differences() {
    let est = vec![0.3, -0.7, 0.2, 0.9, -0.1, 0.4];
    let reference = vec![0.5, -0.4, 0.1, 0.8, 0.3, 0.2];
    let mut g = Graph::new(true);
    let x = g.input_with_grad(Tensor::from_vec(&[1, 6], est.clone()).unwrap());
    let loss = si_sdr_loss_term(&mut g, x, &Tensor::from_vec(&[1, 6], reference.clone()).unwrap()).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic = grads.get(x).unwrap().data().to_vec();
    let h = 1e-6;
    for i in 0..6 {
        let mut p = est.clone();
        let mut m = est.clone();
        p[i] += h;
        m[i] -= h;
        let fd = (-si_sdr(&p, &reference).unwrap() + si_sdr(&m, &reference).unwrap()) / (2.0 * h);
        assert!((fd - analytic[i]).abs() <= 1e-3 * fd.abs().max(1e-3), "{i}: {fd} vs {}", analytic[i]);
    }
}

#[test]
fn ce_term_gradient_matches_differences() {
    let logits = vec![0.2, -0.5, 1.1, 0.3, 0.0, -0.8];
    let labels = [2usize, 0];
    let f = |z: &[f64]| -> f64 {
        let mut total = 0.0;
        for (row, &y) in z.chunks(3).zip(&labels) {
            let m = row.iter().cloned().fold(f64::MIN, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        total / 2.0
    };
    let mut g = Graph::new(true);
    let z = g.input_with_grad(Tensor::from_vec(&[2, 3], logits.clone()).unwrap());
    let loss = ce_loss_term(&mut g, &[z], &labels).unwrap();
    assert!((g.value(loss).item() - f(&logits)).abs() < 1e-12);
    let grads = g.backward(loss).unwrap();
    let analytic = grads.get(z).unwrap().data().to_vec();
    for i in 0..6 {
        let (mut p, mut m) = (logits.clone(), logits.clone());
        p[i] += 1e-6;
        m[i] -= 1e-6;
        let fd = (f(&p) - f(&m)) / 2e-6;
        assert!((fd - analytic[i]).abs() <= 1e-3 * fd.abs().max(1e-3));
    }
}
