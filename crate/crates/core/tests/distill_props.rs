use akd_core::autograd::{Graph, Tensor};
use akd_core::distill::{
    annealing_factor, annealing_kd_graph, annealing_kd_loss, annealing_kl_loss, vanilla_kd_loss, VanillaKdConfig,
};
use proptest::prelude::*;

fn logits(rows: usize, cols: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-6.0f64..6.0, rows * cols).prop_map(move |v| Tensor::from_f64(&[rows, cols], &v).unwrap())
}

fn pair() -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>)> {
    (1usize..5, 1usize..6).prop_flat_map(|(r, c)| (logits(r, c), logits(r, c)))
}

fn softmax_rows(z: &Tensor<f64>, t: f64) -> Vec<Vec<f64>> {
    let cols = z.shape()[1];
    z.data()
        .chunks(cols)
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| ((v - m) / t).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

#[test]
fn phi_strictly_decreasing_with_exact_endpoints() {
    for tau in 1..=40u32 {
        assert_eq!(annealing_factor(1, tau).unwrap(), 1.0);
        assert_eq!(annealing_factor(tau, tau).unwrap(), 1.0 / tau as f64);
        for t in 1..tau {
            assert!(annealing_factor(t, tau).unwrap() > annealing_factor(t + 1, tau).unwrap());
        }
        assert!(annealing_factor(0, tau).is_err());
        assert!(annealing_factor(tau + 1, tau).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn annealing_loss_non_negative((zs, zt) in pair(), phi in 0.0f64..=1.0) {
        prop_assert!(annealing_kd_loss(&zs, &zt, phi).unwrap() >= 0.0);
    }

    #[test]
    fn annealing_loss_zero_at_annealed_target(zt in (1usize..5, 1usize..6).prop_flat_map(|(r, c)| logits(r, c)), tau in 1u32..20, t_frac in 0.0f64..1.0) {
        let t = 1 + ((tau - 1) as f64 * t_frac) as u32;
        let phi = annealing_factor(t, tau).unwrap();
        let target = zt.map(|v| v * phi);
        prop_assert_eq!(annealing_kd_loss(&target, &zt, phi).unwrap(), 0.0);
    }

    #[test]
    fn annealing_loss_positive_off_target((zs, zt) in pair(), phi in 0.05f64..=1.0) {
        let target = zt.map(|v| v * phi);
        let differs = zs.data().iter().zip(target.data()).any(|(a, b)| a != b);
        prop_assume!(differs);
        prop_assert!(annealing_kd_loss(&zs, &zt, phi).unwrap() > 0.0);
    }

    #[test]
    fn vanilla_kd_invariant_to_teacher_shift(
        (zs, zt) in (1usize..5, 2usize..6).prop_flat_map(|(r, c)| (logits(r, c), logits(r, c))),
        shift in -20.0f64..20.0,
        temperature in 0.5f64..8.0,
        lambda in 0.0f64..=1.0,
    ) {
        let labels: Vec<usize> = (0..zs.shape()[0]).map(|i| i % zs.shape()[1]).collect();
        let cfg = VanillaKdConfig::new(temperature, lambda).unwrap();
        let shifted = zt.map(|v| v + shift);
        let a = vanilla_kd_loss(&zs, &zt, &labels, &cfg).unwrap();
        let b = vanilla_kd_loss(&zs, &shifted, &labels, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn vanilla_kd_at_unit_temperature_is_plain_kl(
        (zs, zt) in (1usize..5, 2usize..6).prop_flat_map(|(r, c)| (logits(r, c), logits(r, c))),
    ) {
        let labels = vec![0; zs.shape()[0]];
        let got = vanilla_kd_loss(&zs, &zt, &labels, &VanillaKdConfig::new(1.0, 1.0).unwrap()).unwrap();
        let (ps, pt) = (softmax_rows(&zs, 1.0), softmax_rows(&zt, 1.0));
        let kl: f64 = pt
            .iter()
            .zip(&ps)
            .map(|(p, q)| p.iter().zip(q).map(|(a, b)| a * (a.ln() - b.ln())).sum::<f64>())
            .sum::<f64>()
            / ps.len() as f64;
        prop_assert!((got - kl).abs() < 1e-9, "{got} vs {kl}");
    }

    #[test]
    fn kl_ablation_non_negative((zs, zt) in pair(), phi in 0.0f64..=1.0) {
        prop_assert!(annealing_kl_loss(&zs, &zt, phi).unwrap() >= -1e-12);
    }

    #[test]
    fn softmax_rows_form_distributions(z in (1usize..6, 1usize..8).prop_flat_map(|(r, c)| logits(r, c)), t in 0.5f64..10.0) {
        let mut g = Graph::<f64>::new();
        let x = g.constant(z.clone());
        let p = g.softmax(x, t).unwrap();
        let cols = z.shape()[1];
        for row in g.value(p).data().chunks(cols) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            for &v in row {
                prop_assert!(v > 0.0 && v < 1.0 || cols == 1 && v == 1.0);
            }
        }
    }

    #[test]
    fn annealing_gradient_matches_differences_and_skips_teacher((zs, zt) in pair(), phi in 0.05f64..=1.0) {
        let mut g = Graph::<f64>::new();
        let s = g.parameter(zs.clone());
        let t = g.constant(zt.clone());
        let loss = annealing_kd_graph(&mut g, s, t, phi).unwrap();
        let grads = g.backward(loss).unwrap();
        prop_assert!(grads.get(t).is_none());
        let analytic = grads.get(s).unwrap().to_f64_vec();
        let h = 1e-5;
        let (mut d2, mut a2) = (0.0, 0.0);
        for (j, a) in analytic.iter().enumerate() {
            let mut plus = zs.clone();
            plus.data_mut()[j] += h;
            let mut minus = zs.clone();
            minus.data_mut()[j] -= h;
            let n = (annealing_kd_loss(&plus, &zt, phi).unwrap() - annealing_kd_loss(&minus, &zt, phi).unwrap()) / (2.0 * h);
            d2 += (a - n).powi(2);
            a2 += a * a;
        }
        prop_assert!(d2.sqrt() <= 1e-4 * a2.sqrt().max(1e-3));
    }
}
