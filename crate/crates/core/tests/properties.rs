use proptest::prelude::*;

use rpd_core::data::PointSet2D;
use rpd_core::diffusion::{
    aux_eps, forward_sample, marginal_params, mu_from_eps, posterior_params, residual_coords,
};
use rpd_core::metrics::{wasserstein1, wasserstein1_exact};
use rpd_core::prior::Decoded;
use rpd_core::schedule::{Schedule, StepSequence};

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-5.0..5.0f64, -5.0..5.0f64]
}

fn prior() -> impl Strategy<Value = Decoded> {
    (point(), 0.05..3.0f64).prop_map(|(m, sigma)| Decoded {
        mu: m.to_vec(),
        sigma,
    })
}

proptest! {
    #[test]
    fn alpha_bar_decreases_and_stays_in_unit_interval(steps in 2usize..400, lo in 1e-3..1.0f64, ratio in 10.0..1e5f64) {
        let s = Schedule::log_linear(steps, lo, lo * ratio).unwrap();
        let mut prev = 1.0;
        for t in 1..=steps {
            let ab = s.alpha_bar(t);
            prop_assert!(ab > 0.0 && ab < prev);
            prev = ab;
        }
    }

    #[test]
    fn reduced_schedule_spans_first_to_last_step(count in 2usize..=200) {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        let r = s.reduce(count).unwrap();
        prop_assert_eq!(r.len(), count);
        prop_assert_eq!(r.kept()[0], 1);
        prop_assert_eq!(*r.kept().last().unwrap(), 200);
        prop_assert!(r.kept().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn forward_sample_matches_marginal_with_zero_noise(x0 in point(), p in prior(), t in 1usize..=200) {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        let c = s.coeffs(t);
        let x = forward_sample(&x0, &[0.0, 0.0], &p, &c);
        let (mean, _) = marginal_params(&x0, &p, &c);
        for k in 0..2 {
            prop_assert!((x[k] - mean[k]).abs() <= 1e-12 * (1.0 + mean[k].abs()));
        }
    }

    #[test]
    fn true_noise_recovers_posterior_mean(x0 in point(), eps in point(), p in prior(), t in 2usize..=200) {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        let c = s.coeffs(t);
        let x_t = forward_sample(&x0, &eps, &p, &c);
        let post = posterior_params(&x_t, &x0, &p, &c).unwrap();
        let m = mu_from_eps(&x_t, &eps, &p, &c);
        for (a, b) in m.iter().zip(&post.mu_tilde) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn aux_input_is_residual_scaled(x in point(), p in prior(), t in 1usize..=200) {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        let c = s.coeffs(t);
        let omega = aux_eps(&x, &p, &c, 0.0);
        let r = residual_coords(&x, &p);
        let scale = (1.0 - c.alpha_bar).sqrt();
        for k in 0..2 {
            prop_assert!((omega[k] * scale - r[k]).abs() <= 1e-9 * (1.0 + r[k].abs()));
        }
    }

    #[test]
    fn exact_w1_is_symmetric_and_zero_on_itself(a in prop::collection::vec(point(), 1..12), b in prop::collection::vec(point(), 1..12)) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        prop_assert!(wasserstein1_exact(a, a).unwrap().abs() < 1e-12);
        let ab = wasserstein1_exact(a, b).unwrap();
        let ba = wasserstein1_exact(b, a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn w1_ignores_point_order(mut a in prop::collection::vec(point(), 1..40), b in prop::collection::vec(point(), 1..40)) {
        let before = wasserstein1(&PointSet2D::new(a.clone()), &PointSet2D::new(b.clone()), 0).unwrap().value;
        a.reverse();
        let after = wasserstein1(&PointSet2D::new(a), &PointSet2D::new(b), 0).unwrap().value;
        prop_assert!((before - after).abs() < 1e-9);
    }
}
