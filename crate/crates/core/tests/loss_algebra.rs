use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sliq_core::loss::{l_obj, l_pvm, l_total, triplet_l2_loss};
use sliq_core::{LossWeights, Projection};

fn random_point(rng: &mut ChaCha8Rng) -> Projection {
    Projection::new(vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]).unwrap()
}

fn p(x: f64, y: f64) -> Projection {
    Projection::new(vec![x, y]).unwrap()
}

#[test]
fn hand_computed_values() {
    let (a, pos, neg) = (p(0.5, -0.5), p(0.25, 0.0), p(-1.0, 1.0));
    // (0.0625 + 0.25) - (2.25 + 2.25)
    assert!((triplet_l2_loss(&a, &pos, &neg).unwrap() - (0.3125 - 4.5)).abs() < 1e-12);
    // (0.25 + 0.5) - (1.5 + 1.5)
    assert!((l_obj(&a, &pos, &neg).unwrap() - (0.75 - 3.0)).abs() < 1e-12);
    assert_eq!(l_pvm(&a, &pos).unwrap(), 0.75);
    let w = LossWeights::new(2.0, 0.5).unwrap();
    assert_eq!(l_total(&w, -1.0, 0.5).unwrap(), -1.75);
}

#[test]
fn random_projection_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let (a, pos, neg) = (random_point(&mut rng), random_point(&mut rng), random_point(&mut rng));
        let l2 = triplet_l2_loss(&a, &pos, &neg).unwrap();
        let l1 = l_obj(&a, &pos, &neg).unwrap();
        assert_eq!(l2, -triplet_l2_loss(&a, &neg, &pos).unwrap());
        assert_eq!(l1, -l_obj(&a, &neg, &pos).unwrap());
        assert_eq!(triplet_l2_loss(&a, &pos, &pos).unwrap(), 0.0);
        assert_eq!(l_obj(&a, &pos, &pos).unwrap(), 0.0);
        assert!(l2.abs() <= 8.0 && l1.abs() <= 4.0);

        let pvm = l_pvm(&a, &pos).unwrap();
        assert!((0.0..=4.0).contains(&pvm));
        assert_eq!(pvm, l_pvm(&pos, &a).unwrap());
        assert_eq!(l_pvm(&a, &a).unwrap(), 0.0);

        let alpha: f64 = rng.gen_range(0.0..3.0);
        let beta: f64 = rng.gen_range(0.0..3.0);
        let w = LossWeights::new(alpha, beta.max(1e-3)).unwrap();
        let total = l_total(&w, l1, pvm).unwrap();
        assert!((total - (w.alpha * l1 + w.beta * pvm)).abs() < 1e-12);
    }
}

#[test]
fn rejects_bad_terms() {
    let w = LossWeights::default();
    assert!(l_total(&w, f64::NAN, 0.0).is_err());
    assert!(l_total(&w, 0.0, -0.1).is_err());
    assert!(LossWeights::new(-1.0, 1.0).is_err());
    assert!(Projection::new(vec![1.5, 0.0]).is_err());
    assert!(Projection::new(vec![0.0; 3]).is_err());
    let four = Projection::new(vec![0.0; 4]).unwrap();
    assert!(l_obj(&four, &four, &four).is_err());
}
