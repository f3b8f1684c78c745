//! Property tests of the payoff decomposition.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use hestonvar::pricing::{payoff_d, payoff_d_decomposed};
use hestonvar::DerivativeParams;

fn random_params(rng: &mut ChaCha12Rng) -> DerivativeParams {
    let cap = rng.gen_range(10.0..500.0);
    let k_eps = rng.gen_range(0.0..=cap);
    let k_v = rng.gen_range(0.0..=k_eps);
    let y = rng.gen_range(1e-3..1e3);
    DerivativeParams::new(y, k_v, k_eps, cap).unwrap()
}

#[test]
fn decomposition_identity_em_masse() {
    let mut rng = ChaCha12Rng::seed_from_u64(31337);
    for _ in 0..100_000 {
        let p = random_params(&mut rng);
        let y_t = rng.gen_range(0.0..2.0 * p.cap);
        let a = payoff_d(y_t, &p);
        let b = payoff_d_decomposed(y_t, &p);
        assert!(
            (a - b).abs() <= 1e-10 * p.cap.max(1.0),
            "y_t={y_t} params={p:?}: {a} vs {b}"
        );
        assert_eq!(a < p.cap, y_t < p.k_eps, "indicator identity");
    }
}

proptest! {
    #[test]
    fn payoff_monotone_and_floor_banded(
        cap in 10.0..500.0_f64,
        a in 0.0..1.0_f64,
        b in 0.0..1.0_f64,
        y1 in 0.0..1000.0_f64,
        dy in 0.0..500.0_f64,
    ) {
        let k_eps = cap * a;
        let k_v = k_eps * b;
        let p = DerivativeParams::new(1.0, k_v, k_eps, cap).unwrap();
        let lo = payoff_d(y1, &p);
        let hi = payoff_d(y1 + dy, &p);
        prop_assert!(hi >= lo - 1e-12);
        // terminal values in the floor band map exactly onto the floor
        if y1 >= k_eps && y1 <= cap {
            prop_assert_eq!(lo, cap);
        }
    }
}
