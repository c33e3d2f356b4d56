//! Randomized cross-module properties.

use fsc_core::belief::alpha_init;
use fsc_core::dp::{quantize, SimplexGrid, DEFAULT_GRID_BUDGET};
use fsc_core::oracle::{directed_info_terms, forward_directed_info_terms, random_channel, random_fixed_source, DEFAULT_ENUMERATION_BUDGET};
use fsc_core::ContextSpace;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_channels_have_a_stationary_law(seed in any::<u64>(), states in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channel(&mut rng, states, 2, 3).unwrap();
        let pi = ch.stationary_state_dist();
        prop_assert!(ch.stationary_residual(&pi) < 1e-12);
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_recursion_equals_enumeration(seed in any::<u64>(), shape in 0usize..3) {
        let shapes = [(0, 0, 0), (1, 1, 1), (0, 1, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channel(&mut rng, 2, 2, 2).unwrap();
        let src = random_fixed_source(&mut rng, &ch, shapes[shape]).unwrap();
        let v = shapes[shape].1;
        let fwd = forward_directed_info_terms(&ch, &src, v, 3).unwrap();
        let full = directed_info_terms(&ch, &src, v, 3, true, DEFAULT_ENUMERATION_BUDGET).unwrap();
        for ((a, b), c) in fwd.iter().zip(&full.truncated).zip(&full.full) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((b - c).abs() < 1e-12);
        }
    }

    #[test]
    fn quantized_beliefs_are_grid_points(seed in any::<u64>(), k in 2u32..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channel(&mut rng, 2, 2, 2).unwrap();
        let space = ContextSpace::new(&ch, 1, 1, 1).unwrap();
        let grid = SimplexGrid::new(space.admissible(), 1.0 / k as f64, DEFAULT_GRID_BUDGET).unwrap();
        let alpha = alpha_init(&ch, &space);
        let q = quantize(&alpha, 1.0 / k as f64, Some(space.admissible())).unwrap();
        let p = grid.point(grid.locate(&alpha));
        for (a, b) in q.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
