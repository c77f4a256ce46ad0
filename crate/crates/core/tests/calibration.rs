mod oracle;

use cascade_core::calibration::{apply_threshold, evaluate_threshold, sweep_threshold, Objective};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBJECTIVES: [(Objective, u8); 3] =
    [(Objective::F1Positive, 0), (Objective::F1Negative, 1), (Objective::MacroF1, 2)];

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let coarse = rng.random_bool(0.5);
    let probs: Vec<f64> =
        (0..n).map(|_| if coarse { rng.random_range(0..10) as f64 / 10.0 } else { rng.random::<f64>() }).collect();
    let mut truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    truth[0] = true;
    truth[1] = false;
    (probs, truth)
}

#[test]
fn two_hundred_random_pairs_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let (probs, truth) = random_set(&mut rng, 200);
    for (objective, code) in OBJECTIVES {
        let cal = sweep_threshold(&probs, &truth, objective).unwrap();
        let (t, best) = oracle::exhaustive_sweep(&probs, &truth, code);
        assert_eq!(cal.achieved_score, 100.0 * best);
        assert_eq!(cal.threshold, t);
    }
}

#[test]
fn score_dominates_every_candidate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(2..=80);
        let (probs, truth) = random_set(&mut rng, n);
        for (objective, code) in OBJECTIVES {
            let cal = sweep_threshold(&probs, &truth, objective).unwrap();
            for t in oracle::candidates(&probs) {
                assert!(cal.achieved_score >= 100.0 * oracle::objective_at(&probs, &truth, t, code));
            }
            assert_eq!(evaluate_threshold(&probs, &truth, cal.threshold, objective).unwrap(), cal.achieved_score);
            assert!((0.0..=1.0).contains(&cal.threshold));
            assert!((0.0..=100.0).contains(&cal.achieved_score));
        }
    }
}

proptest! {
    #[test]
    fn increasing_relabel_keeps_partition(
        grid in prop::collection::vec(0u32..=1000, 2..100),
        flags in prop::collection::vec(any::<bool>(), 100),
    ) {
        let n = grid.len();
        let mut truth = flags[..n].to_vec();
        truth[0] = true;
        truth[1] = false;
        let probs: Vec<f64> = grid.iter().map(|&g| g as f64 / 1000.0).collect();
        let warped: Vec<f64> = probs.iter().map(|p| p * p).collect();
        for (objective, _) in OBJECTIVES {
            let a = sweep_threshold(&probs, &truth, objective).unwrap();
            let b = sweep_threshold(&warped, &truth, objective).unwrap();
            prop_assert_eq!(a.achieved_score, b.achieved_score);
            let side_a: Vec<bool> = probs.iter().map(|&p| apply_threshold(p, &a)).collect();
            let side_b: Vec<bool> = warped.iter().map(|&p| apply_threshold(p, &b)).collect();
            prop_assert_eq!(side_a, side_b);
        }
    }

    #[test]
    fn sweep_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (probs, truth) = random_set(&mut rng, 50);
        let a = sweep_threshold(&probs, &truth, Objective::MacroF1).unwrap();
        let b = sweep_threshold(&probs, &truth, Objective::MacroF1).unwrap();
        prop_assert_eq!(a.threshold.to_bits(), b.threshold.to_bits());
    }
}
