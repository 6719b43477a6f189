use graspolab_core::sim::{
    random_policy_success_rate, EnvConfig, GraspEnvironment, SimEnv, SimObject,
};
use graspolab_core::ImagePoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Folded angle difference, written out independently of the crate.
fn fold(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Over a 0.1° grid of required angles the table can serve, the fraction
/// of (angle, action) pairs that succeed.
fn brute_force_random_rate(angles: &[f64], tolerance: f64) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for i in 0..1800 {
        let required = i as f64 / 10.0;
        let ok = angles
            .iter()
            .filter(|a| fold(**a, required) <= tolerance)
            .count();
        if ok > 0 {
            hits += ok;
            total += angles.len();
        }
    }
    hits as f64 / total as f64
}

#[test]
fn every_grid_orientation_is_servable_for_fine_tables() {
    for n in [12, 24] {
        let cfg = EnvConfig::for_actions(n, 0).unwrap();
        for i in 0..1800 {
            let orientation = i as f64 / 10.0;
            let required = (orientation + 90.0) % 180.0;
            assert!(
                cfg.angles
                    .iter()
                    .any(|a| fold(*a, required) <= cfg.tolerance),
                "{n} actions, object at {orientation}"
            );
        }
    }
}

#[test]
fn spawned_scenes_always_have_a_winning_action() {
    for n in [3, 12, 24] {
        let mut env = SimEnv::new(EnvConfig::for_actions(n, 21).unwrap()).unwrap();
        let cfg = env.config().clone();
        for _ in 0..300 {
            env.reset();
            let required = env.required_angle().unwrap();
            assert!(cfg
                .angles
                .iter()
                .any(|a| fold(*a, required) <= cfg.tolerance));
            env.attempt_grasp(0.0).unwrap();
        }
    }
}

#[test]
fn random_policy_matches_brute_force() {
    for n in [3, 12, 24] {
        let cfg = EnvConfig::for_actions(n, 13).unwrap();
        let oracle = brute_force_random_rate(&cfg.angles, cfg.tolerance);
        assert!((random_policy_success_rate(&cfg, 0.1) - oracle).abs() < 1e-12);

        let angles = cfg.angles.clone();
        let mut env = SimEnv::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let trials = 6000;
        env.reset();
        let mut wins = 0u32;
        for _ in 0..trials {
            let a = angles[rng.random_range(0..angles.len())];
            wins += env.step(a).unwrap().reward as u32;
        }
        let rate = wins as f64 / trials as f64;
        let sigma = (oracle * (1.0 - oracle) / trials as f64).sqrt();
        assert!(
            (rate - oracle).abs() <= 3.0 * sigma,
            "{n}: {rate} vs {oracle}"
        );
    }
}

#[test]
fn detector_jitter_stays_near_the_object() {
    let mut cfg = EnvConfig::for_actions(12, 2).unwrap();
    cfg.detector_jitter = 2.0;
    let mut env = SimEnv::new(cfg).unwrap();
    let obj = SimObject {
        center: ImagePoint::new(800.0, 500.0),
        orientation: 35.0,
        length: 100.0,
        width: 40.0,
    };
    env.place(obj);
    let draws = 1000;
    let (mut sx, mut sy, mut inside) = (0.0, 0.0, 0);
    for _ in 0..draws {
        let c = env.detector_oracle().unwrap().center();
        let (dx, dy) = (c.ix - 800.0, c.iy - 500.0);
        sx += dx;
        sy += dy;
        // Box corners are whole pixels, worth up to half a pixel of shift.
        if dx.abs() <= 3.0 * 2.0 + 0.5 && dy.abs() <= 3.0 * 2.0 + 0.5 {
            inside += 1;
        }
    }
    assert!(inside as f64 >= 0.99 * draws as f64, "{inside}");
    let bound = 3.0 * 2.0 / (draws as f64).sqrt() + 0.5;
    assert!((sx / draws as f64).abs() <= bound && (sy / draws as f64).abs() <= bound);
}

#[test]
fn noise_keeps_states_in_unit_range() {
    let mut cfg = EnvConfig::for_actions(3, 8).unwrap();
    cfg.noise_sigma = 0.3;
    let mut env = SimEnv::new(cfg).unwrap();
    for _ in 0..20 {
        let s = env.reset();
        assert_eq!(s.shape(), &[84, 84, 1]);
        assert!(s.data().iter().all(|v| (0.0..=1.0).contains(v)));
        env.attempt_grasp(45.0).unwrap();
    }
}
