use graspolab_core::mapping::{lr_fit, model_rmse, pi_fit, PositionModel};
use graspolab_core::sim::{gen_position_dataset, DEFAULT_MSTAR};
use graspolab_core::{
    assemble_observations, EEPosition, ImagePoint, MappingMatrix, ObservationSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Slope and intercept from centered sums, independent of the normal equations.
fn centered_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> ObservationSet {
    let pts: Vec<ImagePoint> = (0..n)
        .map(|_| {
            ImagePoint::with_depth(
                rng.random_range(-5.0..5.0),
                rng.random_range(0.0..2.0),
                rng.random_range(0.5..1.5),
            )
        })
        .collect();
    let pos: Vec<EEPosition> = (0..n)
        .map(|_| {
            EEPosition::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    assemble_observations(&pts, &pos).unwrap()
}

#[test]
fn lr_matches_centered_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let n = rng.random_range(3..60);
        let obs = random_set(&mut rng, n);
        let lines = lr_fit(&obs).unwrap();
        for axis in 0..3 {
            let (slope, intercept) = centered_line(obs.image().row(axis), obs.robot().row(axis));
            let scale = 1.0 + slope.abs().max(intercept.abs());
            assert!((lines[axis].slope - slope).abs() <= 1e-10 * scale);
            assert!((lines[axis].intercept - intercept).abs() <= 1e-10 * scale);
        }
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// `R·Iᵀ·(I·Iᵀ)⁻¹` with the inverse from the adjugate.
fn adjugate_fit(obs: &ObservationSet) -> [f64; 9] {
    let (i, r) = (obs.image(), obs.robot());
    let n = obs.len();
    let mut g = [[0.0; 3]; 3];
    let mut c = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            g[a][b] = (0..n).map(|j| i[(a, j)] * i[(b, j)]).sum();
            c[a][b] = (0..n).map(|j| r[(a, j)] * i[(b, j)]).sum();
        }
    }
    let det = det3(&g);
    let mut inv = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let (r0, r1) = ((b + 1) % 3, (b + 2) % 3);
            let (c0, c1) = ((a + 1) % 3, (a + 2) % 3);
            inv[a][b] = (g[r0][c0] * g[r1][c1] - g[r0][c1] * g[r1][c0]) / det;
        }
    }
    let mut m = [0.0; 9];
    for a in 0..3 {
        for b in 0..3 {
            m[a * 3 + b] = (0..3).map(|k| c[a][k] * inv[k][b]).sum();
        }
    }
    m
}

#[test]
fn pi_matches_adjugate_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let obs = random_set(&mut rng, 25);
        let m = pi_fit(&obs).unwrap().row_major();
        let oracle = adjugate_fit(&obs);
        for (a, b) in m.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn pi_recovers_generating_matrix() {
    let mstar = MappingMatrix::from_row_major(DEFAULT_MSTAR).unwrap();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = gen_position_dataset(50, &mstar, 0.0, &mut rng).unwrap();
        assert!(pi_fit(&ds.observations).unwrap().relative_error(&mstar) <= 1e-9);
    }
}

#[test]
fn lr_cannot_express_cross_axis_terms() {
    let mstar = MappingMatrix::from_row_major(DEFAULT_MSTAR).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ds = gen_position_dataset(50, &mstar, 0.0, &mut rng).unwrap();
    // Give the third image row some spread so the strict z fit is defined.
    let pts: Vec<ImagePoint> = ds
        .observations
        .image_points()
        .iter()
        .map(|p| ImagePoint::with_depth(p.ix, p.iy, rng.random_range(0.5..1.5)))
        .collect();
    let pos: Vec<EEPosition> = pts.iter().map(|p| mstar.apply(p)).collect();
    ds.observations = assemble_observations(&pts, &pos).unwrap();
    let lr = model_rmse(
        &PositionModel::Lines(lr_fit(&ds.observations).unwrap()),
        &ds.observations,
    )
    .unwrap();
    let pi = model_rmse(
        &PositionModel::Matrix(pi_fit(&ds.observations).unwrap()),
        &ds.observations,
    )
    .unwrap();
    assert!(lr > 1e3 * pi.max(1e-15), "lr {lr}, pi {pi}");
}

fn permuted(obs: &ObservationSet, perm: &[usize]) -> ObservationSet {
    obs.select(perm).unwrap()
}

proptest! {
    #[test]
    fn lr_is_permutation_invariant(seed in 0u64..1000, rot in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = random_set(&mut rng, 20);
        let perm: Vec<usize> = (0..20).map(|j| (j + rot) % 20).rev().collect();
        let a = lr_fit(&obs).unwrap();
        let b = lr_fit(&permuted(&obs, &perm)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.slope - y.slope).abs() <= 1e-9 * (1.0 + x.slope.abs()));
            prop_assert!((x.intercept - y.intercept).abs() <= 1e-9 * (1.0 + x.intercept.abs()));
        }
    }

    #[test]
    fn rmse_is_permutation_invariant(seed in 0u64..1000, rot in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = random_set(&mut rng, 15);
        let m = MappingMatrix::from_row_major(DEFAULT_MSTAR).unwrap();
        let perm: Vec<usize> = (0..15).map(|j| (j * 7 + rot) % 15).collect();
        let a = model_rmse(&PositionModel::Matrix(m), &obs).unwrap();
        let b = model_rmse(&PositionModel::Matrix(m), &permuted(&obs, &perm)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn pi_is_exact_on_consistent_data(genes in proptest::array::uniform9(-3.0f64..3.0), seed in 0u64..500) {
        let m = MappingMatrix::from_row_major(genes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = gen_position_dataset(12, &m, 0.0, &mut rng).unwrap();
        let fit = pi_fit(&ds.observations).unwrap();
        prop_assert!(fit.frobenius_distance(&m) <= 1e-8 * (1.0 + m.to_matrix().frobenius()));
    }
}
