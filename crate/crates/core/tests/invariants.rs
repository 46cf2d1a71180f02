use dmnls::checkpoint::{read_checkpoint, write_checkpoint};
use dmnls::groundstate::{exact_q_1d, petviashvili};
use dmnls::lab::{mass_drift, sample_times};
use dmnls::solver::{evolve, nonlinear_phase, SolverConfig};
use dmnls::{Complex, DispersionMap, DispersionSchedule, Field, Field32, Grid, Grid32, Representation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smooth(seed: u64, n: usize, l: f64) -> Field<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, w, k, a) = (
        rng.gen_range(-2.0..2.0),
        rng.gen_range(0.7..1.5),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(0.2..1.0),
    );
    let grid = Grid::new(1, n, l).unwrap();
    Field::from_fn(grid, |x| {
        let y = x[0] - c;
        Complex::from_polar(a * (-(y * y) / (2.0 * w * w)).exp(), k * y)
    })
    .unwrap()
}

fn arb_map() -> impl Strategy<Value = DispersionMap<f64>> {
    (0.2f64..3.0, 0.2f64..3.0, 0.2f64..0.8, 0.2f64..1.0)
        .prop_map(|(gp, gm, tp, eps)| DispersionMap::new(gp, gm, tp, eps).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mass_conserved_for_random_maps(seed in any::<u64>(), map in arb_map(), p in 2.0f64..4.0) {
        let phi = smooth(seed, 128, 16.0);
        let dt = 0.5 * map.epsilon * map.t_plus.min(1.0 - map.t_plus);
        // without the 2/3 truncation both substeps are exactly unitary
        let cfg = SolverConfig { dealias: false, ..SolverConfig::new(dt.min(0.02), p) };
        let ev = evolve(&phi, &map, 0.0, 1.0, &cfg).unwrap();
        prop_assert!(mass_drift(&ev.diagnostics) <= 1e-10);
        for step in &ev.steps {
            let inside = map.breakpoints_between(step.start, step.end).unwrap();
            prop_assert!(inside.is_empty());
        }
    }

    #[test]
    fn nonlinear_phase_keeps_modulus(seed in any::<u64>(), tau in -3.0f64..3.0, p in 1.1f64..6.0) {
        let f = smooth(seed, 64, 8.0);
        let g = nonlinear_phase(&f, tau, p).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            prop_assert!((a.norm() - b.norm()).abs() <= 1e-14);
        }
    }

    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), d in 1usize..=3, time in -1e3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = [0, 32, 8, 4][d];
        let grid = Grid::new(d, n, rng.gen_range(0.5..50.0)).unwrap();
        let values = (0..grid.len()).map(|_| Complex::new(rng.gen::<f64>(), -rng.gen::<f64>())).collect();
        let f = Field::new(grid, values, Representation::Spectral).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &f, time).unwrap();
        let back = read_checkpoint::<f64, _>(&buf[..]).unwrap();
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back.field, back.time).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn samples_stay_in_window(map in arb_map(), t0 in -2.0f64..2.0, len in 0.1f64..3.0, count in 32usize..64) {
        let t = sample_times(&map, t0, t0 + len, count).unwrap();
        prop_assert_eq!(t[0], t0);
        prop_assert_eq!(*t.last().unwrap(), t0 + len);
        prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(t.len() >= count);
    }
}

#[test]
fn ground_state_spectral_accuracy() {
    let err = |n: usize| {
        let gs = petviashvili(&Grid::new(1, n, 20.0).unwrap(), 1, 1e-12, 1000).unwrap();
        let exact = Field::from_fn(gs.q_field.grid().clone(), |x| Complex::new(exact_q_1d(x[0]), 0.0)).unwrap();
        gs.q_field.relative_l2_distance(&exact).unwrap()
    };
    let (coarse, fine) = (err(64), err(128));
    assert!(fine * 1e2 <= coarse, "{coarse:e} -> {fine:e}");
}

#[test]
fn single_precision_tracks_double() {
    let grid = Grid32::new(1, 128, 12.0).unwrap();
    let phi = Field32::from_fn(grid, |x| Complex::new((-x[0] * x[0] / 2.0).exp(), 0.0)).unwrap();
    let map = DispersionMap::new(1.0f32, 1.0, 0.5, 0.5).unwrap();
    let ev = evolve(&phi, &map, 0.0, 1.0, &SolverConfig::new(0.01f32, 3.0)).unwrap();
    assert!(mass_drift(&ev.diagnostics) < 1e-4);

    let grid64 = Grid::<f64>::new(1, 128, 12.0).unwrap();
    let phi64 = Field::from_fn(grid64, |x| Complex::new((-x[0] * x[0] / 2.0).exp(), 0.0)).unwrap();
    let map64 = DispersionMap::new(1.0, 1.0, 0.5, 0.5).unwrap();
    let ev64 = evolve(&phi64, &map64, 0.0, 1.0, &SolverConfig::new(0.01, 3.0)).unwrap();
    let diff: f64 = ev
        .field
        .values()
        .iter()
        .zip(ev64.field.values())
        .map(|(a, b)| (Complex::new(a.re as f64, a.im as f64) - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let norm: f64 = ev64.field.values().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    assert!(diff / norm < 1e-4, "{}", diff / norm);
}
