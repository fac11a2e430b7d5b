//! Shared randomized-instance builders for the integration suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use streamharvest_core::two_patch::TwoPatchScenario;
use streamharvest_core::Model;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random irreducible model: a directed ring plus sparse extra edges.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    n: usize,
    growth_range: (f64, f64),
    competition_range: (f64, f64),
) -> Model {
    let growth: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(growth_range.0..growth_range.1))
        .collect();
    let competition: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(competition_range.0..competition_range.1))
        .collect();
    let mut movement = vec![vec![0.0; n]; n];
    for i in 0..n {
        let j = (i + 1) % n;
        if n > 1 {
            movement[j][i] = rng.gen_range(0.1..2.0);
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.4) {
                movement[i][j] += rng.gen_range(0.0..1.0);
            }
        }
    }
    Model::new(growth, competition, movement).expect("ring keeps the graph connected")
}

/// Random homogeneous two-patch scenario with the given parameter ranges.
pub fn random_homogeneous_scenario(
    rng: &mut ChaCha8Rng,
    growth: f64,
    d_range: (f64, f64),
    q_range: (f64, f64),
    h_range: (f64, f64),
    c_range: (f64, f64),
) -> TwoPatchScenario {
    let d = rng.gen_range(d_range.0..d_range.1);
    let q = rng.gen_range(q_range.0..q_range.1);
    let h = rng.gen_range(h_range.0..h_range.1);
    let c = rng.gen_range(c_range.0..c_range.1);
    TwoPatchScenario::new([growth, growth], [c, c], d, q, h).unwrap()
}

/// Random positive harvest summing to `budget`.
pub fn random_allocation(rng: &mut ChaCha8Rng, n: usize, budget: f64) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|&x| budget * x / total).collect()
}
