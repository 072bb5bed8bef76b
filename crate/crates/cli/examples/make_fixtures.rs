//! Writes the synthetic village-survey fixtures under `tests/data`.
//!
//! The full file has the layout of the public malaria survey (2035 children
//! in 65 villages with UTM coordinates, five covariates and a binary test
//! result) and exactly 726 positives, so logit of the prevalence is -0.588.
//! The small file has the same columns and 30 rows.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use std::path::Path;

struct Village {
    x: f64,
    y: f64,
    green: f64,
    phc: u8,
    effect: f64,
}

fn villages(l: usize, rng: &mut ChaCha20Rng) -> Vec<Village> {
    let jitter = Normal::new(0.0, 1.0).unwrap();
    let phc = Bernoulli::new(0.7).unwrap();
    let mut out: Vec<Village> = (0..l)
        .map(|_| {
            // five survey regions strung west to east along the river
            let region = rng.random_range(0..5) as f64;
            let x = (349_000.0 + region * 62_000.0 + 18_000.0 * jitter.sample(rng)).clamp(349_000.0, 622_000.0).round();
            let y = (1_485_000.0 + 14_000.0 * jitter.sample(rng)).clamp(1_450_000.0, 1_520_000.0).round();
            let green = (30.0 + 20.0 * (x - 349_000.0) / 273_000.0 + 4.0 * jitter.sample(rng)).clamp(28.0, 60.0);
            let effect = 0.6 * (x / 60_000.0).sin() + 0.4 * (y / 20_000.0).cos() + 0.3 * jitter.sample(rng);
            Village { x, y, green: (green * 100.0).round() / 100.0, phc: phc.sample(rng) as u8, effect }
        })
        .collect();
    if out.iter().all(|v| v.phc == out[0].phc) {
        out[0].phc = 1 - out[0].phc;
    }
    out
}

fn write(path: &Path, n: usize, l: usize, positives: usize, seed: u64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let vs = villages(l, &mut rng);
    let base = (n / l).min(15);
    let mut village_of: Vec<usize> = (0..l).flat_map(|v| std::iter::repeat_n(v, base)).collect();
    while village_of.len() < n {
        village_of.push(rng.random_range(0..l));
    }
    village_of.sort_unstable();
    let net = Bernoulli::new(0.7).unwrap();
    let treat = Bernoulli::new(0.45).unwrap();
    let rows: Vec<(usize, f64, u8, u8, f64)> = village_of
        .iter()
        .map(|&v| {
            let age = rng.random_range(300..2400) as f64;
            let netuse = net.sample(&mut rng) as u8;
            let treated = netuse * treat.sample(&mut rng) as u8;
            let u: f64 = rng.random_range(1e-12..1.0);
            let eta = 0.0007 * age - 0.4 * netuse as f64 - 0.3 * treated as f64 + 0.02 * vs[v].green
                - 0.3 * vs[v].phc as f64
                + vs[v].effect;
            (v, age, netuse, treated, eta + (u / (1.0 - u)).ln())
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rows[b].4.total_cmp(&rows[a].4));
    let mut pos = vec![0u8; n];
    for &i in &order[..positives] {
        pos[i] = 1;
    }
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["village", "x", "y", "pos", "age", "netuse", "treated", "green", "phc"]).unwrap();
    for (i, &(v, age, netuse, treated, _)) in rows.iter().enumerate() {
        let vil = &vs[v];
        w.write_record([
            (v + 1).to_string(),
            vil.x.to_string(),
            vil.y.to_string(),
            pos[i].to_string(),
            age.to_string(),
            netuse.to_string(),
            treated.to_string(),
            vil.green.to_string(),
            vil.phc.to_string(),
        ])
        .unwrap();
    }
    w.flush().unwrap();
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    write(&dir.join("gambia_synthetic.csv"), 2035, 65, 726, 2035);
    write(&dir.join("gambia_tiny.csv"), 30, 5, 11, 30);
}
