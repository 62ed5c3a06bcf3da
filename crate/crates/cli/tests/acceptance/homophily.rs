use std::time::Instant;

use ndarray::Array2;
use perspectives_core::homophily::{bootstrap_homophily, chance_probability, homophily_ratio, BootstrapConfig, Metric, RepSpace};
use perspectives_core::rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{ensure, within, Outcome};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i:04}")).collect()
}

fn balanced(n: usize, r: &mut rng::Rng) -> Vec<String> {
    let mut col: Vec<String> = (0..n).map(|i| if i < n / 2 { "x" } else { "y" }.to_string()).collect();
    rng::shuffle(&mut col, r);
    col
}

pub fn null_calibration() -> Outcome {
    let start = Instant::now();
    let n = 400;
    let mut r = rng::seeded(5_400);
    let vectors = Array2::from_shape_fn((n, 128), |_| r.random_range(-1.0..1.0));
    let space = RepSpace::from_parts(ids(n), vectors, vec![("g".into(), balanced(n, &mut r))]).map_err(|e| e.to_string())?;
    let cfg = BootstrapConfig {
        k: 50,
        iterations: 1000,
        seed: 11,
        metric: Metric::Cosine,
    };
    let row = bootstrap_homophily(&space, "g", &cfg).map_err(|e| e.to_string())?;
    let (mean, std) = (row.ratio.mean, row.ratio.std);
    ensure!((0.9..=1.1).contains(&mean), "ratio {mean:.4} outside [0.9, 1.1]");
    ensure!((mean - 1.0).abs() <= 2.0 * std, "ratio {mean:.4} is more than 2 x {std:.4} from 1");
    let secs = within(start, 60.0)?;
    Ok(format!("ratio {mean:.4} ± {std:.4} (N = {n}, k = 50, 1000 iterations), {secs:.1} s"))
}

pub fn signal_detection() -> Outcome {
    let n = 400;
    let mut r = rng::seeded(6_400);
    let planted = balanced(n, &mut r);
    let others: Vec<Vec<String>> = (0..3).map(|_| balanced(n, &mut r)).collect();
    let vectors = Array2::from_shape_fn((n, 16), |(i, j)| {
        let axis = if planted[i] == "x" { 0 } else { 1 };
        let centre = if j == axis { 6.0 } else { 0.0 };
        let noise: f64 = StandardNormal.sample(&mut r);
        centre + noise
    });
    let mut columns = vec![("planted".to_string(), planted)];
    columns.extend(others.into_iter().enumerate().map(|(i, c)| (format!("noise{i}"), c)));
    let space = RepSpace::from_parts(ids(n), vectors, columns).map_err(|e| e.to_string())?;
    let ratio = |a: &str| homophily_ratio(&space, a, 50, Metric::Cosine).map_err(|e| e.to_string());
    let signal = ratio("planted")?;
    ensure!(signal >= 1.5, "planted ratio {signal:.4} below 1.5");
    let mut best_other: f64 = 0.0;
    for i in 0..3 {
        let other = ratio(&format!("noise{i}"))?;
        ensure!(signal > other, "planted {signal:.4} does not exceed noise{i} {other:.4}");
        best_other = best_other.max(other);
    }

    for c in 1..=12usize {
        for per in [1usize, 2, 5, 33] {
            let n = c * per;
            let col: Vec<String> = (0..n).map(|i| format!("c{}", i % c)).collect();
            let space = RepSpace::from_parts(ids(n), Array2::zeros((n, 2)), vec![("g".into(), col)]).map_err(|e| e.to_string())?;
            let p = chance_probability(&space, "g").map_err(|e| e.to_string())?;
            ensure!(p == 1.0 / c as f64, "chance {p} for {c} uniform categories is not exactly 1/{c}");
        }
    }
    Ok(format!("planted ratio {signal:.4}, largest unplanted {best_other:.4}; chance equals 1/C exactly for C = 1..12"))
}
