#![allow(dead_code)]

use ndarray::{Array1, Array2};
use npfs::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Correlated Gaussian classes with random offsets: `x = mu_c + A_c e`.
pub fn random_dataset(rng: &mut ChaCha8Rng, class_sizes: &[usize], d: usize, spread: f64) -> Dataset {
    let n: usize = class_sizes.iter().sum();
    let mut x = Array2::<f64>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (c, &nc) in class_sizes.iter().enumerate() {
        let mu: Vec<f64> = (0..d).map(|_| spread * rng.sample::<f64, _>(StandardNormal) + 2.0).collect();
        let mix: Vec<f64> = (0..d * d)
            .map(|k| {
                let base: f64 = rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt();
                if k % (d + 1) == 0 { base + 1.0 } else { base }
            })
            .collect();
        for _ in 0..nc {
            let e: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for i in 0..d {
                let v: f64 = (0..d).map(|k| mix[i * d + k] * e[k]).sum();
                x[[row, i]] = mu[i] + v;
            }
            labels.push(c as i64 * 10 + 3);
            row += 1;
        }
    }
    Dataset::new(x, &labels, None).unwrap()
}

/// Per-class mean and biased covariance computed one entry at a time.
pub fn naive_moments(data: &Dataset, rows: &[usize], class: usize) -> (Array1<f64>, Array2<f64>) {
    let d = data.n_features();
    let members: Vec<usize> = rows.iter().copied().filter(|&i| data.labels()[i] == class).collect();
    let nc = members.len() as f64;
    let mut mean = Array1::zeros(d);
    for j in 0..d {
        mean[j] = members.iter().map(|&i| data.samples()[[i, j]]).sum::<f64>() / nc;
    }
    let mut cov = Array2::zeros((d, d));
    for a in 0..d {
        for b in 0..d {
            cov[[a, b]] = members
                .iter()
                .map(|&i| (data.samples()[[i, a]] - mean[a]) * (data.samples()[[i, b]] - mean[b]))
                .sum::<f64>()
                / nc;
        }
    }
    (mean, cov)
}

pub fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_err_mat(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    frob(&(a - b)) / frob(b).max(f64::MIN_POSITIVE)
}

pub fn rel_err_vec(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    diff / b.mapv(|v| v * v).sum().sqrt().max(f64::MIN_POSITIVE)
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Array1<f64> {
    (0..d).map(|_| 2.0 + scale * rng.sample::<f64, _>(StandardNormal)).collect()
}
