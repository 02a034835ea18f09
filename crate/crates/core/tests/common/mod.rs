#![allow(dead_code)]

use bpi_core::MaskedMatrix;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NAN: f64 = f64::NAN;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, p: usize) -> Array2<f64> {
    let a = uniform(rng, p, p);
    let mut s = &a + &a.t();
    for i in 0..p {
        for j in 0..i {
            s[[i, j]] = s[[j, i]];
        }
    }
    s
}

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> Array2<f64> {
    let b = uniform(rng, p + 2, p);
    let mut s = b.t().dot(&b);
    for i in 0..p {
        s[[i, i]] += 1e-3;
        for j in 0..i {
            s[[i, j]] = s[[j, i]];
        }
    }
    s
}

/// Cyclic Jacobi eigenvalues, sorted non-increasing.
pub fn jacobi_eigenvalues(s: &Array2<f64>) -> Vec<f64> {
    let p = s.nrows();
    let mut a = s.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    off += a[[i, j]] * a[[i, j]];
                }
            }
        }
        if off < 1e-26 * (1.0 + a.iter().map(|v| v * v).sum::<f64>()) {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                if a[[i, j]] == 0.0 {
                    continue;
                }
                let theta = (a[[j, j]] - a[[i, i]]) / (2.0 * a[[i, j]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..p {
                    let aki = a[[k, i]];
                    let akj = a[[k, j]];
                    a[[k, i]] = c * aki - sn * akj;
                    a[[k, j]] = sn * aki + c * akj;
                }
                for k in 0..p {
                    let aik = a[[i, k]];
                    let ajk = a[[j, k]];
                    a[[i, k]] = c * aik - sn * ajk;
                    a[[j, k]] = sn * aik + c * ajk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..p).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

/// Random staircase in canonical order: block widths, non-increasing counts
/// with n_1 = n.
pub struct Staircase {
    pub n: usize,
    pub widths: Vec<usize>,
    pub counts: Vec<usize>,
}

impl Staircase {
    pub fn random(rng: &mut ChaCha8Rng, max_n: usize, max_k: usize, max_width: usize) -> Self {
        let k = rng.random_range(1..=max_k);
        let n = rng.random_range(k.max(2)..=max_n.max(k.max(2)));
        let widths: Vec<usize> = (0..k).map(|_| rng.random_range(1..=max_width)).collect();
        // Strictly decreasing counts so adjacent blocks stay distinct.
        let mut cuts: Vec<usize> = Vec::new();
        while cuts.len() < k - 1 {
            let c = rng.random_range(1..n);
            if !cuts.contains(&c) {
                cuts.push(c);
            }
        }
        cuts.sort_unstable_by(|a, b| b.cmp(a));
        let mut counts = vec![n];
        counts.extend(cuts);
        Staircase { n, widths, counts }
    }

    pub fn p(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn mask(&self) -> Array2<bool> {
        let mut mask = Array2::from_elem((self.n, self.p()), false);
        let mut col = 0;
        for (w, &c) in self.widths.iter().zip(&self.counts) {
            for j in col..col + w {
                for i in 0..c {
                    mask[[i, j]] = true;
                }
            }
            col += w;
        }
        mask
    }

    pub fn missing_cells(&self) -> usize {
        self.widths.iter().zip(&self.counts).map(|(w, c)| w * (self.n - c)).sum()
    }

    pub fn masked(&self, values: Array2<f64>) -> MaskedMatrix {
        MaskedMatrix::new(values, self.mask()).unwrap()
    }
}

pub fn d1() -> MaskedMatrix {
    MaskedMatrix::from_nan(array![[2.0, 3.0, 5.0, 7.0, 9.0], [1.0, 2.0, 4.0, NAN, NAN], [3.0, 2.0, 6.0, NAN, NAN]])
}

pub fn d2() -> MaskedMatrix {
    MaskedMatrix::from_nan(array![[8.0, 3.0, 5.0, 7.0, 1.0], [1.0, 2.0, 4.0, NAN, NAN], [3.0, 2.0, NAN, NAN, NAN]])
}

pub fn d3() -> MaskedMatrix {
    MaskedMatrix::from_nan(array![[8.0, 3.0, 5.0, 7.0, 1.0], [1.0, 2.0, 4.0, NAN, NAN], [3.0, 2.0, NAN, 1.0, 12.0]])
}

/// The seven-feature toy, one row per sample.
pub fn toy() -> MaskedMatrix {
    let by_feature = array![
        [1.0, 5.0, 2.0, 9.0, 7.0, 0.0, 8.0],
        [2.0, 3.0, 6.0, 4.0, 0.0, 1.0, 9.0],
        [3.0, 1.0, 8.0, 3.0, 5.0, 2.0, 0.0],
        [3.0, 1.0, 2.0, 0.0, 0.0, NAN, NAN],
        [0.0, 4.0, 1.0, 3.0, 2.0, NAN, NAN],
        [4.0, 8.0, 6.0, NAN, NAN, NAN, NAN],
        [9.0, 1.0, 2.0, NAN, NAN, NAN, NAN]
    ];
    MaskedMatrix::from_nan(by_feature.t().to_owned())
}

/// Toy scores, one row per sample.
pub fn toy_scores() -> Vec<Array2<f64>> {
    vec![
        array![[0.5, 2.0, 1.0, 0.0, 1.0, 0.9, 2.0], [1.0, 0.7, 0.3, 2.0, 0.5, 1.0, 1.0]].t().to_owned(),
        array![[1.0, 3.0, 0.7, 0.0, 0.3]].t().to_owned(),
        array![[2.0, 0.5, 1.0]].t().to_owned(),
    ]
}
