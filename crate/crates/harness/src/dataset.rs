//! Synthetic Gaussian-mixture corpora.
//!
//! Each cluster center is drawn from a wide Gaussian, and points scatter
//! around their center with per-dimension standard deviation decaying
//! geometrically. Most of the variance therefore lives in the first few
//! dimensions, giving the low intrinsic dimensionality of real embedding
//! sets, which isotropic 100-D noise lacks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tierann::store::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub dim: usize,
    pub clusters: usize,
    /// Standard deviation of center coordinates (before the decay profile).
    pub center_spread: f32,
    /// Standard deviation of points around their center.
    pub cluster_spread: f32,
    /// Per-dimension scale is `decay^j`.
    pub decay: f32,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            clusters: 64,
            center_spread: 2.0,
            cluster_spread: 1.0,
            decay: 0.85,
            seed,
        }
    }
}

/// A sampler that can produce base and query sets from the same mixture.
pub struct Mixture {
    spec: MixtureSpec,
    centers: Vec<Vec<f32>>,
    scales: Vec<f32>,
}

impl Mixture {
    pub fn new(spec: MixtureSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let scales: Vec<f32> = (0..spec.dim).map(|j| spec.decay.powi(j as i32)).collect();
        let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
        let centers = (0..spec.clusters.max(1))
            .map(|_| {
                scales
                    .iter()
                    .map(|s| normal.sample(&mut rng) * spec.center_spread * s)
                    .collect()
            })
            .collect();
        Self {
            spec,
            centers,
            scales,
        }
    }

    /// `n` points; `stream` selects an independent random stream.
    pub fn sample(&self, n: usize, stream: u64) -> Dataset {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.spec.seed ^ stream.wrapping_mul(0x2545_F491_4F6C_DD1D));
        let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
        let mut data = Vec::with_capacity(n * self.spec.dim);
        for _ in 0..n {
            let c = &self.centers[rng.random_range(0..self.centers.len())];
            for (j, s) in self.scales.iter().enumerate() {
                data.push(c[j] + normal.sample(&mut rng) * self.spec.cluster_spread * s);
            }
        }
        Dataset::from_flat(self.spec.dim, data).expect("consistent dimension")
    }
}

/// Base vectors and queries drawn from one mixture.
pub fn mixture_pair(spec: MixtureSpec, n: usize, queries: usize) -> (Dataset, Dataset) {
    let m = Mixture::new(spec);
    (m.sample(n, 1), m.sample(queries, 2))
}

/// Uniform vectors in `[0, 1)^dim`.
pub fn uniform(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim).map(|_| rng.random::<f32>()).collect();
    Dataset::from_flat(dim, data).expect("consistent dimension")
}
