//! Synthetic Gaussian-cluster networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EcpError, Result};
use crate::network::NetworkInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub clusters: usize,
    pub size: usize,
    pub dimension: usize,
    pub seed: u64,
    /// Standard deviation of every isotropic cluster.
    pub cluster_spread: f64,
    /// Cluster centers are drawn uniformly from `[lo, hi]^d`.
    pub center_box: (f64, f64),
    pub gamma: f64,
}

impl GaussianSpec {
    pub fn new(clusters: usize, size: usize, dimension: usize, seed: u64) -> Self {
        Self {
            clusters,
            size,
            dimension,
            seed,
            cluster_spread: 0.5,
            center_box: (0.0, 10.0),
            gamma: 0.1,
        }
    }

    pub fn with_spread(mut self, spread: f64) -> Self {
        self.cluster_spread = spread;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_center_box(mut self, lo: f64, hi: f64) -> Self {
        self.center_box = (lo, hi);
        self
    }
}

/// A generated instance along with the generator's ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: NetworkInstance,
    pub centers: Vec<Vec<f64>>,
    /// Generating cluster of each node (`i % clusters`).
    pub labels: Vec<usize>,
}

pub fn generate_gaussian_instance(spec: &GaussianSpec) -> Result<NetworkInstance> {
    generate_with_labels(spec).map(|g| g.instance)
}

/// Draws `clusters` centers, then deals `size` points round-robin across
/// the clusters. All nodes are candidates and weights are uniform.
pub fn generate_with_labels(spec: &GaussianSpec) -> Result<GeneratedInstance> {
    if spec.clusters == 0 {
        return Err(EcpError::InvalidConfig("clusters must be >= 1".into()));
    }
    if spec.size < spec.clusters {
        return Err(EcpError::InvalidConfig(format!(
            "size {} smaller than cluster count {}",
            spec.size, spec.clusters
        )));
    }
    if spec.dimension == 0 {
        return Err(EcpError::InvalidConfig("dimension must be >= 1".into()));
    }
    let (lo, hi) = spec.center_box;
    if !(lo <= hi) || !(spec.cluster_spread >= 0.0) {
        return Err(EcpError::InvalidConfig("bad center box or spread".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| {
            (0..spec.dimension)
                .map(|_| {
                    if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    }
                })
                .collect()
        })
        .collect();
    let mut labels = Vec::with_capacity(spec.size);
    let positions: Vec<Vec<f64>> = (0..spec.size)
        .map(|i| {
            let k = i % spec.clusters;
            labels.push(k);
            centers[k]
                .iter()
                .map(|&c| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + spec.cluster_spread * z
                })
                .collect()
        })
        .collect();
    let instance = NetworkInstance::all_candidates(positions, spec.gamma)?;
    Ok(GeneratedInstance {
        instance,
        centers,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::sq_dist;

    #[test]
    fn zero_spread_collapses_to_center() {
        let g = generate_with_labels(&GaussianSpec::new(1, 20, 2, 3).with_spread(0.0)).unwrap();
        for node in g.instance.nodes() {
            assert_eq!(node.position, g.centers[0]);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = GaussianSpec::new(3, 40, 2, 11);
        assert_eq!(
            generate_gaussian_instance(&spec).unwrap(),
            generate_gaussian_instance(&spec).unwrap()
        );
        let other = GaussianSpec::new(3, 40, 2, 12);
        assert_ne!(
            generate_gaussian_instance(&spec).unwrap(),
            generate_gaussian_instance(&other).unwrap()
        );
    }

    #[test]
    fn invalid_sizes() {
        assert!(generate_gaussian_instance(&GaussianSpec::new(0, 10, 2, 0)).is_err());
        assert!(generate_gaussian_instance(&GaussianSpec::new(5, 4, 2, 0)).is_err());
        assert!(generate_gaussian_instance(&GaussianSpec::new(2, 4, 0, 0)).is_err());
    }

    #[test]
    fn separated_blobs_recover_partition() {
        // Tight spread: nearest-center relabeling must reproduce the generator labels
        // whenever the centers are well separated.
        let g = generate_with_labels(&GaussianSpec::new(3, 60, 2, 7).with_spread(0.05)).unwrap();
        let min_sep = (0..3)
            .flat_map(|a| (a + 1..3).map(move |b| (a, b)))
            .map(|(a, b)| sq_dist(&g.centers[a], &g.centers[b]).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(min_sep > 1.0, "seed 7 gives separated centers");
        for (i, node) in g.instance.nodes().iter().enumerate() {
            let nearest = (0..3)
                .min_by(|&a, &b| {
                    sq_dist(&node.position, &g.centers[a])
                        .total_cmp(&sq_dist(&node.position, &g.centers[b]))
                })
                .unwrap();
            assert_eq!(nearest, g.labels[i]);
        }
        assert!(g.instance.candidates().len() == 60);
        assert!((g.instance.weight(0) - 1.0 / 60.0).abs() < 1e-15);
    }
}
