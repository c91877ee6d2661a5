use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered partition of clients into clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPlan {
    pub clusters: Vec<Vec<usize>>,
}

impl ClusterPlan {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }
}

/// Shuffles `client_ids` and cuts the permutation into `c` contiguous groups
/// whose sizes differ by at most one; the first `n % c` groups are larger.
pub fn partition_clusters<R: Rng + ?Sized>(client_ids: &[usize], c: usize, rng: &mut R) -> Result<ClusterPlan> {
    let n = client_ids.len();
    if c == 0 || c > n {
        return Err(Error::Config(format!(
            "cluster count {c} must be in 1..={n} (client count)"
        )));
    }
    let mut perm = client_ids.to_vec();
    perm.shuffle(rng);
    let (base, extra) = (n / c, n % c);
    let mut clusters = Vec::with_capacity(c);
    let mut start = 0;
    for g in 0..c {
        let size = base + usize::from(g < extra);
        clusters.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(ClusterPlan { clusters })
}
