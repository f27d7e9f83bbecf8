use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, NUM_CLASSES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionScheme {
    /// Uniform random split, equal sizes up to one example.
    Identical,
    /// Label `l` goes to client `l mod clients`; no label is shared.
    Disjoint,
    /// Half of the examples split identically, the other half disjointly.
    Intermediary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPartition {
    pub client: u32,
    pub scheme: PartitionScheme,
    pub indices: Vec<usize>,
}

impl DataPartition {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn deal(indices: &[usize], clients: usize) -> Vec<Vec<usize>> {
    let n = indices.len();
    (0..clients)
        .map(|k| indices[k * n / clients..(k + 1) * n / clients].to_vec())
        .collect()
}

fn by_label(data: &Dataset, indices: &[usize], clients: usize) -> Vec<Vec<usize>> {
    let mut out = alloc::vec![Vec::new(); clients];
    for &i in indices {
        out[usize::from(data.label(i)) % clients].push(i);
    }
    out
}

pub fn partition(
    data: &Dataset,
    clients: usize,
    scheme: PartitionScheme,
    seed: u64,
) -> Result<Vec<DataPartition>> {
    if clients == 0 {
        return Err(Error::Config("at least one client is required".into()));
    }
    if scheme != PartitionScheme::Identical && clients > NUM_CLASSES {
        return Err(Error::Config(alloc::format!(
            "{clients} clients cannot each hold exclusive labels out of {NUM_CLASSES}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<usize> = (0..data.len()).collect();
    shuffled.shuffle(&mut rng);

    let groups = match scheme {
        PartitionScheme::Identical => deal(&shuffled, clients),
        PartitionScheme::Disjoint => {
            let all: Vec<usize> = (0..data.len()).collect();
            by_label(data, &all, clients)
        }
        PartitionScheme::Intermediary => {
            let half = shuffled.len() / 2;
            let (shared, exclusive) = shuffled.split_at(half);
            let mut exclusive = exclusive.to_vec();
            exclusive.sort_unstable();
            deal(shared, clients)
                .into_iter()
                .zip(by_label(data, &exclusive, clients))
                .map(|(mut a, b)| {
                    a.extend(b);
                    a
                })
                .collect()
        }
    };
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(k, indices)| DataPartition {
            client: k as u32,
            scheme,
            indices,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::Split;
    use alloc::vec;

    fn labelled(n: usize) -> Dataset {
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        Dataset::new(1, 1, vec![0; n], labels, Split::Train).unwrap()
    }

    fn sorted_union(parts: &[DataPartition]) -> Vec<usize> {
        let mut all: Vec<usize> = parts
            .iter()
            .flat_map(|p| p.indices.iter().copied())
            .collect();
        all.sort_unstable();
        all
    }

    #[test]
    fn identical_equal_sizes() {
        let d = labelled(60_000);
        let parts = partition(&d, 3, PartitionScheme::Identical, 1).unwrap();
        assert!(parts.iter().all(|p| p.len() == 20_000));
        assert_eq!(sorted_union(&parts), (0..60_000).collect::<Vec<_>>());
        let odd = partition(&labelled(101), 4, PartitionScheme::Identical, 1).unwrap();
        let sizes: Vec<usize> = odd.iter().map(DataPartition::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn disjoint_one_label_per_client() {
        let d = labelled(1000);
        let parts = partition(&d, 10, PartitionScheme::Disjoint, 1).unwrap();
        for p in &parts {
            assert!(p
                .indices
                .iter()
                .all(|&i| usize::from(d.label(i)) == p.client as usize));
        }
        assert_eq!(sorted_union(&parts), (0..1000).collect::<Vec<_>>());
        assert!(partition(&d, 11, PartitionScheme::Disjoint, 1).is_err());
        assert!(partition(&d, 0, PartitionScheme::Identical, 1).is_err());
    }

    #[test]
    fn intermediary_histograms() {
        let d = labelled(20_000);
        let parts = partition(&d, 2, PartitionScheme::Intermediary, 7).unwrap();
        assert_eq!(sorted_union(&parts), (0..20_000).collect::<Vec<_>>());
        for p in &parts {
            let h = d.label_histogram(&p.indices);
            for (label, &count) in h.iter().enumerate() {
                let shared = 20_000 / 4 / 10; // a quarter of the data, spread over 10 labels
                let own = if label % 2 == p.client as usize {
                    20_000 / 2 / 10
                } else {
                    0
                };
                let expected = (shared + own) as f64;
                // sampling noise on the shared half only
                assert!(
                    (count as f64 - expected).abs() < 120.0,
                    "label {label}: {count} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn seeded() {
        let d = labelled(500);
        let a = partition(&d, 3, PartitionScheme::Intermediary, 5).unwrap();
        assert_eq!(
            a,
            partition(&d, 3, PartitionScheme::Intermediary, 5).unwrap()
        );
        assert_ne!(
            a,
            partition(&d, 3, PartitionScheme::Intermediary, 6).unwrap()
        );
    }
}
