use rand::seq::SliceRandom;
use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Disjoint per-device index lists into a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    shards: Vec<Vec<usize>>,
}

impl Partition {
    /// Rejects empty shards and any index that appears twice.
    pub fn new(shards: Vec<Vec<usize>>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::Empty("partition"));
        }
        if shards.iter().any(Vec::is_empty) {
            return Err(Error::Empty("device shard"));
        }
        let mut all: Vec<usize> = shards.iter().flatten().copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("partition", "shards overlap"));
        }
        Ok(Self { shards })
    }

    pub fn devices(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, m: usize) -> &[usize] {
        &self.shards[m]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    /// `B = Σ B_m`.
    pub fn total(&self) -> usize {
        self.shards.iter().map(Vec::len).sum()
    }

    /// `B_m` as reals, for aggregation weights.
    pub fn weights(&self) -> Vec<f64> {
        self.shards.iter().map(|s| s.len() as f64).collect()
    }
}

fn split_even(idx: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (idx.len() / parts, idx.len() % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for k in 0..parts {
        let len = base + usize::from(k < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Random split into `devices` blocks whose sizes differ by at most one.
pub fn partition_iid<R: Rng + ?Sized>(data: &Dataset, devices: usize, rng: &mut R) -> Result<Partition> {
    if devices == 0 {
        return Err(Error::invalid("devices", "need at least one device"));
    }
    if devices > data.len() {
        return Err(Error::invalid(
            "devices",
            format!("{devices} devices but only {} samples", data.len()),
        ));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    Partition::new(split_even(&idx, devices))
}

/// Two shards of two different classes per device.
///
/// Each class is cut into `2M/C` shards, so `2M` must be divisible by the
/// class count `C` (for ten classes: `M` divisible by 5). Shards are laid
/// out class by class in a random class order and shard `k` is paired with
/// shard `k + M`; the two always come from different classes because one
/// class spans at most `M` consecutive shards.
pub fn partition_noniid<R: Rng + ?Sized>(data: &Dataset, devices: usize, rng: &mut R) -> Result<Partition> {
    let classes = data.num_classes();
    if classes < 2 {
        return Err(Error::invalid(
            "partition",
            "noniid partitioning needs a classification dataset",
        ));
    }
    if devices == 0 || !(2 * devices).is_multiple_of(classes) {
        let hint = if classes == 10 {
            " (M must be divisible by 5)".to_string()
        } else {
            String::new()
        };
        return Err(Error::invalid(
            "devices",
            format!("noniid partitioning needs 2M divisible by the {classes} classes{hint}, got M={devices}"),
        ));
    }
    let per_class = 2 * devices / classes;

    let mut by_class = vec![Vec::new(); classes];
    for i in 0..data.len() {
        by_class[data.class(i)].push(i);
    }
    let mut order: Vec<usize> = (0..classes).collect();
    order.shuffle(rng);
    let mut shards = Vec::with_capacity(2 * devices);
    for &c in &order {
        let members = &mut by_class[c];
        if members.len() < per_class {
            return Err(Error::invalid(
                "partition",
                format!(
                    "class {c} has {} samples, fewer than its {per_class} shards",
                    members.len()
                ),
            ));
        }
        members.shuffle(rng);
        shards.extend(split_even(members, per_class));
    }

    let mut slots: Vec<usize> = (0..devices).collect();
    slots.shuffle(rng);
    let mut assigned = vec![Vec::new(); devices];
    for (k, &m) in slots.iter().enumerate() {
        assigned[m] = [shards[k].as_slice(), shards[k + devices].as_slice()].concat();
    }
    Partition::new(assigned)
}
