use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered block sizes `(n_1, …, n_K)` of a block matrix.
///
/// Blocks are contiguous: block `k` covers indices
/// `offset(k) .. offset(k) + n_k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("at least one block is required".into()));
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("block {k} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &s in &sizes {
            acc = acc
                .checked_add(s)
                .ok_or_else(|| Error::InvalidPartition("total dimension overflows".into()))?;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// `K` blocks of (as close as possible to) equal size covering `n`
    /// indices; the first `n mod K` blocks get one extra element.
    pub fn even(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::InvalidPartition(format!(
                "cannot split {n} indices into {k} non-empty blocks"
            )));
        }
        let base = n / k;
        let extra = n % k;
        Self::new((0..k).map(|i| base + usize::from(i < extra)).collect())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    /// Number of blocks `K`.
    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    /// Total dimension `n`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().expect("offsets is never empty")
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Block containing index `i`, if `i < n`.
    pub fn block_of(&self, i: usize) -> Option<usize> {
        if i >= self.dim() {
            return None;
        }
        Some(self.offsets.partition_point(|&o| o <= i) - 1)
    }

    /// Where the within-block contrasts of block `k` start in a rotated
    /// vector `Q'x`: after the `K` block-mean coordinates and the contrasts
    /// of blocks `0..k`.
    pub fn contrast_offset(&self, k: usize) -> usize {
        self.num_blocks() + self.offsets[k] - k
    }

    /// Common block size when every block has the same size.
    pub fn common_size(&self) -> Option<usize> {
        let first = self.sizes[0];
        self.sizes.iter().all(|&s| s == first).then_some(first)
    }
}

impl TryFrom<Vec<usize>> for BlockPartition {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<BlockPartition> for Vec<usize> {
    fn from(p: BlockPartition) -> Self {
        p.sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_and_lookup() {
        let p = BlockPartition::new(vec![3, 1, 2]).unwrap();
        assert_eq!(p.dim(), 6);
        assert_eq!(p.num_blocks(), 3);
        assert_eq!(p.range(2), 4..6);
        let blocks: Vec<_> = (0..7).map(|i| p.block_of(i)).collect();
        assert_eq!(
            blocks,
            vec![Some(0), Some(0), Some(0), Some(1), Some(2), Some(2), None]
        );
        assert_eq!(p.contrast_offset(0), 3);
        assert_eq!(p.contrast_offset(1), 5);
        assert_eq!(p.contrast_offset(2), 5);
    }

    #[test]
    fn rejects_empty_and_zero_sized() {
        assert!(matches!(BlockPartition::new(vec![]), Err(Error::InvalidPartition(_))));
        assert!(matches!(BlockPartition::new(vec![2, 0]), Err(Error::InvalidPartition(_))));
    }

    #[test]
    fn even_split() {
        let p = BlockPartition::even(10, 4).unwrap();
        assert_eq!(p.sizes(), &[3, 3, 2, 2]);
        assert_eq!(BlockPartition::even(8, 4).unwrap().common_size(), Some(2));
        assert!(BlockPartition::even(3, 4).is_err());
    }

    #[test]
    fn serde_as_plain_list() {
        let p: BlockPartition = serde_json::from_str("[2,3]").unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[2,3]");
        assert!(serde_json::from_str::<BlockPartition>("[2,0]").is_err());
    }
}
