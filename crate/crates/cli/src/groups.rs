//! Hierarchical group labels and the block partitions they induce.
//!
//! Labels are dotted paths such as `4010.1010.05`; level `ℓ` groups assets
//! by their first `ℓ` components and level `0` puts every asset in one
//! group. Assets are sorted once by their full label (component by
//! component, then by id), so the blocks at every level are contiguous and
//! finer levels refine coarser ones.

use std::collections::HashMap;
use std::io::Read;

use blockcanon::BlockPartition;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Map from asset id to hierarchical label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupMap {
    labels: HashMap<String, String>,
}

#[derive(Deserialize)]
struct Row {
    asset_id: String,
    label: String,
}

impl GroupMap {
    /// Parse CSV with header `asset_id,label`.
    pub fn read<R: Read>(reader: R) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut labels = HashMap::new();
        for row in rdr.deserialize() {
            let Row { asset_id, label } = row?;
            if label.is_empty() {
                return Err(CliError::input(format!("asset {asset_id:?} has an empty label")));
            }
            if labels.insert(asset_id.clone(), label).is_some() {
                return Err(CliError::input(format!("asset {asset_id:?} is mapped twice")));
            }
        }
        Ok(Self { labels })
    }

    pub fn from_pairs<I, A, L>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, L)>,
        A: Into<String>,
        L: Into<String>,
    {
        Self {
            labels: pairs.into_iter().map(|(a, l)| (a.into(), l.into())).collect(),
        }
    }

    pub fn label(&self, asset_id: &str) -> Option<&str> {
        self.labels.get(asset_id).map(String::as_str)
    }

    /// CSV with header `asset_id,label`, rows in the given asset order.
    pub fn to_csv(&self, asset_ids: &[String]) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["asset_id", "label"])?;
        for id in asset_ids {
            let label = self
                .label(id)
                .ok_or_else(|| CliError::input(format!("asset {id:?} has no label")))?;
            w.write_record([id.as_str(), label])?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Assets of a panel sorted by label.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    order: Vec<usize>,
    ids: Vec<String>,
    components: Vec<Vec<String>>,
}

impl Grouping {
    /// Fails if an asset has no label.
    pub fn new(asset_ids: &[String], map: &GroupMap) -> CliResult<Self> {
        let mut entries = Vec::with_capacity(asset_ids.len());
        for (i, id) in asset_ids.iter().enumerate() {
            let label = map
                .label(id)
                .ok_or_else(|| CliError::input(format!("asset {id:?} is not in the group map")))?;
            let comps: Vec<String> = label.split('.').map(str::to_owned).collect();
            entries.push((comps, id.clone(), i));
        }
        entries.sort();
        let mut g = Self {
            order: Vec::with_capacity(entries.len()),
            ids: Vec::with_capacity(entries.len()),
            components: Vec::with_capacity(entries.len()),
        };
        for (comps, id, i) in entries {
            g.order.push(i);
            g.ids.push(id);
            g.components.push(comps);
        }
        Ok(g)
    }

    /// `order[j]` is the panel column of the `j`-th sorted asset.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn sorted_ids(&self) -> &[String] {
        &self.ids
    }

    /// Deepest level available for every asset.
    pub fn max_level(&self) -> usize {
        self.components.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// The partition at `level` and the label of each block.
    pub fn partition(&self, level: usize) -> CliResult<(BlockPartition, Vec<String>)> {
        if level > self.max_level() {
            return Err(CliError::input(format!(
                "level {level} exceeds the depth {} of the group labels",
                self.max_level()
            )));
        }
        let mut sizes: Vec<usize> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        for comps in &self.components {
            let label = comps[..level].join(".");
            if labels.last() == Some(&label) {
                *sizes.last_mut().expect("sizes and labels grow together") += 1;
            } else {
                labels.push(label);
                sizes.push(1);
            }
        }
        Ok((BlockPartition::new(sizes)?, labels))
    }
}
