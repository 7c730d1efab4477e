//! k-fold splits of a manifest, stratified by class or grouped by room.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, ManifestEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Entries of each class dealt round-robin across folds.
    StratifiedByClass,
    /// Every room kept whole inside one fold.
    ByRoom,
}

/// Partitions the manifest into `k` folds. Entries without a `class_id` form
/// their own stratum. Each fold's `fold_tag` is set to its index.
pub fn kfold_split(
    manifest: &DatasetManifest,
    k: usize,
    mode: SplitMode,
    seed: u64,
) -> Result<Vec<DatasetManifest>> {
    if k < 2 {
        return Err(Error::Config("k must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<ManifestEntry>> = vec![Vec::new(); k];
    match mode {
        SplitMode::StratifiedByClass => {
            let mut strata: BTreeMap<Option<usize>, Vec<&ManifestEntry>> = BTreeMap::new();
            for e in &manifest.entries {
                strata.entry(e.class_id).or_default().push(e);
            }
            let mut next = 0;
            for entries in strata.values_mut() {
                entries.shuffle(&mut rng);
                for e in entries.iter() {
                    folds[next].push((*e).clone());
                    next = (next + 1) % k;
                }
            }
        }
        SplitMode::ByRoom => {
            let mut rooms: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
            for e in &manifest.entries {
                let room = e.room_tag.as_deref().ok_or_else(|| {
                    Error::Invalid(format!("{}: room split needs a room_tag", e.clip_path))
                })?;
                rooms.entry(room).or_default().push(e);
            }
            if rooms.len() < k {
                return Err(Error::Invalid(format!(
                    "{} rooms cannot fill {k} folds",
                    rooms.len()
                )));
            }
            let mut rooms: Vec<Vec<&ManifestEntry>> = rooms.into_values().collect();
            rooms.shuffle(&mut rng);
            rooms.sort_by_key(|r| std::cmp::Reverse(r.len()));
            for room in rooms {
                let target = (0..k).min_by_key(|&f| (folds[f].len(), f)).unwrap();
                folds[target].extend(room.into_iter().cloned());
            }
        }
    }
    Ok(folds
        .into_iter()
        .enumerate()
        .map(|(i, entries)| DatasetManifest {
            entries: entries
                .into_iter()
                .map(|mut e| {
                    e.fold_tag = Some(format!("fold{}", i + 1));
                    e
                })
                .collect(),
        })
        .collect())
}
