//! Painting collection, curated story groups and the popularity list.
//!
//! A [`Collection`] is loaded from a single JSON manifest and is immutable
//! afterwards. Paintings are stored sorted by id, so a painting's index is
//! also its rank in the ascending-id tie-break used by every ranking in the
//! crate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("manifest contains no paintings")]
    Empty,
    #[error("duplicate painting id {0:?}")]
    DuplicateId(String),
    #[error("duplicate story group id {0}")]
    DuplicateGroup(u32),
    #[error("story group ids must be positive, found {0}")]
    InvalidGroupId(u32),
    #[error("story group {group_id} references unknown painting {painting_id:?}")]
    DanglingMember { group_id: u32, painting_id: String },
    #[error("popularity entry references unknown painting {0:?}")]
    UnknownPopularityId(String),
    #[error("popularity of {id:?} is {value}, expected a value in [0, 1]")]
    PopularityOutOfRange { id: String, value: f64 },
    #[error("gamma entry references unknown painting {0:?}")]
    UnknownGammaId(String),
    #[error("gamma of {id:?} is {value}, expected a finite non-negative value")]
    InvalidGamma { id: String, value: f64 },
    #[error("unknown painting id {0:?}")]
    UnknownPainting(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Painting {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub artist: String,
    #[serde(default)]
    pub date: String,
    #[serde(default)]
    pub medium: String,
    #[serde(default)]
    pub dimensions: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub image_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryGroup {
    pub group_id: u32,
    #[serde(default)]
    pub name: String,
    pub member_ids: Vec<String>,
}

/// On-disk manifest document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub paintings: Vec<Painting>,
    #[serde(default)]
    pub groups: Vec<StoryGroup>,
    #[serde(default)]
    pub popularity: BTreeMap<String, f64>,
    #[serde(default)]
    pub gamma: BTreeMap<String, f64>,
}

/// Validated, indexed painting collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    paintings: Vec<Painting>,
    index: HashMap<String, usize>,
    groups: Vec<StoryGroup>,
    group_members: Vec<Vec<usize>>,
    memberships: Vec<Vec<usize>>,
    popularity: Vec<f64>,
    gamma: Vec<f64>,
}

impl Collection {
    pub fn from_manifest(manifest: Manifest) -> Result<Self, DatasetError> {
        let Manifest {
            mut paintings,
            mut groups,
            popularity,
            gamma,
        } = manifest;
        if paintings.is_empty() {
            return Err(DatasetError::Empty);
        }
        paintings.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in paintings.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(DatasetError::DuplicateId(pair[0].id.clone()));
            }
        }
        let index: HashMap<String, usize> = paintings
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();

        groups.sort_by_key(|g| g.group_id);
        for pair in groups.windows(2) {
            if pair[0].group_id == pair[1].group_id {
                return Err(DatasetError::DuplicateGroup(pair[0].group_id));
            }
        }
        let mut group_members = Vec::with_capacity(groups.len());
        let mut memberships = vec![Vec::new(); paintings.len()];
        for (pos, group) in groups.iter_mut().enumerate() {
            if group.group_id == 0 {
                return Err(DatasetError::InvalidGroupId(0));
            }
            let ids: BTreeSet<String> = group.member_ids.drain(..).collect();
            let mut members = Vec::with_capacity(ids.len());
            for id in &ids {
                let &i = index.get(id).ok_or_else(|| DatasetError::DanglingMember {
                    group_id: group.group_id,
                    painting_id: id.clone(),
                })?;
                members.push(i);
                memberships[i].push(pos);
            }
            members.sort_unstable();
            group.member_ids = ids.into_iter().collect();
            group_members.push(members);
        }

        let mut pop = vec![0.0; paintings.len()];
        for (id, value) in popularity {
            let &i = index
                .get(&id)
                .ok_or_else(|| DatasetError::UnknownPopularityId(id.clone()))?;
            if !(0.0..=1.0).contains(&value) {
                return Err(DatasetError::PopularityOutOfRange { id, value });
            }
            pop[i] = value;
        }

        let mut gam = vec![1.0; paintings.len()];
        for (id, value) in gamma {
            let &i = index
                .get(&id)
                .ok_or_else(|| DatasetError::UnknownGammaId(id.clone()))?;
            if !value.is_finite() || value < 0.0 {
                return Err(DatasetError::InvalidGamma { id, value });
            }
            gam[i] = value;
        }

        Ok(Self {
            paintings,
            index,
            groups,
            group_members,
            memberships,
            popularity: pop,
            gamma: gam,
        })
    }

    /// Inverse of [`Collection::from_manifest`]; defaults (popularity 0,
    /// gamma 1) are left implicit.
    pub fn to_manifest(&self) -> Manifest {
        let popularity = self
            .paintings
            .iter()
            .zip(&self.popularity)
            .filter(|(_, &v)| v != 0.0)
            .map(|(p, &v)| (p.id.clone(), v))
            .collect();
        let gamma = self
            .paintings
            .iter()
            .zip(&self.gamma)
            .filter(|(_, &v)| v != 1.0)
            .map(|(p, &v)| (p.id.clone(), v))
            .collect();
        Manifest {
            paintings: self.paintings.clone(),
            groups: self.groups.clone(),
            popularity,
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.paintings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paintings.is_empty()
    }

    pub fn paintings(&self) -> &[Painting] {
        &self.paintings
    }

    pub fn painting(&self, index: usize) -> &Painting {
        &self.paintings[index]
    }

    pub fn id(&self, index: usize) -> &str {
        &self.paintings[index].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn groups(&self) -> &[StoryGroup] {
        &self.groups
    }

    /// Member indices of each story group, ascending, in group-id order.
    pub fn group_members(&self) -> &[Vec<usize>] {
        &self.group_members
    }

    /// Positions (into [`Collection::groups`]) of the groups containing a painting.
    pub fn memberships_of(&self, index: usize) -> &[usize] {
        &self.memberships[index]
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Group ids of every story group containing `painting_id`.
    pub fn group_memberships(&self, painting_id: &str) -> Result<BTreeSet<u32>, DatasetError> {
        let i = self
            .index_of(painting_id)
            .ok_or_else(|| DatasetError::UnknownPainting(painting_id.to_owned()))?;
        Ok(self.memberships[i]
            .iter()
            .map(|&g| self.groups[g].group_id)
            .collect())
    }

    /// Group ids for a painting index.
    pub fn group_ids_of(&self, index: usize) -> Vec<u32> {
        self.memberships[index]
            .iter()
            .map(|&g| self.groups[g].group_id)
            .collect()
    }

    /// True when no painting belongs to more than one story group.
    pub fn groups_are_disjoint(&self) -> bool {
        self.memberships.iter().all(|m| m.len() <= 1)
    }
}

pub fn parse_manifest(text: &str) -> Result<Collection, DatasetError> {
    let manifest: Manifest = serde_json::from_str(text)?;
    Collection::from_manifest(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Collection, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_manifest(&text)
}

pub fn save_manifest(collection: &Collection, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&collection.to_manifest())?;
    fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}
