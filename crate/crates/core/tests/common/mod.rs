//! Synthetic collections, profiles and on-disk fixtures shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mosaic_core::dataset::{save_manifest, Collection, Manifest, Painting, StoryGroup};
use mosaic_core::engines::{Backbone, Recommender};
use mosaic_core::simharness::EvalProfile;
use mosaic_core::similarity::{cosine_similarity_matrix, save_similarity_matrix, EmbeddingTable, SimilarityMatrix};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn painting_id(i: usize) -> String {
    format!("P{i:05}")
}

/// `m` paintings split round-robin (after a shuffle) into `k` disjoint
/// groups, with two independent Gaussian embedding tables.
pub struct Fixture {
    pub manifest: Manifest,
    pub emb_a: EmbeddingTable,
    pub emb_b: EmbeddingTable,
}

pub fn gaussian_table(ids: &[String], dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let mut table = EmbeddingTable::new(dim);
    let mut v = vec![0.0; dim];
    for id in ids {
        for x in v.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        table.push(id.clone(), &v).unwrap();
    }
    table
}

pub fn fixture(m: usize, k: usize, dim: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..m).map(painting_id).collect();
    let mut shuffled = ids.clone();
    shuffled.shuffle(&mut rng);
    let mut groups: Vec<StoryGroup> = (0..k)
        .map(|g| StoryGroup {
            group_id: g as u32 + 1,
            name: format!("Story {}", g + 1),
            member_ids: Vec::new(),
        })
        .collect();
    for (n, id) in shuffled.iter().enumerate() {
        groups[n % k].member_ids.push(id.clone());
    }
    let paintings = ids
        .iter()
        .map(|id| Painting {
            id: id.clone(),
            title: format!("Untitled {id}"),
            artist: "Anonymous".into(),
            image_ref: format!("{id}.jpg"),
            ..Painting::default()
        })
        .collect();
    let emb_a = gaussian_table(&ids, dim, &mut rng);
    let emb_b = gaussian_table(&ids, dim, &mut rng);
    Fixture {
        manifest: Manifest {
            paintings,
            groups,
            popularity: BTreeMap::new(),
            gamma: BTreeMap::new(),
        },
        emb_a,
        emb_b,
    }
}

impl Fixture {
    pub fn collection(&self) -> Arc<Collection> {
        Arc::new(Collection::from_manifest(self.manifest.clone()).unwrap())
    }

    pub fn matrices(&self) -> (SimilarityMatrix, SimilarityMatrix) {
        (
            cosine_similarity_matrix(&self.emb_a).unwrap(),
            cosine_similarity_matrix(&self.emb_b).unwrap(),
        )
    }

    pub fn recommender(&self) -> Recommender {
        let (a, b) = self.matrices();
        let mut rec = Recommender::new(self.collection());
        rec.register(Backbone::A, &a).unwrap();
        rec.register(Backbone::B, &b).unwrap();
        rec
    }

    /// Writes manifest and both matrices; returns their paths.
    pub fn write(&self, dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
        let manifest = dir.join("manifest.json");
        let a = dir.join("a.sim");
        let b = dir.join("b.sim");
        save_manifest(&self.collection(), &manifest).unwrap();
        let (ma, mb) = self.matrices();
        save_similarity_matrix(&ma, &a).unwrap();
        save_similarity_matrix(&mb, &b).unwrap();
        (manifest, a, b)
    }
}

/// Nine random ratings per profile; tolerances left for the harness to
/// simulate unless `with_tolerances`.
pub fn random_profiles(collection: &Collection, n: usize, seed: u64, with_tolerances: bool) -> Vec<EvalProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<&str> = (0..collection.len()).map(|i| collection.id(i)).collect();
    (0..n)
        .map(|_| {
            let ratings = ids
                .choose_multiple(&mut rng, 9.min(ids.len()))
                .map(|id| (id.to_string(), rng.random_range(1..=5u8)))
                .collect();
            EvalProfile {
                ratings,
                beta: with_tolerances.then(|| rng.random_range(0.0..=1.0)),
                xi: with_tolerances.then(|| rng.random_range(0.0..=1.0)),
            }
        })
        .collect()
}
pub mod http;
