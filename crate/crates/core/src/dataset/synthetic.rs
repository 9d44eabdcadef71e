//! A small knowledge graph with planted structure, used for demos and for
//! checking that training recovers rules a model can actually learn.
//!
//! 25 agents sit on a 5x5 grid of cells `(p, q)` and 25 items on a 5x5 grid
//! `(u, w)`. Relations follow the coordinates:
//!
//! - `likes(a, i)` when `u(i) = p(a)`
//! - `owns(a, i)` when `w(i) = q(a)`
//! - `near(i, j)` when `u(j) = u(i) + 1 mod 5` and `w(j) = w(i)`
//! - `knows(a, b)` when `p(b) = q(a)`
//! - `rival(a, b)` when `p(b) = p(a) + 2 mod 5` and `q(b) = q(a)`
//! - `made_by(i, a)` for a seeded bijection between items and agents

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kg::{graph_from_labels, write_file, KnowledgeGraph};

pub const SIDE: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub triples: Vec<(String, String, String)>,
    pub types: BTreeMap<String, String>,
    pub seeds: Vec<String>,
}

fn agent(i: usize) -> String {
    format!("agent_{i:02}")
}

fn item(i: usize) -> String {
    format!("item_{i:02}")
}

pub fn generate(seed: u64) -> SyntheticData {
    let n = SIDE * SIDE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent_cell: Vec<usize> = (0..n).collect();
    agent_cell.shuffle(&mut rng);
    let mut item_cell: Vec<usize> = (0..n).collect();
    item_cell.shuffle(&mut rng);
    let mut maker: Vec<usize> = (0..n).collect();
    maker.shuffle(&mut rng);

    let a_pq = |a: usize| (agent_cell[a] / SIDE, agent_cell[a] % SIDE);
    let i_uw = |i: usize| (item_cell[i] / SIDE, item_cell[i] % SIDE);

    let mut triples = Vec::new();
    let mut push = |h: String, r: &str, t: String| triples.push((h, r.to_string(), t));
    for a in 0..n {
        let (p, q) = a_pq(a);
        for i in 0..n {
            let (u, w) = i_uw(i);
            if u == p {
                push(agent(a), "likes", item(i));
            }
            if w == q {
                push(agent(a), "owns", item(i));
            }
        }
        for b in 0..n {
            let (pb, qb) = a_pq(b);
            if pb == q {
                push(agent(a), "knows", agent(b));
            }
            if pb == (p + 2) % SIDE && qb == q {
                push(agent(a), "rival", agent(b));
            }
        }
    }
    for i in 0..n {
        let (u, w) = i_uw(i);
        for j in 0..n {
            if i_uw(j) == ((u + 1) % SIDE, w) {
                push(item(i), "near", item(j));
            }
        }
        push(item(i), "made_by", agent(maker[i]));
    }

    let mut types = BTreeMap::new();
    for i in 0..n {
        types.insert(agent(i), "Agent".to_string());
        types.insert(item(i), "Item".to_string());
    }
    // Agents on the diagonal p = q: their likes, owns and knows edges
    // reach every item and agent, so expansion keeps the whole graph.
    let mut seeds: Vec<String> = (0..n).filter(|&a| a_pq(a).0 == a_pq(a).1).map(agent).collect();
    seeds.sort();
    SyntheticData { triples, types, seeds }
}

impl SyntheticData {
    pub fn graph(&self) -> Result<KnowledgeGraph> {
        graph_from_labels(&self.triples, &self.types)
    }

    pub fn triples_tsv(&self) -> String {
        self.triples.iter().map(|(h, r, t)| format!("{h}\t{r}\t{t}\n")).collect()
    }

    pub fn types_tsv(&self) -> String {
        self.types.iter().map(|(e, t)| format!("{e}\t{t}\n")).collect()
    }

    pub fn seeds_txt(&self) -> String {
        self.seeds.iter().map(|s| format!("{s}\n")).collect()
    }

    /// Writes `raw_triples.tsv`, `types.tsv` and `seeds.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
        write_file(&dir.join("raw_triples.tsv"), &self.triples_tsv())?;
        write_file(&dir.join("types.tsv"), &self.types_tsv())?;
        write_file(&dir.join("seeds.txt"), &self.seeds_txt())
    }
}
