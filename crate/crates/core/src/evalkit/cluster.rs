use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of a document's mention ids into disjoint clusters.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Clustering {
    clusters: Vec<Vec<String>>,
}

impl Clustering {
    /// Validate disjointness; empty clusters are dropped.
    pub fn new(clusters: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &clusters {
            for m in c {
                if !seen.insert(m.as_str()) {
                    return Err(Error::InvalidArgument(format!("mention {m} appears in two clusters")));
                }
            }
        }
        Ok(Self { clusters: clusters.into_iter().filter(|c| !c.is_empty()).collect() })
    }

    pub fn clusters(&self) -> &[Vec<String>] {
        &self.clusters
    }

    pub fn mentions(&self) -> BTreeSet<&str> {
        self.clusters.iter().flatten().map(String::as_str).collect()
    }

    pub fn num_mentions(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// mention -> cluster index
    pub fn assignment(&self) -> BTreeMap<&str, usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |m| (m.as_str(), i)))
            .collect()
    }

    /// Clusters as sorted id lists, sorted; equal partitions compare equal.
    pub fn canonical(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .clusters
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.sort();
                c
            })
            .collect();
        out.sort();
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of an undirected graph over `0..n`, each sorted,
/// ordered by smallest member.
pub fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Clusters from positive pairwise coreference decisions: connected
/// components, unlinked mentions as singletons. Edge direction is ignored.
pub fn cluster_from_pairs(mentions: &[String], positives: &[(String, String)]) -> Result<Clustering> {
    let index: BTreeMap<&str, usize> = mentions.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    if index.len() != mentions.len() {
        return Err(Error::InvalidArgument("duplicate mention id".into()));
    }
    let edges = positives
        .iter()
        .map(|(a, b)| match (index.get(a.as_str()), index.get(b.as_str())) {
            (Some(&x), Some(&y)) => Ok((x, y)),
            _ => Err(Error::Universe(format!("decision ({a}, {b}) outside the mention set"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let clusters = components(mentions.len(), &edges)
        .into_iter()
        .map(|c| c.into_iter().map(|i| mentions[i].clone()).collect())
        .collect();
    Clustering::new(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    fn s(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn chain_is_one_cluster() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|x| x.to_string()).collect();
        let c = cluster_from_pairs(&names, &[s("a", "b"), s("b", "c")]).unwrap();
        assert_eq!(c.canonical(), vec![names.clone()]);
    }

    #[test]
    fn no_positives_gives_singletons() {
        let c = cluster_from_pairs(&ids(3), &[]).unwrap();
        assert_eq!(c.clusters().len(), 3);
    }

    #[test]
    fn overlapping_clusters_rejected() {
        assert!(Clustering::new(vec![vec!["a".into()], vec!["a".into(), "b".into()]]).is_err());
    }

    #[test]
    fn foreign_mention_rejected() {
        assert!(cluster_from_pairs(&ids(2), &[s("m0", "zz")]).is_err());
    }

    /// Reference: repeatedly merge clusters sharing a link until stable.
    fn closure_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<String>> {
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for &(a, b) in edges {
                let (la, lb) = (label[a], label[b]);
                if la != lb {
                    let (keep, drop) = (la.min(lb), la.max(lb));
                    for l in label.iter_mut() {
                        if *l == drop {
                            *l = keep;
                        }
                    }
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (i, l) in label.iter().enumerate() {
            groups.entry(*l).or_default().push(format!("m{i}"));
        }
        let mut out: Vec<Vec<String>> = groups.into_values().collect();
        for g in &mut out {
            g.sort();
        }
        out.sort();
        out
    }

    proptest! {
        #[test]
        fn matches_closure_oracle_and_ignores_order(
            n in 1usize..9,
            raw in proptest::collection::vec((0usize..9, 0usize..9), 0..14),
            flip in any::<bool>(),
        ) {
            let edges: Vec<(usize, usize)> = raw.into_iter().filter(|(a, b)| *a < n && *b < n).collect();
            let names = ids(n);
            let pairs: Vec<_> = edges.iter().map(|&(a, b)| (names[a].clone(), names[b].clone())).collect();
            let got = cluster_from_pairs(&names, &pairs).unwrap();
            prop_assert_eq!(got.canonical(), closure_oracle(n, &edges));
            let mut rev: Vec<_> = pairs.iter().rev().cloned().collect();
            if flip {
                rev = rev.into_iter().map(|(a, b)| (b, a)).collect();
            }
            prop_assert_eq!(cluster_from_pairs(&names, &rev).unwrap().canonical(), got.canonical());
        }
    }
}
