//! Coreference scorers: MUC, B-cubed, entity-level CEAF and BLANC.
//!
//! Each scorer works from the contingency table between key (gold) and
//! response (predicted) clusters. Scores are produced as numerator and
//! denominator sums so documents aggregate by adding counts.

use serde::{Deserialize, Serialize};

use super::cluster::Clustering;
use super::prf::{harmonic, ratio, Prf};
use crate::error::{Error, Result};

/// `num / den` for precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Fractions {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl Fractions {
    pub fn merge(&mut self, o: Fractions) {
        self.p_num += o.p_num;
        self.p_den += o.p_den;
        self.r_num += o.r_num;
        self.r_den += o.r_den;
    }

    pub fn prf(&self) -> Prf {
        Prf::from_fractions(self.p_num, self.p_den, self.r_num, self.r_den)
    }
}

/// Link counts for BLANC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlancCounts {
    /// coreference links in key, in response, in both
    pub key_coref: u64,
    pub resp_coref: u64,
    pub both_coref: u64,
    /// non-coreference links in key, in response, in both
    pub key_non: u64,
    pub resp_non: u64,
    pub both_non: u64,
}

impl BlancCounts {
    pub fn merge(&mut self, o: BlancCounts) {
        self.key_coref += o.key_coref;
        self.resp_coref += o.resp_coref;
        self.both_coref += o.both_coref;
        self.key_non += o.key_non;
        self.resp_non += o.resp_non;
        self.both_non += o.both_non;
    }

    /// Averages the coreference-link and non-coreference-link scores. When
    /// neither side has any coreference link only the non-coreference part
    /// is used, and vice versa.
    pub fn prf(&self) -> Prf {
        let f = |x: u64| x as f64;
        let (pc, rc) = (ratio(f(self.both_coref), f(self.resp_coref)), ratio(f(self.both_coref), f(self.key_coref)));
        let (pn, rn) = (ratio(f(self.both_non), f(self.resp_non)), ratio(f(self.both_non), f(self.key_non)));
        let (fc, fnn) = (harmonic(pc, rc), harmonic(pn, rn));
        let no_coref = self.key_coref == 0 && self.resp_coref == 0;
        let no_non = self.key_non == 0 && self.resp_non == 0;
        match (no_coref, no_non) {
            (true, true) => Prf::default(),
            (true, false) => Prf { precision: pn, recall: rn, f1: fnn },
            (false, true) => Prf { precision: pc, recall: rc, f1: fc },
            (false, false) => Prf { precision: (pc + pn) / 2.0, recall: (rc + rn) / 2.0, f1: (fc + fnn) / 2.0 },
        }
    }
}

/// Counts of all four scorers for one or more documents.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorefCounts {
    pub muc: Fractions,
    pub b_cubed: Fractions,
    pub ceaf_e: Fractions,
    pub blanc: BlancCounts,
}

impl CorefCounts {
    pub fn merge(&mut self, o: &CorefCounts) {
        self.muc.merge(o.muc);
        self.b_cubed.merge(o.b_cubed);
        self.ceaf_e.merge(o.ceaf_e);
        self.blanc.merge(o.blanc);
    }
}

/// Intersection sizes: rows are key clusters, columns response clusters.
struct Contingency {
    table: Vec<Vec<usize>>,
    key_sizes: Vec<usize>,
    resp_sizes: Vec<usize>,
    mentions: usize,
}

fn contingency(pred: &Clustering, gold: &Clustering) -> Result<Contingency> {
    let (pm, gm) = (pred.mentions(), gold.mentions());
    if pm != gm {
        let extra: Vec<_> = pm.symmetric_difference(&gm).take(5).collect();
        return Err(Error::Universe(format!("clusterings cover different mentions, e.g. {extra:?}")));
    }
    let assign = pred.assignment();
    let mut table = vec![vec![0usize; pred.clusters().len()]; gold.clusters().len()];
    for (k, cluster) in gold.clusters().iter().enumerate() {
        for m in cluster {
            table[k][assign[m.as_str()]] += 1;
        }
    }
    Ok(Contingency {
        table,
        key_sizes: gold.clusters().iter().map(Vec::len).collect(),
        resp_sizes: pred.clusters().iter().map(Vec::len).collect(),
        mentions: gm.len(),
    })
}

fn muc_counts(c: &Contingency) -> Fractions {
    // partitions of a key cluster by the response: nonzero cells of its row
    let r_num: usize = c
        .table
        .iter()
        .zip(&c.key_sizes)
        .map(|(row, &n)| n - row.iter().filter(|&&x| x > 0).count())
        .sum();
    let r_den: usize = c.key_sizes.iter().map(|&n| n - 1).sum();
    let p_num: usize = (0..c.resp_sizes.len())
        .map(|j| c.resp_sizes[j] - c.table.iter().filter(|row| row[j] > 0).count())
        .sum();
    let p_den: usize = c.resp_sizes.iter().map(|&n| n - 1).sum();
    Fractions { p_num: p_num as f64, p_den: p_den as f64, r_num: r_num as f64, r_den: r_den as f64 }
}

fn b_cubed_counts(c: &Contingency) -> Fractions {
    let mut r_num = 0.0;
    let mut p_num = 0.0;
    for (k, row) in c.table.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            let sq = (n * n) as f64;
            r_num += sq / c.key_sizes[k] as f64;
            p_num += sq / c.resp_sizes[j] as f64;
        }
    }
    let n = c.mentions as f64;
    Fractions { p_num, p_den: n, r_num, r_den: n }
}

fn ceaf_e_counts(c: &Contingency) -> Fractions {
    let sim: Vec<Vec<f64>> = c
        .table
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &n)| 2.0 * n as f64 / (c.key_sizes[k] + c.resp_sizes[j]) as f64)
                .collect()
        })
        .collect();
    let best = max_weight_assignment(&sim);
    Fractions {
        p_num: best,
        p_den: c.resp_sizes.len() as f64,
        r_num: best,
        r_den: c.key_sizes.len() as f64,
    }
}

fn pairs(n: usize) -> u64 {
    (n as u64) * (n as u64).saturating_sub(1) / 2
}

fn blanc_counts(c: &Contingency) -> BlancCounts {
    let total = pairs(c.mentions);
    let key_coref: u64 = c.key_sizes.iter().map(|&n| pairs(n)).sum();
    let resp_coref: u64 = c.resp_sizes.iter().map(|&n| pairs(n)).sum();
    let both_coref: u64 = c.table.iter().flatten().map(|&n| pairs(n)).sum();
    BlancCounts {
        key_coref,
        resp_coref,
        both_coref,
        key_non: total - key_coref,
        resp_non: total - resp_coref,
        both_non: total + both_coref - key_coref - resp_coref,
    }
}

pub fn coref_counts(pred: &Clustering, gold: &Clustering) -> Result<CorefCounts> {
    let c = contingency(pred, gold)?;
    Ok(CorefCounts { muc: muc_counts(&c), b_cubed: b_cubed_counts(&c), ceaf_e: ceaf_e_counts(&c), blanc: blanc_counts(&c) })
}

pub fn muc(pred: &Clustering, gold: &Clustering) -> Result<Prf> {
    Ok(muc_counts(&contingency(pred, gold)?).prf())
}

pub fn b_cubed(pred: &Clustering, gold: &Clustering) -> Result<Prf> {
    Ok(b_cubed_counts(&contingency(pred, gold)?).prf())
}

pub fn ceaf_e(pred: &Clustering, gold: &Clustering) -> Result<Prf> {
    Ok(ceaf_e_counts(&contingency(pred, gold)?).prf())
}

pub fn blanc(pred: &Clustering, gold: &Clustering) -> Result<Prf> {
    Ok(blanc_counts(&contingency(pred, gold)?).prf())
}

/// Maximum total weight of a one-to-one assignment between rows and columns
/// of a (possibly rectangular) nonnegative weight matrix. Hungarian method
/// with potentials, O(n^3).
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> f64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return 0.0;
    }
    let max_w = weights.iter().flatten().cloned().fold(0.0, f64::max);
    // cost[i][j] = max_w - w, padded cells cost max_w (weight 0)
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max_w - weights[i][j]
        } else {
            max_w
        }
    };
    // 1-indexed arrays per the classic formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n)
        .filter(|&j| p[j] >= 1 && p[j] <= rows && j <= cols)
        .map(|j| weights[p[j] - 1][j - 1])
        .sum()
}
