use serde::{Deserialize, Serialize};

use crate::record::{Flag, SweepRecord};

/// Overlaps below this leave a mode unlabeled.
pub const AMBIGUITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    /// `|⟨sig_i(prev), sig_j(next)⟩|` for each consecutive pair of records.
    pub overlaps: Vec<Vec<Vec<f64>>>,
    /// `(record, mode)` pairs left unlabeled.
    pub ambiguous: Vec<(usize, usize)>,
    pub n_branches: usize,
}

fn overlap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let (na, nb) = (a.iter().map(|x| x * x).sum::<f64>(), b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb).sqrt()).abs()
}

pub fn overlap_matrix(prev: &[Vec<f64>], next: &[Vec<f64>]) -> Vec<Vec<f64>> {
    prev.iter().map(|a| next.iter().map(|b| overlap(a, b)).collect()).collect()
}

/// Labels modes along an ordered sequence of records (fixed `ε` across `h`,
/// or fixed `h` across `ε`) by maximal overlap with the previous record.
///
/// A mode whose best overlap is below [`AMBIGUITY_THRESHOLD`], or whose best
/// predecessor is claimed by a stronger overlap, gets `None`; a mode matched
/// to an unlabeled predecessor starts a fresh branch. Records whose λ₁ mode is
/// unlabeled are flagged. Labels and flags from an earlier run are replaced.
pub fn track_branches(records: &mut [SweepRecord]) -> BranchReport {
    let mut report = BranchReport { overlaps: Vec::new(), ambiguous: Vec::new(), n_branches: 0 };
    for r in records.iter_mut() {
        r.branches.clear();
        r.flags.retain(|f| *f != Flag::BranchAmbiguous);
    }
    let mut next_id = 0usize;
    let mut prev: Option<usize> = None;
    for i in 0..records.len() {
        if records[i].is_failed() || records[i].signatures.is_empty() {
            continue;
        }
        let m = records[i].signatures.len();
        let mut labels: Vec<Option<usize>> = vec![None; m];
        match prev {
            None => {
                for l in labels.iter_mut() {
                    *l = Some(next_id);
                    next_id += 1;
                }
            }
            Some(p) => {
                let o = overlap_matrix(&records[p].signatures, &records[i].signatures);
                let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
                for (a, row) in o.iter().enumerate() {
                    for (b, &v) in row.iter().enumerate() {
                        candidates.push((v, a, b));
                    }
                }
                candidates.sort_by(|x, y| y.0.total_cmp(&x.0));
                let mut used_prev = vec![false; o.len()];
                let mut done = vec![false; m];
                for (v, a, b) in candidates {
                    if v < AMBIGUITY_THRESHOLD {
                        break;
                    }
                    if used_prev[a] || done[b] {
                        continue;
                    }
                    used_prev[a] = true;
                    done[b] = true;
                    labels[b] = records[p].branches.get(a).copied().flatten();
                }
                for (b, l) in labels.iter_mut().enumerate() {
                    if !done[b] {
                        report.ambiguous.push((i, b));
                    } else if l.is_none() {
                        *l = Some(next_id);
                        next_id += 1;
                    }
                }
                report.overlaps.push(o);
            }
        }
        records[i].branches = labels;
        if records[i].branches.get(1).is_none_or(Option::is_none) {
            records[i].flag(Flag::BranchAmbiguous);
        }
        prev = Some(i);
    }
    report.n_branches = next_id;
    report
}
