//! Single-qubit randomized benchmarking with the Clifford group.
//!
//! A Clifford acts on the Bloch sphere as a signed permutation of the Pauli
//! axes, so the whole simulation runs on 3×3 integer matrices. Gate errors
//! are depolarizing: with probability q a uniformly random Pauli follows the
//! gate. A depolarizing channel with flip probability q has p = 1 − 4q/3,
//! hence eps = (1 − p)/2 = 2q/3 and q = 1.5·eps.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SpamErrors;
use crate::analysis::RbPoint;
use crate::error::{Error, Result};
use crate::rng;

/// Rotation of the Bloch sphere; column j is the image of axis j.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Clifford([[i8; 3]; 3]);

impl Clifford {
    pub const IDENTITY: Clifford = Clifford([[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
    /// Hadamard: X ↔ Z, Y → −Y.
    pub const H: Clifford = Clifford([[0, 0, 1], [0, -1, 0], [1, 0, 0]]);
    /// Phase gate: X → Y, Y → −X.
    pub const S: Clifford = Clifford([[0, -1, 0], [1, 0, 0], [0, 0, 1]]);

    /// `self` after `first`.
    pub fn compose(&self, first: &Clifford) -> Clifford {
        let mut m = [[0i8; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, out) in row.iter_mut().enumerate() {
                *out = (0..3).map(|k| self.0[i][k] * first.0[k][j]).sum();
            }
        }
        Clifford(m)
    }

    /// Orthogonal, so the inverse is the transpose.
    pub fn inverse(&self) -> Clifford {
        let mut m = [[0i8; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, out) in row.iter_mut().enumerate() {
                *out = self.0[j][i];
            }
        }
        Clifford(m)
    }

    pub fn apply(&self, v: [i8; 3]) -> [i8; 3] {
        let mut out = [0i8; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|k| self.0[i][k] * v[k]).sum();
        }
        out
    }
}

/// The 24 single-qubit Cliffords in a fixed order, generated from H and S.
pub fn clifford_group() -> Vec<Clifford> {
    let mut group = vec![Clifford::IDENTITY];
    let mut i = 0;
    while i < group.len() {
        for g in [Clifford::H, Clifford::S] {
            let c = g.compose(&group[i]);
            if !group.contains(&c) {
                group.push(c);
            }
        }
        i += 1;
    }
    group
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbParams {
    pub lengths: Vec<u64>,
    pub n_seqs: u64,
    pub shots_per_seq: u64,
    pub eps_per_gate: f64,
    pub spam: SpamErrors,
}

impl Default for RbParams {
    fn default() -> Self {
        RbParams {
            lengths: vec![2, 50, 200, 800],
            n_seqs: 200,
            shots_per_seq: 100,
            eps_per_gate: 7.4e-5,
            spam: SpamErrors::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbResult {
    pub points: Vec<RbPoint>,
    /// Surviving shots per sequence, grouped by length.
    pub per_sequence: Vec<Vec<u64>>,
}

/// Sequence `s` at length index `j` draws from seed `seed + j·n_seqs + s`.
pub fn run_randomized_benchmarking(params: &RbParams, seed: u64) -> Result<RbResult> {
    let mut distinct = params.lengths.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidParameter("RB needs at least two distinct sequence lengths".into()));
    }
    if params.n_seqs == 0 || params.shots_per_seq == 0 {
        return Err(Error::InvalidParameter("n_seqs and shots_per_seq must be >= 1".into()));
    }
    if !(0.0..=2.0 / 3.0).contains(&params.eps_per_gate) {
        return Err(Error::InvalidParameter("eps_per_gate must lie in [0, 2/3]".into()));
    }
    params.spam.validate()?;
    let group = clifford_group();
    let q = 1.5 * params.eps_per_gate;

    let mut points = Vec::with_capacity(params.lengths.len());
    let mut per_sequence = Vec::with_capacity(params.lengths.len());
    for (j, &m) in params.lengths.iter().enumerate() {
        let base = seed.wrapping_add(j as u64 * params.n_seqs);
        let survived: Vec<u64> = (0..params.n_seqs)
            .into_par_iter()
            .map(|s| {
                let mut r = rng::shot_rng(base, s);
                let mut gates: Vec<Clifford> = (0..m).map(|_| group[r.random_range(0..group.len())]).collect();
                let net = gates.iter().fold(Clifford::IDENTITY, |acc, g| g.compose(&acc));
                gates.push(net.inverse());
                (0..params.shots_per_seq)
                    .filter(|_| {
                        let mut v = [0i8, 0, 1];
                        for g in &gates {
                            v = g.apply(v);
                            if q > 0.0 && r.random::<f64>() < q {
                                // Pauli about axis a flips the other two components.
                                let a = r.random_range(0..3);
                                for (k, x) in v.iter_mut().enumerate() {
                                    if k != a {
                                        *x = -*x;
                                    }
                                }
                            }
                        }
                        let p_zero = if v[2] > 0 { 1.0 - params.spam.zero } else { params.spam.one };
                        r.random::<f64>() < p_zero
                    })
                    .count() as u64
            })
            .collect();
        let total: u64 = survived.iter().sum();
        let shots = params.n_seqs * params.shots_per_seq;
        points.push(RbPoint { length: m, survival: total as f64 / shots as f64, shots });
        per_sequence.push(survived);
    }
    Ok(RbResult { points, per_sequence })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_has_24_rotations() {
        let g = clifford_group();
        assert_eq!(g.len(), 24);
        for c in &g {
            assert_eq!(c.compose(&c.inverse()), Clifford::IDENTITY);
            // Closed under composition.
            for d in &g {
                assert!(g.contains(&c.compose(d)));
            }
        }
    }

    #[test]
    fn noiseless_rb_survival_is_one_minus_spam() {
        let spam = SpamErrors { zero: 0.0, one: 0.0 };
        let p = RbParams { lengths: vec![1, 10, 40], n_seqs: 20, shots_per_seq: 10, eps_per_gate: 0.0, spam };
        let r = run_randomized_benchmarking(&p, 3).unwrap();
        assert!(r.points.iter().all(|pt| pt.survival == 1.0));
    }

    #[test]
    fn heavy_noise_decays_toward_half() {
        let p = RbParams {
            lengths: vec![1, 400],
            n_seqs: 50,
            shots_per_seq: 40,
            eps_per_gate: 0.02,
            spam: SpamErrors::PERFECT,
        };
        let r = run_randomized_benchmarking(&p, 5).unwrap();
        assert!(r.points[0].survival > 0.9);
        assert!((r.points[1].survival - 0.5).abs() < 0.05);
    }

    #[test]
    fn rejects_single_length() {
        let p = RbParams { lengths: vec![5, 5], ..Default::default() };
        assert!(run_randomized_benchmarking(&p, 0).is_err());
    }
}
