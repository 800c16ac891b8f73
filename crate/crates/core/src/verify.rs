//! Characters, error metrics and structural checks of a decomposition.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{block_offsets, BlockSpec, DecompositionResult};
use crate::groups::{FiniteRep, GroupTable};
use crate::linalg::{CMatrix, C64};
use crate::states::rng_from_seed;

pub const DEFAULT_QUADRATURE_POINTS: usize = 1000;
pub const DEFAULT_QUADRATURE_SEED: u64 = 0x5155_4144;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("exact characters have {exact} blocks, computed have {computed}")]
    BlockCountMismatch { exact: usize, computed: usize },

    #[error("character of block {block} has {got} values, expected {expected}")]
    ElementCountMismatch { block: usize, got: usize, expected: usize },
}

/// One character sequence per block, indexed by group element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterSet {
    pub characters: Vec<Vec<C64>>,
}

impl CharacterSet {
    pub fn new(characters: Vec<Vec<C64>>) -> Self {
        CharacterSet { characters }
    }

    pub fn blocks(&self) -> usize {
        self.characters.len()
    }
}

/// `χ̂^α(h) = Tr(L^α† D(h) L^α) / c_α`.
pub fn extract_characters(rep: &FiniteRep, result: &DecompositionResult) -> CharacterSet {
    let characters = (0..result.blocks.len())
        .map(|alpha| {
            let basis = result.block_basis(alpha);
            let adj = basis.adjoint();
            let c = result.blocks[alpha].multiplicity as f64;
            rep.matrices.iter().map(|d| (&(&adj * d) * &basis).trace() / c).collect()
        })
        .collect();
    CharacterSet { characters }
}

/// Minimum-cost assignment of rows to columns of a square cost matrix.
/// Returns `assignment[row] = column`.
#[allow(clippy::needless_range_loop)]
fn best_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return vec![];
    }
    if n <= 20 {
        // dp over subsets of used columns
        let full = 1usize << n;
        let mut dp = vec![f64::INFINITY; full];
        let mut from = vec![usize::MAX; full];
        dp[0] = 0.0;
        for mask in 0..full {
            if !dp[mask].is_finite() {
                continue;
            }
            let row = mask.count_ones() as usize;
            if row == n {
                continue;
            }
            for col in 0..n {
                if mask & (1 << col) == 0 {
                    let next = mask | (1 << col);
                    let v = dp[mask] + cost[row][col];
                    if v < dp[next] {
                        dp[next] = v;
                        from[next] = col;
                    }
                }
            }
        }
        let mut out = vec![0; n];
        let mut mask = full - 1;
        for row in (0..n).rev() {
            let col = from[mask];
            out[row] = col;
            mask &= !(1 << col);
        }
        out
    } else {
        // greedy fallback for very many blocks
        let mut used = vec![false; n];
        cost.iter()
            .map(|row| {
                let col = (0..n).filter(|&c| !used[c]).min_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                used[col] = true;
                col
            })
            .collect()
    }
}

/// `(1/|H|) max_α Σ_h |χ_exact^α(h) − χ̂^α(h)|`, with computed blocks
/// matched to exact ones by minimal total error.
pub fn char_error_finite(exact: &CharacterSet, computed: &CharacterSet) -> Result<f64, VerifyError> {
    if exact.blocks() != computed.blocks() {
        return Err(VerifyError::BlockCountMismatch { exact: exact.blocks(), computed: computed.blocks() });
    }
    let order = exact.characters.first().map_or(0, Vec::len);
    for (block, chi) in exact.characters.iter().chain(&computed.characters).enumerate() {
        if chi.len() != order {
            return Err(VerifyError::ElementCountMismatch {
                block: block % exact.blocks().max(1),
                got: chi.len(),
                expected: order,
            });
        }
    }
    if order == 0 {
        return Ok(0.0);
    }
    let cost: Vec<Vec<f64>> = exact
        .characters
        .iter()
        .map(|e| computed.characters.iter().map(|c| e.iter().zip(c).map(|(a, b)| (a - b).norm()).sum()).collect())
        .collect();
    let assignment = best_assignment(&cost);
    let worst = assignment.iter().enumerate().map(|(r, &c)| cost[r][c]).fold(0.0, f64::max);
    Ok(worst / order as f64)
}

/// Uniform samples of `[−π, π]³` from a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrature {
    pub points: usize,
    pub seed: u64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { points: DEFAULT_QUADRATURE_POINTS, seed: DEFAULT_QUADRATURE_SEED }
    }
}

impl Quadrature {
    pub fn samples(&self) -> Vec<[f64; 3]> {
        use std::f64::consts::PI;
        let mut rng = rng_from_seed(self.seed);
        (0..self.points)
            .map(|_| [rng.random_range(-PI..=PI), rng.random_range(-PI..=PI), rng.random_range(-PI..=PI)])
            .collect()
    }
}

/// `max_α (1/N_H) Σ_i |χ_exact^α(s_i) − χ̂^α(s_i)|`. Both closures return
/// the characters of all blocks at one sample point.
pub fn char_error_lie<E>(
    exact: impl Fn([f64; 3]) -> Vec<C64>,
    mut computed: impl FnMut([f64; 3]) -> Result<Vec<C64>, E>,
    quadrature: &Quadrature,
) -> Result<f64, E> {
    let mut sums: Vec<f64> = Vec::new();
    let samples = quadrature.samples();
    for &s in &samples {
        let e = exact(s);
        let c = computed(s)?;
        if sums.is_empty() {
            sums = vec![0.0; e.len().max(c.len())];
        }
        for (k, sum) in sums.iter_mut().enumerate() {
            let a = e.get(k).copied().unwrap_or_default();
            let b = c.get(k).copied().unwrap_or_default();
            *sum += (a - b).norm();
        }
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    Ok(sums.into_iter().fold(0.0, f64::max) / samples.len() as f64)
}

/// `⟨χ, ψ⟩ = (1/|G|) Σ_g χ(g) ψ(g)*`.
pub fn character_inner(chi: &[C64], psi: &[C64]) -> C64 {
    let sum: C64 = chi.iter().zip(psi).map(|(a, b)| a * b.conj()).sum();
    sum / chi.len() as f64
}

/// `(1/|G|) Σ_g |χ(g)|²`; equal to 1 exactly for irreducible characters.
pub fn irreducibility_score(chi: &[C64], group_order: usize) -> f64 {
    chi.iter().map(|z| z.norm_sqr()).sum::<f64>() / group_order as f64
}

/// Largest `|⟨χ^α, χ^β⟩ − δ_{αβ}|` over all pairs of blocks.
pub fn orthonormality_defect(chars: &CharacterSet) -> f64 {
    let mut worst = 0.0f64;
    for (a, x) in chars.characters.iter().enumerate() {
        for (b, y) in chars.characters.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((character_inner(x, y) - target).norm());
        }
    }
    worst
}

/// Largest deviation of `χ(g h g⁻¹)` from `χ(h)`.
pub fn class_function_defect(chi: &[C64], table: &GroupTable) -> f64 {
    let n = table.order();
    let mut worst = 0.0f64;
    for g in 0..n {
        for h in 0..n {
            let conj = table.product(table.product(g, h), table.inverse(g));
            worst = worst.max((chi[conj] - chi[h]).norm());
        }
    }
    worst
}

/// Largest entrywise deviation from
/// `Σ_g D^α_{mn}(g)* D^β_{pq}(g) = (|G|/n_α) δ_{αβ} δ_{mp} δ_{nq}`, divided by `|G|`.
pub fn schur_orthogonality_defect(irreps: &[Vec<CMatrix>]) -> f64 {
    let order = irreps.first().map_or(0, Vec::len);
    if order == 0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for (a, da) in irreps.iter().enumerate() {
        for (b, db) in irreps.iter().enumerate().skip(a) {
            let na = da[0].rows();
            let nb = db[0].rows();
            for m in 0..na {
                for n in 0..na {
                    for p in 0..nb {
                        for q in 0..nb {
                            let sum: C64 = da.iter().zip(db).map(|(x, y)| x[(m, n)].conj() * y[(p, q)]).sum();
                            let target = if a == b && m == p && n == q { order as f64 / na as f64 } else { 0.0 };
                            worst = worst.max((sum - target).norm() / order as f64);
                        }
                    }
                }
            }
        }
    }
    worst
}

/// For each probe `P`, the Frobenius mass of `Ĉ† P Ĉ` outside the
/// `n_α × n_α` diagonal copies plus the largest difference between copies
/// of one block, divided by `‖P‖_F`. Returns the maximum over probes.
pub fn block_residual(cg: &CMatrix, probes: &[CMatrix], blocks: &[BlockSpec]) -> f64 {
    let offsets = block_offsets(blocks);
    let fine: Vec<usize> = blocks.iter().flat_map(|b| std::iter::repeat_n(b.dim, b.multiplicity)).collect();
    let adj = cg.adjoint();
    let mut worst = 0.0f64;
    for p in probes {
        let norm = p.frobenius_norm();
        if norm == 0.0 {
            continue;
        }
        let m = &(&adj * p) * cg;
        let mut spread = 0.0f64;
        for (b, &off) in blocks.iter().zip(&offsets) {
            let first = m.block(off, off, b.dim, b.dim);
            for k in 1..b.multiplicity {
                let start = off + k * b.dim;
                spread = spread.max((&m.block(start, start, b.dim, b.dim) - &first).frobenius_norm());
            }
        }
        let off_mass = m.off_block_norm(&fine);
        worst = worst.max((off_mass + spread) / norm);
    }
    worst
}

/// Machine-readable verification summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub residual: f64,
    pub chi_error: Option<f64>,
    pub block_dims: Vec<usize>,
    pub multiplicities: Vec<usize>,
    pub irreducibility_scores: Option<Vec<f64>>,
    pub seed: u64,
    pub retries_used: usize,
}

impl VerificationReport {
    pub fn from_result(result: &DecompositionResult) -> Self {
        VerificationReport {
            residual: result.residual,
            chi_error: None,
            block_dims: result.blocks.iter().map(|b| b.dim).collect(),
            multiplicities: result.blocks.iter().map(|b| b.multiplicity).collect(),
            irreducibility_scores: None,
            seed: result.seed,
            retries_used: result.retries_used,
        }
    }
}
