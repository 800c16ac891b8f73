//! The SMILY block-diagonalization pipeline.
//!
//! Given two mutually generic adapted states `ρ₁`, `ρ₂`:
//!
//! 1. diagonalize `ρ₁` pointwise (`V₁`);
//! 2. group the columns of `V₁` into invariant subspaces, joining two
//!    columns whenever `v_j† ρ₂ v_k` is nonzero (transitively);
//! 3. sort each group by decreasing `ρ₁` eigenvalue; the degeneracy of an
//!    eigenvalue is the multiplicity `c`, the number of distinct
//!    eigenvalues is the irrep dimension `n`;
//! 4. restrict `ρ₂` to each group and normalize one column of its
//!    `c × c` sub-blocks into the unitary `R̃`;
//! 5. apply the commutation permutation `F̃` so that every block reads
//!    `𝟙_c ⊗ D(h)`.
//!
//! The Clebsch–Gordan matrix is `Ĉ = V₁ˢᵒʳᵗ R̃ F̃`. Genericity of the
//! random states is not certified; every structural check that can fail
//! on a non-generic pair is a retryable error and the driver draws fresh
//! states.

use thiserror::Error;

use crate::groups::{regular_rep, FiniteRep, GroupTable};
use crate::linalg::{commutation_permutation, hermitian_eig, CMatrix, EigResult, LinalgError};
use crate::states::{generate_pair, AdaptedState, RegularTau, RepTau, StateError, TauBuilder};
use crate::verify::block_residual;

#[derive(Debug, Clone, PartialEq)]
pub struct SmilyConfig {
    pub seed: u64,
    /// Pairing `|v_j† ρ₂ v_k|` counts as nonzero above `tol_zero · ‖ρ₂‖_F`.
    pub tol_zero: f64,
    /// Eigenvalues closer than `tol_gap · max(1, |λ|)` are one cluster.
    pub tol_gap: f64,
    /// Largest accepted block residual.
    pub tol_residual: f64,
    /// Total number of attempts with fresh states.
    pub retries: usize,
    pub tol_eig: f64,
}

impl Default for SmilyConfig {
    fn default() -> Self {
        SmilyConfig { seed: 0, tol_zero: 1e-8, tol_gap: 1e-7, tol_residual: 1e-9, retries: 5, tol_eig: 1e-10 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmilyError {
    #[error("pairing magnitude {magnitude:e} inside the dead band around {threshold:e}")]
    SortAmbiguity { magnitude: f64, threshold: f64 },

    #[error("eigenvalue clusters of group {group} have differing sizes {sizes:?}")]
    InconsistentMultiplicity { group: usize, sizes: Vec<usize> },

    #[error("group of size {size} is not divisible by cluster size {cluster}")]
    NonIntegerDimension { size: usize, cluster: usize },

    #[error("residual {residual:e} exceeds {allowed:e}")]
    ResidualTooLarge { residual: f64, allowed: f64 },

    #[error("block {block} has no column of nonvanishing sub-blocks")]
    NoValidColumn { block: usize },

    #[error("Clebsch-Gordan matrix is not unitary (defect {0:e})")]
    NotUnitary(f64),

    #[error(transparent)]
    State(#[from] StateError),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("all {} attempts failed: {}", .0.len(), .0.join("; "))]
    RetriesExhausted(Vec<String>),
}

impl SmilyError {
    /// Failures that indicate a non-generic pair of states.
    pub fn is_retryable(&self) -> bool {
        !matches!(self, SmilyError::RetriesExhausted(_) | SmilyError::Linalg(LinalgError::NotSquare(..)))
    }
}

/// One irrep type: dimension, multiplicity, and the `ρ₁` eigenvalues it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub dim: usize,
    pub multiplicity: usize,
    pub eigenvalues: Vec<f64>,
}

impl BlockSpec {
    pub fn size(&self) -> usize {
        self.dim * self.multiplicity
    }
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    /// `Ĉ`; `Ĉ† D(h) Ĉ = ⊕_α 𝟙_{c_α} ⊗ D^α(h)`.
    pub cg: CMatrix,
    pub blocks: Vec<BlockSpec>,
    /// `V₁ˢᵒʳᵗ`.
    pub sorted_basis: CMatrix,
    pub residual: f64,
    pub retries_used: usize,
    /// Seed of the successful attempt.
    pub seed: u64,
}

impl DecompositionResult {
    pub fn dim(&self) -> usize {
        self.cg.rows()
    }

    /// Column offset of every block.
    pub fn offsets(&self) -> Vec<usize> {
        block_offsets(&self.blocks)
    }

    /// Columns of `V₁ˢᵒʳᵗ` spanning block `alpha`.
    pub fn block_basis(&self, alpha: usize) -> CMatrix {
        let off = self.offsets()[alpha];
        self.sorted_basis.block(0, off, self.dim(), self.blocks[alpha].size())
    }

    /// First copy of `D^α(h)` inside `Ĉ† m Ĉ`.
    pub fn irrep_matrix(&self, m: &CMatrix, alpha: usize) -> CMatrix {
        let off = self.offsets()[alpha];
        let n = self.blocks[alpha].dim;
        let cols = self.cg.block(0, off, self.dim(), n);
        &(&cols.adjoint() * m) * &cols
    }

    /// `(dim, multiplicity)` of every block.
    pub fn structure(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.dim, b.multiplicity)).collect()
    }
}

pub fn block_offsets(blocks: &[BlockSpec]) -> Vec<usize> {
    blocks
        .iter()
        .scan(0, |acc, b| {
            let off = *acc;
            *acc += b.size();
            Some(off)
        })
        .collect()
}

/// Output of the first sorting pass.
#[derive(Debug, Clone)]
pub struct SubspaceSort {
    /// `V₁ˢᵒʳᵗ¹`.
    pub basis: CMatrix,
    /// `c_α n_α` for every group.
    pub sizes: Vec<usize>,
    /// `order[k]` is the original column placed at position `k`.
    pub order: Vec<usize>,
}

/// Groups the eigenvectors of `ρ₁` into invariant subspaces.
///
/// Starting from the first unsorted column, a column joins the current
/// group when its `ρ₂`-pairing with any member exceeds
/// `tol_zero · ‖ρ₂‖_F`; members are scanned in insertion order until the
/// group stops growing. Any pairing within a factor of ten of the
/// threshold is rejected as ambiguous.
pub fn sort_by_subspace(v1: &EigResult, rho2: &CMatrix, tol_zero: f64) -> Result<SubspaceSort, SmilyError> {
    let v = &v1.vectors;
    let n = v.cols();
    let pairing = &(&v.adjoint() * rho2) * v;
    let threshold = tol_zero * rho2.frobenius_norm();
    for j in 0..n {
        for k in 0..n {
            let m = pairing[(j, k)].norm();
            if j != k && m >= 0.1 * threshold && m <= 10.0 * threshold {
                return Err(SmilyError::SortAmbiguity { magnitude: m, threshold });
            }
        }
    }

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    while !remaining.is_empty() {
        let mut group = vec![remaining.remove(0)];
        let mut cursor = 0;
        while cursor < group.len() {
            let member = group[cursor];
            let (joined, rest): (Vec<usize>, Vec<usize>) =
                remaining.iter().partition(|&&k| pairing[(member, k)].norm() > threshold);
            group.extend(joined);
            remaining = rest;
            cursor += 1;
        }
        sizes.push(group.len());
        order.extend(group);
    }
    Ok(SubspaceSort { basis: v.select_columns(&order), sizes, order })
}

/// Sorts each group by decreasing eigenvalue and reads off `(n_α, c_α)`.
///
/// `eigvals[k]` belongs to column `k` of `v_sorted`. Returns the reordered
/// basis, the block specs, and the column permutation applied.
pub fn sort_by_eigenvalue(
    v_sorted: &CMatrix,
    eigvals: &[f64],
    sizes: &[usize],
    tol_gap: f64,
) -> Result<(CMatrix, Vec<BlockSpec>, Vec<usize>), SmilyError> {
    let mut order = Vec::with_capacity(eigvals.len());
    let mut blocks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for (group, &size) in sizes.iter().enumerate() {
        let mut idx: Vec<usize> = (start..start + size).collect();
        idx.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap_or(std::cmp::Ordering::Equal));

        let mut clusters: Vec<Vec<f64>> = Vec::new();
        for &k in &idx {
            let lambda = eigvals[k];
            match clusters.last_mut() {
                Some(c) if (c[c.len() - 1] - lambda).abs() <= tol_gap * lambda.abs().max(1.0) => c.push(lambda),
                _ => clusters.push(vec![lambda]),
            }
        }
        let cluster_sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
        let c = cluster_sizes[0];
        if cluster_sizes.iter().any(|&s| s != c) {
            return Err(SmilyError::InconsistentMultiplicity { group, sizes: cluster_sizes });
        }
        if size % c != 0 {
            return Err(SmilyError::NonIntegerDimension { size, cluster: c });
        }
        let eigenvalues = clusters.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        blocks.push(BlockSpec { dim: size / c, multiplicity: c, eigenvalues });
        order.extend(idx);
        start += size;
    }
    Ok((v_sorted.select_columns(&order), blocks, order))
}

/// Merges groups whose `ρ₁` eigenvalue ladders coincide.
///
/// For a generic `ρ₁` inequivalent irreps never share eigenvalues, so equal
/// ladders mean two copies of one irrep that the first sort kept apart
/// because their `ρ₂`-pairing vanished. Merged columns are ordered by
/// eigenvalue, copies of each eigenvalue kept together. A wrong merge
/// shows up later as a non-unitary `R̃`.
pub fn merge_equivalent(v_sorted: &CMatrix, blocks: &[BlockSpec], tol_gap: f64) -> (CMatrix, Vec<BlockSpec>) {
    let offsets = block_offsets(blocks);
    let same = |a: &BlockSpec, b: &BlockSpec| {
        a.dim == b.dim
            && a.eigenvalues.iter().zip(&b.eigenvalues).all(|(x, y)| (x - y).abs() <= tol_gap * x.abs().max(1.0))
    };
    let mut taken = vec![false; blocks.len()];
    let mut order = Vec::with_capacity(v_sorted.cols());
    let mut merged = Vec::with_capacity(blocks.len());
    for a in 0..blocks.len() {
        if taken[a] {
            continue;
        }
        let members: Vec<usize> = (a..blocks.len()).filter(|&b| !taken[b] && same(&blocks[a], &blocks[b])).collect();
        for &m in &members {
            taken[m] = true;
        }
        let dim = blocks[a].dim;
        for j in 0..dim {
            for &m in &members {
                let c = blocks[m].multiplicity;
                order.extend(offsets[m] + j * c..offsets[m] + (j + 1) * c);
            }
        }
        let multiplicity = members.iter().map(|&m| blocks[m].multiplicity).sum();
        let total = multiplicity as f64;
        let eigenvalues = (0..dim)
            .map(|j| {
                members.iter().map(|&m| blocks[m].eigenvalues[j] * blocks[m].multiplicity as f64).sum::<f64>() / total
            })
            .collect();
        merged.push(BlockSpec { dim, multiplicity, eigenvalues });
    }
    (v_sorted.select_columns(&order), merged)
}

/// Diagonal blocks `Σ^α` of `V† ρ₂ V`; fails when the off-block part
/// exceeds `tol · ‖ρ₂‖_F`.
pub fn coarse_blocks(
    v_sorted: &CMatrix,
    rho2: &CMatrix,
    blocks: &[BlockSpec],
    tol: f64,
) -> Result<Vec<CMatrix>, SmilyError> {
    let full = &(&v_sorted.adjoint() * rho2) * v_sorted;
    let sigmas =
        blocks.iter().zip(block_offsets(blocks)).map(|(b, off)| full.block(off, off, b.size(), b.size())).collect();
    let sizes: Vec<usize> = blocks.iter().map(BlockSpec::size).collect();
    let off_block = full.off_block_norm(&sizes);
    let allowed = tol * rho2.frobenius_norm();
    if off_block > allowed {
        return Err(SmilyError::ResidualTooLarge { residual: off_block, allowed });
    }
    Ok(sigmas)
}

/// Normalizes one column of `c × c` sub-blocks of `Σ` into the unitary
/// `R̃ = diag(R̃_{1k}, …, R̃_{nk})`, `R̃_{jk} = R_{jk} √c / ‖R_{jk}‖_F`.
///
/// The column `k` maximizes the smallest sub-block norm in it.
pub fn build_r_tilde(sigma: &CMatrix, spec: &BlockSpec, tol_zero: f64) -> Result<CMatrix, SmilyError> {
    let (n, c) = (spec.dim, spec.multiplicity);
    let norms: Vec<Vec<f64>> =
        (0..n).map(|j| (0..n).map(|k| sigma.block(j * c, k * c, c, c).frobenius_norm()).collect()).collect();
    let (best_k, best_min) = (0..n)
        .map(|k| (k, (0..n).map(|j| norms[j][k]).fold(f64::INFINITY, f64::min)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if best_min <= tol_zero * sigma.frobenius_norm() {
        return Err(SmilyError::NoValidColumn { block: 0 });
    }
    let scale = (c as f64).sqrt();
    let parts: Vec<CMatrix> =
        (0..n).map(|j| sigma.block(j * c, best_k * c, c, c).scale_real(scale / norms[j][best_k])).collect();
    Ok(CMatrix::block_diag(&parts))
}

/// `F̃ = diag(F¹, …, F^N)` with `F^α` the commutation permutation for `(n_α, c_α)`.
pub fn build_f_tilde(blocks: &[BlockSpec]) -> CMatrix {
    let parts: Vec<CMatrix> = blocks.iter().map(|b| commutation_permutation(b.dim, b.multiplicity).1).collect();
    CMatrix::block_diag(&parts)
}

/// One pass of the pipeline on a fixed pair of states.
pub fn decompose_once(
    rho1: &AdaptedState,
    rho2: &AdaptedState,
    probes: &[CMatrix],
    cfg: &SmilyConfig,
) -> Result<DecompositionResult, SmilyError> {
    let eig = hermitian_eig(&rho1.rho, cfg.tol_eig)?;
    let first = sort_by_subspace(&eig, &rho2.rho, cfg.tol_zero)?;
    let values: Vec<f64> = first.order.iter().map(|&k| eig.values[k]).collect();
    let (sorted_basis, blocks, _) = sort_by_eigenvalue(&first.basis, &values, &first.sizes, cfg.tol_gap)?;
    let (sorted_basis, blocks) = merge_equivalent(&sorted_basis, &blocks, cfg.tol_gap);
    let sigmas = coarse_blocks(&sorted_basis, &rho2.rho, &blocks, cfg.tol_residual)?;

    let mut r_parts = Vec::with_capacity(blocks.len());
    for (alpha, (sigma, spec)) in sigmas.iter().zip(&blocks).enumerate() {
        let r = build_r_tilde(sigma, spec, cfg.tol_zero).map_err(|e| match e {
            SmilyError::NoValidColumn { .. } => SmilyError::NoValidColumn { block: alpha },
            other => other,
        })?;
        r_parts.push(r);
    }
    let r_tilde = CMatrix::block_diag(&r_parts);
    let f_tilde = build_f_tilde(&blocks);
    let cg = &(&sorted_basis * &r_tilde) * &f_tilde;

    let n = cg.rows();
    let defect = cg.unitarity_defect();
    if defect > 1e-11 * n as f64 {
        return Err(SmilyError::NotUnitary(defect));
    }
    let residual = block_residual(&cg, probes, &blocks);
    if residual.is_nan() || residual > cfg.tol_residual {
        return Err(SmilyError::ResidualTooLarge { residual, allowed: cfg.tol_residual });
    }
    Ok(DecompositionResult { cg, blocks, sorted_basis, residual, retries_used: 0, seed: rho1.seed })
}

/// Seed of attempt `k`; attempt 0 uses the configured seed.
pub fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs the pipeline, drawing fresh states after each retryable failure.
pub fn smily_decompose<B: TauBuilder + ?Sized>(
    builder: &B,
    probes: &[CMatrix],
    cfg: &SmilyConfig,
) -> Result<DecompositionResult, SmilyError> {
    let mut reasons = Vec::new();
    for attempt in 0..cfg.retries.max(1) {
        let seed = attempt_seed(cfg.seed, attempt);
        let outcome = generate_pair(builder, seed)
            .map_err(SmilyError::from)
            .and_then(|(r1, r2)| decompose_once(&r1, &r2, probes, cfg));
        match outcome {
            Ok(mut result) => {
                result.retries_used = attempt;
                return Ok(result);
            }
            Err(e) if e.is_retryable() => reasons.push(format!("seed {seed}: {e}")),
            Err(e) => return Err(e),
        }
    }
    Err(SmilyError::RetriesExhausted(reasons))
}

/// Decomposes the left regular representation of a group.
pub fn decompose_regular(
    table: &GroupTable,
    cfg: &SmilyConfig,
) -> Result<(FiniteRep, DecompositionResult), SmilyError> {
    let rep = regular_rep(table);
    let result = smily_decompose(&RegularTau(table), &rep.matrices, cfg)?;
    Ok((rep, result))
}

/// Decomposes an arbitrary finite representation.
pub fn decompose_rep(rep: &FiniteRep, cfg: &SmilyConfig) -> Result<DecompositionResult, SmilyError> {
    smily_decompose(&RepTau(rep), &rep.matrices, cfg)
}

/// Extracted irrep matrices `D̂^α(g)` for every element of a finite representation.
pub fn irrep_matrices(rep: &FiniteRep, result: &DecompositionResult) -> Vec<Vec<CMatrix>> {
    (0..result.blocks.len()).map(|alpha| rep.matrices.iter().map(|m| result.irrep_matrix(m, alpha)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, C64};
    use crate::states::{adapt_shifted, rng_from_seed};
    use rand::Rng;

    fn spec(dim: usize, multiplicity: usize) -> BlockSpec {
        BlockSpec { dim, multiplicity, eigenvalues: vec![0.0; dim] }
    }

    fn random_matrix(n: usize, seed: u64) -> CMatrix {
        let mut rng = rng_from_seed(seed);
        CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn scalar_state_gives_singletons() {
        let n = 4;
        let rho = CMatrix::identity(n).scale_real(1.0 / n as f64);
        let eig = hermitian_eig(&rho, 1e-12).unwrap();
        let s = sort_by_subspace(&eig, &rho, 1e-8).unwrap();
        assert_eq!(s.sizes, vec![1; n]);
    }

    #[test]
    fn eigenvalue_sort_single_column() {
        let v = CMatrix::identity(1);
        let (_, blocks, _) = sort_by_eigenvalue(&v, &[0.5], &[1], 1e-7).unwrap();
        assert_eq!(blocks[0].dim, 1);
        assert_eq!(blocks[0].multiplicity, 1);
    }

    #[test]
    fn eigenvalue_sort_detects_inconsistent_clusters() {
        let v = CMatrix::identity(3);
        let err = sort_by_eigenvalue(&v, &[0.5, 0.5, 0.2], &[3], 1e-7).unwrap_err();
        assert!(matches!(err, SmilyError::InconsistentMultiplicity { group: 0, .. }));
    }

    #[test]
    fn eigenvalue_sort_pairs() {
        let v = CMatrix::identity(4);
        let (basis, blocks, order) = sort_by_eigenvalue(&v, &[0.1, 0.4, 0.1, 0.4], &[4], 1e-7).unwrap();
        assert_eq!(blocks[0].dim, 2);
        assert_eq!(blocks[0].multiplicity, 2);
        assert_eq!(order, vec![1, 3, 0, 2]);
        assert_eq!(basis, v.select_columns(&[1, 3, 0, 2]));
    }

    #[test]
    fn f_tilde_cases() {
        assert_eq!(build_f_tilde(&[spec(3, 1), spec(2, 1)]), CMatrix::identity(5));
        assert_eq!(build_f_tilde(&[spec(2, 2)]), commutation_permutation(2, 2).1);
    }

    #[test]
    fn f_tilde_conjugation_identity() {
        for (n, c) in [(2, 3), (3, 2), (4, 4)] {
            let s = random_matrix(n, (n * 10 + c) as u64);
            let f = build_f_tilde(&[spec(n, c)]);
            let lhs = &(&f.adjoint() * &kron(&s, &CMatrix::identity(c))) * &f;
            assert_eq!(lhs, kron(&CMatrix::identity(c), &s));
        }
    }

    #[test]
    fn r_tilde_scalar_blocks_have_unit_modulus() {
        let sigma = CMatrix::from_row_major(
            2,
            2,
            &[C64::new(0.3, 0.0), C64::new(0.1, -0.2), C64::new(0.1, 0.2), C64::new(0.5, 0.0)],
        )
        .unwrap();
        let r = build_r_tilde(&sigma, &spec(2, 1), 1e-8).unwrap();
        for j in 0..2 {
            assert!((r[(j, j)].norm() - 1.0).abs() < 1e-15);
        }
        assert!(r.is_unitary(1e-14));
    }

    #[test]
    fn r_tilde_single_block_is_unitary() {
        // n = 1: Σ = s · U for a unitary U.
        let u = hermitian_eig(&(&random_matrix(3, 5) + &random_matrix(3, 5).adjoint()), 1e-12).unwrap().vectors;
        let sigma = u.scale(C64::new(0.0, 0.7));
        let r = build_r_tilde(&sigma, &spec(1, 3), 1e-8).unwrap();
        assert!(r.is_unitary(1e-13));
    }

    #[test]
    fn r_tilde_rejects_vanishing_column() {
        let sigma = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(build_r_tilde(&sigma, &spec(2, 1), 1e-8), Err(SmilyError::NoValidColumn { .. })));
    }

    #[test]
    fn one_dimensional_representation() {
        let g = GroupTable::from_cayley(&[vec![1]], 256).unwrap();
        let (_, res) = decompose_regular(&g, &SmilyConfig::default()).unwrap();
        assert_eq!(res.structure(), vec![(1, 1)]);
        assert!((res.cg[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coarse_single_block() {
        let tau = random_matrix(3, 11);
        let rho = adapt_shifted(&tau).unwrap().rho;
        let v = CMatrix::identity(3);
        let sig = coarse_blocks(&v, &rho, &[spec(3, 1)], 1e-9).unwrap();
        assert_eq!(sig[0], rho);
    }

    #[test]
    fn retries_exhausted_reports_attempts() {
        // A probe that no unitary can block-diagonalize within 1e-300.
        let g = GroupTable::from_cayley(&[vec![1, 2], vec![2, 1]], 256).unwrap();
        let rep = regular_rep(&g);
        let cfg = SmilyConfig { tol_residual: -1.0, retries: 3, ..SmilyConfig::default() };
        match decompose_rep(&rep, &cfg) {
            Err(SmilyError::RetriesExhausted(r)) => assert_eq!(r.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
