//! SU(2): angular-momentum generators, the exponential representation,
//! multi-spin tensor products, Clebsch–Gordan tables and an independent
//! ladder-operator construction of them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{block_offsets, smily_decompose, BlockSpec, DecompositionResult, SmilyConfig, SmilyError};
use crate::linalg::{hermitian_eig, kron, CMatrix, LinalgError, C64};
use crate::states::{rng_from_seed, with_random_phases, StateError, StateRng, StateVariant, TauBuilder};
use crate::verify::{char_error_lie, Quadrature};

/// Default cap on the product dimension of a spin system.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// Coefficients with smaller modulus are omitted from tables.
pub const TABLE_DROP: f64 = 1e-10;
const IMAG_TOL: f64 = 1e-9;
const SPECTRUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Su2Error {
    #[error("invalid spin {0:?}: expected an integer or p/2")]
    SpinParse(String),

    #[error("no spins given")]
    Empty,

    #[error("product dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("block {block}: J_z spectrum {found:?} is not the ladder of spin {two_j}/2")]
    EigenvalueMismatch { block: usize, two_j: usize, found: Vec<f64> },

    #[error("coefficient has imaginary part {0:e}")]
    ComplexCoefficient(f64),

    #[error("tables differ in structure: {0}")]
    StructureMismatch(String),

    #[error("CG table CSV, line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Smily(#[from] SmilyError),
}

/// Spin `j`, stored as `2j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Spin {
    pub two_j: u32,
}

impl Spin {
    pub fn from_two_j(two_j: u32) -> Self {
        Spin { two_j }
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.two_j.is_multiple_of(2) {
            write!(f, "{}", self.two_j / 2)
        } else {
            write!(f, "{}/2", self.two_j)
        }
    }
}

impl FromStr for Spin {
    type Err = Su2Error;

    fn from_str(s: &str) -> Result<Self, Su2Error> {
        let t = s.trim();
        let err = || Su2Error::SpinParse(s.to_string());
        match t.split_once('/') {
            Some((p, q)) => {
                if q.trim() != "2" {
                    return Err(err());
                }
                let p: u32 = p.trim().parse().map_err(|_| err())?;
                Ok(Spin { two_j: p })
            }
            None => {
                let j: u32 = t.parse().map_err(|_| err())?;
                j.checked_mul(2).map(|two_j| Spin { two_j }).ok_or_else(err)
            }
        }
    }
}

/// Parses a comma-separated spin list such as `"3/2,1"`.
pub fn parse_spins(list: &str) -> Result<Vec<Spin>, Su2Error> {
    let spins = list.split(',').map(str::parse).collect::<Result<Vec<Spin>, _>>()?;
    if spins.is_empty() {
        return Err(Su2Error::Empty);
    }
    Ok(spins)
}

/// `(J_x, J_y, J_z)` in the basis `|j, j⟩, …, |j, −j⟩`.
pub fn angular_momentum(spin: Spin) -> (CMatrix, CMatrix, CMatrix) {
    let d = spin.dim();
    let j = spin.j();
    // J₊ |j, m'⟩ = √((j − m')(j + m' + 1)) |j, m' + 1⟩; row a holds m = j − a.
    let mut raise = CMatrix::zeros(d, d);
    for a in 1..d {
        let m = j - a as f64;
        raise[(a - 1, a)] = C64::new(((j - m) * (j + m + 1.0)).sqrt(), 0.0);
    }
    let lower = raise.adjoint();
    let jx = (&raise + &lower).scale_real(0.5);
    let jy = (&raise - &lower).scale(C64::new(0.0, -0.5));
    let jz = CMatrix::from_diagonal(&(0..d).map(|a| C64::new(j - a as f64, 0.0)).collect::<Vec<_>>());
    (jx, jy, jz)
}

/// `J₋` for a single spin, real.
fn lowering(spin: Spin) -> Vec<Vec<f64>> {
    let d = spin.dim();
    let j = spin.j();
    let mut low = vec![vec![0.0; d]; d];
    for a in 0..d.saturating_sub(1) {
        let m = j - a as f64;
        low[a + 1][a] = ((j + m) * (j - m + 1.0)).sqrt();
    }
    low
}

/// `e^{iH}` for Hermitian `H`, via its eigendecomposition.
pub fn exp_i_hermitian(h: &CMatrix) -> Result<CMatrix, LinalgError> {
    let eig = hermitian_eig(h, 1e-10)?;
    let phases: Vec<C64> = eig.values.iter().map(|&l| C64::from_polar(1.0, l)).collect();
    Ok(&(&eig.vectors * &CMatrix::from_diagonal(&phases)) * &eig.vectors.adjoint())
}

/// `D(s) = e^{i s·J}`.
pub fn exp_rep(spin: Spin, s: [f64; 3]) -> Result<CMatrix, LinalgError> {
    let (jx, jy, jz) = angular_momentum(spin);
    exp_i_hermitian(&dot_generators(&jx, &jy, &jz, s))
}

fn dot_generators(jx: &CMatrix, jy: &CMatrix, jz: &CMatrix, s: [f64; 3]) -> CMatrix {
    &(&jx.scale_real(s[0]) + &jy.scale_real(s[1])) + &jz.scale_real(s[2])
}

/// Character of the `n`-dimensional irrep at the group element `e^{i s·J}`.
pub fn exact_character(n: usize, s: [f64; 3]) -> f64 {
    assert!(n >= 1, "irrep dimension must be positive");
    let theta = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
    let half = (n as f64 - 1.0) / 2.0;
    let terms = n / 2;
    let sum: f64 = (1..=terms).map(|k| (theta * (half - k as f64 + 1.0)).cos()).sum();
    if n.is_multiple_of(2) {
        2.0 * sum
    } else {
        2.0 * sum + 1.0
    }
}

/// Tensor product of spins acting on `⊗_i C^{2j_i+1}`.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    pub spins: Vec<Spin>,
    pub jx: CMatrix,
    pub jy: CMatrix,
    pub jz: CMatrix,
}

impl SpinSystem {
    pub fn new(spins: &[Spin]) -> Result<Self, Su2Error> {
        Self::with_cap(spins, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(spins: &[Spin], cap: usize) -> Result<Self, Su2Error> {
        if spins.is_empty() {
            return Err(Su2Error::Empty);
        }
        let dim = spins.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.dim())).unwrap_or(usize::MAX);
        if dim > cap {
            return Err(Su2Error::DimensionCap { dim, cap });
        }
        let singles: Vec<_> = spins.iter().map(|&s| angular_momentum(s)).collect();
        let total = |pick: fn(&(CMatrix, CMatrix, CMatrix)) -> &CMatrix| {
            let mut acc = CMatrix::zeros(dim, dim);
            for (i, gens) in singles.iter().enumerate() {
                let mut term = CMatrix::identity(1);
                for (k, s) in spins.iter().enumerate() {
                    let factor = if k == i { pick(gens).clone() } else { CMatrix::identity(s.dim()) };
                    term = kron(&term, &factor);
                }
                acc = &acc + &term;
            }
            acc
        };
        Ok(SpinSystem { spins: spins.to_vec(), jx: total(|g| &g.0), jy: total(|g| &g.1), jz: total(|g| &g.2) })
    }

    pub fn dim(&self) -> usize {
        self.jz.rows()
    }

    pub fn generators(&self) -> [&CMatrix; 3] {
        [&self.jx, &self.jy, &self.jz]
    }

    /// `⊗_i D^{j_i}(s)`.
    pub fn element(&self, s: [f64; 3]) -> Result<CMatrix, LinalgError> {
        let mut acc = CMatrix::identity(1);
        for &spin in &self.spins {
            acc = kron(&acc, &exp_rep(spin, s)?);
        }
        Ok(acc)
    }

    /// `e^{i s·J_T}` from the total generators.
    pub fn element_from_generators(&self, s: [f64; 3]) -> Result<CMatrix, LinalgError> {
        exp_i_hermitian(&dot_generators(&self.jx, &self.jy, &self.jz, s))
    }

    /// `2m_i` of every spin for product-basis index `idx`.
    pub fn two_m(&self, idx: usize) -> Vec<i32> {
        let mut rem = idx;
        let mut out = vec![0; self.spins.len()];
        for (k, s) in self.spins.iter().enumerate().rev() {
            let a = rem % s.dim();
            rem /= s.dim();
            out[k] = s.two_j as i32 - 2 * a as i32;
        }
        out
    }
}

/// Uniform point of `[−π, π]³` with norm at least `0.1`.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    use std::f64::consts::PI;
    loop {
        let s = [rng.random_range(-PI..=PI), rng.random_range(-PI..=PI), rng.random_range(-PI..=PI)];
        if (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt() >= 0.1 {
            return s;
        }
    }
}

/// `τ = 𝟙 + Σ_{i=1}^{3} φ_i e^{iθ_i} D(s_i)` with random group elements
/// `s_i`. The phases (see [`with_random_phases`]) keep half-integer blocks
/// free of Kramers pairs; [`real_gauge`] makes the final table real.
pub struct SpinTau<'a>(pub &'a SpinSystem);

impl TauBuilder for SpinTau<'_> {
    fn coefficient_count(&self) -> usize {
        3
    }
    fn variant(&self) -> StateVariant {
        StateVariant::FiniteShifted
    }
    fn build(&self, phi: &[f64], rng: &mut StateRng) -> Result<CMatrix, StateError> {
        let mut tau = CMatrix::identity(self.0.dim());
        for p in with_random_phases(phi, rng) {
            let s = random_direction(rng);
            tau = &tau + &self.0.element(s)?.scale(p);
        }
        Ok(tau)
    }
}

/// Generators plus three seeded random group elements.
pub fn residual_probes(system: &SpinSystem, seed: u64) -> Result<Vec<CMatrix>, LinalgError> {
    let mut probes: Vec<CMatrix> = system.generators().into_iter().cloned().collect();
    let mut rng = rng_from_seed(seed ^ 0x5052_4f42_4553_0000);
    for _ in 0..3 {
        probes.push(system.element(random_direction(&mut rng))?);
    }
    Ok(probes)
}

/// Rotates each block of `Ĉ` so that `J_z` is diagonal with eigenvalues
/// `j, j−1, …, −j` inside every copy. The first copy's `J_z` block is
/// diagonalized and the same rotation is applied to all copies.
pub fn jz_rotation(cg_hat: &CMatrix, jz_total: &CMatrix, blocks: &[BlockSpec]) -> Result<(CMatrix, CMatrix), Su2Error> {
    let n_total = cg_hat.rows();
    let mut parts = Vec::with_capacity(blocks.len());
    for (alpha, (b, off)) in blocks.iter().zip(block_offsets(blocks)).enumerate() {
        let cols = cg_hat.block(0, off, n_total, b.dim);
        let z = &(&cols.adjoint() * jz_total) * &cols;
        let eig = hermitian_eig(&z, 1e-9)?;
        let two_j = b.dim - 1;
        let ok =
            eig.values.iter().enumerate().all(|(a, &v)| (v - (two_j as f64 / 2.0 - a as f64)).abs() <= SPECTRUM_TOL);
        if !ok {
            return Err(Su2Error::EigenvalueMismatch { block: alpha, two_j, found: eig.values });
        }
        parts.push(kron(&CMatrix::identity(b.multiplicity), &eig.vectors));
    }
    let vz = CMatrix::block_diag(&parts);
    let cz = cg_hat * &vz;
    Ok((vz, cz))
}

/// Makes every column of `C_z` real while keeping the `𝟙_c ⊗ D` structure.
///
/// Inside each block the first copy is rephased so that `J₋` has positive
/// matrix elements down the tower, and the copies are then mixed by the
/// principal square root `G` of the symmetric unitary `U = X† X*`, where
/// `X` holds the highest-weight columns. `X G` is real, and lowering keeps
/// it real. Returns the block-diagonal gauge and `C_z G`.
pub fn real_gauge(cz: &CMatrix, system: &SpinSystem, blocks: &[BlockSpec]) -> Result<(CMatrix, CMatrix), Su2Error> {
    let n_total = cz.rows();
    let lower = &system.jx - &system.jy.scale(C64::new(0.0, 1.0));
    let mut parts = Vec::with_capacity(blocks.len());
    for (b, off) in blocks.iter().zip(block_offsets(blocks)) {
        let (n, c) = (b.dim, b.multiplicity);
        let first = cz.block(0, off, n_total, n);
        let ladder = &(&first.adjoint() * &lower) * &first;
        let mut phases = vec![C64::new(1.0, 0.0); n];
        for a in 0..n - 1 {
            let l = ladder[(a + 1, a)];
            phases[a + 1] = if l.norm() > 0.0 { phases[a] * l / l.norm() } else { phases[a] };
        }
        let phase = kron(&CMatrix::identity(c), &CMatrix::from_diagonal(&phases));

        let rephased = &cz.block(0, off, n_total, n * c) * &phase;
        let tops: Vec<usize> = (0..c).map(|k| k * n).collect();
        let x = rephased.select_columns(&tops);
        let mix = symmetric_unitary_sqrt(&(&x.adjoint() * &x.conj()))?;
        parts.push(&phase * &kron(&mix, &CMatrix::identity(n)));
    }
    let gauge = CMatrix::block_diag(&parts);
    let real = cz * &gauge;
    Ok((gauge, real))
}

/// Principal square root of a symmetric unitary `U = Q e^{iΘ} Qᵗ`, with `Q`
/// real orthogonal.
fn symmetric_unitary_sqrt(u: &CMatrix) -> Result<CMatrix, LinalgError> {
    let k = u.rows();
    let re = CMatrix::from_fn(k, k, |i, j| C64::new(0.5 * (u[(i, j)].re + u[(j, i)].re), 0.0));
    let im = CMatrix::from_fn(k, k, |i, j| C64::new(0.5 * (u[(i, j)].im + u[(j, i)].im), 0.0));
    // Re U and Im U commute; a generic combination separates their common eigenvectors.
    let q = hermitian_eig(&(&re + &im.scale_real(0.618_033_988_749_895)), 1e-10)?.vectors;
    let half: Vec<C64> = (0..k)
        .map(|j| {
            let v = q.column(j);
            let quad = |m: &CMatrix| {
                let mut acc = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        acc += v[a].re * m[(a, b)].re * v[b].re;
                    }
                }
                acc
            };
            C64::from_polar(1.0, 0.5 * quad(&im).atan2(quad(&re)))
        })
        .collect();
    Ok(&(&q * &CMatrix::from_diagonal(&half)) * &q.transpose())
}

/// One coefficient `⟨m₁, …, m_k | J, M, c⟩`; half-integers stored doubled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CGEntry {
    pub two_m: Vec<i32>,
    #[serde(rename = "two_J")]
    pub two_j: i32,
    #[serde(rename = "two_M")]
    pub two_m_total: i32,
    #[serde(rename = "c")]
    pub copy: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CGTable {
    pub spins: Vec<Spin>,
    pub entries: Vec<CGEntry>,
}

/// Column label `(2J, 2M, c)`.
pub type ColumnLabel = (i32, i32, usize);

impl CGTable {
    /// Distinct column labels, in table order.
    pub fn labels(&self) -> Vec<ColumnLabel> {
        let mut out: Vec<ColumnLabel> = Vec::new();
        for e in &self.entries {
            let l = (e.two_j, e.two_m_total, e.copy);
            if out.last() != Some(&l) && !out.contains(&l) {
                out.push(l);
            }
        }
        out
    }

    /// Dense column of `label` over the product basis.
    pub fn column(&self, label: ColumnLabel) -> Vec<f64> {
        let dims: Vec<usize> = self.spins.iter().map(Spin::dim).collect();
        let mut col = vec![0.0; dims.iter().product()];
        for e in self.entries.iter().filter(|e| (e.two_j, e.two_m_total, e.copy) == label) {
            col[product_index(&self.spins, &e.two_m)] = e.coefficient;
        }
        col
    }

    /// Orthogonal matrix whose columns follow `labels`.
    pub fn to_matrix(&self, labels: &[ColumnLabel]) -> CMatrix {
        let n: usize = self.spins.iter().map(Spin::dim).product();
        let mut m = CMatrix::zeros(n, labels.len());
        for (k, &l) in labels.iter().enumerate() {
            for (i, v) in self.column(l).into_iter().enumerate() {
                m[(i, k)] = C64::new(v, 0.0);
            }
        }
        m
    }
}

fn product_index(spins: &[Spin], two_m: &[i32]) -> usize {
    spins.iter().zip(two_m).fold(0, |acc, (s, &m)| acc * s.dim() + ((s.two_j as i32 - m) / 2) as usize)
}

/// `x` in plain decimal notation with 17 significant digits.
pub fn format_coefficient(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (16 - exponent).clamp(0, 340) as usize;
    format!("{x:.decimals$}")
}

impl CGTable {
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.spins.len()).map(|i| format!("two_m_{i}")).collect();
        h.extend(["two_J", "two_M", "c", "coefficient"].map(String::from));
        h
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header()).expect("writing to memory");
        for e in &self.entries {
            let mut rec: Vec<String> = e.two_m.iter().map(i32::to_string).collect();
            rec.push(e.two_j.to_string());
            rec.push(e.two_m_total.to_string());
            rec.push(e.copy.to_string());
            rec.push(format_coefficient(e.coefficient));
            w.write_record(&rec).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
    }

    /// Parses [`CGTable::to_csv`] output. Spins are not stored in the file
    /// and must be supplied.
    pub fn from_csv(text: &str, spins: &[Spin]) -> Result<CGTable, Su2Error> {
        let k = spins.len();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Su2Error::Csv { line: 1, message: e.to_string() })?.clone();
        let expected = CGTable { spins: spins.to_vec(), entries: vec![] }.csv_header();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Su2Error::Csv { line: 1, message: format!("expected header {}", expected.join(",")) });
        }
        let mut entries = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Su2Error::Csv { line, message: e.to_string() })?;
            let int = |j: usize| -> Result<i64, Su2Error> {
                rec[j].parse().map_err(|_| Su2Error::Csv { line, message: format!("bad integer {:?}", &rec[j]) })
            };
            let two_m = (0..k).map(|j| int(j).map(|v| v as i32)).collect::<Result<Vec<_>, _>>()?;
            let coefficient: f64 = rec[k + 3]
                .parse()
                .map_err(|_| Su2Error::Csv { line, message: format!("bad coefficient {:?}", &rec[k + 3]) })?;
            entries.push(CGEntry {
                two_m,
                two_j: int(k)? as i32,
                two_m_total: int(k + 1)? as i32,
                copy: int(k + 2)? as usize,
                coefficient,
            });
        }
        Ok(CGTable { spins: spins.to_vec(), entries })
    }
}

/// Builds table entries from labelled columns: drops entries below
/// [`TABLE_DROP`] and flips each column so that its entry with the
/// lexicographically largest `(m₁, …, m_k)` is positive.
fn table_from_columns(system: &SpinSystem, columns: Vec<(ColumnLabel, Vec<C64>)>) -> Result<CGTable, Su2Error> {
    let mut entries = Vec::new();
    for ((two_j, two_m_total, copy), col) in columns {
        let mut kept: Vec<(usize, C64)> = Vec::new();
        for (idx, &z) in col.iter().enumerate() {
            if z.norm() < TABLE_DROP {
                continue;
            }
            if z.im.abs() > IMAG_TOL {
                return Err(Su2Error::ComplexCoefficient(z.im));
            }
            kept.push((idx, z));
        }
        // Product index order is lexicographically decreasing in (m₁, …, m_k).
        let sign = kept.first().map_or(1.0, |(_, z)| z.re.signum());
        for (idx, z) in kept {
            entries.push(CGEntry { two_m: system.two_m(idx), two_j, two_m_total, copy, coefficient: sign * z.re });
        }
    }
    Ok(CGTable { spins: system.spins.clone(), entries })
}

/// Reads `C_z` into a table. Blocks are listed by decreasing `J`, then copy,
/// then decreasing `M`.
pub fn extract_cg_table(cz: &CMatrix, system: &SpinSystem, blocks: &[BlockSpec]) -> Result<CGTable, Su2Error> {
    let offsets = block_offsets(blocks);
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| blocks[b].dim.cmp(&blocks[a].dim));
    let mut columns = Vec::with_capacity(cz.cols());
    for alpha in order {
        let b = &blocks[alpha];
        let two_j = b.dim as i32 - 1;
        for copy in 0..b.multiplicity {
            for a in 0..b.dim {
                let col = cz.column(offsets[alpha] + copy * b.dim + a);
                columns.push(((two_j, two_j - 2 * a as i32, copy + 1), col));
            }
        }
    }
    table_from_columns(system, columns)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

/// Coupled towers of two spins `j_a ⊗ j_b`, highest `J` first. Each tower
/// lists `|J, M⟩` for `M = J … −J` over the `(m_a, m_b)` product basis.
fn couple_pair(a: Spin, b: Spin) -> Vec<(u32, Vec<Vec<f64>>)> {
    let (da, db) = (a.dim(), b.dim());
    let dim = da * db;
    let (la, lb) = (lowering(a), lowering(b));
    let two_m = |idx: usize| (a.two_j as i32 - 2 * (idx / db) as i32) + (b.two_j as i32 - 2 * (idx % db) as i32);
    let lower_total = |v: &[f64]| {
        let mut out = vec![0.0; dim];
        for (idx, &x) in v.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let (p, q) = (idx / db, idx % db);
            for r in 0..da {
                out[r * db + q] += la[r][p] * x;
            }
            for r in 0..db {
                out[p * db + r] += lb[r][q] * x;
            }
        }
        out
    };

    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut towers = Vec::new();
    let (hi, lo) = (a.two_j + b.two_j, a.two_j.abs_diff(b.two_j));
    let mut two_j = hi;
    loop {
        // Highest weight: the part of the M = J space orthogonal to all higher towers.
        let mut top = None;
        for idx in (0..dim).filter(|&i| two_m(i) == two_j as i32) {
            let mut v = vec![0.0; dim];
            v[idx] = 1.0;
            for f in &found {
                let p = dot(f, &v);
                v.iter_mut().zip(f).for_each(|(x, y)| *x -= p * y);
            }
            if dot(&v, &v).sqrt() > 1e-8 {
                normalize(&mut v);
                top = Some(v);
                break;
            }
        }
        let mut v = top.expect("highest-weight vector exists for every allowed J");
        if let Some(lead) = v.iter().find(|x| x.abs() > TABLE_DROP) {
            if *lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        let mut tower = vec![v];
        for _ in 0..two_j {
            let mut next = lower_total(tower.last().unwrap());
            normalize(&mut next);
            tower.push(next);
        }
        found.extend(tower.iter().cloned());
        towers.push((two_j, tower));
        if two_j < lo + 2 {
            break;
        }
        two_j -= 2;
    }
    towers
}

/// Clebsch–Gordan table built independently of the decomposition: spins
/// are coupled left to right, each pair by highest-weight vectors, `J₋`
/// ladders and Gram–Schmidt. Copies of a repeated `J` are numbered in
/// order of decreasing intermediate couplings.
pub fn ladder_oracle(spins: &[Spin]) -> Result<CGTable, Su2Error> {
    let system = SpinSystem::new(spins)?;
    // Channel: (intermediate 2J path, 2J, tower over the partial product basis).
    let first = spins[0];
    let identity_tower: Vec<Vec<f64>> = (0..first.dim())
        .map(|a| {
            let mut v = vec![0.0; first.dim()];
            v[a] = 1.0;
            v
        })
        .collect();
    let mut channels: Vec<(Vec<u32>, u32, Vec<Vec<f64>>)> = vec![(vec![], first.two_j, identity_tower)];

    for &next in &spins[1..] {
        let db = next.dim();
        let mut coupled = Vec::new();
        for (path, two_ja, tower) in &channels {
            let partial = tower[0].len();
            for (two_j, pair_tower) in couple_pair(Spin::from_two_j(*two_ja), next) {
                let lifted: Vec<Vec<f64>> = pair_tower
                    .iter()
                    .map(|col| {
                        let mut v = vec![0.0; partial * db];
                        for (idx, &w) in col.iter().enumerate() {
                            if w == 0.0 {
                                continue;
                            }
                            let (ma, mb) = (idx / db, idx % db);
                            for (p, &t) in tower[ma].iter().enumerate() {
                                v[p * db + mb] += w * t;
                            }
                        }
                        v
                    })
                    .collect();
                let mut p = path.clone();
                p.push(*two_ja);
                coupled.push((p, two_j, lifted));
            }
        }
        channels = coupled;
    }

    channels.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| y.0.cmp(&x.0)));
    let mut columns = Vec::new();
    let mut copy = 0;
    let mut last_j = None;
    for (_, two_j, tower) in channels {
        copy = if last_j == Some(two_j) { copy + 1 } else { 1 };
        last_j = Some(two_j);
        for (a, col) in tower.into_iter().enumerate() {
            let label = (two_j as i32, two_j as i32 - 2 * a as i32, copy);
            columns.push((label, col.into_iter().map(|x| C64::new(x, 0.0)).collect()));
        }
    }
    table_from_columns(&system, columns)
}

/// Decomposition of a spin system with its `J_z`-adapted Clebsch–Gordan matrix.
#[derive(Debug, Clone)]
pub struct SpinDecomposition {
    pub system: SpinSystem,
    pub result: DecompositionResult,
    pub vz: CMatrix,
    pub cz: CMatrix,
    pub table: CGTable,
}

impl SpinDecomposition {
    /// `χ̂^α(s) = Tr(L^α† D(s) L^α) / c_α`.
    pub fn character(&self, alpha: usize, s: [f64; 3]) -> Result<C64, LinalgError> {
        let basis = self.result.block_basis(alpha);
        let d = self.system.element(s)?;
        let c = self.result.blocks[alpha].multiplicity as f64;
        Ok((&(&basis.adjoint() * &d) * &basis).trace() / c)
    }

    /// Spin `J` (doubled) of each block.
    pub fn two_js(&self) -> Vec<usize> {
        self.result.blocks.iter().map(|b| b.dim - 1).collect()
    }
}

impl SpinDecomposition {
    /// Characters of every block at one group element.
    pub fn characters_at(&self, s: [f64; 3]) -> Result<Vec<C64>, LinalgError> {
        let d = self.system.element(s)?;
        Ok((0..self.result.blocks.len())
            .map(|alpha| {
                let basis = self.result.block_basis(alpha);
                let c = self.result.blocks[alpha].multiplicity as f64;
                (&(&basis.adjoint() * &d) * &basis).trace() / c
            })
            .collect())
    }

    /// Sampled character error against the closed-form characters.
    pub fn chi_error(&self, quadrature: &Quadrature) -> Result<f64, LinalgError> {
        let dims: Vec<usize> = self.result.blocks.iter().map(|b| b.dim).collect();
        char_error_lie(
            |s| dims.iter().map(|&n| C64::new(exact_character(n, s), 0.0)).collect(),
            |s| self.characters_at(s),
            quadrature,
        )
    }
}

/// Labels ordered by `J` descending, then `M` descending, then copy.
fn tower_major(labels: &[ColumnLabel]) -> Vec<ColumnLabel> {
    let mut out = labels.to_vec();
    out.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    out
}

/// Distance of `O = C_z† C_oracle` from the allowed gauge: block diagonal in
/// `(J, M)`, each `c × c` block orthogonal, and the same up to column and
/// row signs all the way down a tower. Returns the largest violation.
pub fn compare_with_oracle(table: &CGTable, oracle: &CGTable) -> Result<f64, Su2Error> {
    let labels = tower_major(&table.labels());
    if labels != tower_major(&oracle.labels()) {
        return Err(Su2Error::StructureMismatch(format!(
            "{} columns against {} in the oracle",
            labels.len(),
            oracle.labels().len()
        )));
    }
    let a = table.to_matrix(&labels);
    let b = oracle.to_matrix(&labels);
    let o = &a.adjoint() * &b;

    let mut groups: Vec<(i32, i32, usize, usize)> = Vec::new();
    for (k, l) in labels.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (g.0, g.1) == (l.0, l.1) => g.3 += 1,
            _ => groups.push((l.0, l.1, k, 1)),
        }
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.3).collect();
    let mut worst = o.off_block_norm(&sizes);
    let mut top: Option<(i32, CMatrix)> = None;
    for &(two_j, _, start, size) in &groups {
        let block = o.block(start, start, size, size);
        worst = worst.max(block.unitarity_defect()).max(block.max_abs_imag());
        let magnitude = CMatrix::from_fn(size, size, |i, j| C64::new(block[(i, j)].norm(), 0.0));
        match &top {
            Some((j, first)) if *j == two_j && first.rows() == size => {
                worst = worst.max((&magnitude - first).frobenius_norm());
            }
            _ => top = Some((two_j, magnitude)),
        }
    }
    Ok(worst)
}

pub fn decompose_spins(spins: &[Spin], cfg: &SmilyConfig, cap: usize) -> Result<SpinDecomposition, Su2Error> {
    let system = SpinSystem::with_cap(spins, cap)?;
    let probes = residual_probes(&system, cfg.seed)?;
    let result = smily_decompose(&SpinTau(&system), &probes, cfg)?;
    let (vz, cz) = jz_rotation(&result.cg, &system.jz, &result.blocks)?;
    let (gauge, cz) = real_gauge(&cz, &system, &result.blocks)?;
    let vz = &vz * &gauge;
    let table = extract_cg_table(&cz, &system, &result.blocks)?;
    Ok(SpinDecomposition { system, result, vz, cz, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin(s: &str) -> Spin {
        s.parse().unwrap()
    }

    #[test]
    fn parse_spin_forms() {
        assert_eq!(spin("3/2").two_j, 3);
        assert_eq!(spin("1").two_j, 2);
        assert_eq!(spin("0").two_j, 0);
        assert_eq!(spin(" 4/2 ").two_j, 4);
        assert!("3/4".parse::<Spin>().is_err());
        assert!("-1".parse::<Spin>().is_err());
        assert!("x".parse::<Spin>().is_err());
        assert_eq!(parse_spins("1/2,1/2,3/2").unwrap().len(), 3);
        assert_eq!(spin("3/2").to_string(), "3/2");
        assert_eq!(spin("2").to_string(), "2");
    }

    #[test]
    fn spin_zero_generators_vanish() {
        let (x, y, z) = angular_momentum(spin("0"));
        for m in [x, y, z] {
            assert_eq!(m, CMatrix::zeros(1, 1));
        }
    }

    #[test]
    fn spin_half_is_half_pauli() {
        let (x, y, z) = angular_momentum(spin("1/2"));
        let h = |a: [C64; 4]| CMatrix::from_row_major(2, 2, &a).unwrap();
        let (o, r, i) = (C64::new(0.0, 0.0), C64::new(0.5, 0.0), C64::new(0.0, 0.5));
        assert!(x.approx_eq(&h([o, r, r, o]), 1e-15));
        assert!(y.approx_eq(&h([o, -i, i, o]), 1e-15));
        assert!(z.approx_eq(&h([r, o, o, -r]), 1e-15));
    }

    #[test]
    fn spin_three_halves_matches_displayed_matrices() {
        let (x, _, z) = angular_momentum(spin("3/2"));
        let r3 = 3f64.sqrt() / 2.0;
        let expected =
            CMatrix::from_real(4, 4, &[0., r3, 0., 0., r3, 0., 1., 0., 0., 1., 0., r3, 0., 0., r3, 0.]).unwrap();
        assert!(x.approx_eq(&expected, 1e-15));
        let zd: Vec<f64> = (0..4).map(|a| z[(a, a)].re).collect();
        assert_eq!(zd, vec![1.5, 0.5, -0.5, -1.5]);
    }

    #[test]
    fn exp_rep_special_cases() {
        assert!(exp_rep(spin("3/2"), [0.0; 3]).unwrap().approx_eq(&CMatrix::identity(4), 1e-14));
        let theta = 0.83;
        let d = exp_rep(spin("1/2"), [0.0, 0.0, theta]).unwrap();
        let expected = CMatrix::from_diagonal(&[C64::from_polar(1.0, theta / 2.0), C64::from_polar(1.0, -theta / 2.0)]);
        assert!(d.approx_eq(&expected, 1e-14));
    }

    #[test]
    fn exact_character_small() {
        assert_eq!(exact_character(1, [0.3, 2.0, -1.0]), 1.0);
        assert_eq!(exact_character(2, [0.0; 3]), 2.0);
        assert!((exact_character(5, [0.0; 3]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_system_basics() {
        let one = SpinSystem::new(&[spin("1")]).unwrap();
        let (_, _, z) = angular_momentum(spin("1"));
        assert_eq!(one.jz, z);

        let pair = SpinSystem::new(&[spin("1/2"), spin("1/2")]).unwrap();
        let d: Vec<f64> = (0..4).map(|a| pair.jz[(a, a)].re).collect();
        assert_eq!(d, vec![1.0, 0.0, 0.0, -1.0]);
        assert!(pair
            .jz
            .approx_eq(&CMatrix::from_diagonal(&d.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>()), 0.0));

        assert_eq!(SpinSystem::new(&[spin("3/2"), spin("1")]).unwrap().dim(), 12);
        assert!(matches!(
            SpinSystem::with_cap(&[spin("3/2"), spin("1")], 10),
            Err(Su2Error::DimensionCap { dim: 12, cap: 10 })
        ));
    }

    #[test]
    fn element_matches_total_generator_exponential() {
        let sys = SpinSystem::new(&[spin("1/2"), spin("1")]).unwrap();
        let s = [0.4, -1.1, 2.3];
        let a = sys.element(s).unwrap();
        let b = sys.element_from_generators(s).unwrap();
        assert!(a.approx_eq(&b, 1e-12));
    }

    #[test]
    fn two_m_labels() {
        let sys = SpinSystem::new(&[spin("3/2"), spin("1")]).unwrap();
        assert_eq!(sys.two_m(0), vec![3, 2]);
        assert_eq!(sys.two_m(4), vec![1, 0]);
        assert_eq!(sys.two_m(11), vec![-3, -2]);
        for idx in 0..12 {
            assert_eq!(product_index(&sys.spins, &sys.two_m(idx)), idx);
        }
    }

    #[test]
    fn oracle_singlet_triplet() {
        let t = ladder_oracle(&[spin("1/2"), spin("1/2")]).unwrap();
        let r = 0.5f64.sqrt();
        let triplet0 = t.column((2, 0, 1));
        assert!((triplet0[1] - r).abs() < 1e-14 && (triplet0[2] - r).abs() < 1e-14);
        let singlet = t.column((0, 0, 1));
        assert!((singlet[1] - r).abs() < 1e-14 && (singlet[2] + r).abs() < 1e-14);
        assert_eq!(t.column((2, 2, 1)), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn oracle_three_spin_structure() {
        let t = ladder_oracle(&[spin("1/2"), spin("1/2"), spin("3/2")]).unwrap();
        let labels = t.labels();
        assert_eq!(labels.len(), 16);
        assert_eq!(labels.iter().filter(|l| l.0 == 3).count(), 8);
        assert!(labels.contains(&(3, 3, 2)));
        let m = t.to_matrix(&labels);
        assert!(m.is_unitary(1e-12));
    }

    #[test]
    fn coefficient_formatting() {
        assert_eq!(format_coefficient(1.0), "1.0000000000000000");
        assert_eq!(format_coefficient(-0.5f64.sqrt()), "-0.70710678118654757");
        assert_eq!(format_coefficient(0.0), "0");
        for x in [0.123_456_789_012_345_68, -0.0314159, 1e-5, 0.9999999999999999] {
            assert_eq!(format_coefficient(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let spins = [spin("1/2"), spin("1")];
        let t = ladder_oracle(&spins).unwrap();
        let text = t.to_csv();
        assert!(text.starts_with("two_m_1,two_m_2,two_J,two_M,c,coefficient\n"));
        assert_eq!(CGTable::from_csv(&text, &spins).unwrap(), t);
        assert!(matches!(CGTable::from_csv(&text, &[spin("1/2")]), Err(Su2Error::Csv { line: 1, .. })));
        let broken = text.replace("0.8164", "x.8164");
        assert!(matches!(CGTable::from_csv(&broken, &spins), Err(Su2Error::Csv { .. })));
    }

    #[test]
    fn json_uses_table_field_names() {
        let t = ladder_oracle(&[spin("0")]).unwrap();
        let v = serde_json::to_value(&t).unwrap();
        let e = &v["entries"][0];
        assert_eq!(e["two_J"], 0);
        assert_eq!(e["two_M"], 0);
        assert_eq!(e["c"], 1);
        assert_eq!(serde_json::from_value::<CGTable>(v).unwrap(), t);
    }

    #[test]
    fn oracle_comparison_gauge() {
        let spins = [spin("1/2"), spin("1/2"), spin("1/2")];
        let t = ladder_oracle(&spins).unwrap();
        assert!(compare_with_oracle(&t, &t).unwrap() < 1e-14);

        // flipping the sign of one column is within the gauge
        let mut flipped = t.clone();
        for e in flipped.entries.iter_mut().filter(|e| (e.two_j, e.two_m_total, e.copy) == (1, -1, 2)) {
            e.coefficient = -e.coefficient;
        }
        assert!(compare_with_oracle(&flipped, &t).unwrap() < 1e-14);

        // relabelling M inside one copy is not
        let mut swapped = t.clone();
        for e in swapped.entries.iter_mut().filter(|e| e.two_j == 3) {
            e.two_m_total = -e.two_m_total;
        }
        assert!(compare_with_oracle(&swapped, &t).unwrap() > 0.5);

        let other = ladder_oracle(&[spin("3/2"), spin("0"), spin("0")]).unwrap();
        assert!(matches!(compare_with_oracle(&other, &t), Err(Su2Error::StructureMismatch(_))));
    }

    #[test]
    fn racah_formula_matches_oracle() {
        fn fact(n: i32) -> f64 {
            (1..=n).map(f64::from).product()
        }
        // Closed-form two-spin coefficient with doubled arguments.
        fn racah(j1: i32, m1: i32, j2: i32, m2: i32, j: i32, m: i32) -> f64 {
            if m1 + m2 != m {
                return 0.0;
            }
            let h = |x: i32| x / 2;
            let pre = ((j + 1) as f64 * fact(h(j1 + j2 - j)) * fact(h(j1 - j2 + j)) * fact(h(-j1 + j2 + j))
                / fact(h(j1 + j2 + j) + 1))
            .sqrt();
            let norm = (fact(h(j1 + m1))
                * fact(h(j1 - m1))
                * fact(h(j2 + m2))
                * fact(h(j2 - m2))
                * fact(h(j + m))
                * fact(h(j - m)))
            .sqrt();
            let mut sum = 0.0;
            for k in 0..=h(j1 + j2 - j) {
                let d = [h(j1 + j2 - j) - k, h(j1 - m1) - k, h(j2 + m2) - k, h(j - j2 + m1) + k, h(j - j1 - m2) + k];
                if d.iter().any(|&x| x < 0) {
                    continue;
                }
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign / (fact(k) * d.iter().map(|&x| fact(x)).product::<f64>());
            }
            pre * norm * sum
        }
        for (a, b) in [("1/2", "1/2"), ("3/2", "1"), ("1", "1"), ("2", "3/2")] {
            let spins = [spin(a), spin(b)];
            let t = ladder_oracle(&spins).unwrap();
            let sys = SpinSystem::new(&spins).unwrap();
            for label in t.labels() {
                let col = t.column(label);
                for (idx, &v) in col.iter().enumerate() {
                    let m = sys.two_m(idx);
                    let expected = racah(spins[0].two_j as i32, m[0], spins[1].two_j as i32, m[1], label.0, label.1);
                    assert!((v - expected).abs() < 1e-12, "{a}x{b} {label:?} {m:?}: {v} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn jz_rotation_rejects_wrong_spectrum() {
        let sys = SpinSystem::new(&[spin("1")]).unwrap();
        let bad = [BlockSpec { dim: 1, multiplicity: 3, eigenvalues: vec![0.0] }];
        assert!(matches!(jz_rotation(&CMatrix::identity(3), &sys.jz, &bad), Err(Su2Error::EigenvalueMismatch { .. })));
        let good = [BlockSpec { dim: 3, multiplicity: 1, eigenvalues: vec![0.0; 3] }];
        let (_, cz) = jz_rotation(&CMatrix::identity(3), &sys.jz, &good).unwrap();
        let d = &(&cz.adjoint() * &sys.jz) * &cz;
        for a in 0..3 {
            assert!((d[(a, a)].re - (1.0 - a as f64)).abs() < 1e-12);
        }
    }
}
