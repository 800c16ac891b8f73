//! Finite groups given by Cayley tables, and their unitary representations.
//!
//! Element indices are 0-based in memory; element 0 is the identity. The
//! text and JSON formats use 1-based indices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{CMatrix, C64};

/// Default largest order for which associativity is checked.
pub const DEFAULT_ASSOCIATIVITY_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    LatinSquare,
    Identity,
    Inverse,
    Associativity,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Offending triple `(i, j, k)` is reported 1-based.
    #[error("not a group: {axiom:?} fails at ({i}, {j}, {k})")]
    NotAGroup { axiom: Axiom, i: usize, j: usize, k: usize },

    #[error("expected {expected} matrices, got {got}")]
    MatrixCount { expected: usize, got: usize },

    #[error("matrix {element} has shape {rows}x{cols}, expected {dim}x{dim}")]
    MatrixShape { element: usize, rows: usize, cols: usize, dim: usize },

    #[error("matrix of element {element} is not unitary (defect {defect:e})")]
    NotUnitary { element: usize, defect: f64 },

    #[error("D({i}) D({j}) differs from D({i}*{j}) (defect {defect:e})")]
    NotHomomorphism { i: usize, j: usize, defect: f64 },

    #[error("matrix of the identity element is not the identity (defect {defect:e})")]
    IdentityMismatch { element: usize, defect: f64 },

    #[error("invalid representation file: {0}")]
    Json(String),
}

/// Validated Cayley table; `product(i, j)` is the index of `g_i g_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTable {
    cayley: Vec<Vec<usize>>,
    inverses: Vec<usize>,
}

impl GroupTable {
    /// Validates a 1-based Cayley table. Associativity is checked only when
    /// the order is at most `associativity_cap`.
    #[allow(clippy::needless_range_loop)]
    pub fn from_cayley(rows: &[Vec<usize>], associativity_cap: usize) -> Result<Self, GroupError> {
        let s = rows.len();
        if s == 0 {
            return Err(GroupError::Parse { line: 0, message: "empty table".into() });
        }
        let mut cayley = Vec::with_capacity(s);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != s {
                return Err(GroupError::Parse {
                    line: i + 1,
                    message: format!("row {} has {} entries, expected {s}", i + 1, row.len()),
                });
            }
            let mut r = Vec::with_capacity(s);
            for &v in row {
                if v == 0 || v > s {
                    return Err(GroupError::Parse { line: i + 1, message: format!("entry {v} outside 1..={s}") });
                }
                r.push(v - 1);
            }
            cayley.push(r);
        }

        let not_a_group =
            |axiom, i: usize, j: usize, k: usize| GroupError::NotAGroup { axiom, i: i + 1, j: j + 1, k: k + 1 };

        // Latin square: first repeated value in each row, then in each column.
        for i in 0..s {
            let mut seen = vec![false; s];
            for j in 0..s {
                let v = cayley[i][j];
                if std::mem::replace(&mut seen[v], true) {
                    return Err(not_a_group(Axiom::LatinSquare, i, j, v));
                }
            }
        }
        for j in 0..s {
            let mut seen = vec![false; s];
            for i in 0..s {
                let v = cayley[i][j];
                if std::mem::replace(&mut seen[v], true) {
                    return Err(not_a_group(Axiom::LatinSquare, i, j, v));
                }
            }
        }

        for j in 0..s {
            if cayley[0][j] != j {
                return Err(not_a_group(Axiom::Identity, 0, j, cayley[0][j]));
            }
            if cayley[j][0] != j {
                return Err(not_a_group(Axiom::Identity, j, 0, cayley[j][0]));
            }
        }

        let mut inverses = Vec::with_capacity(s);
        for i in 0..s {
            // Latin rows guarantee a unique right inverse; require it to be two-sided.
            let inv = cayley[i].iter().position(|&v| v == 0).expect("latin row contains identity");
            if cayley[inv][i] != 0 {
                return Err(not_a_group(Axiom::Inverse, i, inv, cayley[inv][i]));
            }
            inverses.push(inv);
        }

        let table = GroupTable { cayley, inverses };
        if s <= associativity_cap {
            table.check_associativity()?;
        }
        Ok(table)
    }

    /// O(s³) associativity check.
    pub fn check_associativity(&self) -> Result<(), GroupError> {
        let s = self.order();
        for i in 0..s {
            for j in 0..s {
                let ij = self.cayley[i][j];
                for k in 0..s {
                    if self.cayley[ij][k] != self.cayley[i][self.cayley[j][k]] {
                        return Err(GroupError::NotAGroup {
                            axiom: Axiom::Associativity,
                            i: i + 1,
                            j: j + 1,
                            k: k + 1,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.cayley.len()
    }

    pub fn identity(&self) -> usize {
        0
    }

    pub fn product(&self, i: usize, j: usize) -> usize {
        self.cayley[i][j]
    }

    pub fn inverse(&self, i: usize) -> usize {
        self.inverses[i]
    }

    pub fn inverses(&self) -> &[usize] {
        &self.inverses
    }

    /// 1-based rows, as written in the text format.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.cayley.iter().map(|r| r.iter().map(|v| v + 1).collect()).collect()
    }

    /// Conjugacy class label of every element (index of the class's first member).
    pub fn conjugacy_classes(&self) -> Vec<usize> {
        let s = self.order();
        let mut label = vec![usize::MAX; s];
        for h in 0..s {
            if label[h] != usize::MAX {
                continue;
            }
            for g in 0..s {
                let c = self.product(self.product(g, h), self.inverse(g));
                label[c] = h;
            }
        }
        label
    }
}

/// Parses the Cayley table text format: `#` comment lines, the order `s`,
/// then `s` rows of `s` 1-based indices.
pub fn parse_cayley_table(text: &str, associativity_cap: usize) -> Result<GroupTable, GroupError> {
    let mut lines =
        text.lines().enumerate().map(|(n, l)| (n + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line, first) = lines.next().ok_or(GroupError::Parse { line: 0, message: "missing order".into() })?;
    let s: usize = first
        .parse()
        .map_err(|_| GroupError::Parse { line, message: format!("expected group order, found {first:?}") })?;
    if s == 0 {
        return Err(GroupError::Parse { line, message: "group order must be positive".into() });
    }

    let mut rows = Vec::with_capacity(s);
    for _ in 0..s {
        let (line, text) = lines
            .next()
            .ok_or(GroupError::Parse { line: 0, message: format!("expected {s} rows, found {}", rows.len()) })?;
        let row = text
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GroupError::Parse { line, message: e.to_string() })?;
        if row.len() != s {
            return Err(GroupError::Parse { line, message: format!("expected {s} entries, found {}", row.len()) });
        }
        rows.push(row);
    }
    if let Some((line, _)) = lines.next() {
        return Err(GroupError::Parse { line, message: "trailing content after table".into() });
    }
    GroupTable::from_cayley(&rows, associativity_cap)
}

/// `T[i][j]` = index of `g_i g_j⁻¹`.
pub fn t_matrix(g: &GroupTable) -> Vec<Vec<usize>> {
    let s = g.order();
    (0..s).map(|i| (0..s).map(|j| g.product(i, g.inverse(j))).collect()).collect()
}

/// A unitary matrix representation, one matrix per element in table order.
#[derive(Debug, Clone)]
pub struct FiniteRep {
    pub table: GroupTable,
    pub dim: usize,
    pub matrices: Vec<CMatrix>,
}

impl FiniteRep {
    pub fn matrix(&self, element: usize) -> &CMatrix {
        &self.matrices[element]
    }

    /// Character `Tr D(g)` of every element.
    pub fn character(&self) -> Vec<C64> {
        self.matrices.iter().map(CMatrix::trace).collect()
    }
}

/// Left regular representation: `D(g_k)` has ones where `T` equals `k`.
pub fn regular_rep(g: &GroupTable) -> FiniteRep {
    let s = g.order();
    let t = t_matrix(g);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let matrices = (0..s).map(|k| CMatrix::from_fn(s, s, |i, j| if t[i][j] == k { one } else { zero })).collect();
    FiniteRep { table: g.clone(), dim: s, matrices }
}

/// Wraps user matrices after checking identity, unitarity and the
/// homomorphism property within `tol` (Frobenius, relative to `√n`).
pub fn rep_from_matrices(table: GroupTable, matrices: Vec<CMatrix>, tol: f64) -> Result<FiniteRep, GroupError> {
    let s = table.order();
    if matrices.len() != s {
        return Err(GroupError::MatrixCount { expected: s, got: matrices.len() });
    }
    let dim = matrices[0].rows();
    for (k, m) in matrices.iter().enumerate() {
        if m.rows() != dim || m.cols() != dim || dim == 0 {
            return Err(GroupError::MatrixShape { element: k + 1, rows: m.rows(), cols: m.cols(), dim });
        }
    }
    let scale = (dim as f64).sqrt();
    let id_defect = (&matrices[0] - &CMatrix::identity(dim)).frobenius_norm();
    if id_defect > tol * scale {
        return Err(GroupError::IdentityMismatch { element: 1, defect: id_defect });
    }
    for (k, m) in matrices.iter().enumerate() {
        let defect = m.unitarity_defect();
        if defect > tol * scale {
            return Err(GroupError::NotUnitary { element: k + 1, defect });
        }
    }
    for i in 0..s {
        for j in 0..s {
            let prod = &matrices[i] * &matrices[j];
            let defect = (&prod - &matrices[table.product(i, j)]).frobenius_norm();
            if defect > tol * scale {
                return Err(GroupError::NotHomomorphism { i: i + 1, j: j + 1, defect });
            }
        }
    }
    Ok(FiniteRep { table, dim, matrices })
}

/// On-disk representation file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepFile {
    pub cayley: Vec<Vec<usize>>,
    pub matrices: Vec<Vec<Vec<[f64; 2]>>>,
}

impl RepFile {
    pub fn from_rep(rep: &FiniteRep) -> Self {
        let matrices = rep
            .matrices
            .iter()
            .map(|m| (0..m.rows()).map(|i| (0..m.cols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect())
            .collect();
        RepFile { cayley: rep.table.to_one_based(), matrices }
    }

    pub fn into_rep(self, associativity_cap: usize, tol: f64) -> Result<FiniteRep, GroupError> {
        let table = GroupTable::from_cayley(&self.cayley, associativity_cap)?;
        let mut mats = Vec::with_capacity(self.matrices.len());
        for (k, m) in self.matrices.into_iter().enumerate() {
            let rows = m.len();
            let cols = m.first().map_or(0, Vec::len);
            if m.iter().any(|r| r.len() != cols) {
                return Err(GroupError::Json(format!("matrix {} is ragged", k + 1)));
            }
            let entries: Vec<C64> = m.iter().flatten().map(|p| C64::new(p[0], p[1])).collect();
            mats.push(CMatrix::from_row_major(rows, cols, &entries).map_err(|e| GroupError::Json(e.to_string()))?);
        }
        rep_from_matrices(table, mats, tol)
    }
}

pub fn parse_rep_json(text: &str, associativity_cap: usize, tol: f64) -> Result<FiniteRep, GroupError> {
    let file: RepFile = serde_json::from_str(text).map_err(|e| GroupError::Json(e.to_string()))?;
    file.into_rep(associativity_cap, tol)
}
