//! Random adapted states: density matrices in the linear span of the
//! representation matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::groups::{t_matrix, FiniteRep, GroupTable};
use crate::linalg::{hermitian_eig, CMatrix, LinalgError, C64};

pub const DEFAULT_MIN_MAGNITUDE: f64 = 1e-3;
pub const DEFAULT_STATE_RESAMPLES: usize = 5;
const TRACE_FLOOR: f64 = 1e-12;

pub type StateRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("normalizing trace {0:e} is degenerate")]
    DegenerateTrace(f64),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateVariant {
    /// `τ + τ†` shifted by its spectral radius.
    FiniteShifted,
    /// `ρ̃ ρ̃ᵗ` with `ρ̃ = τ + τ*`; real symmetric.
    RealPsd,
}

#[derive(Debug, Clone)]
pub struct AdaptedState {
    pub rho: CMatrix,
    pub coefficients: Vec<f64>,
    pub seed: u64,
    pub variant: StateVariant,
}

pub fn rng_from_seed(seed: u64) -> StateRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `r` values uniform on `[-1, 1]`, each redrawn until `|φ| ≥ min_mag`.
pub fn random_coefficients<R: Rng + ?Sized>(r: usize, rng: &mut R, min_mag: f64) -> Vec<f64> {
    (0..r)
        .map(|_| loop {
            let x: f64 = rng.random_range(-1.0..=1.0);
            if x.abs() >= min_mag {
                break x;
            }
        })
        .collect()
}

/// `φ_j e^{iθ_j}` with `θ_j` uniform on `[0, 2π)`.
///
/// Real coefficients make `ρ` invariant under an antiunitary symmetry
/// (complex conjugation for real representations, time reversal for
/// SU(2)), which pairs the eigenvalues of conjugate or quaternionic
/// irreps. Random phases remove that pairing.
pub fn with_random_phases<R: Rng + ?Sized>(phi: &[f64], rng: &mut R) -> Vec<C64> {
    phi.iter().map(|&p| C64::from_polar(p, rng.random_range(0.0..std::f64::consts::TAU))).collect()
}

/// `[τ]_{ij} = φ(T_{ij})`, i.e. `Σ_k φ_k D^{reg}(g_k)` without forming the
/// regular representation.
pub fn tau_from_table<T: Copy + Into<C64>>(g: &GroupTable, phi: &[T]) -> CMatrix {
    assert_eq!(phi.len(), g.order(), "one coefficient per group element");
    let t = t_matrix(g);
    let s = g.order();
    CMatrix::from_fn(s, s, |i, j| phi[t[i][j]].into())
}

/// `Σ_j φ_j D(h_j)`.
pub fn tau_from_rep(rep: &FiniteRep, phi: &[C64]) -> CMatrix {
    assert_eq!(phi.len(), rep.matrices.len(), "one coefficient per group element");
    let mut acc = CMatrix::zeros(rep.dim, rep.dim);
    for (m, &c) in rep.matrices.iter().zip(phi) {
        acc = &acc + &m.scale(c);
    }
    acc
}

fn spectral_radius(h: &CMatrix) -> Result<f64, LinalgError> {
    let eig = hermitian_eig(h, 1e-10)?;
    Ok(eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

fn normalize(rho: CMatrix) -> Result<CMatrix, StateError> {
    let tr = rho.trace().re;
    if tr.abs() < TRACE_FLOOR {
        return Err(StateError::DegenerateTrace(tr));
    }
    Ok(rho.scale_real(1.0 / tr))
}

/// `ρ = (τ + τ† + r I) / Tr(τ + τ† + r I)` with `r` the spectral radius of `τ + τ†`.
pub fn adapt_shifted(tau: &CMatrix) -> Result<AdaptedState, StateError> {
    let sym = tau + &tau.adjoint();
    let radius = spectral_radius(&sym)?;
    let shifted = &sym + &CMatrix::identity(sym.rows()).scale_real(radius);
    Ok(AdaptedState { rho: normalize(shifted)?, coefficients: vec![], seed: 0, variant: StateVariant::FiniteShifted })
}

/// `ρ = ρ̃ ρ̃ᵗ / Tr(ρ̃ ρ̃ᵗ)` with `ρ̃ = τ + τ*`.
pub fn adapt_real_psd(tau: &CMatrix) -> Result<AdaptedState, StateError> {
    let real = tau + &tau.conj();
    let prod = &real * &real.transpose();
    Ok(AdaptedState { rho: normalize(prod)?, coefficients: vec![], seed: 0, variant: StateVariant::RealPsd })
}

pub fn adapt(tau: &CMatrix, variant: StateVariant) -> Result<AdaptedState, StateError> {
    match variant {
        StateVariant::FiniteShifted => adapt_shifted(tau),
        StateVariant::RealPsd => adapt_real_psd(tau),
    }
}

/// Draws `coefficient_count` coefficients and turns them into `τ`. The
/// builder may draw further randomness (e.g. group elements) from the rng.
pub trait TauBuilder {
    fn coefficient_count(&self) -> usize;
    fn variant(&self) -> StateVariant;
    fn build(&self, phi: &[f64], rng: &mut StateRng) -> Result<CMatrix, StateError>;
}

/// Two adapted states from independent coefficient draws of one seeded rng.
pub fn generate_pair<B: TauBuilder + ?Sized>(
    builder: &B,
    seed: u64,
) -> Result<(AdaptedState, AdaptedState), StateError> {
    let mut rng = rng_from_seed(seed);
    let first = generate_one(builder, &mut rng, seed)?;
    let second = generate_one(builder, &mut rng, seed)?;
    Ok((first, second))
}

fn generate_one<B: TauBuilder + ?Sized>(
    builder: &B,
    rng: &mut StateRng,
    seed: u64,
) -> Result<AdaptedState, StateError> {
    let mut last = StateError::DegenerateTrace(0.0);
    for _ in 0..DEFAULT_STATE_RESAMPLES {
        let phi = random_coefficients(builder.coefficient_count(), rng, DEFAULT_MIN_MAGNITUDE);
        let tau = builder.build(&phi, rng)?;
        match adapt(&tau, builder.variant()) {
            Ok(mut state) => {
                state.coefficients = phi;
                state.seed = seed;
                return Ok(state);
            }
            Err(e @ StateError::DegenerateTrace(_)) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Regular representation, `τ` evaluated directly on the table.
pub struct RegularTau<'a>(pub &'a GroupTable);

impl TauBuilder for RegularTau<'_> {
    fn coefficient_count(&self) -> usize {
        self.0.order()
    }
    fn variant(&self) -> StateVariant {
        StateVariant::FiniteShifted
    }
    fn build(&self, phi: &[f64], rng: &mut StateRng) -> Result<CMatrix, StateError> {
        Ok(tau_from_table(self.0, &with_random_phases(phi, rng)))
    }
}

/// Any finite representation given by its matrices.
pub struct RepTau<'a>(pub &'a FiniteRep);

impl TauBuilder for RepTau<'_> {
    fn coefficient_count(&self) -> usize {
        self.0.matrices.len()
    }
    fn variant(&self) -> StateVariant {
        StateVariant::FiniteShifted
    }
    fn build(&self, phi: &[f64], rng: &mut StateRng) -> Result<CMatrix, StateError> {
        Ok(tau_from_rep(self.0, &with_random_phases(phi, rng)))
    }
}

/// Validity report of a state: trace, Hermiticity and spectrum.
pub fn state_defects(rho: &CMatrix) -> Result<(f64, f64, f64), LinalgError> {
    let trace_defect = (rho.trace() - C64::new(1.0, 0.0)).norm();
    let herm = rho.hermiticity_defect();
    let eig = hermitian_eig(rho, 1e-10)?;
    let min = eig.values.last().copied().unwrap_or(0.0);
    Ok((trace_defect, herm, min))
}
