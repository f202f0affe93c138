//! Observables reported by the simulator.
//!
//! Everything here is frame-robust by construction. Fock populations, the
//! atomic ground probability, and the excitation count are diagonal in the
//! working basis; the entropy depends only on reduced-state spectra; the
//! Bell fidelity is optimized over the relative phase of its target, which
//! absorbs the rotating-frame and dynamical phases that a fixed target
//! would spuriously penalize.

use ndarray::Array2;
use ndarray_linalg::{EigValsh, UPLO};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::hilbert::{partial_trace, HilbertError, State, Subsystem};
use crate::C64;

/// Reduced-state eigenvalues at or below this weight contribute no entropy.
pub const ENTROPY_EIGENVALUE_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ObserveError {
    #[error("bell target photon number {m} exceeds the truncation n_max={n_max}")]
    BellTargetOutOfRange { m: usize, n_max: usize },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

/// Everything the runner writes per time point.
///
/// `bell_fidelity` is present only when a target photon number is
/// configured; `trace` only for mixed states, where it doubles as an
/// integration health indicator.
#[derive(Debug, Clone)]
pub struct ObservableRecord {
    pub t: f64,
    pub pop: BTreeMap<(usize, usize), f64>,
    pub p_ground: f64,
    pub entropy_bits: f64,
    pub bell_fidelity: Option<f64>,
    pub n_expect: f64,
    pub trace: Option<f64>,
}

impl ObservableRecord {
    pub fn measure(state: &State, t: f64, bell_target: Option<usize>) -> Result<Self, ObserveError> {
        let bell_fidelity = match bell_target {
            Some(m) => Some(bell_fidelity(state, m)?),
            None => None,
        };
        let trace = match state {
            State::Pure(_) => None,
            State::Mixed(rho) => Some(rho.trace()),
        };
        Ok(Self {
            t,
            pop: photon_populations(state),
            p_ground: atom_ground_probability(state),
            entropy_bits: entanglement_entropy(state)?,
            bell_fidelity,
            n_expect: excitation_number(state),
            trace,
        })
    }
}

/// Weight the diagonal of a state with a label-dependent function.
fn diagonal_sum(state: &State, mut weight: impl FnMut(usize, usize, usize) -> f64) -> f64 {
    let space = state.space();
    let mut total = 0.0;
    for index in 0..space.dim() {
        let (alpha, m, n) = space.decode(index);
        let p = match state {
            State::Pure(psi) => psi.amplitudes[index].norm_sqr(),
            State::Mixed(rho) => rho.entries[[index, index]].re,
        };
        total += p * weight(alpha, m, n);
    }
    total
}

/// Probability of finding m photons in mode a and n in mode b, atomic
/// level summed over.
pub fn photon_populations(state: &State) -> BTreeMap<(usize, usize), f64> {
    let space = state.space();
    let f = space.fock_dim();
    let mut pop = BTreeMap::new();
    for m in 0..f {
        for n in 0..f {
            pop.insert((m, n), 0.0);
        }
    }
    for index in 0..space.dim() {
        let (_, m, n) = space.decode(index);
        let p = match state {
            State::Pure(psi) => psi.amplitudes[index].norm_sqr(),
            State::Mixed(rho) => rho.entries[[index, index]].re,
        };
        *pop.get_mut(&(m, n)).expect("preseeded label") += p;
    }
    pop
}

/// Probability of the atom sitting in its ground level, photons anywhere.
/// A field-only space has the atom eliminated in the ground state, so the
/// answer there is one by convention.
pub fn atom_ground_probability(state: &State) -> f64 {
    if state.space().atom_dim == 1 {
        return 1.0;
    }
    diagonal_sum(state, |alpha, _, _| if alpha == 0 { 1.0 } else { 0.0 })
}

/// Base-2 von Neumann entropy of mode a after tracing out the atom and
/// mode b.
///
/// For pure global states this measures mode-mode entanglement (the atom
/// stays unentangled in the scheme); for decaying states it is reported
/// as-is even though mixedness also contributes, which is worth keeping in
/// mind when reading dissipative runs.
pub fn entanglement_entropy(state: &State) -> Result<f64, ObserveError> {
    let space = state.space();
    let f = space.fock_dim();
    let reduced: Array2<C64> = match state {
        State::Pure(psi) => {
            // Direct contraction avoids building the full projector.
            let mut out = Array2::zeros((f, f));
            for row in 0..f {
                for col in 0..f {
                    let mut sum = C64::new(0.0, 0.0);
                    for alpha in 0..space.atom_dim {
                        for n in 0..f {
                            sum += psi.amplitudes[space.encode(alpha, row, n)]
                                * psi.amplitudes[space.encode(alpha, col, n)].conj();
                        }
                    }
                    out[[row, col]] = sum;
                }
            }
            out
        }
        State::Mixed(rho) => partial_trace(rho, Subsystem::ModeA),
    };
    let eigenvalues = reduced.eigvalsh(UPLO::Lower)?;
    let mut bits = 0.0;
    for w in eigenvalues {
        if w > ENTROPY_EIGENVALUE_CUTOFF {
            bits -= w * w.log2();
        }
    }
    Ok(bits)
}

/// Overlap with the nearest pair state (|m,0⟩ + e^{iφ}|0,m⟩)/√2, atom in
/// ground, maximized over the relative phase φ. The maximum has the closed
/// form ½(ρ_{m0,m0} + ρ_{0m,0m}) + |ρ_{m0,0m}|.
pub fn bell_fidelity(state: &State, m: usize) -> Result<f64, ObserveError> {
    let space = state.space();
    if m > space.n_max {
        return Err(ObserveError::BellTargetOutOfRange { m, n_max: space.n_max });
    }
    let one = space.encode(0, m, 0);
    let two = space.encode(0, 0, m);
    let (p_one, p_two, coherence) = match state {
        State::Pure(psi) => {
            let c1 = psi.amplitudes[one];
            let c2 = psi.amplitudes[two];
            (c1.norm_sqr(), c2.norm_sqr(), (c1 * c2.conj()).norm())
        }
        State::Mixed(rho) => (
            rho.entries[[one, one]].re,
            rho.entries[[two, two]].re,
            rho.entries[[one, two]].norm(),
        ),
    };
    Ok(0.5 * (p_one + p_two) + coherence)
}

/// Expected excitation count: one per photon, one per intermediate atomic
/// level, two for the upper level. Conserved by every closed model tier.
pub fn excitation_number(state: &State) -> f64 {
    let weights: [f64; 4] = match state.space().atom_dim {
        4 => [0.0, 1.0, 1.0, 2.0],
        2 => [0.0, 2.0, 0.0, 0.0],
        _ => [0.0; 4],
    };
    diagonal_sum(state, |alpha, m, n| (m + n) as f64 + weights[alpha])
}
