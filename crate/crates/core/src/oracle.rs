//! Hand-solved reference dynamics for small invariant subspaces.
//!
//! The pair-exchange generator conserves total photon number, so an initial
//! pair state explores a two- or three-dimensional subspace whose evolution
//! can be written down by hand. The solutions here are coded directly from
//! those closed forms, with no call into the operator builders or the
//! propagators, so that agreement between the two paths is evidence rather
//! than tautology.

use ndarray::Array2;
use thiserror::Error;

use crate::model::ModelParams;
use crate::C64;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("the subspace solutions assume equal detunings (got {0} and {1})")]
    UnequalDetunings(f64, f64),
}

/// Amplitudes over a photon-pair basis, one row per requested time.
#[derive(Debug, Clone)]
pub struct SubspaceSolution {
    pub times: Vec<f64>,
    /// Photon labels (m, n) naming each amplitude column.
    pub basis: Vec<(usize, usize)>,
    pub amplitudes: Array2<C64>,
}

impl SubspaceSolution {
    fn assert_normalized(self) -> Self {
        for row in self.amplitudes.rows() {
            let norm: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() <= 1e-12, "closed form lost normalization");
        }
        self
    }
}

fn exchange_frequency(params: &ModelParams) -> Result<f64, OracleError> {
    if params.delta_1 != params.delta_2 {
        return Err(OracleError::UnequalDetunings(params.delta_1, params.delta_2));
    }
    let lambda = params.g * params.g / params.delta_1;
    Ok(lambda * lambda / params.delta_small)
}

/// Two-photon exchange started from |2,0⟩, on the basis {|2,0⟩, |0,2⟩}.
///
/// The restricted generator is ω(2I + 2σ_x) with ω = λ²/δ, so
/// exp(−iHt) = e^{−2iωt}(cos(2ωt)·I − i·sin(2ωt)·σ_x) and the transferred
/// population is sin²(2ωt).
pub fn rabi_two_level(params: &ModelParams, times: &[f64]) -> Result<SubspaceSolution, OracleError> {
    let w = exchange_frequency(params)?;
    let mut amplitudes = Array2::zeros((times.len(), 2));
    for (row, &t) in times.iter().enumerate() {
        let common = C64::from_polar(1.0, -2.0 * w * t);
        let angle = 2.0 * w * t;
        amplitudes[[row, 0]] = common * angle.cos();
        amplitudes[[row, 1]] = common * C64::new(0.0, -angle.sin());
    }
    Ok(SubspaceSolution {
        times: times.to_vec(),
        basis: vec![(2, 0), (0, 2)],
        amplitudes,
    }
    .assert_normalized())
}

/// Four-photon exchange started from |4,0⟩, on the basis
/// {|4,0⟩, |2,2⟩, |0,4⟩}.
///
/// The restriction of the pair-exchange generator to this basis is
/// ω·[[12, 2√6, 0], [2√6, 4, 2√6], [0, 2√6, 12]], whose spectrum is
/// {0, 12, 16}·ω with eigenvectors, in the same basis,
/// (1, −√3, 1)/(2√2) at 0, (1, 0, −1)/√2 at 12ω, and (√3, 1, √3)/(2√2)
/// at 16ω. Expanding |4,0⟩ in those vectors gives the three closed forms
/// below.
pub fn three_level(params: &ModelParams, times: &[f64]) -> Result<SubspaceSolution, OracleError> {
    let w = exchange_frequency(params)?;
    let mix = 6f64.sqrt() / 8.0;
    let mut amplitudes = Array2::zeros((times.len(), 3));
    for (row, &t) in times.iter().enumerate() {
        let breathing = C64::from_polar(1.0, -16.0 * w * t);
        let sloshing = C64::from_polar(1.0, -12.0 * w * t);
        amplitudes[[row, 0]] = 0.125 + 0.375 * breathing + 0.5 * sloshing;
        amplitudes[[row, 1]] = mix * (breathing - 1.0);
        amplitudes[[row, 2]] = 0.125 + 0.375 * breathing - 0.5 * sloshing;
    }
    Ok(SubspaceSolution {
        times: times.to_vec(),
        basis: vec![(4, 0), (2, 2), (0, 4)],
        amplitudes,
    }
    .assert_normalized())
}

/// Half-cycle time δπΔ²/(8g⁴), written out independently of the model
/// layer as a cross-module consistency check.
pub fn predicted_t0(params: &ModelParams) -> f64 {
    let delta = params.delta_1.abs().min(params.delta_2.abs());
    params.delta_small.abs() * std::f64::consts::PI * delta * delta / (8.0 * params.g.powi(4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{propagate_unitary, TimeGrid};
    use crate::hilbert::{HilbertSpace, Level, StateVector};
    use crate::model;
    use ndarray::Array1;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn params(delta: f64, small: f64) -> ModelParams {
        ModelParams {
            g: 1.0,
            delta_1: delta,
            delta_2: delta,
            delta_small: small,
            kappa: 0.0,
            gamma: 0.0,
            n_max: 2,
        }
    }

    #[test]
    fn transfer_probability_hits_the_textbook_marks() {
        let p = params(20.0, 5.0);
        let half = predicted_t0(&p);
        let solution = rabi_two_level(&p, &[0.0, half, 2.0 * half]).unwrap();
        let transferred: Vec<f64> = (0..3).map(|row| solution.amplitudes[[row, 1]].norm_sqr()).collect();
        assert!(transferred[0].abs() < 1e-15);
        assert!((transferred[1] - 0.5).abs() < 1e-12);
        assert!((transferred[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_photon_solution_starts_fully_in_its_corner() {
        let p = params(20.0, 5.0);
        let solution = three_level(&p, &[0.0]).unwrap();
        assert!((solution.amplitudes[[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(solution.amplitudes[[0, 1]].norm() < 1e-15);
        assert!(solution.amplitudes[[0, 2]].norm() < 1e-15);
    }

    #[test]
    fn closed_forms_stay_normalized_along_a_dense_sweep() {
        let p = params(8.0, 3.0);
        let times: Vec<f64> = (0..500).map(|k| k as f64 * 0.73).collect();
        // The builders assert 1e-12 normalization internally.
        rabi_two_level(&p, &times).unwrap();
        three_level(&p, &times).unwrap();
    }

    #[test]
    fn oracles_require_a_single_detuning() {
        let p = ModelParams { delta_2: 12.0, ..params(20.0, 5.0) };
        assert!(matches!(rabi_two_level(&p, &[0.0]), Err(OracleError::UnequalDetunings(_, _))));
        assert!(matches!(three_level(&p, &[0.0]), Err(OracleError::UnequalDetunings(_, _))));
    }

    #[test]
    fn pair_exchange_oracle_matches_the_propagator_amplitudes() {
        let p = params(20.0, 5.0);
        let space = HilbertSpace::new(2, 1).unwrap();
        let h = model::effective_hamiltonian(&p, space).unwrap();
        let psi0 = space.basis_state(Level::G, 2, 0).unwrap();
        let grid = TimeGrid::new(0.0, 4.0 * predicted_t0(&p), 100).unwrap();
        let run = propagate_unitary(&h, &psi0, grid).unwrap();
        let solution = rabi_two_level(&p, &grid.times()).unwrap();

        for (row, state) in run.states.iter().enumerate() {
            let crate::hilbert::State::Pure(psi) = state else { unreachable!() };
            for (col, &(m, n)) in solution.basis.iter().enumerate() {
                let simulated = psi.amplitudes[space.encode(0, m, n)];
                let predicted = solution.amplitudes[[row, col]];
                assert!((simulated - predicted).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn four_photon_oracle_matches_the_propagator_amplitudes() {
        let p = ModelParams { n_max: 4, ..params(20.0, 5.0) };
        let space = HilbertSpace::new(4, 1).unwrap();
        let h = model::effective_hamiltonian(&p, space).unwrap();
        let psi0 = space.basis_state(Level::G, 4, 0).unwrap();
        let grid = TimeGrid::new(0.0, 2.0 * predicted_t0(&p), 100).unwrap();
        let run = propagate_unitary(&h, &psi0, grid).unwrap();
        let solution = three_level(&p, &grid.times()).unwrap();

        for (row, state) in run.states.iter().enumerate() {
            let crate::hilbert::State::Pure(psi) = state else { unreachable!() };
            for (col, &(m, n)) in solution.basis.iter().enumerate() {
                let simulated = psi.amplitudes[space.encode(0, m, n)];
                let predicted = solution.amplitudes[[row, col]];
                assert!((simulated - predicted).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_start_keeps_both_corners_in_lockstep() {
        // By linearity the symmetric combination evolves as the closed-form
        // solution plus its mirror image; the propagator must agree and the
        // two corner amplitudes must remain equal throughout.
        let p = ModelParams { n_max: 4, ..params(20.0, 5.0) };
        let space = HilbertSpace::new(4, 1).unwrap();
        let h = model::effective_hamiltonian(&p, space).unwrap();
        let mut amplitudes = Array1::zeros(space.dim());
        amplitudes[space.encode(0, 4, 0)] = C64::new(FRAC_1_SQRT_2, 0.0);
        amplitudes[space.encode(0, 0, 4)] = C64::new(FRAC_1_SQRT_2, 0.0);
        let psi0 = StateVector::new(space, amplitudes).unwrap();
        let grid = TimeGrid::new(0.0, predicted_t0(&p), 40).unwrap();
        let run = propagate_unitary(&h, &psi0, grid).unwrap();
        let solution = three_level(&p, &grid.times()).unwrap();

        for (row, state) in run.states.iter().enumerate() {
            let crate::hilbert::State::Pure(psi) = state else { unreachable!() };
            let corner_a = psi.amplitudes[space.encode(0, 4, 0)];
            let corner_b = psi.amplitudes[space.encode(0, 0, 4)];
            assert!((corner_a - corner_b).norm() < 1e-12);
            let predicted = FRAC_1_SQRT_2
                * (solution.amplitudes[[row, 0]] + solution.amplitudes[[row, 2]]);
            assert!((corner_a - predicted).norm() < 1e-10);
        }
    }

    #[test]
    fn corner_crossing_with_suppressed_middle_carries_one_bit() {
        // Scan the closed form for the first time the corner amplitudes
        // agree in modulus while the middle one bottoms out; the reduced
        // state there is an even two-outcome mixture.
        let p = ModelParams { n_max: 4, ..params(20.0, 5.0) };
        let w = p.exchange_rate();
        let times: Vec<f64> = (0..=20_000)
            .map(|k| (std::f64::consts::PI / 2.0) / w * (k as f64) / 20_000.0)
            .collect();
        let solution = three_level(&p, &times).unwrap();

        let middle: Vec<f64> = (0..times.len()).map(|r| solution.amplitudes[[r, 1]].norm()).collect();
        let mut found = None;
        for r in 1..times.len() - 1 {
            let corners_match =
                (solution.amplitudes[[r, 0]].norm() - solution.amplitudes[[r, 2]].norm()).abs() < 1e-6;
            let local_minimum = middle[r] <= middle[r - 1] && middle[r] <= middle[r + 1];
            if times[r] > 0.0 && corners_match && local_minimum {
                found = Some(r);
                break;
            }
        }
        let r = found.expect("crossing with suppressed middle exists in the first quarter cycle");

        let weights: Vec<f64> = (0..3).map(|c| solution.amplitudes[[r, c]].norm_sqr()).collect();
        let entropy: f64 = weights
            .iter()
            .filter(|p| **p > 1e-12)
            .map(|p| -p * p.log2())
            .sum();
        assert!((entropy - 1.0).abs() <= 0.02);
        // The crossing sits at ωt = π/8, an eighth of the slosh period.
        assert!((w * times[r] - std::f64::consts::FRAC_PI_8).abs() < 1e-3);
    }

    #[test]
    fn both_half_cycle_formulas_agree_to_the_last_bit() {
        for (delta, small) in [(20.0, 5.0), (8.0, 3.0), (13.7, 2.9)] {
            let p = params(delta, small);
            assert_eq!(predicted_t0(&p).to_bits(), model::t0(&p).to_bits());
        }
        assert!((predicted_t0(&params(20.0, 5.0)) - 785.398).abs() < 1e-3);
        assert!((predicted_t0(&params(8.0, 3.0)) - 75.398).abs() < 1e-3);
    }
}
