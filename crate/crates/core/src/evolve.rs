//! Time evolution for closed and open dynamics.
//!
//! Closed systems are propagated through one Hermitian eigendecomposition
//! and phase application, which is exact to rounding at any horizon. Open
//! systems integrate the master equation with a fixed-step classical
//! fourth-order scheme directly on the density matrix; the fixed step keeps
//! the trace and positivity audits deterministic. Violations fail loudly,
//! nothing is clipped or renormalized behind the caller's back.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, EigValsh, UPLO};
use thiserror::Error;

use crate::hilbert::{DensityMatrix, OperatorMatrix, State, StateVector};
use crate::model::{HamiltonianKind, ModelParams};
use crate::C64;

/// Norm budget for the whole of a unitary propagation.
pub const UNITARY_NORM_TOL: f64 = 1e-9;
/// Allowed trace deviation from one at any recorded point of an open run.
pub const LINDBLAD_TRACE_TOL: f64 = 1e-6;
/// Most negative eigenvalue tolerated at any recorded point of an open run.
pub const LINDBLAD_EIGENVALUE_FLOOR: f64 = -1e-6;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("time grid needs t_end > t_start and at least two points")]
    BadGrid,
    #[error("unitary propagation needs a hamiltonian declared hermitian")]
    NonHermitian,
    #[error("operators and state live on different spaces")]
    SpaceMismatch,
    #[error("integration step must be positive (got {0})")]
    BadStep(f64),
    #[error("step {step} does not divide the grid spacing {spacing}")]
    StepNotDividing { step: f64, spacing: f64 },
    #[error("norm drifted by {0:.3e}, beyond the unitary budget")]
    NormDrift(f64),
    #[error("trace drifted by {drift:.3e} at t={t}, beyond the open-system budget")]
    TraceDrift { drift: f64, t: f64 },
    #[error("density matrix picked up eigenvalue {value:.3e} at t={t}")]
    NegativeEigenvalue { value: f64, t: f64 },
    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

/// Uniform, inclusive grid of recording times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self, EvolveError> {
        if !(t_end > t_start) || n_points < 2 {
            return Err(EvolveError::BadGrid);
        }
        Ok(Self {
            t_start,
            t_end,
            n_points,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_points - 1) as f64
    }

    /// Recording times t_k = t_start + k·spacing, both endpoints included.
    pub fn times(&self) -> Vec<f64> {
        let span = self.t_end - self.t_start;
        let last = (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|k| self.t_start + span * (k as f64) / last)
            .collect()
    }
}

/// Parameters and model tier a trajectory was produced under.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryMeta {
    pub params: ModelParams,
    pub kind: HamiltonianKind,
}

/// One state per grid point, pure or mixed depending on the propagator.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<State>,
    pub meta: Option<TrajectoryMeta>,
}

impl Trajectory {
    pub fn with_meta(mut self, params: ModelParams, kind: HamiltonianKind) -> Self {
        self.meta = Some(TrajectoryMeta { params, kind });
        self
    }
}

/// Evolve a pure state under a Hermitian generator, recording at each grid
/// point. One eigendecomposition serves every time, so the cost is
/// independent of the horizon.
pub fn propagate_unitary(
    h: &OperatorMatrix,
    psi0: &StateVector,
    grid: TimeGrid,
) -> Result<Trajectory, EvolveError> {
    if !h.is_hermitian() {
        return Err(EvolveError::NonHermitian);
    }
    if h.space != psi0.space {
        return Err(EvolveError::SpaceMismatch);
    }
    TimeGrid::new(grid.t_start, grid.t_end, grid.n_points)?;

    let (frequencies, vectors) = h.entries.eigh(UPLO::Lower)?;
    let adjoint = vectors.t().mapv(|z| z.conj());
    let coefficients = adjoint.dot(&psi0.amplitudes);
    let reference_norm = psi0.norm();

    let mut states = Vec::with_capacity(grid.n_points);
    for t in grid.times() {
        let rotated = Array1::from_iter(
            coefficients
                .iter()
                .zip(frequencies.iter())
                .map(|(c, w)| c * C64::from_polar(1.0, -w * t)),
        );
        let psi = StateVector {
            space: psi0.space,
            amplitudes: vectors.dot(&rotated),
        };
        let drift = (psi.norm() - reference_norm).abs();
        if drift > UNITARY_NORM_TOL {
            return Err(EvolveError::NormDrift(drift));
        }
        states.push(State::Pure(psi));
    }
    Ok(Trajectory {
        grid,
        states,
        meta: None,
    })
}

/// Integrate dρ/dt = −i[H,ρ] + Σ_j (C_jρC_j† − ½{C_j†C_j, ρ}) with a fixed
/// step that must divide the grid spacing. The trace and the spectrum are
/// audited at every recorded point against the module tolerances.
pub fn propagate_lindblad(
    h: &OperatorMatrix,
    c_ops: &[OperatorMatrix],
    rho0: &DensityMatrix,
    grid: TimeGrid,
    step: f64,
) -> Result<Trajectory, EvolveError> {
    let space = rho0.space;
    if h.space != space || c_ops.iter().any(|c| c.space != space) {
        return Err(EvolveError::SpaceMismatch);
    }
    TimeGrid::new(grid.t_start, grid.t_end, grid.n_points)?;
    if !(step > 0.0) {
        return Err(EvolveError::BadStep(step));
    }
    let spacing = grid.spacing();
    let substeps = (spacing / step).round();
    if substeps < 1.0 || (substeps * step - spacing).abs() > 1e-9 * spacing {
        return Err(EvolveError::StepNotDividing { step, spacing });
    }
    let substeps = substeps as usize;
    // Reconstructed so the substeps tile the interval exactly.
    let h_sub = spacing / substeps as f64;

    let generator = Generator::build(h, c_ops);
    let dim = space.dim();
    let size = dim * dim;

    let mut rho: Vec<C64> = rho0.entries.iter().copied().collect();
    let mut stage = vec![C64::new(0.0, 0.0); size];
    let mut k1 = stage.clone();
    let mut k2 = stage.clone();
    let mut k3 = stage.clone();
    let mut k4 = stage.clone();
    let mut scratch = stage.clone();

    let times = grid.times();
    let mut states = Vec::with_capacity(grid.n_points);
    record(&rho, space, times[0], &mut states)?;

    for &t in &times[1..] {
        for _ in 0..substeps {
            generator.apply(&rho, &mut k1, &mut scratch);

            shifted(&rho, &k1, 0.5 * h_sub, &mut stage);
            generator.apply(&stage, &mut k2, &mut scratch);

            shifted(&rho, &k2, 0.5 * h_sub, &mut stage);
            generator.apply(&stage, &mut k3, &mut scratch);

            shifted(&rho, &k3, h_sub, &mut stage);
            generator.apply(&stage, &mut k4, &mut scratch);

            let weight = h_sub / 6.0;
            for i in 0..size {
                rho[i] += weight * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        record(&rho, space, t, &mut states)?;
    }
    Ok(Trajectory {
        grid,
        states,
        meta: None,
    })
}

/// Step size that keeps the fourth-order integrator comfortably inside its
/// stability region: 0.05 over a spectral bound of the generator,
/// ‖H‖₂ + Σ_j ‖C_j‖₂².
pub fn default_step(h: &OperatorMatrix, c_ops: &[OperatorMatrix]) -> Result<f64, EvolveError> {
    let mut bound = spectral_norm_hermitian(&h.entries)?;
    for c in c_ops {
        let gram = c.dagger().entries.dot(&c.entries);
        bound += spectral_norm_hermitian(&gram)?;
    }
    Ok(0.05 / bound.max(f64::MIN_POSITIVE))
}

/// Largest step not exceeding `target` that divides `spacing` into a whole
/// number of substeps.
pub fn step_dividing(spacing: f64, target: f64) -> f64 {
    spacing / (spacing / target).ceil().max(1.0)
}

fn spectral_norm_hermitian(m: &Array2<C64>) -> Result<f64, EvolveError> {
    let eigenvalues = m.eigvalsh(UPLO::Lower)?;
    Ok(eigenvalues.iter().fold(0.0f64, |acc, w| acc.max(w.abs())))
}

fn shifted(base: &[C64], slope: &[C64], factor: f64, out: &mut [C64]) {
    for i in 0..base.len() {
        out[i] = base[i] + factor * slope[i];
    }
}

fn record(rho: &[C64], space: crate::hilbert::HilbertSpace, t: f64, states: &mut Vec<State>) -> Result<(), EvolveError> {
    let dim = space.dim();
    let mut trace = 0.0;
    for i in 0..dim {
        trace += rho[i * dim + i].re;
    }
    let drift = trace - 1.0;
    if drift.abs() > LINDBLAD_TRACE_TOL {
        return Err(EvolveError::TraceDrift { drift, t });
    }
    let entries = Array2::from_shape_vec((dim, dim), rho.to_vec()).expect("square buffer");
    let smallest = entries.eigvalsh(UPLO::Lower)?[0];
    if smallest < LINDBLAD_EIGENVALUE_FLOOR {
        return Err(EvolveError::NegativeEigenvalue { value: smallest, t });
    }
    states.push(State::Mixed(DensityMatrix { space, entries }));
    Ok(())
}

/// Sparse row form of one operator. The generators here are a few percent
/// dense, so row-wise axpy beats dense multiplication by an order of
/// magnitude in the stepping loop while changing nothing numerically.
struct Csr {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    dim: usize,
}

impl Csr {
    fn from_dense(m: &Array2<C64>) -> Self {
        let dim = m.nrows();
        let mut rows = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        rows.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let z = m[[i, j]];
                if z.re != 0.0 || z.im != 0.0 {
                    cols.push(j);
                    vals.push(z);
                }
            }
            rows.push(cols.len());
        }
        Self { rows, cols, vals, dim }
    }

    /// out = self · x, overwriting out. Row-major dense operands.
    fn left_mul(&self, x: &[C64], out: &mut [C64]) {
        let dim = self.dim;
        out.fill(C64::new(0.0, 0.0));
        for i in 0..dim {
            let (lo, hi) = (self.rows[i], self.rows[i + 1]);
            let dst = &mut out[i * dim..(i + 1) * dim];
            for idx in lo..hi {
                let v = self.vals[idx];
                let src = &x[self.cols[idx] * dim..(self.cols[idx] + 1) * dim];
                for j in 0..dim {
                    dst[j] += v * src[j];
                }
            }
        }
    }

    /// out += x · self, accumulating into out.
    fn right_mul_acc(&self, x: &[C64], out: &mut [C64]) {
        let dim = self.dim;
        for i in 0..dim {
            let x_row = &x[i * dim..(i + 1) * dim];
            let out_row = &mut out[i * dim..(i + 1) * dim];
            for k in 0..dim {
                let z = x_row[k];
                if z.re == 0.0 && z.im == 0.0 {
                    continue;
                }
                for idx in self.rows[k]..self.rows[k + 1] {
                    out_row[self.cols[idx]] += z * self.vals[idx];
                }
            }
        }
    }
}

/// Precomputed right-hand side of the master equation, written as
/// dρ = Mρ + ρM† + Σ_j C_jρC_j† with M = −iH − ½Σ_j C_j†C_j.
struct Generator {
    drift: Csr,
    drift_dag: Csr,
    jumps: Vec<(Csr, Csr)>,
}

impl Generator {
    fn build(h: &OperatorMatrix, c_ops: &[OperatorMatrix]) -> Self {
        let minus_i = C64::new(0.0, -1.0);
        let mut m = h.entries.mapv(|z| z * minus_i);
        for c in c_ops {
            let gram = c.dagger().entries.dot(&c.entries);
            m = m + gram.mapv(|z| z * -0.5);
        }
        let m_dag = m.t().mapv(|z| z.conj());
        let jumps = c_ops
            .iter()
            .map(|c| {
                let dag = c.dagger();
                (Csr::from_dense(&c.entries), Csr::from_dense(&dag.entries))
            })
            .collect();
        Self {
            drift: Csr::from_dense(&m),
            drift_dag: Csr::from_dense(&m_dag),
            jumps,
        }
    }

    fn apply(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        self.drift.left_mul(rho, out);
        self.drift_dag.right_mul_acc(rho, out);
        for (c, c_dag) in &self.jumps {
            c.left_mul(rho, scratch);
            c_dag.right_mul_acc(scratch, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{HilbertSpace, Level, Mode, Subsystem};
    use crate::model::{self, ModelParams};
    use ndarray::Array2;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn fig2_params() -> ModelParams {
        ModelParams {
            g: 1.0,
            delta_1: 20.0,
            delta_2: 20.0,
            delta_small: 5.0,
            kappa: 0.0,
            gamma: 0.0,
            n_max: 2,
        }
    }

    fn populations(state: &State) -> Vec<f64> {
        match state {
            State::Pure(psi) => psi.amplitudes.iter().map(|z| z.norm_sqr()).collect(),
            State::Mixed(rho) => rho.entries.diag().iter().map(|z| z.re).collect(),
        }
    }

    #[test]
    fn grid_times_are_inclusive_and_uniform() {
        let grid = TimeGrid::new(0.0, 10.0, 5).unwrap();
        let times = grid.times();
        assert_eq!(times, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn zero_hamiltonian_freezes_the_state() {
        let space = HilbertSpace::new(2, 1).unwrap();
        let h = OperatorMatrix::hermitian(space, Array2::zeros((9, 9))).unwrap();
        let psi0 = space.basis_state(Level::G, 1, 1).unwrap();
        let run = propagate_unitary(&h, &psi0, TimeGrid::new(0.0, 50.0, 6).unwrap()).unwrap();
        for state in &run.states {
            if let State::Pure(psi) = state {
                assert!((psi.inner(&psi0).norm() - 1.0).abs() < 1e-12);
            } else {
                panic!("unitary propagation must yield pure states");
            }
        }
    }

    #[test]
    fn diagonal_hamiltonian_only_rotates_phases() {
        let space = HilbertSpace::new(1, 1).unwrap();
        let mut entries = Array2::zeros((4, 4));
        for i in 0..4 {
            entries[[i, i]] = C64::new(1.0 + i as f64, 0.0);
        }
        let h = OperatorMatrix::hermitian(space, entries).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let amps = ndarray::Array1::from_iter((0..4).map(|_| C64::new(rng.random(), rng.random())));
        let psi0 = crate::hilbert::StateVector::new(space, amps).unwrap().normalized().unwrap();
        let run = propagate_unitary(&h, &psi0, TimeGrid::new(0.0, 7.0, 8).unwrap()).unwrap();
        let initial = populations(&run.states[0]);
        for state in &run.states {
            for (p, q) in populations(state).iter().zip(initial.iter()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pair_exchange_half_cycle_splits_the_pair_evenly() {
        let params = fig2_params();
        let space = HilbertSpace::new(2, 1).unwrap();
        let h = model::effective_hamiltonian(&params, space).unwrap();
        let psi0 = space.basis_state(Level::G, 2, 0).unwrap();
        let half_cycle = model::t0(&params);
        let grid = TimeGrid::new(0.0, half_cycle, 2).unwrap();
        let run = propagate_unitary(&h, &psi0, grid).unwrap();
        let pops = populations(run.states.last().unwrap());
        assert!((pops[space.encode(0, 2, 0)] - 0.5).abs() < 1e-12);
        assert!((pops[space.encode(0, 0, 2)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unitary_propagation_rejects_undeclared_hermiticity() {
        let space = HilbertSpace::new(2, 1).unwrap();
        let a = space.annihilator(Mode::A);
        let psi0 = space.basis_state(Level::G, 1, 0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(matches!(
            propagate_unitary(&a, &psi0, grid),
            Err(EvolveError::NonHermitian)
        ));
    }

    #[test]
    fn excitations_and_energy_are_conserved_over_the_long_run() {
        let params = fig2_params();
        let space = HilbertSpace::new(2, 4).unwrap();
        let h = model::full_hamiltonian(&params, space).unwrap();
        let psi0 = space.basis_state(Level::G, 0, 2).unwrap();
        let run = propagate_unitary(&h, &psi0, TimeGrid::new(0.0, 1600.0, 1600).unwrap()).unwrap();
        let n_op = model::excitation_operator(space);

        let expect = |op: &OperatorMatrix, psi: &crate::hilbert::StateVector| psi.inner(&op.apply(psi)).re;
        let (n_ref, e_ref) = match &run.states[0] {
            State::Pure(psi) => (expect(&n_op, psi), expect(&h, psi)),
            _ => unreachable!(),
        };
        assert!((n_ref - 2.0).abs() < 1e-12);
        for state in &run.states {
            let State::Pure(psi) = state else { unreachable!() };
            assert!((expect(&n_op, psi) - n_ref).abs() <= 1e-9);
            assert!((expect(&h, psi) - e_ref).abs() <= 1e-9);
        }
    }

    #[test]
    fn closed_lindblad_run_matches_the_unitary_populations() {
        let params = fig2_params();
        let space = HilbertSpace::new(2, 1).unwrap();
        let h = model::effective_hamiltonian(&params, space).unwrap();
        let psi0 = space.basis_state(Level::G, 2, 0).unwrap();
        let grid = TimeGrid::new(0.0, 100.0, 11).unwrap();

        let unitary = propagate_unitary(&h, &psi0, grid).unwrap();
        let step = step_dividing(grid.spacing(), default_step(&h, &[]).unwrap());
        let open = propagate_lindblad(&h, &[], &psi0.to_density(), grid, step).unwrap();

        for (u, o) in unitary.states.iter().zip(open.states.iter()) {
            for (p, q) in populations(u).iter().zip(populations(o).iter()) {
                assert!((p - q).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn single_photon_decay_follows_the_exponential_law() {
        let space = HilbertSpace::new(1, 1).unwrap();
        let kappa = 0.005;
        let h = OperatorMatrix::hermitian(space, Array2::zeros((4, 4))).unwrap();
        let mut c = space.annihilator(Mode::A);
        c.entries.mapv_inplace(|z| z * kappa.sqrt());

        let rho0 = space.basis_state(Level::G, 1, 0).unwrap().to_density();
        let grid = TimeGrid::new(0.0, 400.0, 21).unwrap();
        let step = step_dividing(grid.spacing(), default_step(&h, &[c.clone()]).unwrap());
        let run = propagate_lindblad(&h, &[c], &rho0, grid, step).unwrap();

        let excited = space.encode(0, 1, 0);
        for (state, t) in run.states.iter().zip(grid.times()) {
            let p = populations(state)[excited];
            assert!((p - (-kappa * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn decay_never_inflates_trace_or_photon_number() {
        let params = ModelParams { kappa: 0.01, ..fig2_params() };
        let space = HilbertSpace::new(2, 1).unwrap();
        let h = model::effective_hamiltonian(&params, space).unwrap();
        let c_ops = model::collapse_operators(&params, space).unwrap();
        let rho0 = space.basis_state(Level::G, 2, 0).unwrap().to_density();
        let grid = TimeGrid::new(0.0, 200.0, 41).unwrap();
        let step = step_dividing(grid.spacing(), default_step(&h, &c_ops).unwrap());
        let run = propagate_lindblad(&h, &c_ops, &rho0, grid, step).unwrap();

        let mut previous = f64::INFINITY;
        for state in &run.states {
            let State::Mixed(rho) = state else { unreachable!() };
            assert!(rho.trace() <= 1.0 + 1e-6);
            let photons: f64 = rho
                .entries
                .diag()
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let (_, m, n) = space.decode(i);
                    (m + n) as f64 * z.re
                })
                .sum();
            assert!(photons <= previous + 1e-6);
            previous = photons;
        }
    }

    #[test]
    fn default_step_is_inverse_to_the_generator_scale() {
        let space = HilbertSpace::new(1, 1).unwrap();
        let mut entries = Array2::zeros((4, 4));
        entries[[1, 1]] = C64::new(1.0, 0.0);
        entries[[2, 2]] = C64::new(-1.0, 0.0);
        let unit = OperatorMatrix::hermitian(space, entries.clone()).unwrap();
        assert!((default_step(&unit, &[]).unwrap() - 0.05).abs() < 1e-12);

        entries.mapv_inplace(|z| z * 10.0);
        let scaled = OperatorMatrix::hermitian(space, entries).unwrap();
        assert!((default_step(&scaled, &[]).unwrap() - 0.005).abs() < 1e-12);
    }

    #[test]
    fn halving_the_default_step_leaves_final_populations_unchanged() {
        // Fast-detuning closed run, integrated openly to exercise the
        // stepper at the stiffest scale it meets in practice.
        let params = fig2_params();
        let space = HilbertSpace::new(2, 4).unwrap();
        let h = model::full_hamiltonian(&params, space).unwrap();
        let rho0 = space.basis_state(Level::G, 0, 2).unwrap().to_density();
        let grid = TimeGrid::new(0.0, 20.0, 3).unwrap();

        let step = step_dividing(grid.spacing(), default_step(&h, &[]).unwrap());
        let coarse = propagate_lindblad(&h, &[], &rho0, grid, step).unwrap();
        let fine = propagate_lindblad(&h, &[], &rho0, grid, step / 2.0).unwrap();

        let p_coarse = populations(coarse.states.last().unwrap());
        let p_fine = populations(fine.states.last().unwrap());
        for (p, q) in p_coarse.iter().zip(p_fine.iter()) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn step_halving_on_the_dissipative_scenario_moves_no_observable() {
        let params = ModelParams {
            delta_1: 8.0,
            delta_2: 8.0,
            delta_small: 3.0,
            kappa: 0.005,
            ..fig2_params()
        };
        let space = HilbertSpace::new(2, 4).unwrap();
        let h = model::full_hamiltonian(&params, space).unwrap();
        let c_ops = model::collapse_operators(&params, space).unwrap();
        let rho0 = space.basis_state(Level::G, 0, 2).unwrap().to_density();
        let grid = TimeGrid::new(0.0, 160.0, 800).unwrap();

        let step = step_dividing(grid.spacing(), default_step(&h, &c_ops).unwrap());
        let coarse = propagate_lindblad(&h, &c_ops, &rho0, grid, step).unwrap();
        let fine = propagate_lindblad(&h, &c_ops, &rho0, grid, step / 2.0).unwrap();

        for (a, b) in coarse.states.iter().zip(fine.states.iter()) {
            let (State::Mixed(x), State::Mixed(y)) = (a, b) else { unreachable!() };
            let gap = (&x.entries - &y.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(gap <= 1e-5);
            let ent_x = crate::observe::entanglement_entropy(a).unwrap();
            let ent_y = crate::observe::entanglement_entropy(b).unwrap();
            assert!((ent_x - ent_y).abs() <= 1e-5);
        }
    }

    #[test]
    fn stepper_rejects_non_dividing_or_non_positive_steps() {
        let space = HilbertSpace::new(1, 1).unwrap();
        let h = OperatorMatrix::hermitian(space, Array2::zeros((4, 4))).unwrap();
        let rho0 = space.basis_state(Level::G, 0, 0).unwrap().to_density();
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(matches!(
            propagate_lindblad(&h, &[], &rho0, grid, 0.3),
            Err(EvolveError::StepNotDividing { .. })
        ));
        assert!(matches!(
            propagate_lindblad(&h, &[], &rho0, grid, -0.1),
            Err(EvolveError::BadStep(_))
        ));
    }

    #[test]
    fn sparse_generator_agrees_with_the_dense_master_equation() {
        let space = HilbertSpace::new(2, 1).unwrap();
        let dim = space.dim();
        let mut rng = StdRng::seed_from_u64(1234);
        let mut random = || Array2::from_shape_fn((dim, dim), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));

        let raw = random();
        let h_entries = (&raw + &raw.t().mapv(|z| z.conj())).mapv(|z| 0.5 * z);
        let h = OperatorMatrix::hermitian(space, h_entries.clone()).unwrap();
        let c_entries: Vec<Array2<C64>> = (0..2).map(|_| random()).collect();
        let c_ops: Vec<OperatorMatrix> = c_entries
            .iter()
            .map(|m| OperatorMatrix::general(space, m.clone()).unwrap())
            .collect();
        let rho = {
            let m = random();
            let sym = m.dot(&m.t().mapv(|z| z.conj()));
            let trace: f64 = sym.diag().iter().map(|z| z.re).sum();
            sym.mapv(|z| z / trace)
        };

        // Dense reference, straight from the master equation.
        let minus_i = C64::new(0.0, -1.0);
        let mut reference = (h_entries.dot(&rho) - rho.dot(&h_entries)).mapv(|z| z * minus_i);
        for c in &c_entries {
            let c_dag = c.t().mapv(|z| z.conj());
            let gram = c_dag.dot(c);
            reference = reference + c.dot(&rho).dot(&c_dag)
                - (gram.dot(&rho) + rho.dot(&gram)).mapv(|z| 0.5 * z);
        }

        let generator = Generator::build(&h, &c_ops);
        let rho_flat: Vec<C64> = rho.iter().copied().collect();
        let mut out = vec![C64::new(0.0, 0.0); dim * dim];
        let mut scratch = out.clone();
        generator.apply(&rho_flat, &mut out, &mut scratch);

        for i in 0..dim {
            for j in 0..dim {
                assert!((out[i * dim + j] - reference[[i, j]]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn recorder_refuses_unphysical_density_matrices() {
        let space = HilbertSpace::new(1, 1).unwrap();
        let mut sink = Vec::new();

        let mut inflated = vec![C64::new(0.0, 0.0); 16];
        inflated[0] = C64::new(1.5, 0.0);
        assert!(matches!(
            record(&inflated, space, 0.0, &mut sink),
            Err(EvolveError::TraceDrift { .. })
        ));

        let mut indefinite = inflated;
        indefinite[5] = C64::new(-0.5, 0.0);
        assert!(matches!(
            record(&indefinite, space, 0.0, &mut sink),
            Err(EvolveError::NegativeEigenvalue { .. })
        ));
        assert!(sink.is_empty());
    }

    #[test]
    fn trajectory_entropy_is_frame_independent_under_pure_and_mixed_paths() {
        // The same closed dynamics through both propagators must give the
        // same reduced-state spectrum, pure path or density path.
        let params = fig2_params();
        let space = HilbertSpace::new(2, 1).unwrap();
        let h = model::effective_hamiltonian(&params, space).unwrap();
        let psi0 = space.basis_state(Level::G, 2, 0).unwrap();
        let grid = TimeGrid::new(0.0, 400.0, 5).unwrap();
        let unitary = propagate_unitary(&h, &psi0, grid).unwrap();
        let step = step_dividing(grid.spacing(), default_step(&h, &[]).unwrap());
        let open = propagate_lindblad(&h, &[], &psi0.to_density(), grid, step).unwrap();
        for (u, o) in unitary.states.iter().zip(open.states.iter()) {
            let spec_u = crate::hilbert::partial_trace(&u.density(), Subsystem::ModeA);
            let spec_o = crate::hilbert::partial_trace(&o.density(), Subsystem::ModeA);
            let gap = (&spec_u - &spec_o).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(gap < 1e-7);
        }
    }
}
