//! Truncated state space for one atom coupled to two cavity modes.
//!
//! Tensor order is fixed as atom ⊗ mode a ⊗ mode b. A basis label
//! (α, m, n) with atomic level α, m photons in mode a, and n photons in
//! mode b maps to the flat index α·(n_max+1)² + m·(n_max+1) + n, and every
//! piece of index arithmetic in the crate goes through the one
//! [`HilbertSpace::encode`] / [`HilbertSpace::decode`] pair.
//!
//! Everything is stored dense. The largest space any scenario touches is
//! 100 dimensional, so sparse machinery would be complexity without payoff.

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, UPLO};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::C64;

/// Hermiticity bound enforced when an operator is declared Hermitian.
pub const OPERATOR_HERMITICITY_TOL: f64 = 1e-12;
/// Hermiticity bound for a freshly constructed density matrix.
pub const RHO_HERMITICITY_TOL: f64 = 1e-10;
/// Allowed deviation of a density-matrix trace from one at construction.
pub const RHO_TRACE_TOL: f64 = 1e-8;
/// Most negative eigenvalue a density matrix may carry at construction.
pub const RHO_EIGENVALUE_FLOOR: f64 = -1e-8;

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("atom dimension must be 1, 2, or 4 (got {0})")]
    AtomDim(usize),
    #[error("level {level} does not exist in a {atom_dim}-level atom")]
    LevelNotInSpace { level: Level, atom_dim: usize },
    #[error("unknown atomic level name '{0}' (expected g, i1, i2, or e)")]
    LevelName(String),
    #[error("photon labels ({m},{n}) exceed the truncation n_max={n_max}")]
    PhotonRange { m: usize, n: usize, n_max: usize },
    #[error("vector or matrix sized {got}, space wants {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("cannot normalize a zero vector")]
    ZeroNorm,
    #[error("matrix declared Hermitian deviates from its adjoint by {0:.3e}")]
    NotHermitian(f64),
    #[error("density matrix trace is off unity by {0:.3e}")]
    TraceDeviation(f64),
    #[error("density matrix has eigenvalue {0:.3e} below the allowed floor")]
    NegativeEigenvalue(f64),
    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

/// Atomic levels of the ladder system.
///
/// `G` is the ground state, `I1` and `I2` the intermediate states reached
/// by emitting one photon into mode a or b respectively, and `E` the upper
/// state of the two-photon transition. Which levels exist depends on the
/// model tier: the full model keeps all four, the two-photon reduction
/// keeps `G` and `E`, and the field-only effective model keeps `G` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    G,
    I1,
    I2,
    E,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Level::G => "g",
            Level::I1 => "i1",
            Level::I2 => "i2",
            Level::E => "e",
        };
        f.write_str(name)
    }
}

impl FromStr for Level {
    type Err = HilbertError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g" => Ok(Level::G),
            "i1" => Ok(Level::I1),
            "i2" => Ok(Level::I2),
            "e" => Ok(Level::E),
            other => Err(HilbertError::LevelName(other.to_string())),
        }
    }
}

/// The two cavity modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    A,
    B,
}

/// Tensor factor selected by a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Atom,
    ModeA,
    ModeB,
}

/// Dimensions and index conventions of the truncated product space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertSpace {
    /// Fock truncation per mode; photon numbers run over 0..=n_max.
    pub n_max: usize,
    /// 4 for the full ladder, 2 for the two-photon reduction, 1 for the
    /// field-only effective model.
    pub atom_dim: usize,
}

impl HilbertSpace {
    pub fn new(n_max: usize, atom_dim: usize) -> Result<Self, HilbertError> {
        if !matches!(atom_dim, 1 | 2 | 4) {
            return Err(HilbertError::AtomDim(atom_dim));
        }
        Ok(Self { n_max, atom_dim })
    }

    /// Number of Fock states kept per mode.
    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    /// Total dimension atom_dim · (n_max+1)².
    pub fn dim(&self) -> usize {
        self.atom_dim * self.fock_dim() * self.fock_dim()
    }

    /// Flat index of the basis label (α, m, n).
    pub fn encode(&self, alpha: usize, m: usize, n: usize) -> usize {
        debug_assert!(alpha < self.atom_dim && m <= self.n_max && n <= self.n_max);
        (alpha * self.fock_dim() + m) * self.fock_dim() + n
    }

    /// Inverse of [`encode`](Self::encode).
    pub fn decode(&self, index: usize) -> (usize, usize, usize) {
        let f = self.fock_dim();
        (index / (f * f), (index / f) % f, index % f)
    }

    /// Position of `level` in this space's atomic factor.
    pub fn level_index(&self, level: Level) -> Result<usize, HilbertError> {
        let idx = match (level, self.atom_dim) {
            (Level::G, _) => Some(0),
            (Level::E, 2) => Some(1),
            (Level::I1, 4) => Some(1),
            (Level::I2, 4) => Some(2),
            (Level::E, 4) => Some(3),
            _ => None,
        };
        idx.ok_or(HilbertError::LevelNotInSpace {
            level,
            atom_dim: self.atom_dim,
        })
    }

    /// Unit vector for the product state |level⟩ ⊗ |m⟩_a ⊗ |n⟩_b.
    pub fn basis_state(&self, level: Level, m: usize, n: usize) -> Result<StateVector, HilbertError> {
        if m > self.n_max || n > self.n_max {
            return Err(HilbertError::PhotonRange {
                m,
                n,
                n_max: self.n_max,
            });
        }
        let alpha = self.level_index(level)?;
        let mut amplitudes = Array1::zeros(self.dim());
        amplitudes[self.encode(alpha, m, n)] = C64::new(1.0, 0.0);
        Ok(StateVector {
            space: *self,
            amplitudes,
        })
    }

    /// Photon annihilation operator on the named mode, identity elsewhere.
    ///
    /// Truncation zeroes the column that would map |n_max+1⟩ down, so the
    /// canonical commutator holds only on the block with fewer than n_max
    /// photons in the named mode.
    pub fn annihilator(&self, mode: Mode) -> OperatorMatrix {
        let dim = self.dim();
        let mut entries = Array2::zeros((dim, dim));
        for alpha in 0..self.atom_dim {
            for k in 1..=self.n_max {
                for other in 0..self.fock_dim() {
                    let (row, col) = match mode {
                        Mode::A => (self.encode(alpha, k - 1, other), self.encode(alpha, k, other)),
                        Mode::B => (self.encode(alpha, other, k - 1), self.encode(alpha, other, k)),
                    };
                    entries[[row, col]] = C64::new((k as f64).sqrt(), 0.0);
                }
            }
        }
        OperatorMatrix {
            space: *self,
            entries,
            hermitian: false,
        }
    }

    /// |to⟩⟨from| on the atom, identity on both modes.
    pub fn atomic_transition(&self, to: Level, from: Level) -> Result<OperatorMatrix, HilbertError> {
        let to_idx = self.level_index(to)?;
        let from_idx = self.level_index(from)?;
        let dim = self.dim();
        let mut entries = Array2::zeros((dim, dim));
        for m in 0..self.fock_dim() {
            for n in 0..self.fock_dim() {
                entries[[self.encode(to_idx, m, n), self.encode(from_idx, m, n)]] = C64::new(1.0, 0.0);
            }
        }
        Ok(OperatorMatrix {
            space: *self,
            entries,
            hermitian: to_idx == from_idx,
        })
    }
}

/// Pure state as a complex amplitude vector over the flat basis.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub space: HilbertSpace,
    pub amplitudes: Array1<C64>,
}

impl StateVector {
    pub fn new(space: HilbertSpace, amplitudes: Array1<C64>) -> Result<Self, HilbertError> {
        if amplitudes.len() != space.dim() {
            return Err(HilbertError::DimMismatch {
                expected: space.dim(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { space, amplitudes })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rescale to unit norm. Rejects the zero vector.
    pub fn normalized(mut self) -> Result<Self, HilbertError> {
        let norm = self.norm();
        if norm <= f64::EPSILON {
            return Err(HilbertError::ZeroNorm);
        }
        self.amplitudes.mapv_inplace(|z| z / norm);
        debug_assert!((self.norm() - 1.0).abs() <= 1e-10);
        Ok(self)
    }

    /// ⟨self|other⟩ with the conjugate on the left argument.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(x, y)| x.conj() * y)
            .sum()
    }

    /// Projector |ψ⟩⟨ψ| as a density matrix.
    pub fn to_density(&self) -> DensityMatrix {
        let dim = self.space.dim();
        let mut entries = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                entries[[i, j]] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        DensityMatrix {
            space: self.space,
            entries,
        }
    }
}

/// Mixed (or pure, as a projector) state of the full product space.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub space: HilbertSpace,
    pub entries: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(space: HilbertSpace, entries: Array2<C64>) -> Result<Self, HilbertError> {
        if entries.nrows() != space.dim() || entries.ncols() != space.dim() {
            return Err(HilbertError::DimMismatch {
                expected: space.dim(),
                got: entries.nrows().max(entries.ncols()),
            });
        }
        let rho = Self { space, entries };
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        psi.to_density()
    }

    /// Real part of the diagonal sum. Imaginary parts are bounded by the
    /// hermiticity check, so nothing is lost by dropping them.
    pub fn trace(&self) -> f64 {
        self.entries.diag().iter().map(|z| z.re).sum()
    }

    /// Check hermiticity, unit trace, and spectrum against the
    /// construction-time tolerances. Propagation applies its own, looser
    /// audits per time step.
    pub fn validate(&self) -> Result<(), HilbertError> {
        let defect = adjoint_defect(&self.entries);
        if defect > RHO_HERMITICITY_TOL {
            return Err(HilbertError::NotHermitian(defect));
        }
        let deviation = self.trace() - 1.0;
        if deviation.abs() > RHO_TRACE_TOL {
            return Err(HilbertError::TraceDeviation(deviation));
        }
        let eigenvalues = self.entries.eigvalsh(UPLO::Lower)?;
        let smallest = eigenvalues[0];
        if smallest < RHO_EIGENVALUE_FLOOR {
            return Err(HilbertError::NegativeEigenvalue(smallest));
        }
        Ok(())
    }
}

/// Dense operator tagged with the space it acts on.
///
/// The Hermitian flag is set at construction and checked there, so
/// downstream code can branch on [`is_hermitian`](Self::is_hermitian)
/// without re-measuring the matrix.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub space: HilbertSpace,
    pub entries: Array2<C64>,
    hermitian: bool,
}

impl OperatorMatrix {
    /// Wrap a matrix that must be Hermitian; the defect bound is
    /// [`OPERATOR_HERMITICITY_TOL`].
    pub fn hermitian(space: HilbertSpace, entries: Array2<C64>) -> Result<Self, HilbertError> {
        Self::check_shape(space, &entries)?;
        let defect = adjoint_defect(&entries);
        if defect > OPERATOR_HERMITICITY_TOL {
            return Err(HilbertError::NotHermitian(defect));
        }
        Ok(Self {
            space,
            entries,
            hermitian: true,
        })
    }

    /// Wrap a matrix with no symmetry claim.
    pub fn general(space: HilbertSpace, entries: Array2<C64>) -> Result<Self, HilbertError> {
        Self::check_shape(space, &entries)?;
        Ok(Self {
            space,
            entries,
            hermitian: false,
        })
    }

    fn check_shape(space: HilbertSpace, entries: &Array2<C64>) -> Result<(), HilbertError> {
        if entries.nrows() != space.dim() || entries.ncols() != space.dim() {
            return Err(HilbertError::DimMismatch {
                expected: space.dim(),
                got: entries.nrows().max(entries.ncols()),
            });
        }
        Ok(())
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Conjugate transpose. Hermitian operators keep their flag.
    pub fn dagger(&self) -> Self {
        Self {
            space: self.space,
            entries: self.entries.t().mapv(|z| z.conj()),
            hermitian: self.hermitian,
        }
    }

    /// Matrix-vector action on a state of the same space.
    pub fn apply(&self, psi: &StateVector) -> StateVector {
        assert_eq!(self.space, psi.space, "operator and state live on different spaces");
        StateVector {
            space: psi.space,
            amplitudes: self.entries.dot(&psi.amplitudes),
        }
    }
}

/// Pure or mixed state, as produced by the propagators.
#[derive(Debug, Clone)]
pub enum State {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl State {
    pub fn space(&self) -> HilbertSpace {
        match self {
            State::Pure(psi) => psi.space,
            State::Mixed(rho) => rho.space,
        }
    }

    /// View as a density matrix, forming the projector for pure states.
    pub fn density(&self) -> DensityMatrix {
        match self {
            State::Pure(psi) => psi.to_density(),
            State::Mixed(rho) => rho.clone(),
        }
    }
}

/// Reduce ρ to one tensor factor by tracing out the other two.
///
/// The result is a bare matrix of dimension atom_dim or n_max+1 depending
/// on the kept factor; it does not live on a [`HilbertSpace`] of its own.
/// The trace is preserved exactly up to floating-point addition order.
pub fn partial_trace(rho: &DensityMatrix, keep: Subsystem) -> Array2<C64> {
    let space = rho.space;
    let f = space.fock_dim();
    let kept = match keep {
        Subsystem::Atom => space.atom_dim,
        Subsystem::ModeA | Subsystem::ModeB => f,
    };
    let mut out = Array2::zeros((kept, kept));
    for row in 0..kept {
        for col in 0..kept {
            let mut sum = C64::new(0.0, 0.0);
            match keep {
                Subsystem::Atom => {
                    for m in 0..f {
                        for n in 0..f {
                            sum += rho.entries[[space.encode(row, m, n), space.encode(col, m, n)]];
                        }
                    }
                }
                Subsystem::ModeA => {
                    for alpha in 0..space.atom_dim {
                        for n in 0..f {
                            sum += rho.entries[[space.encode(alpha, row, n), space.encode(alpha, col, n)]];
                        }
                    }
                }
                Subsystem::ModeB => {
                    for alpha in 0..space.atom_dim {
                        for m in 0..f {
                            sum += rho.entries[[space.encode(alpha, m, row), space.encode(alpha, m, col)]];
                        }
                    }
                }
            }
            out[[row, col]] = sum;
        }
    }
    out
}

fn adjoint_defect(entries: &Array2<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..entries.nrows() {
        for j in i..entries.ncols() {
            let defect = (entries[[i, j]] - entries[[j, i]].conj()).norm();
            if defect > worst {
                worst = defect;
            }
        }
    }
    worst
}
