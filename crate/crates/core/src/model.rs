//! Hamiltonians, collapse operators, and parameter-regime checks.
//!
//! All generators are built in the rotating frame of the common drive
//! frequency. The interaction conserves the total excitation number, so
//! that frame removes the absolute optical frequency exactly, leaving only
//! detunings in the diagonal. Fock-basis populations, the atomic ground
//! probability, and reduced-state spectra are unchanged by the frame;
//! quantities that do pick up local phases are defined phase-robustly in
//! `observe`.
//!
//! Three tiers of the same physics are available. The full four-level
//! model keeps both intermediate states. The two-photon model eliminates
//! them adiabatically, keeping a ground and an upper level coupled by
//! photon pairs. The effective model also eliminates the upper level and
//! acts on the two field modes alone, exchanging photon pairs at the rate
//! λ²/δ where λ = g²/Δ is the Stark-shift scale.

use ndarray::Array2;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::hilbert::{HilbertError, HilbertSpace, Level, Mode, OperatorMatrix};
use crate::C64;

/// A dimensionless ratio counts as "large" at or above this threshold.
/// Calibrated so that a detuning-to-pair-detuning ratio of 4 (the adiabatic
/// working point) passes while 8/3 (the non-adiabatic one) fails.
pub const REGIME_THRESHOLD: f64 = 4.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("coupling g must be positive (got {0})")]
    NonPositiveCoupling(f64),
    #[error("{name} must be nonzero")]
    ZeroDetuning { name: &'static str },
    #[error("{name} must be nonnegative (got {value})")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("the {kind} model needs atom_dim {expected}, space has {got}")]
    WrongAtomDim {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("the two-photon reduction assumes equal detunings (got {0} and {1})")]
    UnequalDetunings(f64, f64),
    #[error("unknown hamiltonian kind '{0}' (expected full, two_photon, or effective)")]
    UnknownKind(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Physical rates of the scheme, all in units where the atom-field
/// coupling sets the frequency scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Atom-field coupling; 1 by convention.
    pub g: f64,
    /// Detuning of the transition through the first intermediate level.
    pub delta_1: f64,
    /// Detuning of the transition through the second intermediate level.
    pub delta_2: f64,
    /// Two-photon detuning of the upper level.
    pub delta_small: f64,
    /// Field decay rate per cavity mode.
    pub kappa: f64,
    /// Atomic decay rate.
    pub gamma: f64,
    /// Fock truncation handed to the space builders.
    pub n_max: usize,
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.g <= 0.0 {
            return Err(ModelError::NonPositiveCoupling(self.g));
        }
        for (name, value) in [("delta_1", self.delta_1), ("delta_2", self.delta_2), ("delta_small", self.delta_small)] {
            if value == 0.0 {
                return Err(ModelError::ZeroDetuning { name });
            }
        }
        for (name, value) in [("kappa", self.kappa), ("gamma", self.gamma)] {
            if value < 0.0 {
                return Err(ModelError::NegativeRate { name, value });
            }
        }
        Ok(())
    }

    /// The single detuning scale used for derived rates; with unequal
    /// detunings the smaller magnitude dominates the elimination error,
    /// so that one is taken.
    pub fn detuning_scale(&self) -> f64 {
        self.delta_1.abs().min(self.delta_2.abs())
    }

    /// Stark-shift magnitude λ = g²/Δ.
    pub fn stark_scale(&self) -> f64 {
        self.g * self.g / self.detuning_scale()
    }

    /// Pair-exchange rate magnitude λ²/δ, the slowest scale of the scheme.
    pub fn exchange_rate(&self) -> f64 {
        let lambda = self.stark_scale();
        lambda * lambda / self.delta_small.abs()
    }
}

/// Which tier of the model hierarchy to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamiltonianKind {
    Full,
    TwoPhoton,
    Effective,
}

impl HamiltonianKind {
    /// Atomic dimension the tier lives on.
    pub fn atom_dim(self) -> usize {
        match self {
            HamiltonianKind::Full => 4,
            HamiltonianKind::TwoPhoton => 2,
            HamiltonianKind::Effective => 1,
        }
    }

    pub fn build(self, params: &ModelParams, space: HilbertSpace) -> Result<OperatorMatrix, ModelError> {
        match self {
            HamiltonianKind::Full => full_hamiltonian(params, space),
            HamiltonianKind::TwoPhoton => two_photon_hamiltonian(params, space),
            HamiltonianKind::Effective => effective_hamiltonian(params, space),
        }
    }
}

impl fmt::Display for HamiltonianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            HamiltonianKind::Full => "full",
            HamiltonianKind::TwoPhoton => "two_photon",
            HamiltonianKind::Effective => "effective",
        };
        f.write_str(name)
    }
}

impl FromStr for HamiltonianKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "full" => Ok(HamiltonianKind::Full),
            "two_photon" => Ok(HamiltonianKind::TwoPhoton),
            "effective" => Ok(HamiltonianKind::Effective),
            other => Err(ModelError::UnknownKind(other.to_string())),
        }
    }
}

/// Four-level generator in the rotating frame:
/// −Δ₁|i₁⟩⟨i₁| − Δ₂|i₂⟩⟨i₂| − δ|e⟩⟨e|
/// + g(|g⟩⟨i₁|a† + |i₁⟩⟨e|a† + |g⟩⟨i₂|b† + |i₂⟩⟨e|b† + h.c.).
///
/// Each intermediate level emits into its own mode on the way down and
/// absorbs from it on the way up, so one pass g→e deposits one photon in
/// each leg's mode.
pub fn full_hamiltonian(params: &ModelParams, space: HilbertSpace) -> Result<OperatorMatrix, ModelError> {
    params.validate()?;
    if space.atom_dim != 4 {
        return Err(ModelError::WrongAtomDim {
            kind: "full",
            expected: 4,
            got: space.atom_dim,
        });
    }
    let a_dag = space.annihilator(Mode::A).dagger().entries;
    let b_dag = space.annihilator(Mode::B).dagger().entries;
    let transition = |to: Level, from: Level| space.atomic_transition(to, from).map(|op| op.entries);

    let mut coupling: Array2<C64> = transition(Level::G, Level::I1)?.dot(&a_dag)
        + transition(Level::I1, Level::E)?.dot(&a_dag)
        + transition(Level::G, Level::I2)?.dot(&b_dag)
        + transition(Level::I2, Level::E)?.dot(&b_dag);
    coupling.mapv_inplace(|z| z * params.g);

    let mut h = &coupling + &coupling.t().mapv(|z| z.conj());
    for (level, shift) in [
        (Level::I1, -params.delta_1),
        (Level::I2, -params.delta_2),
        (Level::E, -params.delta_small),
    ] {
        h = h + transition(level, level)?.mapv(|z| z * shift);
    }
    Ok(OperatorMatrix::hermitian(space, h)?)
}

/// Two-level generator after eliminating the intermediate states:
/// 2λ(a†a + b†b) − δ|e⟩⟨e| + λ(|g⟩⟨e|(a†² + b†²) + h.c.), λ = g²/Δ.
///
/// The 2λ term is the Stark shift both modes inherit from the eliminated
/// levels. A single λ exists only when both detunings agree, hence the
/// equality requirement.
pub fn two_photon_hamiltonian(params: &ModelParams, space: HilbertSpace) -> Result<OperatorMatrix, ModelError> {
    params.validate()?;
    if space.atom_dim != 2 {
        return Err(ModelError::WrongAtomDim {
            kind: "two_photon",
            expected: 2,
            got: space.atom_dim,
        });
    }
    if params.delta_1 != params.delta_2 {
        return Err(ModelError::UnequalDetunings(params.delta_1, params.delta_2));
    }
    let lambda = params.g * params.g / params.delta_1;

    let a = space.annihilator(Mode::A).entries;
    let b = space.annihilator(Mode::B).entries;
    let a_dag = a.t().mapv(|z| z.conj());
    let b_dag = b.t().mapv(|z| z.conj());

    let number = a_dag.dot(&a) + b_dag.dot(&b);
    let pair_up = a_dag.dot(&a_dag) + b_dag.dot(&b_dag);
    let raise = space.atomic_transition(Level::G, Level::E)?.entries.dot(&pair_up);

    let mut h = number.mapv(|z| z * (2.0 * lambda));
    h = h + space
        .atomic_transition(Level::E, Level::E)?
        .entries
        .mapv(|z| z * -params.delta_small);
    h = h + raise.mapv(|z| z * lambda);
    h = h + raise.t().mapv(|z| z.conj() * lambda);
    Ok(OperatorMatrix::hermitian(space, h)?)
}

/// Field-only generator with all atomic levels eliminated:
/// (λ²/δ)(a†²a² + b†²b² + a†²b² + b†²a²).
///
/// The diagonal terms are pair self-energies, the cross terms exchange
/// photon pairs between the modes.
pub fn effective_hamiltonian(params: &ModelParams, space: HilbertSpace) -> Result<OperatorMatrix, ModelError> {
    params.validate()?;
    if space.atom_dim != 1 {
        return Err(ModelError::WrongAtomDim {
            kind: "effective",
            expected: 1,
            got: space.atom_dim,
        });
    }
    let lambda = params.stark_scale();
    let coefficient = lambda * lambda / params.delta_small;

    let a = space.annihilator(Mode::A).entries;
    let b = space.annihilator(Mode::B).entries;
    let a_dag = a.t().mapv(|z| z.conj());
    let b_dag = b.t().mapv(|z| z.conj());

    let a2 = a.dot(&a);
    let b2 = b.dot(&b);
    let a_dag2 = a_dag.dot(&a_dag);
    let b_dag2 = b_dag.dot(&b_dag);

    let h = (a_dag2.dot(&a2) + b_dag2.dot(&b2) + a_dag2.dot(&b2) + b_dag2.dot(&a2)).mapv(|z| z * coefficient);
    Ok(OperatorMatrix::hermitian(space, h)?)
}

/// Lindblad collapse operators for the active decay channels.
///
/// Cavity decay acts on each mode with the same rate. Atomic decay follows
/// the ladder downward: in the full model both intermediate levels decay to
/// ground and the upper level decays into them; in the two-level reduction
/// the single remaining channel is upper to ground. A field-only space has
/// no atomic channel at all.
pub fn collapse_operators(params: &ModelParams, space: HilbertSpace) -> Result<Vec<OperatorMatrix>, ModelError> {
    params.validate()?;
    let mut ops = Vec::new();
    if params.kappa > 0.0 {
        let root = params.kappa.sqrt();
        for mode in [Mode::A, Mode::B] {
            let mut op = space.annihilator(mode);
            op.entries.mapv_inplace(|z| z * root);
            ops.push(op);
        }
    }
    if params.gamma > 0.0 {
        let root = params.gamma.sqrt();
        let channels: &[(Level, Level)] = match space.atom_dim {
            4 => &[
                (Level::G, Level::I1),
                (Level::G, Level::I2),
                (Level::I1, Level::E),
                (Level::I2, Level::E),
            ],
            2 => &[(Level::G, Level::E)],
            _ => &[],
        };
        for &(to, from) in channels {
            let mut op = space.atomic_transition(to, from)?;
            op.entries.mapv_inplace(|z| z * root);
            ops.push(op);
        }
    }
    Ok(ops)
}

/// One separation-of-scales ratio and whether it clears the threshold.
#[derive(Debug, Clone, Copy)]
pub struct RatioCheck {
    pub value: f64,
    pub pass: bool,
}

impl RatioCheck {
    fn new(value: f64) -> Self {
        Self {
            value,
            pass: value >= REGIME_THRESHOLD,
        }
    }
}

/// The five scale separations the scheme rests on, each as a ratio that
/// should be large. Decay ratios are infinite when the rate is zero.
#[derive(Debug, Clone, Copy)]
pub struct RegimeReport {
    /// Δ/g, validity of treating the intermediate levels perturbatively.
    pub detuning_over_coupling: RatioCheck,
    /// Δ/δ, separation between one-photon and two-photon detunings.
    pub detuning_over_pair_detuning: RatioCheck,
    /// δ/λ, validity of eliminating the upper level.
    pub pair_detuning_over_stark: RatioCheck,
    /// (λ²/δ)/κ, pair exchange outrunning cavity decay.
    pub exchange_over_cavity_decay: RatioCheck,
    /// (λ²/δ)/Γ, pair exchange outrunning atomic decay.
    pub exchange_over_atomic_decay: RatioCheck,
}

impl RegimeReport {
    pub fn all_pass(&self) -> bool {
        self.checks().iter().all(|(_, check)| check.pass)
    }

    /// Named checks in a fixed report order.
    pub fn checks(&self) -> [(&'static str, RatioCheck); 5] {
        [
            ("detuning_over_coupling", self.detuning_over_coupling),
            ("detuning_over_pair_detuning", self.detuning_over_pair_detuning),
            ("pair_detuning_over_stark", self.pair_detuning_over_stark),
            ("exchange_over_cavity_decay", self.exchange_over_cavity_decay),
            ("exchange_over_atomic_decay", self.exchange_over_atomic_decay),
        ]
    }
}

impl fmt::Display for RegimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, check)) in self.checks().iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(
                f,
                "{} = {:.6} ({})",
                name,
                check.value,
                if check.pass { "pass" } else { "fail" }
            )?;
        }
        Ok(())
    }
}

/// Measure every separation of scales at the given parameters.
pub fn validate_regime(params: &ModelParams) -> RegimeReport {
    let delta = params.detuning_scale();
    let small = params.delta_small.abs();
    let lambda = params.stark_scale();
    let exchange = params.exchange_rate();
    let versus = |rate: f64| {
        if rate > 0.0 {
            exchange / rate
        } else {
            f64::INFINITY
        }
    };
    RegimeReport {
        detuning_over_coupling: RatioCheck::new(delta / params.g),
        detuning_over_pair_detuning: RatioCheck::new(delta / small),
        pair_detuning_over_stark: RatioCheck::new(small / lambda),
        exchange_over_cavity_decay: RatioCheck::new(versus(params.kappa)),
        exchange_over_atomic_decay: RatioCheck::new(versus(params.gamma)),
    }
}

/// Time of the first pair-exchange half cycle, δπΔ²/(8g⁴).
///
/// At this point an initial photon pair has split evenly between the two
/// modes. Equal to π/(8·exchange_rate).
pub fn t0(params: &ModelParams) -> f64 {
    let delta = params.detuning_scale();
    params.delta_small.abs() * std::f64::consts::PI * delta * delta / (8.0 * params.g.powi(4))
}

/// Diagonal operator counting excitations: one per photon, one per
/// intermediate atomic level, two for the upper level. Commutes with every
/// Hamiltonian tier, which is what makes the rotating frame exact.
pub fn excitation_operator(space: HilbertSpace) -> OperatorMatrix {
    let weights: &[f64] = match space.atom_dim {
        4 => &[0.0, 1.0, 1.0, 2.0],
        2 => &[0.0, 2.0],
        _ => &[0.0],
    };
    let dim = space.dim();
    let mut entries = Array2::zeros((dim, dim));
    for index in 0..dim {
        let (alpha, m, n) = space.decode(index);
        entries[[index, index]] = C64::new((m + n) as f64 + weights[alpha], 0.0);
    }
    OperatorMatrix::hermitian(space, entries).expect("diagonal real matrix is hermitian")
}
