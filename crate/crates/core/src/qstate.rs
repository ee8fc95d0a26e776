//! Pure states of a single particle over the three boxes `A`, `B` and `B'`.
//!
//! The Hilbert space is fixed at dimension three. Alice prepares a
//! superposition of `|a⟩` and `|b⟩`; Bob splits the `B` amplitude into a part
//! he opens immediately and a reserved part `B'` that he later recombines
//! with box `A` for the verification projection.
//!
//! Amplitudes are complex so that arbitrary (cheating) preparations and
//! global phases can be represented, even though every honest state is real
//! and non-negative.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{check_unit, Error, Result};
use crate::rng::{uniform, SimRng};

/// Squared norms within this distance of one are accepted as they are.
pub const NORM_TOLERANCE: f64 = 1e-12;
/// Squared norms within this distance of one are silently renormalized.
pub const RENORMALIZE_LIMIT: f64 = 1e-9;

/// Probabilities at or below this are rounding residue and treated as zero.
const PROBABILITY_FLOOR: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisLabel {
    BoxA,
    BoxB,
    BoxBPrime,
}

impl BasisLabel {
    /// Serialization order.
    pub const ALL: [BasisLabel; 3] = [BasisLabel::BoxA, BasisLabel::BoxB, BasisLabel::BoxBPrime];

    fn index(self) -> usize {
        match self {
            BasisLabel::BoxA => 0,
            BasisLabel::BoxB => 1,
            BasisLabel::BoxBPrime => 2,
        }
    }
}

/// A normalized amplitude triple over `(|a⟩, |b⟩, |b'⟩)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState {
    amps: [Complex64; 3],
}

impl PureState {
    /// Builds a state, renormalizing small drift and rejecting anything else.
    pub fn new(a: Complex64, b: Complex64, b_prime: Complex64) -> Result<Self> {
        let amps = [a, b, b_prime];
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("state amplitudes must be finite"));
        }
        let n2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        let drift = (n2 - 1.0).abs();
        if drift <= NORM_TOLERANCE {
            Ok(PureState { amps })
        } else if drift <= RENORMALIZE_LIMIT {
            let s = n2.sqrt();
            Ok(PureState { amps: amps.map(|z| z / s) })
        } else {
            Err(Error::NotNormalized(n2))
        }
    }

    pub fn from_real(a: f64, b: f64, b_prime: f64) -> Result<Self> {
        Self::new(a.into(), b.into(), b_prime.into())
    }

    /// Normalizes an arbitrary non-zero vector.
    fn from_unnormalized(amps: [Complex64; 3]) -> Result<Self> {
        let n2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(Error::Internal("cannot normalize a zero vector".into()));
        }
        let s = n2.sqrt();
        Self::new(amps[0] / s, amps[1] / s, amps[2] / s)
    }

    pub fn basis(label: BasisLabel) -> Self {
        let mut amps = [Complex64::new(0.0, 0.0); 3];
        amps[label.index()] = Complex64::new(1.0, 0.0);
        PureState { amps }
    }

    pub fn amp(&self, label: BasisLabel) -> Complex64 {
        self.amps[label.index()]
    }

    pub fn amplitudes(&self) -> [Complex64; 3] {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// The same ray multiplied by `e^{iθ}`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        PureState { amps: self.amps.map(|z| z * phase) }
    }
}

/// Six comma-separated floats, `re,im` per amplitude in basis order, each
/// with 17 significant digits.
impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, z) in self.amps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{:.16e},{:.16e}", z.re, z.im)?;
        }
        Ok(())
    }
}

impl FromStr for PureState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::domain(format!("bad state literal: {e}")))?;
        if parts.len() != 6 {
            return Err(Error::domain(format!("state literal needs 6 numbers, got {}", parts.len())));
        }
        Self::new(
            Complex64::new(parts[0], parts[1]),
            Complex64::new(parts[2], parts[3]),
            Complex64::new(parts[4], parts[5]),
        )
    }
}

/// Result of opening box `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureOutcome {
    pub found: bool,
    pub post_state: PureState,
}

/// Alice's preparation `√(1−α)|a⟩ + √α|b⟩`.
pub fn prepare_alice(alpha: f64) -> Result<PureState> {
    check_unit("alpha", alpha)?;
    PureState::from_real((1.0 - alpha).sqrt(), alpha.sqrt(), 0.0)
}

/// The publicly agreed state `√(1−γ)|a⟩ + √γ|b⟩`.
pub fn committed_state(gamma: f64) -> Result<PureState> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} is outside (0, 1]")));
    }
    PureState::from_real((1.0 - gamma).sqrt(), gamma.sqrt(), 0.0)
}

/// Bob's split `|b⟩ → √(1−β)|b⟩ + √β|b'⟩`, applied linearly.
pub fn split_b(state: &PureState, beta: f64) -> Result<PureState> {
    check_unit("beta", beta)?;
    let [a, b, bp] = state.amps;
    PureState::new(a, b * (1.0 - beta).sqrt(), bp + b * beta.sqrt())
}

/// Probability of finding the particle when box `B` is opened.
pub fn prob_in_b(state: &PureState) -> f64 {
    state.amp(BasisLabel::BoxB).norm_sqr()
}

/// Opens box `B`, consuming one uniform draw.
pub fn measure_b(state: &PureState, rng: &mut SimRng) -> Result<MeasureOutcome> {
    measure_b_with_draw(state, uniform(rng))
}

/// Opens box `B` using a pre-drawn uniform `u ∈ [0, 1)`: found iff `u < |amp_b|²`.
pub fn measure_b_with_draw(state: &PureState, u: f64) -> Result<MeasureOutcome> {
    let [a, b, bp] = state.amps;
    let p = b.norm_sqr();
    let zero = Complex64::new(0.0, 0.0);
    if u < p {
        // keep the phase of the b amplitude
        let post = PureState::from_unnormalized([zero, b, zero])?;
        Ok(MeasureOutcome { found: true, post_state: post })
    } else {
        let post = PureState::from_unnormalized([a, zero, bp])?;
        Ok(MeasureOutcome { found: false, post_state: post })
    }
}

/// The committed state as Bob expects it after a no-find on box `B`:
/// `√((1−γ)/(1−γ+βγ))|a⟩ + √(βγ/(1−γ+βγ))|b'⟩`.
pub fn reduced_committed(gamma: f64, beta: f64) -> Result<PureState> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} is outside (0, 1]")));
    }
    check_unit("beta", beta)?;
    let denom = 1.0 - gamma + beta * gamma;
    if denom <= 0.0 {
        return Err(Error::Degenerate(format!(
            "reduced committed state undefined at gamma = {gamma}, beta = {beta}"
        )));
    }
    PureState::from_real(((1.0 - gamma) / denom).sqrt(), 0.0, (beta * gamma / denom).sqrt())
}

/// `⟨s1|s2⟩`, conjugate-linear in the first argument.
pub fn overlap(s1: &PureState, s2: &PureState) -> Complex64 {
    s1.amps.iter().zip(s2.amps.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Probability that the verification projection fails, i.e. that Bob
/// detects a deviation from the committed state.
pub fn mismatch_probability(post_state: &PureState, gamma: f64, beta: f64) -> Result<f64> {
    if post_state.amp(BasisLabel::BoxB).norm_sqr() > NORM_TOLERANCE {
        return Err(Error::domain("verification requires an empty box B (amp_b = 0)"));
    }
    let target = reduced_committed(gamma, beta)?;
    let p = 1.0 - overlap(&target, post_state).norm_sqr();
    Ok(if p <= PROBABILITY_FLOOR { 0.0 } else { p.min(1.0) })
}

/// Verification projection onto the reduced committed state. Returns `true`
/// when the orthogonal outcome occurs ("mismatch detected").
pub fn verify_mismatch(post_state: &PureState, gamma: f64, beta: f64, rng: &mut SimRng) -> Result<bool> {
    verify_mismatch_with_draw(post_state, gamma, beta, uniform(rng))
}

pub fn verify_mismatch_with_draw(post_state: &PureState, gamma: f64, beta: f64, u: f64) -> Result<bool> {
    Ok(u < mismatch_probability(post_state, gamma, beta)?)
}

/// Outcome probabilities `[found, mismatch, match]` computed by running the
/// round on state vectors: prepare, split, open box `B`, project.
pub fn state_vector_probs(alpha: f64, beta: f64, gamma: f64) -> Result<[f64; 3]> {
    let split = split_b(&prepare_alice(alpha)?, beta)?;
    let p_found = prob_in_b(&split);
    let p_empty = split.amp(BasisLabel::BoxA).norm_sqr() + split.amp(BasisLabel::BoxBPrime).norm_sqr();
    if p_empty == 0.0 {
        return Ok([p_found, 0.0, 0.0]);
    }
    // u = 1 always lands on the no-find branch
    let post = measure_b_with_draw(&split, 1.0)?.post_state;
    let m = mismatch_probability(&post, gamma, beta)?;
    Ok([p_found, p_empty * m, p_empty * (1.0 - m)])
}
