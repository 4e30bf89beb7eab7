//! End-to-end fidelity of entanglement-swapping repeater chains.
//!
//! A chain of `L + 1` elementary links joined by `L` swapping repeaters
//! delivers a Werner pair whose fidelity is
//!
//! ```text
//! F' = 1/4 + 3/4 * g^L * w^(L+1),   g = p1^2 p2 (4 eta^2 - 1) / 3,   w = (4 F - 1) / 3
//! ```
//!
//! where `F` is the elementary link fidelity, `p1`/`p2` the reliability of
//! one- and two-qubit gates and `eta` the measurement parameter.
//! [`path_fidelity`] extends this to links of different quality by replacing
//! `w^(L+1)` with the product of the per-link Werner weights.

use serde::{Deserialize, Serialize};

/// Fidelity of a completely mixed two-qubit Werner state.
pub const WERNER_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FidelityError {
    #[error("fidelity {value} outside (0.25, 1]")]
    Fidelity { value: f64 },
    #[error("Werner weight {value} outside (0, 1]")]
    Weight { value: f64 },
    #[error("{name} = {value} outside {range}")]
    Operation {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("path has no links")]
    EmptyPath,
}

fn check_fidelity(f: f64) -> Result<f64, FidelityError> {
    if f > WERNER_FLOOR && f <= 1.0 {
        Ok(f)
    } else {
        Err(FidelityError::Fidelity { value: f })
    }
}

/// Quality of the local operations performed by swapping repeaters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperationQuality {
    /// Reliability of one-qubit operations, in (0, 1].
    pub p1: f64,
    /// Reliability of two-qubit operations, in (0, 1].
    pub p2: f64,
    /// Measurement parameter, in (0.5, 1]. `eta = 1` is an ideal measurement.
    pub eta: f64,
}

impl Default for OperationQuality {
    fn default() -> Self {
        Self::PERFECT
    }
}

impl OperationQuality {
    pub const PERFECT: Self = Self {
        p1: 1.0,
        p2: 1.0,
        eta: 1.0,
    };

    pub fn new(p1: f64, p2: f64, eta: f64) -> Result<Self, FidelityError> {
        let ops = Self { p1, p2, eta };
        ops.validate()?;
        Ok(ops)
    }

    pub fn validate(&self) -> Result<(), FidelityError> {
        for (name, value) in [("p1", self.p1), ("p2", self.p2)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(FidelityError::Operation {
                    name,
                    value,
                    range: "(0, 1]",
                });
            }
        }
        if !(self.eta > 0.5 && self.eta <= 1.0) {
            return Err(FidelityError::Operation {
                name: "eta",
                value: self.eta,
                range: "(0.5, 1]",
            });
        }
        Ok(())
    }

    /// Attenuation applied by each swap: `p1^2 p2 (4 eta^2 - 1) / 3`.
    pub fn gate_factor(&self) -> f64 {
        self.p1 * self.p1 * self.p2 * (4.0 * self.eta * self.eta - 1.0) / 3.0
    }

    pub fn is_perfect(&self) -> bool {
        *self == Self::PERFECT
    }
}

/// Parameters of a uniform repeater chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapChainParams {
    /// Fidelity of each elementary link, in (0.25, 1].
    pub elementary_fidelity: f64,
    /// Number of intermediate repeaters (swaps).
    pub num_intermediate: u64,
    #[serde(flatten)]
    pub ops: OperationQuality,
}

impl SwapChainParams {
    pub fn perfect(elementary_fidelity: f64, num_intermediate: u64) -> Self {
        Self {
            elementary_fidelity,
            num_intermediate,
            ops: OperationQuality::PERFECT,
        }
    }

    pub fn validate(&self) -> Result<(), FidelityError> {
        check_fidelity(self.elementary_fidelity)?;
        self.ops.validate()
    }
}

/// `base^exp` for exponents beyond the `i32` range accepted by `powi`.
fn pow_u64(base: f64, exp: u64) -> f64 {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(exp as f64),
    }
}

/// Werner weight `(4f - 1) / 3` of a state with fidelity `f`.
pub fn werner_weight(f: f64) -> Result<f64, FidelityError> {
    check_fidelity(f).map(|f| (4.0 * f - 1.0) / 3.0)
}

/// End-to-end fidelity of a uniform chain with imperfect operations.
pub fn fidelity_generic(params: &SwapChainParams) -> Result<f64, FidelityError> {
    params.validate()?;
    let w = werner_weight(params.elementary_fidelity)?;
    let l = params.num_intermediate;
    let g = params.ops.gate_factor();
    Ok(WERNER_FLOOR + 0.75 * pow_u64(g, l) * pow_u64(w, l + 1))
}

/// End-to-end fidelity of a uniform chain with perfect operations.
pub fn fidelity_perfect(f_bar: f64, num_intermediate: u64) -> Result<f64, FidelityError> {
    let w = werner_weight(f_bar)?;
    Ok(WERNER_FLOOR + 0.75 * pow_u64(w, num_intermediate + 1))
}

/// End-to-end fidelity of a chain whose links have the given Werner weights.
pub fn path_fidelity(weights: &[f64], ops: &OperationQuality) -> Result<f64, FidelityError> {
    if weights.is_empty() {
        return Err(FidelityError::EmptyPath);
    }
    ops.validate()?;
    let mut product = 1.0;
    for &w in weights {
        if !(w > 0.0 && w <= 1.0) {
            return Err(FidelityError::Weight { value: w });
        }
        product *= w;
    }
    let swaps = (weights.len() - 1) as u64;
    Ok(WERNER_FLOOR + 0.75 * pow_u64(ops.gate_factor(), swaps) * product)
}

/// How many repeaters a chain of identical links tolerates before its
/// fidelity drops below a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeaterBound {
    /// At most this many intermediate repeaters.
    Bounded(u64),
    /// Any number of repeaters (perfect elementary links).
    Unbounded,
    /// Even a direct link misses the threshold.
    Infeasible,
}

impl std::fmt::Display for RepeaterBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RepeaterBound::Bounded(l) => write!(f, "{l}"),
            RepeaterBound::Unbounded => write!(f, "unbounded"),
            RepeaterBound::Infeasible => write!(f, "infeasible"),
        }
    }
}

/// Largest `L` such that `fidelity_perfect(f_bar, L) >= f_min`.
pub fn max_intermediate_repeaters(f_bar: f64, f_min: f64) -> Result<RepeaterBound, FidelityError> {
    let w = werner_weight(f_bar)?;
    let w_min = werner_weight(f_min)?;
    if f_bar < f_min {
        return Ok(RepeaterBound::Infeasible);
    }
    if w >= 1.0 {
        return Ok(RepeaterBound::Unbounded);
    }
    // w^(L+1) >= w_min  <=>  L + 1 <= ln(w_min) / ln(w)
    let estimate = (w_min.ln() / w.ln()).floor() - 1.0;
    let mut l = if estimate.is_finite() && estimate > 0.0 {
        estimate.min(u64::MAX as f64 / 2.0) as u64
    } else {
        0
    };
    let ok = |l: u64| fidelity_perfect(f_bar, l).map(|f| f >= f_min);
    while l > 0 && !ok(l)? {
        l -= 1;
    }
    while ok(l + 1)? {
        l += 1;
    }
    Ok(RepeaterBound::Bounded(l))
}
