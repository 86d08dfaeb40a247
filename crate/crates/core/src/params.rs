//! Circuit parameters shared by the analytic and simulator paths.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clock register preparation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockPrep {
    /// Sine profile `sqrt(2/T) sin(pi (2 tau + 1) / (2 T))` from the original
    /// algorithm.
    Hhl,
    /// Uniform profile `1/sqrt(T)`.
    Uniform,
}

/// Which registers the final measurement conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Postselect {
    /// Ancilla = 1 only (the common variant).
    Ancilla,
    /// Ancilla = 1 and clock back in state 0 (the improved variant).
    AncillaAndZeroClock,
}

/// Sign structure assumed for the spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenvalueMode {
    /// All eigenvalues in (0, 1] after scaling.
    Positive,
    /// Eigenvalues in [-1, 1] with magnitudes bounded away from zero; clock
    /// bins above T/2 read as negative estimates.
    Signed,
}

/// Derived circuit parameters for one run.
///
/// `t_steps` is the clock dimension (2^n_c) and `t0 = t * t_steps` the total
/// evolution time; bin k of the clock encodes the eigenvalue estimate
/// `2 pi k / t0` (positive mode).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HhlParams {
    pub n_c: u32,
    pub t_steps: usize,
    pub t: f64,
    pub t0: f64,
    /// Clock bins below this are excluded from the inversion.
    pub k_min: usize,
    /// Rotation constant; sin theta(k) = c * w_k with w_k the
    /// inverse-eigenvalue weight of bin k.
    pub c: f64,
    /// Conditioning estimate used to pick k_min, if one was supplied.
    pub kappa_prime: Option<f64>,
    /// True when the k_min formula hit zero and was clamped up to 1.
    pub k_min_clamped: bool,
    pub clock_prep: ClockPrep,
    pub postselect: Postselect,
    pub mode: EigenvalueMode,
}

/// Largest supported clock register. Dense simulation stops well below this;
/// the analytic path only needs O(T) tables per eigenvalue.
pub const MAX_CLOCK_QUBITS: u32 = 24;

/// Validate inputs and derive `t0`, `k_min` and the rotation constant.
///
/// `kappa_prime`, when given, sets `k_min = floor(t0 / (4 pi kappa_prime))`
/// (clamped to at least 1); without it `k_min = 1`.
pub fn build_params(
    n_c: u32,
    t: f64,
    kappa_prime: Option<f64>,
    clock_prep: ClockPrep,
    postselect: Postselect,
    mode: EigenvalueMode,
) -> Result<HhlParams> {
    if n_c == 0 || n_c > MAX_CLOCK_QUBITS {
        return Err(Error::InvalidParameter(format!(
            "n_c = {n_c} outside 1..={MAX_CLOCK_QUBITS}"
        )));
    }
    let t_max = match mode {
        EigenvalueMode::Positive => 2.0 * PI,
        EigenvalueMode::Signed => PI,
    };
    if !t.is_finite() || t <= 0.0 || t >= t_max {
        return Err(Error::InvalidParameter(format!(
            "t = {t} outside (0, {t_max:.6}) for {mode:?} mode"
        )));
    }
    if let Some(kp) = kappa_prime {
        if !kp.is_finite() || kp < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "kappa_prime = {kp} must be >= 1"
            )));
        }
    }

    let t_steps = 1usize << n_c;
    let t0 = t * t_steps as f64;
    let raw_k_min = match kappa_prime {
        Some(kp) => (t0 / (4.0 * PI * kp)).floor() as usize,
        None => 1,
    };
    let k_min_clamped = raw_k_min == 0;
    let k_min = raw_k_min.max(1);
    if k_min >= t_steps {
        return Err(Error::InvalidParameter(format!(
            "k_min = {k_min} must stay below T = {t_steps}; raise n_c or kappa_prime"
        )));
    }
    if mode == EigenvalueMode::Signed && k_min > 1 {
        // Bin T-1 reads as eigenvalue estimate -2 pi / t0, so its rotation
        // angle satisfies |sin theta| = k_min; anything above 1 is invalid.
        return Err(Error::RotationOutOfRange(k_min as f64));
    }
    let c = 2.0 * PI * k_min as f64 / t0;

    Ok(HhlParams {
        n_c,
        t_steps,
        t,
        t0,
        k_min,
        c,
        kappa_prime,
        k_min_clamped,
        clock_prep,
        postselect,
        mode,
    })
}

/// Like [`build_params`] but with `k_min` given directly instead of derived
/// from a conditioning estimate.
pub fn build_params_k_min(
    n_c: u32,
    t: f64,
    k_min: usize,
    clock_prep: ClockPrep,
    postselect: Postselect,
    mode: EigenvalueMode,
) -> Result<HhlParams> {
    let mut p = build_params(n_c, t, None, clock_prep, postselect, mode)?;
    if k_min == 0 || k_min >= p.t_steps {
        return Err(Error::InvalidParameter(format!(
            "k_min = {k_min} outside 1..{}",
            p.t_steps
        )));
    }
    if mode == EigenvalueMode::Signed && k_min > 1 {
        return Err(Error::RotationOutOfRange(k_min as f64));
    }
    p.k_min = k_min;
    p.c = 2.0 * std::f64::consts::PI * k_min as f64 / p.t0;
    p.kappa_prime = None;
    p.k_min_clamped = false;
    Ok(p)
}

impl HhlParams {
    /// Inverse-eigenvalue weight of clock bin k: `t0 / (2 pi k)` with the
    /// signed-mode branch `t0 / (2 pi (k - T))` above T/2, and 0 for bins
    /// excluded by `k_min`.
    pub fn inverse_time_weight(&self, k: usize) -> f64 {
        let t_steps = self.t_steps;
        debug_assert!(k < t_steps);
        let excluded = match self.mode {
            EigenvalueMode::Positive => k < self.k_min,
            EigenvalueMode::Signed => k.min(t_steps - k) < self.k_min,
        };
        if excluded {
            return 0.0;
        }
        let signed_k = match self.mode {
            EigenvalueMode::Positive => k as f64,
            EigenvalueMode::Signed => {
                if k <= t_steps / 2 {
                    k as f64
                } else {
                    k as f64 - t_steps as f64
                }
            }
        };
        self.t0 / (2.0 * PI * signed_k)
    }

    /// Rotation amplitude applied to bin k; zero for excluded bins.
    pub fn sin_theta(&self, k: usize) -> f64 {
        self.c * self.inverse_time_weight(k)
    }

    /// The conditioning estimate `t0 / (4 pi k_min)` implied by the final
    /// k_min (equals the supplied kappa_prime only up to flooring).
    pub fn kappa_prime_effective(&self) -> f64 {
        self.t0 / (4.0 * PI * self.k_min as f64)
    }
}
