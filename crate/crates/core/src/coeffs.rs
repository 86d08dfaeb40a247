//! Clock-register spectral coefficients in closed form, and the error
//! functionals built from them.
//!
//! For an eigenvalue lambda the clock readout after phase estimation carries
//! amplitudes `alpha_{k} = (1/sqrt(T)) sum_tau s_tau e^{i tau delta_k / T}`
//! with `delta_k = lambda t0 - 2 pi k` and `s_tau` the clock preparation
//! profile. Both profiles used here admit closed forms, which this module
//! evaluates stably near their removable singularities; the direct sum stays
//! available as a fallback and as the test oracle.

use std::f64::consts::{PI, SQRT_2, TAU};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::{ClockPrep, HhlParams, Postselect};
use crate::problem::PreparedProblem;
use crate::C64;

/// Wrapped angles below this sit too close to a removable singularity for
/// the closed form (catastrophic cancellation); those entries fall back to
/// the direct sum, which is exact there.
const CLOSED_FORM_GUARD: f64 = 1e-4;

/// Postselection probabilities below this are treated as degenerate.
pub const DEGENERATE_PROB: f64 = 1e-300;

/// Clock preparation profile `s_tau` (the amplitudes the preparation writes
/// over the time register).
pub fn clock_profile(clock: ClockPrep, t_steps: usize) -> Vec<f64> {
    let tf = t_steps as f64;
    match clock {
        ClockPrep::Uniform => vec![1.0 / tf.sqrt(); t_steps],
        ClockPrep::Hhl => (0..t_steps)
            .map(|tau| (2.0 / tf).sqrt() * (PI * (2 * tau + 1) as f64 / (2.0 * tf)).sin())
            .collect(),
    }
}

/// Direct-sum evaluation of one coefficient; O(T) but free of cancellation.
///
/// The constant part of the profile is factored out of the accumulation so
/// the normalization rounds once at the end; at an exact resonance the
/// uniform-clock sum is then T * (1/T) = 1 with no drift.
fn alpha_direct_entry(clock: ClockPrep, delta: f64, t_steps: usize) -> C64 {
    let tf = t_steps as f64;
    let mut acc = C64::new(0.0, 0.0);
    match clock {
        ClockPrep::Uniform => {
            for tau in 0..t_steps {
                acc += C64::from_polar(1.0, tau as f64 * delta / tf);
            }
            acc.unscale(tf)
        }
        ClockPrep::Hhl => {
            for tau in 0..t_steps {
                let s = (PI * (2 * tau + 1) as f64 / (2.0 * tf)).sin();
                acc += C64::from_polar(s, tau as f64 * delta / tf);
            }
            acc.scale(SQRT_2 / tf)
        }
    }
}

/// Splits `angle / (2 pi T)` into the nearest integer and the wrapped
/// residual angle `pi * frac`, so denominator sines can be evaluated without
/// cancellation: `sin(angle / (2T)) = (-1)^m sin(pi * frac)`.
fn wrap(angle: f64, tf: f64) -> (i64, f64) {
    let u = angle / (TAU * tf);
    let m = u.round();
    (m as i64, PI * (u - m))
}

fn parity(m: i64) -> f64 {
    if m & 1 == 0 { 1.0 } else { -1.0 }
}

fn alpha_uniform_entry(delta: f64, t_steps: usize) -> C64 {
    let tf = t_steps as f64;
    let (m, arg) = wrap(delta, tf);
    if arg.abs() < CLOSED_FORM_GUARD {
        return alpha_direct_entry(ClockPrep::Uniform, delta, t_steps);
    }
    let phi = 0.5 * delta * (1.0 - 1.0 / tf);
    let ratio = (0.5 * delta).sin() / (tf * parity(m) * arg.sin());
    C64::from_polar(1.0, phi) * ratio
}

fn alpha_hhl_entry(delta: f64, t_steps: usize) -> C64 {
    let tf = t_steps as f64;
    let (m_plus, arg_plus) = wrap(delta + PI, tf);
    let (m_minus, arg_minus) = wrap(delta - PI, tf);
    if arg_plus.abs() < CLOSED_FORM_GUARD || arg_minus.abs() < CLOSED_FORM_GUARD {
        return alpha_direct_entry(ClockPrep::Hhl, delta, t_steps);
    }
    let phi = 0.5 * delta * (1.0 - 1.0 / tf);
    let num = -SQRT_2 * (0.5 * delta).cos() * (0.5 * delta / tf).cos() * (PI / (2.0 * tf)).sin();
    let den = tf * parity(m_plus + m_minus) * arg_plus.sin() * arg_minus.sin();
    C64::from_polar(1.0, phi) * (num / den)
}

/// All T clock coefficients for one eigenvalue.
pub fn alpha(clock: ClockPrep, lambda: f64, params: &HhlParams) -> Vec<C64> {
    let t_steps = params.t_steps;
    (0..t_steps)
        .map(|k| {
            let delta = lambda * params.t0 - TAU * k as f64;
            match clock {
                ClockPrep::Uniform => alpha_uniform_entry(delta, t_steps),
                ClockPrep::Hhl => alpha_hhl_entry(delta, t_steps),
            }
        })
        .collect()
}

/// Coefficient matrix for a spectrum: T rows (clock bins) by d columns
/// (eigenvalues), using the clock preparation from `params`.
pub struct CoefficientTable {
    pub alpha: DMatrix<C64>,
}

pub fn coefficient_table(eigenvalues: &[f64], params: &HhlParams) -> CoefficientTable {
    let d = eigenvalues.len();
    let cols: Vec<Vec<C64>> = eigenvalues
        .iter()
        .map(|&l| alpha(params.clock_prep, l, params))
        .collect();
    let alpha = DMatrix::from_fn(params.t_steps, d, |k, j| cols[j][k]);
    CoefficientTable { alpha }
}

/// Weighted coefficient sums for one eigenvalue: `s1 = sum_k |alpha_k|^2 w_k`
/// (the expected inverse-eigenvalue readout, 1/lambda in the ideal limit)
/// and `s2 = sum_k |alpha_k|^2 w_k^2` (its second moment).
pub fn weighted_sums(alpha_col: &[C64], params: &HhlParams) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (k, a) in alpha_col.iter().enumerate() {
        let w = params.inverse_time_weight(k);
        if w != 0.0 {
            let a2 = a.norm_sqr();
            s1 += a2 * w;
            s2 += a2 * w * w;
        }
    }
    (s1, s2)
}

/// First- and second-moment relative errors of the eigenvalue inversion:
/// `eps1 = lambda * s1 - 1` and `eps2 = lambda^2 * s2 - 1`. Both vanish when
/// the clock reads the eigenvalue exactly.
pub fn epsilons(lambda: f64, params: &HhlParams) -> (f64, f64) {
    let col = alpha(params.clock_prep, lambda, params);
    let (s1, s2) = weighted_sums(&col, params);
    (lambda * s1 - 1.0, lambda * lambda * s2 - 1.0)
}

/// Closed-form output metrics of one run.
///
/// `x_approx` is the amplified solution component `sum_j beta_j s1_j u_j`
/// (the clock-zero slice of the final selected state, up to the factor C);
/// `fidelity` and the norm figures depend on which postselection the run
/// uses. Norms refer to the prepared (scaled, normalized) system.
#[derive(Clone, Debug)]
pub struct ErrorMetrics {
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    /// Effective inverted eigenvalue 1/s1_j seen by the algorithm.
    pub lambda_tilde: Vec<f64>,
    /// Selection probability of an ideal exact inversion, `C^2 sum q_j / lambda_j^2`.
    pub p_ideal: f64,
    /// Ancilla-only selection probability.
    pub p0: f64,
    /// Ancilla-and-zero-clock selection probability.
    pub p_tilde: f64,
    /// The probability of the configured postselection (p0 or p_tilde).
    pub p_success: f64,
    pub fidelity: f64,
    pub infidelity: f64,
    pub distance: f64,
    pub norm_x: f64,
    pub norm_x_approx: f64,
    pub norm_rel_error: f64,
    pub x_approx: DVector<C64>,
}

/// Compute every output metric from the closed-form coefficients alone
/// (no statevector is built).
pub fn solve_analytic(prepared: &PreparedProblem, params: &HhlParams) -> Result<ErrorMetrics> {
    if prepared.mode != params.mode {
        return Err(Error::InvalidParameter(format!(
            "problem prepared in {:?} mode but params use {:?}",
            prepared.mode, params.mode
        )));
    }
    let d = prepared.d();
    let table = coefficient_table(&prepared.eigenvalues, params);
    let c = params.c;

    let mut eps1 = Vec::with_capacity(d);
    let mut eps2 = Vec::with_capacity(d);
    let mut lambda_tilde = Vec::with_capacity(d);
    let mut s1 = Vec::with_capacity(d);
    let mut p_ideal = 0.0;
    let mut p0 = 0.0;
    let mut p_tilde = 0.0;
    let mut overlap_num = 0.0; // sum_j q_j s1_j / lambda_j
    let mut p_norm = 0.0; // sum_j q_j / lambda_j^2
    let mut q0 = 0.0; // sum_j q_j s2_j
    let mut q_tilde = 0.0; // sum_j q_j s1_j^2

    for j in 0..d {
        let lambda = prepared.eigenvalues[j];
        let col: Vec<C64> = table.alpha.column(j).iter().copied().collect();
        let (s1_j, s2_j) = weighted_sums(&col, params);
        let q_j = prepared.betas[j].norm_sqr();

        eps1.push(lambda * s1_j - 1.0);
        eps2.push(lambda * lambda * s2_j - 1.0);
        lambda_tilde.push(1.0 / s1_j);
        s1.push(s1_j);

        p_ideal += c * c * q_j / (lambda * lambda);
        p0 += c * c * q_j * s2_j;
        p_tilde += c * c * q_j * s1_j * s1_j;
        overlap_num += q_j * s1_j / lambda;
        p_norm += q_j / (lambda * lambda);
        q0 += q_j * s2_j;
        q_tilde += q_j * s1_j * s1_j;
    }

    let p_success = match params.postselect {
        Postselect::Ancilla => p0,
        Postselect::AncillaAndZeroClock => p_tilde,
    };
    if p_success < DEGENERATE_PROB {
        return Err(Error::DegeneratePostselection(p_success));
    }

    let q_sel = match params.postselect {
        Postselect::Ancilla => q0,
        Postselect::AncillaAndZeroClock => q_tilde,
    };
    let fidelity = (overlap_num * overlap_num / (p_norm * q_sel)).min(1.0);
    let infidelity = (1.0 - fidelity).max(0.0);
    let distance = infidelity.sqrt();

    // C ||x|| = sqrt(p_ideal), so the norms reduce to the weighted sums.
    let norm_x = p_norm.sqrt();
    let norm_x_approx = q_sel.sqrt();
    let norm_rel_error = (norm_x_approx - norm_x).abs() / norm_x;

    let weights = DVector::from_fn(d, |j, _| prepared.betas[j] * C64::new(s1[j], 0.0));
    let x_approx = &prepared.eigenvectors * weights;

    Ok(ErrorMetrics {
        eps1,
        eps2,
        lambda_tilde,
        p_ideal,
        p0,
        p_tilde,
        p_success,
        fidelity,
        infidelity,
        distance,
        norm_x,
        norm_x_approx,
        norm_rel_error,
        x_approx,
    })
}

/// How to evaluate an observable on the output vector.
#[derive(Clone, Copy, Debug)]
pub enum Sampling {
    /// Exact quadratic form.
    Exact,
    /// Simulate repeated measurement in the observable's eigenbasis.
    Counts { shots: u64, seed: u64 },
}

/// Expectation value `<x| M |x>` of a Hermitian observable on an
/// unnormalized vector, exactly or from simulated measurement counts.
pub fn expectation_value(x: &DVector<C64>, m: &DMatrix<C64>, sampling: Sampling) -> Result<f64> {
    let d = x.len();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Dimension(format!(
            "observable is {}x{} but the vector has length {d}",
            m.nrows(),
            m.ncols()
        )));
    }
    let max_abs = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let herm_dev = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)].conj()).norm())
        .fold(0.0, f64::max);
    if herm_dev > 1e-12 * max_abs.max(1.0) {
        return Err(Error::NotHermitian { dev: herm_dev });
    }

    let norm_sq = x.norm_squared();
    match sampling {
        Sampling::Exact => Ok((x.adjoint() * m * x)[(0, 0)].re),
        Sampling::Counts { shots, seed } => {
            if shots == 0 {
                return Err(Error::InvalidParameter("shots must be positive".into()));
            }
            if norm_sq <= 0.0 {
                return Ok(0.0);
            }
            use rand::{Rng, SeedableRng};
            let eig = nalgebra::SymmetricEigen::new(m.clone());
            let x_hat = x / C64::new(norm_sq.sqrt(), 0.0);
            let probs: Vec<f64> = (0..d)
                .map(|j| {
                    let col = eig.eigenvectors.column(j);
                    let mut ip = C64::new(0.0, 0.0);
                    for i in 0..d {
                        ip += col[i].conj() * x_hat[i];
                    }
                    ip.norm_sqr()
                })
                .collect();
            let total: f64 = probs.iter().sum();

            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let mut counts = vec![0u64; d];
            for _ in 0..shots {
                let u: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = d - 1;
                for (j, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                counts[pick] += 1;
            }
            let mean: f64 = (0..d)
                .map(|j| eig.eigenvalues[j] * counts[j] as f64 / shots as f64)
                .sum();
            Ok(norm_sq * mean)
        }
    }
}
