//! Exact statevector simulation of the three-register circuit.
//!
//! Register layout: one ancilla qubit `a`, an n_c-qubit clock with T = 2^n_c
//! bins, and an n_r-qubit solution register of dimension `dim_r` (the
//! problem dimension d rounded up to a power of two). Amplitudes live in a
//! flat vector indexed by `((a * T) + k) * dim_r + r`.
//!
//! Stage order: clock preparation, controlled forward evolution, the clock
//! DFT, the conditioned ancilla rotation, then the three inverse stages in
//! reverse order. The DFT stage maps `amp'[k] = (1/sqrt(T)) sum_tau
//! e^{-2 pi i tau k / T} amp[tau]`; its inverse is the adjoint. The clock
//! preparations are applied as explicit orthonormal matrices and inverted by
//! their true adjoints (the sine-profile basis is not symmetric, so the
//! orientation matters).

use std::io::{Read as _, Write as _};
use std::path::Path;

use nalgebra::DVector;

use crate::coeffs::DEGENERATE_PROB;
use crate::error::{Error, Result};
use crate::params::{ClockPrep, HhlParams, Postselect};
use crate::problem::PreparedProblem;
use crate::C64;

/// Dense simulation guard rails.
pub const MAX_SIM_CLOCK_QUBITS: u32 = 12;
pub const MAX_SIM_DIM: usize = 64;

const MAGIC: &[u8; 6] = b"HHLSV\0";

#[derive(Clone, Debug)]
pub struct StateVector {
    pub n_c: u32,
    pub n_r: u32,
    pub amps: Vec<C64>,
}

impl StateVector {
    pub fn zero(n_c: u32, n_r: u32) -> Self {
        let len = 2usize * (1 << n_c) * (1 << n_r);
        StateVector { n_c, n_r, amps: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn t_steps(&self) -> usize {
        1 << self.n_c
    }

    pub fn dim_r(&self) -> usize {
        1 << self.n_r
    }

    #[inline]
    pub fn index(&self, a: usize, k: usize, r: usize) -> usize {
        (a * self.t_steps() + k) * self.dim_r() + r
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_dev(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// Binary dump: 16-byte header (magic, n_c, n_r little-endian, reserved),
    /// then the amplitudes as little-endian (re, im) f64 pairs.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; 16];
        header[..6].copy_from_slice(MAGIC);
        header[6..8].copy_from_slice(&(self.n_c as u16).to_le_bytes());
        header[8..10].copy_from_slice(&(self.n_r as u16).to_le_bytes());
        // bytes 10..16 reserved
        file.write_all(&header).map_err(|e| Error::io(path, e))?;
        let mut buf = Vec::with_capacity(self.amps.len() * 16);
        for z in &self.amps {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<StateVector> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; 16];
        file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        if &header[..6] != MAGIC {
            return Err(Error::BadStateFile {
                path: path.into(),
                reason: "bad magic".into(),
            });
        }
        let n_c = u16::from_le_bytes([header[6], header[7]]) as u32;
        let n_r = u16::from_le_bytes([header[8], header[9]]) as u32;
        if n_c == 0 || n_c > MAX_SIM_CLOCK_QUBITS || n_r > 16 {
            return Err(Error::BadStateFile {
                path: path.into(),
                reason: format!("unsupported register sizes n_c={n_c} n_r={n_r}"),
            });
        }
        let len = 2usize * (1 << n_c) * (1 << n_r);
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
        if buf.len() != len * 16 {
            return Err(Error::BadStateFile {
                path: path.into(),
                reason: format!("expected {} amplitude bytes, found {}", len * 16, buf.len()),
            });
        }
        let amps = buf
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(StateVector { n_c, n_r, amps })
    }
}

/// `|0>_a |0>_c |b>_r` with the problem's normalized right-hand side loaded
/// into the solution register.
pub fn prepare_initial(prepared: &PreparedProblem, params: &HhlParams) -> Result<StateVector> {
    if params.n_c > MAX_SIM_CLOCK_QUBITS {
        return Err(Error::InvalidParameter(format!(
            "dense simulation supports n_c <= {MAX_SIM_CLOCK_QUBITS}, got {}",
            params.n_c
        )));
    }
    let d = prepared.d();
    if d > MAX_SIM_DIM {
        return Err(Error::InvalidParameter(format!(
            "dense simulation supports d <= {MAX_SIM_DIM}, got {d}"
        )));
    }
    let n_r = (usize::BITS - (d - 1).leading_zeros()).max(0);
    let n_r = if d == 1 { 0 } else { n_r };
    let mut sv = StateVector::zero(params.n_c, n_r);
    for r in 0..d {
        let idx = sv.index(0, 0, r);
        sv.amps[idx] = prepared.b[r];
    }
    Ok(sv)
}

/// Apply a T x T matrix, given entry-wise, to the clock axis of every
/// (ancilla, solution) slice.
fn apply_clock_matrix(sv: &mut StateVector, entry: &dyn Fn(usize, usize) -> C64) {
    let t_steps = sv.t_steps();
    let dim_r = sv.dim_r();
    let mut scratch = vec![C64::new(0.0, 0.0); t_steps];
    for a in 0..2 {
        for r in 0..dim_r {
            for (k, slot) in scratch.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for tau in 0..t_steps {
                    let amp = sv.amps[(a * t_steps + tau) * dim_r + r];
                    if amp != C64::new(0.0, 0.0) {
                        acc += entry(k, tau) * amp;
                    }
                }
                *slot = acc;
            }
            for k in 0..t_steps {
                sv.amps[(a * t_steps + k) * dim_r + r] = scratch[k];
            }
        }
    }
}

/// Sine-profile preparation matrix entry: an orthonormal completion whose
/// first column is the profile itself.
fn hhl_prep_entry(t_steps: usize, tau: usize, gamma: usize) -> f64 {
    let tf = t_steps as f64;
    if gamma + 1 == t_steps {
        let sign = if tau % 2 == 0 { 1.0 } else { -1.0 };
        sign / tf.sqrt()
    } else {
        (2.0 / tf).sqrt()
            * (std::f64::consts::PI * (tau as f64 + 0.5) * (gamma as f64 + 1.0) / tf).sin()
    }
}

pub fn apply_clock_prep(sv: &mut StateVector, clock: ClockPrep, inverse: bool) {
    let t_steps = sv.t_steps();
    match clock {
        ClockPrep::Uniform => {
            // Hadamard on every clock qubit; real symmetric, self-inverse.
            let scale = 1.0 / (t_steps as f64).sqrt();
            apply_clock_matrix(sv, &|s, t| {
                let sign = if (s & t).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(sign * scale, 0.0)
            });
        }
        ClockPrep::Hhl => {
            if inverse {
                // Real matrix, so the adjoint is the transpose.
                apply_clock_matrix(sv, &|s, t| C64::new(hhl_prep_entry(t_steps, t, s), 0.0));
            } else {
                apply_clock_matrix(sv, &|s, t| C64::new(hhl_prep_entry(t_steps, s, t), 0.0));
            }
        }
    }
}

/// Clock-conditioned evolution: bin tau applies `e^{+i lambda t tau}` to
/// eigenvector j (sign flipped for the inverse).
pub fn apply_controlled_evolution(
    sv: &mut StateVector,
    prepared: &PreparedProblem,
    params: &HhlParams,
    inverse: bool,
) {
    let t_steps = sv.t_steps();
    let dim_r = sv.dim_r();
    let d = prepared.d();
    let sign = if inverse { -1.0 } else { 1.0 };
    let v = &prepared.eigenvectors;
    let mut sub = vec![C64::new(0.0, 0.0); d];
    let mut eig = vec![C64::new(0.0, 0.0); d];
    for a in 0..2 {
        for tau in 0..t_steps {
            let base = (a * t_steps + tau) * dim_r;
            sub.copy_from_slice(&sv.amps[base..base + d]);
            // into the eigenbasis, phase, and back
            for (j, e) in eig.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (r, s) in sub.iter().enumerate() {
                    acc += v[(r, j)].conj() * s;
                }
                let phase = sign * prepared.eigenvalues[j] * params.t * tau as f64;
                *e = acc * C64::from_polar(1.0, phase);
            }
            for (r, s) in sub.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (j, e) in eig.iter().enumerate() {
                    acc += v[(r, j)] * e;
                }
                *s = acc;
            }
            sv.amps[base..base + d].copy_from_slice(&sub);
        }
    }
}

/// The clock DFT stage (`inverse = false`) and its adjoint.
pub fn apply_clock_dft(sv: &mut StateVector, inverse: bool) {
    let t_steps = sv.t_steps();
    let scale = 1.0 / (t_steps as f64).sqrt();
    // twiddle[q] = e^{-2 pi i q / T}
    let twiddle: Vec<C64> = (0..t_steps)
        .map(|q| C64::from_polar(scale, -std::f64::consts::TAU * q as f64 / t_steps as f64))
        .collect();
    if inverse {
        apply_clock_matrix(sv, &|s, t| twiddle[(s * t) % t_steps].conj());
    } else {
        apply_clock_matrix(sv, &|s, t| twiddle[(s * t) % t_steps]);
    }
}

/// Rotate the ancilla conditioned on the clock bin: `|0> -> cos theta |0> +
/// sin theta |1>` with `sin theta(k) = C w_k`; excluded bins are untouched.
pub fn apply_controlled_rotation(sv: &mut StateVector, params: &HhlParams) -> Result<()> {
    let t_steps = sv.t_steps();
    let dim_r = sv.dim_r();
    for k in 0..t_steps {
        let s = params.sin_theta(k);
        if s == 0.0 {
            continue;
        }
        if s.abs() > 1.0 + 1e-12 {
            return Err(Error::RotationOutOfRange(s.abs()));
        }
        let c = (1.0 - (s * s).min(1.0)).sqrt();
        for r in 0..dim_r {
            let i0 = k * dim_r + r;
            let i1 = (t_steps + k) * dim_r + r;
            let a0 = sv.amps[i0];
            let a1 = sv.amps[i1];
            sv.amps[i0] = a0 * c - a1 * s;
            sv.amps[i1] = a0 * s + a1 * c;
        }
    }
    Ok(())
}

/// Statevectors captured after each stage.
#[derive(Clone, Debug)]
pub struct CircuitTrace {
    /// Initial state with b loaded.
    pub psi0: StateVector,
    /// After clock preparation.
    pub psi1: StateVector,
    /// After controlled evolution and the clock DFT: clock bin k of
    /// eigenvector j carries `beta_j alpha_{k|j}`.
    pub psi2: StateVector,
    /// After the conditioned rotation.
    pub psi3: StateVector,
    /// After the inverse DFT and inverse evolution.
    pub psi4: StateVector,
    /// After the inverse clock preparation (the measured state).
    pub psi_final: StateVector,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub trace: bool,
    /// Skip the ancilla rotation; the remaining stages must then undo each
    /// other exactly.
    pub skip_rotation: bool,
}

pub struct SimRun {
    pub state: StateVector,
    pub trace: Option<CircuitTrace>,
}

pub fn run_circuit(
    prepared: &PreparedProblem,
    params: &HhlParams,
    opts: RunOptions,
) -> Result<SimRun> {
    let mut sv = prepare_initial(prepared, params)?;
    let psi0 = opts.trace.then(|| sv.clone());

    apply_clock_prep(&mut sv, params.clock_prep, false);
    let psi1 = opts.trace.then(|| sv.clone());

    apply_controlled_evolution(&mut sv, prepared, params, false);
    apply_clock_dft(&mut sv, false);
    let psi2 = opts.trace.then(|| sv.clone());

    if !opts.skip_rotation {
        apply_controlled_rotation(&mut sv, params)?;
    }
    let psi3 = opts.trace.then(|| sv.clone());

    apply_clock_dft(&mut sv, true);
    apply_controlled_evolution(&mut sv, prepared, params, true);
    let psi4 = opts.trace.then(|| sv.clone());

    apply_clock_prep(&mut sv, params.clock_prep, true);

    let trace = opts.trace.then(|| CircuitTrace {
        psi0: psi0.unwrap(),
        psi1: psi1.unwrap(),
        psi2: psi2.unwrap(),
        psi3: psi3.unwrap(),
        psi4: psi4.unwrap(),
        psi_final: sv.clone(),
    });
    Ok(SimRun { state: sv, trace })
}

/// Outcome of conditioning the final state on a measurement pattern.
#[derive(Clone, Debug)]
pub struct Postselection {
    pub probability: f64,
    /// The renormalized solution-register state read from the zero-clock
    /// slice of the selected component (the slice the uncomputation
    /// concentrates; for the zero-clock pattern it is the whole component).
    pub r_state: DVector<C64>,
    /// Raw selected amplitudes, unnormalized.
    pub component: Vec<C64>,
}

pub fn postselect(sv: &StateVector, pattern: Postselect) -> Result<Postselection> {
    let t_steps = sv.t_steps();
    let dim_r = sv.dim_r();
    let a1 = &sv.amps[t_steps * dim_r..];
    let (probability, component): (f64, Vec<C64>) = match pattern {
        Postselect::Ancilla => {
            (a1.iter().map(|z| z.norm_sqr()).sum(), a1.to_vec())
        }
        Postselect::AncillaAndZeroClock => {
            let slice = &a1[..dim_r];
            (slice.iter().map(|z| z.norm_sqr()).sum(), slice.to_vec())
        }
    };
    if probability < DEGENERATE_PROB {
        return Err(Error::DegeneratePostselection(probability));
    }
    let zero_clock = &a1[..dim_r];
    let slice_norm = zero_clock.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if slice_norm < DEGENERATE_PROB {
        return Err(Error::DegeneratePostselection(slice_norm * slice_norm));
    }
    let r_state = DVector::from_fn(dim_r, |r, _| zero_clock[r] / C64::new(slice_norm, 0.0));
    Ok(Postselection { probability, r_state, component })
}
