//! Problem instances: Hermitian systems `A x = b`, their spectral
//! preparation, random instance generation, and the classical reference
//! solution.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::EigenvalueMode;
use crate::C64;

/// Eigenvalue magnitudes below this count as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

/// A linear system with a Hermitian coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProblem {
    pub a: DMatrix<C64>,
    pub b: DVector<C64>,
}

/// JSON wire form of one complex entry: `{"re": .., "im": ..}`.
#[derive(Clone, Copy, Serialize, Deserialize)]
pub(crate) struct JsonComplex {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for JsonComplex {
    fn from(z: C64) -> Self {
        JsonComplex { re: z.re, im: z.im }
    }
}

impl From<JsonComplex> for C64 {
    fn from(z: JsonComplex) -> Self {
        C64::new(z.re, z.im)
    }
}

/// On-disk JSON form: `{"d": 2, "a": [[{"re":..,"im":..}, ..], ..], "b": [..]}`.
#[derive(Serialize, Deserialize)]
struct ProblemFile {
    d: usize,
    a: Vec<Vec<JsonComplex>>,
    b: Vec<JsonComplex>,
}

impl LinearProblem {
    pub fn new(a: DMatrix<C64>, b: DVector<C64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "matrix must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != a.nrows() {
            return Err(Error::Dimension(format!(
                "rhs length {} does not match matrix dimension {}",
                b.len(),
                a.nrows()
            )));
        }
        if a.iter().chain(b.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entry in problem".into()));
        }
        Ok(LinearProblem { a, b })
    }

    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(s)
            .map_err(|e| Error::InvalidParameter(format!("problem JSON: {e}")))?;
        if file.a.len() != file.d || file.a.iter().any(|row| row.len() != file.d) {
            return Err(Error::Dimension(format!(
                "matrix rows must form a {0}x{0} square",
                file.d
            )));
        }
        if file.b.len() != file.d {
            return Err(Error::Dimension(format!(
                "rhs length {} does not match d = {}",
                file.b.len(),
                file.d
            )));
        }
        let d = file.d;
        let a = DMatrix::from_fn(d, d, |i, j| file.a[i][j].into());
        let b = DVector::from_iterator(d, file.b.into_iter().map(C64::from));
        LinearProblem::new(a, b)
    }

    pub fn to_json_string(&self) -> String {
        let d = self.d();
        let file = ProblemFile {
            d,
            a: (0..d)
                .map(|i| (0..d).map(|j| self.a[(i, j)].into()).collect())
                .collect(),
            b: self.b.iter().map(|&z| z.into()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("problem serialization cannot fail")
    }
}

pub fn load_problem(path: &Path) -> Result<LinearProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LinearProblem::from_json_str(&text)
        .map_err(|e| match e {
            Error::InvalidParameter(msg) => {
                Error::InvalidParameter(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
}

pub fn save_problem(path: &Path, problem: &LinearProblem) -> Result<()> {
    std::fs::write(path, problem.to_json_string()).map_err(|e| Error::io(path, e))
}

/// Embed a general square system into a Hermitian one of twice the size:
/// `[[0, A], [A^dag, 0]] y = (b, 0)`. The lower half of the solution y is
/// the original x; the upper half vanishes when A is invertible.
pub fn hermitize(problem: &LinearProblem) -> LinearProblem {
    let d = problem.d();
    let a = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        if i < d && j >= d {
            problem.a[(i, j - d)]
        } else if i >= d && j < d {
            problem.a[(j, i - d)].conj()
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let b = DVector::from_fn(2 * d, |i, _| {
        if i < d { problem.b[i] } else { C64::new(0.0, 0.0) }
    });
    LinearProblem { a, b }
}

/// A problem after validation, scaling and eigendecomposition.
///
/// `a` and `b` are the scaled matrix and the normalized right-hand side; the
/// original system is recovered through `lambda_scale` (matrix divisor) and
/// `b_scale` (rhs norm). Eigenvalues are ascending; `eigenvectors` holds the
/// matching orthonormal columns and `betas = V^dag b`.
#[derive(Clone, Debug)]
pub struct PreparedProblem {
    pub a: DMatrix<C64>,
    pub b: DVector<C64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<C64>,
    pub betas: DVector<C64>,
    pub kappa: f64,
    pub b_scale: f64,
    pub lambda_scale: f64,
    pub mode: EigenvalueMode,
}

impl PreparedProblem {
    pub fn d(&self) -> usize {
        self.a.nrows()
    }
}

/// Validate hermiticity, scale eigenvalues into the admissible window,
/// normalize the right-hand side and eigendecompose.
///
/// `lambda_max_estimate` divides the matrix; it must dominate the spectral
/// radius. `None` uses the exact spectral radius, putting the extreme
/// eigenvalue at magnitude 1.
pub fn prepare(
    problem: &LinearProblem,
    lambda_max_estimate: Option<f64>,
    mode: EigenvalueMode,
) -> Result<PreparedProblem> {
    let d = problem.d();
    let max_abs = problem.a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let herm_dev = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (problem.a[(i, j)] - problem.a[(j, i)].conj()).norm())
        .fold(0.0, f64::max);
    // Tolerance is relative to the largest entry so well-scaled and
    // badly-scaled inputs are judged alike.
    if herm_dev > 1e-12 * max_abs.max(1.0) {
        return Err(Error::NotHermitian { dev: herm_dev });
    }

    let b_scale = problem.b.norm();
    if !(b_scale > 1e-300) {
        return Err(Error::ZeroRhs);
    }

    if let Some(s) = lambda_max_estimate {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda_max estimate = {s} must be positive"
            )));
        }
    }

    // Symmetrize before decomposing so roundoff asymmetry in the input
    // cannot leak into complex eigenvalues.
    let a_sym = (&problem.a + problem.a.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(a_sym);

    let spectral_radius = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    if spectral_radius <= SINGULAR_EPS {
        return Err(Error::Singular(spectral_radius));
    }
    let lambda_scale = lambda_max_estimate.unwrap_or(spectral_radius);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut eigenvalues = Vec::with_capacity(d);
    for &i in &order {
        let l = eig.eigenvalues[i] / lambda_scale;
        if l.abs() <= SINGULAR_EPS {
            return Err(Error::Singular(l.abs()));
        }
        if l.abs() > 1.0 + 1e-9 {
            return Err(Error::EigenvalueRange {
                value: eig.eigenvalues[i],
                reason: format!("exceeds the scaling estimate {lambda_scale}"),
            });
        }
        if mode == EigenvalueMode::Positive && l < 0.0 {
            return Err(Error::EigenvalueRange {
                value: eig.eigenvalues[i],
                reason: "negative eigenvalue in positive mode".into(),
            });
        }
        eigenvalues.push(l.clamp(-1.0, 1.0));
    }

    let eigenvectors = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    let b = &problem.b / C64::new(b_scale, 0.0);
    let betas = eigenvectors.adjoint() * &b;
    let a = &problem.a / C64::new(lambda_scale, 0.0);

    let abs_min = eigenvalues.iter().fold(f64::INFINITY, |m, &l| m.min(l.abs()));
    let abs_max = eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let kappa = abs_max / abs_min;

    Ok(PreparedProblem {
        a,
        b,
        eigenvalues,
        eigenvectors,
        betas,
        kappa,
        b_scale,
        lambda_scale,
        mode,
    })
}

/// Exact solution of the prepared (scaled, normalized) system via the
/// spectral decomposition: `x = sum_j (beta_j / lambda_j) u_j`.
pub fn classical_solve(prepared: &PreparedProblem) -> DVector<C64> {
    let weights = DVector::from_fn(prepared.d(), |j, _| {
        prepared.betas[j] / C64::new(prepared.eigenvalues[j], 0.0)
    });
    &prepared.eigenvectors * weights
}

/// Random Hermitian instance: eigenvalues uniform on (0, 1], eigenbasis Haar
/// distributed, right-hand side uniform on the complex unit sphere.
///
/// Equal to `random_problem_stream(seed, 0, d)`.
pub fn random_problem(seed: u64, d: usize) -> LinearProblem {
    random_problem_stream(seed, 0, d)
}

/// Stream-separated variant: problems drawn for different `stream` values are
/// independent even under one seed. Draw order (fixed for reproducibility):
/// eigenvalues, Haar basis, right-hand side.
pub fn random_problem_stream(seed: u64, stream: u64, d: usize) -> LinearProblem {
    assert!(d >= 1, "dimension must be at least 1");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    // 1 - u maps [0,1) to (0,1], keeping eigenvalues away from exact zero.
    let eigenvalues: Vec<f64> = (0..d).map(|_| 1.0 - rng.random::<f64>()).collect();

    let u = haar_unitary(&mut rng, d);
    let lam = DMatrix::from_fn(d, d, |i, j| {
        if i == j { C64::new(eigenvalues[i], 0.0) } else { C64::new(0.0, 0.0) }
    });
    let a_raw = &u * lam * u.adjoint();
    let a = (&a_raw + a_raw.adjoint()) * C64::new(0.5, 0.0);

    let mut b = DVector::from_fn(d, |_, _| gaussian_c64(&mut rng));
    let norm = b.norm();
    b /= C64::new(norm, 0.0);

    LinearProblem { a, b }
}

fn gaussian_c64(rng: &mut ChaCha12Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) / C64::new(std::f64::consts::SQRT_2, 0.0)
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the R
/// diagonal's phases folded into Q (otherwise QR's sign convention skews the
/// distribution).
fn haar_unitary(rng: &mut ChaCha12Rng, d: usize) -> DMatrix<C64> {
    let g = DMatrix::from_fn(d, d, |_, _| gaussian_c64(rng));
    let qr = g.qr();
    let r = qr.r();
    let phases: Vec<C64> = (0..d)
        .map(|i| {
            let rii = r[(i, i)];
            if rii.norm() > 0.0 { rii / rii.norm() } else { C64::new(1.0, 0.0) }
        })
        .collect();
    let mut q = qr.q();
    for j in 0..d {
        let ph = phases[j];
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn diag_problem(diag: &[f64], b: &[f64]) -> LinearProblem {
        let d = diag.len();
        let a = DMatrix::from_fn(d, d, |i, j| {
            if i == j { c(diag[i], 0.0) } else { c(0.0, 0.0) }
        });
        let b = DVector::from_fn(d, |i, _| c(b[i], 0.0));
        LinearProblem::new(a, b).unwrap()
    }

    #[test]
    fn json_roundtrip_preserves_entries() {
        let p = LinearProblem::new(
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.25, -0.5), c(0.25, 0.5), c(0.5, 0.0)]),
            DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]),
        )
        .unwrap();
        let back = LinearProblem::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn malformed_json_is_a_validation_error() {
        let err = LinearProblem::from_json_str(r#"{"d": 2, "a": [[{"re":1,"im":0}]]}"#)
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("b"), "should name the missing field: {err}");

        let err = LinearProblem::from_json_str(
            r#"{"d": 2, "a": [[{"re":1,"im":0},{"re":0,"im":0}]], "b": [{"re":1,"im":0},{"re":0,"im":0}]}"#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn prepare_checks_hermiticity_rhs_and_spectrum() {
        let bad = LinearProblem::new(
            DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
            DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
        )
        .unwrap();
        assert!(matches!(
            prepare(&bad, None, EigenvalueMode::Positive),
            Err(Error::NotHermitian { .. })
        ));

        let zero_b = diag_problem(&[1.0, 0.5], &[0.0, 0.0]);
        assert!(matches!(
            prepare(&zero_b, None, EigenvalueMode::Positive),
            Err(Error::ZeroRhs)
        ));

        let singular = diag_problem(&[1.0, 1e-13], &[1.0, 0.0]);
        let err = prepare(&singular, Some(1.0), EigenvalueMode::Positive).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert_eq!(err.exit_code(), 3);

        let negative = diag_problem(&[1.0, -0.5], &[1.0, 1.0]);
        assert!(matches!(
            prepare(&negative, Some(1.0), EigenvalueMode::Positive),
            Err(Error::EigenvalueRange { .. })
        ));
        let signed = prepare(&negative, Some(1.0), EigenvalueMode::Signed).unwrap();
        assert_eq!(signed.eigenvalues, vec![-0.5, 1.0]);
        assert_abs_diff_eq!(signed.kappa, 2.0, epsilon = 1e-14);

        let underestimated = diag_problem(&[2.0, 1.0], &[1.0, 0.0]);
        assert!(matches!(
            prepare(&underestimated, Some(1.0), EigenvalueMode::Positive),
            Err(Error::EigenvalueRange { .. })
        ));
    }

    #[test]
    fn scaling_divides_eigenvalues_and_keeps_kappa() {
        let p = diag_problem(&[1.0, 0.5], &[3.0, 4.0]);
        let prep = prepare(&p, Some(2.0), EigenvalueMode::Positive).unwrap();
        assert_abs_diff_eq!(prep.eigenvalues[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(prep.eigenvalues[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(prep.kappa, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(prep.b_scale, 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(prep.b.norm(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(prep.lambda_scale, 2.0, epsilon = 1e-15);

        // Default scaling puts the top eigenvalue exactly at 1.
        let auto = prepare(&p, None, EigenvalueMode::Positive).unwrap();
        assert_abs_diff_eq!(auto.eigenvalues[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kappa_of_diag_1_quarter_is_4() {
        let p = diag_problem(&[1.0, 0.25], &[1.0, 1.0]);
        let prep = prepare(&p, None, EigenvalueMode::Positive).unwrap();
        assert_abs_diff_eq!(prep.kappa, 4.0, epsilon = 1e-14);
    }

    #[test]
    fn classical_solve_matches_lu_and_residual() {
        let problem = random_problem(42, 5);
        let prep = prepare(&problem, Some(1.0), EigenvalueMode::Positive).unwrap();
        let x = classical_solve(&prep);

        let residual = (&prep.a * &x - &prep.b).norm();
        assert!(residual < 1e-10, "residual {residual:e}");

        let lu = prep.a.clone().lu();
        let x_lu = lu.solve(&prep.b).expect("well-conditioned system");
        assert!((&x - &x_lu).norm() < 1e-9);
    }

    #[test]
    fn hermitize_embeds_and_solves_through_signed_mode() {
        let p = diag_problem(&[1.0, 0.5], &[1.0, 0.0]);
        let h = hermitize(&p);
        assert_eq!(h.d(), 4);
        // Block structure: zero diagonal blocks, A and its adjoint off-diagonal.
        assert_eq!(h.a[(0, 0)], c(0.0, 0.0));
        assert_eq!(h.a[(0, 2)], c(1.0, 0.0));
        assert_eq!(h.a[(3, 1)], c(0.5, 0.0));
        assert_eq!(h.b[0], c(1.0, 0.0));
        assert_eq!(h.b[2], c(0.0, 0.0));

        let prep = prepare(&h, Some(1.0), EigenvalueMode::Signed).unwrap();
        for (got, want) in prep.eigenvalues.iter().zip([-1.0, -0.5, 0.5, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let y = classical_solve(&prep);
        // Solution lives in the lower half: y = (0, x) with x = A^-1 b = (1, 0).
        assert!(y[0].norm() < 1e-12 && y[1].norm() < 1e-12);
        assert_abs_diff_eq!(y[2].re, 1.0, epsilon = 1e-12);
        assert!(y[3].norm() < 1e-12);
    }

    #[test]
    fn random_problems_are_reproducible_and_stream_separated() {
        let a = random_problem_stream(7, 3, 4);
        let b = random_problem_stream(7, 3, 4);
        assert_eq!(a, b);

        let other_stream = random_problem_stream(7, 4, 4);
        assert_ne!(a, other_stream);
        let other_seed = random_problem_stream(8, 3, 4);
        assert_ne!(a, other_seed);

        assert_eq!(random_problem(7, 4), random_problem_stream(7, 0, 4));
    }

    #[test]
    fn random_problem_spectrum_and_basis_are_clean() {
        for stream in 0..20 {
            let problem = random_problem_stream(11, stream, 3);
            let prep = prepare(&problem, Some(1.0), EigenvalueMode::Positive).unwrap();

            for &l in &prep.eigenvalues {
                assert!(l > 0.0 && l <= 1.0, "eigenvalue {l} outside (0,1]");
            }
            let gram = prep.eigenvectors.adjoint() * &prep.eigenvectors;
            let dev = (gram - DMatrix::<C64>::identity(3, 3))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-10, "basis gram deviation {dev:e}");

            let lam = DMatrix::from_fn(3, 3, |i, j| {
                if i == j { c(prep.eigenvalues[i], 0.0) } else { c(0.0, 0.0) }
            });
            let recon = &prep.eigenvectors * lam * prep.eigenvectors.adjoint();
            let rdev = (recon - &prep.a).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(rdev < 1e-10, "reconstruction deviation {rdev:e}");

            assert_abs_diff_eq!(problem.b.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn haar_basis_does_not_cluster_phases() {
        // The QR phase fix makes column phases uniform; a crude check is that
        // the first row's entries do not all share one sign of the real part.
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let u = haar_unitary(&mut rng, 16);
        let gram_dev = (u.adjoint() * &u - DMatrix::<C64>::identity(16, 16))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(gram_dev < 1e-12);
        let positives = (0..16).filter(|&j| u[(0, j)].re > 0.0).count();
        assert!(positives > 2 && positives < 14, "suspicious phase clustering");
    }
}
