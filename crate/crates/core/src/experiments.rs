//! Grid fits and randomized cross-algorithm sweeps, with file artifacts.
//!
//! The fit measures the constants in front of the first- and second-order
//! error laws over an eigenvalue/time/clock grid. The sweep runs both
//! postselection variants over random problems and growing clock registers,
//! cross-checking a slice of the rows against the dense simulator, and
//! writes a CSV, a JSON summary and an SVG plot. Everything here is
//! deterministic: reruns produce byte-identical artifacts.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::{epsilons, solve_analytic};
use crate::error::{Error, Result};
use crate::params::{build_params, ClockPrep, EigenvalueMode, Postselect};
use crate::problem::{classical_solve, prepare, random_problem_stream};
use crate::simulator::{postselect, run_circuit, RunOptions, MAX_SIM_CLOCK_QUBITS};

/// Fit points with lambda t T below this are excluded: the asymptotic error
/// law has not set in while the inversion window still clips the
/// coefficient peak (the first few weight bins).
pub const FIT_MIN_ARG: f64 = 6.0 * PI;

/// Grid for the error-constant fit. Eigenvalues run over i / (count + 1)
/// and times over 0.1 pi + m 0.9 pi / (count + 1), both 1-based, with the
/// sine-profile clock and k_min = 1.
#[derive(Clone, Debug, Serialize)]
pub struct FitConfig {
    pub lambda_count: usize,
    pub t_count: usize,
    pub n_c_lo: u32,
    pub n_c_hi: u32,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { lambda_count: 50, t_count: 50, n_c_lo: 3, n_c_hi: 9 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    /// First-order constant: |eps1| ~ a1 / (lambda t T)^2.
    pub a1: f64,
    /// Second-order constant: |eps2| ~ a2 / (lambda t T)^2.
    pub a2: f64,
    pub points_used: usize,
    pub points_total: usize,
    /// Relative scatter around the fitted line, sqrt(sum (y - a x)^2 / sum (a x)^2).
    pub residual_rms_1: f64,
    pub residual_rms_2: f64,
    pub grid: FitConfig,
}

/// Least squares through the origin, y ~ slope * x.
fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let (sxy, sxx) = points
        .iter()
        .fold((0.0, 0.0), |(sxy, sxx), &(x, y)| (sxy + x * y, sxx + x * x));
    sxy / sxx
}

fn relative_residual(points: &[(f64, f64)], slope: f64) -> f64 {
    let (num, den) = points.iter().fold((0.0, 0.0), |(n, d), &(x, y)| {
        let fitted = slope * x;
        (n + (y - fitted) * (y - fitted), d + fitted * fitted)
    });
    (num / den).sqrt()
}

/// Fit the error-law constants over the grid.
///
/// The per-point epsilons are computed in parallel; the reduction runs
/// sequentially in grid order so the result does not depend on thread
/// scheduling.
pub fn fit_epsilon_constants(config: &FitConfig) -> Result<FitReport> {
    if config.lambda_count == 0 || config.t_count == 0 {
        return Err(Error::InvalidParameter("empty fit grid".into()));
    }
    if config.n_c_lo > config.n_c_hi {
        return Err(Error::InvalidParameter(format!(
            "empty clock range {}..={}",
            config.n_c_lo, config.n_c_hi
        )));
    }
    let lambda_den = (config.lambda_count + 1) as f64;
    let t_den = (config.t_count + 1) as f64;
    let mut grid = Vec::new();
    for i in 1..=config.lambda_count {
        for m in 1..=config.t_count {
            for n_c in config.n_c_lo..=config.n_c_hi {
                grid.push((i as f64 / lambda_den, 0.1 * PI + m as f64 * 0.9 * PI / t_den, n_c));
            }
        }
    }
    let points: Vec<Option<(f64, f64, f64)>> = grid
        .par_iter()
        .map(|&(lambda, t, n_c)| {
            // k_min = 1 and the sine-profile clock; failures cannot occur on
            // this grid (t < pi, n_c validated above).
            let p = build_params(
                n_c,
                t,
                None,
                ClockPrep::Hhl,
                Postselect::Ancilla,
                EigenvalueMode::Positive,
            )
            .expect("fit grid parameters are valid");
            let z = lambda * p.t0;
            if z < FIT_MIN_ARG {
                return None;
            }
            let (e1, e2) = epsilons(lambda, &p);
            let x = 1.0 / (z * z);
            Some((x, e1.abs(), e2.abs()))
        })
        .collect();
    let points_total = points.len();
    let p1: Vec<(f64, f64)> = points.iter().flatten().map(|&(x, e1, _)| (x, e1)).collect();
    let p2: Vec<(f64, f64)> = points.iter().flatten().map(|&(x, _, e2)| (x, e2)).collect();
    if p1.len() < 2 {
        return Err(Error::InvalidParameter(
            "fit grid leaves no points above the threshold".into(),
        ));
    }
    let a1 = fit_slope(&p1);
    let a2 = fit_slope(&p2);
    Ok(FitReport {
        a1,
        a2,
        points_used: p1.len(),
        points_total,
        residual_rms_1: relative_residual(&p1, a1),
        residual_rms_2: relative_residual(&p2, a2),
        grid: config.clone(),
    })
}

/// The two solver variants the sweep compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    /// Ancilla-only postselection.
    VariantAncilla,
    /// Ancilla and zero-clock postselection.
    Improved,
}

impl Algo {
    fn postselect(self) -> Postselect {
        match self {
            Algo::VariantAncilla => Postselect::Ancilla,
            Algo::Improved => Postselect::AncillaAndZeroClock,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::VariantAncilla => "variant_ancilla",
            Algo::Improved => "improved",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepConfig {
    pub problems: usize,
    pub seed: u64,
    pub d: usize,
    pub n_c_lo: u32,
    pub n_c_hi: u32,
    pub t: f64,
    /// The first this many problem ids are re-run on the dense simulator
    /// (up to `sim_check_max_n_c`) and must agree with the analytic path.
    pub sim_check_problems: usize,
    pub sim_check_max_n_c: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            problems: 50,
            seed: 7,
            d: 2,
            n_c_lo: 3,
            n_c_hi: 11,
            t: 8.0 * PI / 5.0,
            sim_check_problems: 5,
            sim_check_max_n_c: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub problem_id: usize,
    pub seed: u64,
    pub n_c: u32,
    pub algo: Algo,
    pub infidelity: f64,
    pub norm_rel_error: f64,
    pub p_success: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub n_c: u32,
    pub algo: Algo,
    /// Geometric mean of the infidelities (floored at 1e-300).
    pub gm_infidelity: f64,
    pub mean_infidelity: f64,
    pub mean_p_success: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

/// How far apart the simulator and the analytic metrics may sit before the
/// sweep aborts with a cross-check error.
pub const SIM_CHECK_TOL: f64 = 1e-9;

fn sweep_problem(
    config: &SweepConfig,
    problem_id: usize,
) -> Result<Vec<SweepRow>> {
    let problem = random_problem_stream(config.seed, problem_id as u64, config.d);
    let prepared = prepare(&problem, Some(1.0), EigenvalueMode::Positive)?;
    let x_hat = {
        let x = classical_solve(&prepared);
        let n = x.norm();
        x / crate::C64::new(n, 0.0)
    };
    let mut rows = Vec::with_capacity(
        2 * (config.n_c_hi - config.n_c_lo + 1) as usize,
    );
    for n_c in config.n_c_lo..=config.n_c_hi {
        let mut metrics = Vec::with_capacity(2);
        for algo in [Algo::VariantAncilla, Algo::Improved] {
            let p = build_params(
                n_c,
                config.t,
                None,
                ClockPrep::Uniform,
                algo.postselect(),
                EigenvalueMode::Positive,
            )?;
            let m = solve_analytic(&prepared, &p)?;
            rows.push(SweepRow {
                problem_id,
                seed: config.seed,
                n_c,
                algo,
                infidelity: m.infidelity,
                norm_rel_error: m.norm_rel_error,
                p_success: m.p_success,
            });
            metrics.push(m);
        }
        if problem_id < config.sim_check_problems
            && n_c <= config.sim_check_max_n_c.min(MAX_SIM_CLOCK_QUBITS)
        {
            let p = build_params(
                n_c,
                config.t,
                None,
                ClockPrep::Uniform,
                Postselect::AncillaAndZeroClock,
                EigenvalueMode::Positive,
            )?;
            let run = run_circuit(&prepared, &p, RunOptions::default())?;
            let sel_ancilla = postselect(&run.state, Postselect::Ancilla)?;
            let sel_zero = postselect(&run.state, Postselect::AncillaAndZeroClock)?;
            let overlap = x_hat.dotc(&sel_zero.r_state).norm_sqr();
            let sim_infidelity = [
                1.0 - overlap * sel_zero.probability / sel_ancilla.probability,
                1.0 - overlap,
            ];
            for (algo_idx, algo) in [Algo::VariantAncilla, Algo::Improved].iter().enumerate() {
                let dev = (sim_infidelity[algo_idx] - metrics[algo_idx].infidelity).abs();
                if dev > SIM_CHECK_TOL {
                    return Err(Error::CrossCheck(format!(
                        "simulator disagrees with the analytic {algo} infidelity by {dev:.3e} \
                         (problem {problem_id}, n_c = {n_c})"
                    )));
                }
            }
        }
    }
    Ok(rows)
}

/// Run both variants over random problems and clock sizes.
///
/// Rows come out ordered by (problem, n_c, algo) with the ancilla-only
/// variant first; the computation per problem is independent and runs in
/// parallel, but the assembled report is order- and bit-deterministic.
pub fn random_sweep(config: &SweepConfig) -> Result<SweepReport> {
    if config.problems == 0 {
        return Err(Error::InvalidParameter("sweep needs at least one problem".into()));
    }
    if config.n_c_lo > config.n_c_hi {
        return Err(Error::InvalidParameter(format!(
            "empty clock range {}..={}",
            config.n_c_lo, config.n_c_hi
        )));
    }
    let per_problem: Vec<Vec<SweepRow>> = (0..config.problems)
        .into_par_iter()
        .map(|id| sweep_problem(config, id))
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = per_problem.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for n_c in config.n_c_lo..=config.n_c_hi {
        for algo in [Algo::VariantAncilla, Algo::Improved] {
            let group: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.n_c == n_c && r.algo == algo)
                .collect();
            let n = group.len() as f64;
            let gm = (group
                .iter()
                .map(|r| r.infidelity.max(1e-300).ln())
                .sum::<f64>()
                / n)
                .exp();
            summary.push(SummaryRow {
                n_c,
                algo,
                gm_infidelity: gm,
                mean_infidelity: group.iter().map(|r| r.infidelity).sum::<f64>() / n,
                mean_p_success: group.iter().map(|r| r.p_success).sum::<f64>() / n,
            });
        }
    }
    Ok(SweepReport { config: config.clone(), rows, summary })
}

/// CSV with one row per (problem, clock size, variant).
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("problem_id,seed,n_c,algo,infidelity,norm_rel_error,p_success\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{:e},{:e},{:e}\n",
            r.problem_id, r.seed, r.n_c, r.algo, r.infidelity, r.norm_rel_error, r.p_success
        ));
    }
    out
}

/// Log-linear plot of the geometric-mean infidelity per clock size.
pub fn sweep_svg(report: &SweepReport) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 30.0, 50.0);
    let logs: Vec<f64> = report
        .summary
        .iter()
        .map(|s| s.gm_infidelity.max(1e-300).log10())
        .collect();
    let y_lo = logs.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let y_hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    let y_span = (y_hi - y_lo).max(1.0);
    let (nc_lo, nc_hi) = (report.config.n_c_lo as f64, report.config.n_c_hi as f64);
    let x_span = (nc_hi - nc_lo).max(1.0);
    let x_of = |n_c: f64| ml + (n_c - nc_lo) / x_span * (w - ml - mr);
    let y_of = |log: f64| mt + (y_hi - log) / y_span * (h - mt - mb);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let mut dec = y_lo;
    while dec <= y_hi + 0.5 {
        let y = y_of(dec);
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n",
            w - mr
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">1e{dec}</text>\n",
            ml - 6.0,
            y + 4.0
        ));
        dec += 1.0;
    }
    let mut n_c = report.config.n_c_lo;
    while n_c <= report.config.n_c_hi {
        let x = x_of(n_c as f64);
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{n_c}</text>\n",
            h - mb + 18.0
        ));
        n_c += 1;
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">clock qubits</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" transform=\"rotate(-90 16 {:.2})\" \
         text-anchor=\"middle\">geometric-mean infidelity</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    ));
    for (algo, color, dy) in [
        (Algo::VariantAncilla, "#c0392b", 0.0),
        (Algo::Improved, "#2471a4", 18.0),
    ] {
        let pts: Vec<String> = report
            .summary
            .iter()
            .filter(|s| s.algo == algo)
            .map(|s| {
                format!(
                    "{:.2},{:.2}",
                    x_of(s.n_c as f64),
                    y_of(s.gm_infidelity.max(1e-300).log10())
                )
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            ml + 12.0,
            mt + 6.0 + dy
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">{algo}</text>\n",
            ml + 30.0,
            mt + 16.0 + dy
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write sweep.csv, sweep_summary.json and sweep.svg into `dir`.
pub fn emit_artifacts(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("sweep.csv");
    fs::write(&csv, sweep_csv(report)).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("sweep_summary.json");
    let summary = serde_json::json!({
        "config": report.config,
        "summary": report.summary,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    let svg = dir.join("sweep.svg");
    fs::write(&svg, sweep_svg(report)).map_err(|e| Error::io(&svg, e))?;
    Ok(vec![csv, json, svg])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn slope_estimator_recovers_exact_lines() {
        let points: Vec<(f64, f64)> = (1..=20)
            .map(|i| {
                let x = 1.0 / (i as f64 * i as f64);
                (x, 3.0 * x)
            })
            .collect();
        assert_abs_diff_eq!(fit_slope(&points), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(relative_residual(&points, 3.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn full_grid_fit_matches_frozen_constants() {
        let report = fit_epsilon_constants(&FitConfig::default()).unwrap();
        assert_abs_diff_eq!(report.a1, 9.6396, epsilon = 5e-3);
        assert_abs_diff_eq!(report.a2, 31.6229, epsilon = 2e-2);
        assert!(report.a1 > 0.0 && report.a2 > 0.0);
        assert!(report.points_used > 10_000);
        assert!(report.points_used < report.points_total);
        assert!(report.residual_rms_1 < 2.0);
        assert!(report.residual_rms_2 < 2.0);
    }

    #[test]
    fn coarse_subgrid_fit_stays_in_band() {
        let config = FitConfig { lambda_count: 5, t_count: 5, n_c_lo: 6, n_c_hi: 8 };
        let coarse = fit_epsilon_constants(&config).unwrap();
        assert_abs_diff_eq!(coarse.a1, 9.8918, epsilon = 5e-3);
        let full = fit_epsilon_constants(&FitConfig::default()).unwrap();
        assert!((coarse.a1 - full.a1).abs() / full.a1 < 0.5);
        assert!((coarse.a2 - full.a2).abs() / full.a2 < 0.5);
    }

    #[test]
    fn fit_is_bit_deterministic() {
        let a = fit_epsilon_constants(&FitConfig::default()).unwrap();
        let b = fit_epsilon_constants(&FitConfig::default()).unwrap();
        assert_eq!(a.a1.to_bits(), b.a1.to_bits());
        assert_eq!(a.a2.to_bits(), b.a2.to_bits());
        assert_eq!(a.points_used, b.points_used);
    }

    fn small_config() -> SweepConfig {
        SweepConfig {
            problems: 6,
            n_c_lo: 3,
            n_c_hi: 6,
            sim_check_problems: 2,
            sim_check_max_n_c: 5,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn sweep_rows_are_ordered_and_sane() {
        let report = random_sweep(&small_config()).unwrap();
        assert_eq!(report.rows.len(), 6 * 4 * 2);
        assert_eq!(report.rows[0].problem_id, 0);
        assert_eq!(report.rows[0].n_c, 3);
        assert_eq!(report.rows[0].algo, Algo::VariantAncilla);
        assert_eq!(report.rows[1].algo, Algo::Improved);
        assert_eq!(report.rows[8].problem_id, 1);
        for r in &report.rows {
            assert!(r.p_success > 0.0 && r.p_success <= 1.0);
            assert!((0.0..=1.0).contains(&r.infidelity));
            assert!(r.norm_rel_error.is_finite());
        }
        assert_eq!(report.summary.len(), 4 * 2);
    }

    #[test]
    fn sweep_is_bit_deterministic() {
        let a = random_sweep(&small_config()).unwrap();
        let b = random_sweep(&small_config()).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(sweep_csv(&a), sweep_csv(&b));
        assert_eq!(sweep_svg(&a), sweep_svg(&b));
    }

    #[test]
    fn improved_rows_converge_with_the_clock() {
        let config = SweepConfig { problems: 1, ..SweepConfig::default() };
        let report = random_sweep(&config).unwrap();
        let inf = |n_c: u32| {
            report
                .rows
                .iter()
                .find(|r| r.n_c == n_c && r.algo == Algo::Improved)
                .unwrap()
                .infidelity
        };
        assert!(inf(11) < inf(3) / 20.0, "no convergence: {} vs {}", inf(3), inf(11));
    }

    #[test]
    fn full_default_sweep_shows_the_dichotomy() {
        let report = random_sweep(&SweepConfig::default()).unwrap();
        let gm = |n_c: u32, algo: Algo| {
            report
                .summary
                .iter()
                .find(|s| s.n_c == n_c && s.algo == algo)
                .unwrap()
                .gm_infidelity
        };
        assert!(gm(11, Algo::Improved) * 10.0 <= gm(3, Algo::Improved));
        let plateau = gm(11, Algo::VariantAncilla) / gm(5, Algo::VariantAncilla);
        assert!((0.2..=5.0).contains(&plateau), "plateau ratio {plateau}");
        // At the largest clock the improved variant wins almost always.
        let wins = (0..report.config.problems)
            .filter(|&id| {
                let find = |algo: Algo| {
                    report
                        .rows
                        .iter()
                        .find(|r| r.problem_id == id && r.n_c == 11 && r.algo == algo)
                        .unwrap()
                        .infidelity
                };
                find(Algo::Improved) <= find(Algo::VariantAncilla)
            })
            .count();
        assert!(wins >= 45, "improved won only {wins}/50");
    }

    #[test]
    fn svg_is_well_formed_xml() {
        let report = random_sweep(&small_config()).unwrap();
        let svg = sweep_svg(&report);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc
            .descendants()
            .filter(|n| n.tag_name().name() == "polyline")
            .count()
            == 2);
    }

    #[test]
    fn artifacts_round_trip_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let report = random_sweep(&small_config()).unwrap();
        let paths = emit_artifacts(&report, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
        let csv = String::from_utf8(first[0].clone()).unwrap();
        assert!(csv.starts_with(
            "problem_id,seed,n_c,algo,infidelity,norm_rel_error,p_success\n"
        ));
        assert_eq!(csv.lines().count(), report.rows.len() + 1);
        assert!(csv.contains(",variant_ancilla,"));
        assert!(csv.contains(",improved,"));

        let report2 = random_sweep(&small_config()).unwrap();
        emit_artifacts(&report2, dir.path()).unwrap();
        let second: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
    }
}
