//! Convergence studies against the manufactured solutions.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::fem::{h1_error, l2_error, QuadratureRule};
use crate::occupancy::DistributionParams;
use crate::oracle::{Example, ManufacturedProblem};
use crate::scf::{fixed_point_solve, DopingProfile, IterationRecord, Model, ScfConfig};
use crate::spectrum::{AppliedPotential, Discretization};

pub const CSV_HEADER: &str = "Ne,h,eV0,orderV0,eV1,orderV1,en0,orderN0,Lh,fermiH,iters,seconds";

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub m: usize,
    pub ne: usize,
    pub h: f64,
    pub e_v0: f64,
    pub e_v1: f64,
    pub e_n0: f64,
    pub order_v0: Option<f64>,
    pub order_v1: Option<f64>,
    pub order_n0: Option<f64>,
    pub l_h: usize,
    pub fermi_h: f64,
    pub scf_iters: usize,
    pub seconds: f64,
}

/// Rows plus per-mesh diagnostics that do not go into the CSV.
#[derive(Clone, Debug)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub converged: Vec<bool>,
    pub histories: Vec<Vec<IterationRecord>>,
    pub exact_fermi: f64,
}

/// `ln(e_prev/e_cur) / ln(h_prev/h_cur)`, absent unless both errors are positive.
pub fn estimated_order(e_prev: f64, e_cur: f64, h_prev: f64, h_cur: f64) -> Option<f64> {
    if e_prev > 0.0 && e_cur > 0.0 && h_prev != h_cur {
        Some((e_prev / e_cur).ln() / (h_prev / h_cur).ln())
    } else {
        None
    }
}

/// Recomputes the order columns from the error columns.
pub fn fill_orders(rows: &mut [StudyRow]) {
    for i in 0..rows.len() {
        if i == 0 {
            rows[0].order_v0 = None;
            rows[0].order_v1 = None;
            rows[0].order_n0 = None;
            continue;
        }
        let (prev, cur) = (rows[i - 1].clone(), &mut rows[i]);
        cur.order_v0 = estimated_order(prev.e_v0, cur.e_v0, prev.h, cur.h);
        cur.order_v1 = estimated_order(prev.e_v1, cur.e_v1, prev.h, cur.h);
        cur.order_n0 = estimated_order(prev.e_n0, cur.e_n0, prev.h, cur.h);
    }
}

/// The self-consistent model of a manufactured problem.
pub fn manufactured_model(problem: &ManufacturedProblem) -> Model {
    Model {
        v0: AppliedPotential::new(format!("example{}", problem.example.id()), problem.v0()),
        doping: DopingProfile(problem.doping()),
        params: problem.params,
    }
}

/// Runs the SCF on each mesh and measures `‖V − V_h‖`, `‖V − V_h‖_{H¹}`
/// and `‖n − n_h‖` with the 15-point rule. Unconverged runs are flagged in
/// the report; the study goes on. With `deterministic` the timing column
/// is zero so that repeated studies are bit-identical.
pub fn run_study(
    example: Example,
    params: DistributionParams,
    meshes: &[usize],
    cfg: &ScfConfig,
    deterministic: bool,
) -> Result<StudyReport> {
    if meshes.is_empty() {
        return Err(Error::InvalidArgument("no meshes given".into()));
    }
    if meshes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("mesh sizes must be strictly increasing".into()));
    }
    let problem = ManufacturedProblem::new(example, params, 1e-8)?;
    let model = manufactured_model(&problem);
    let quad = QuadratureRule::degree5();
    let v_exact = |x: &[f64; 3]| problem.v_exact(x);
    let grad_exact = |x: &[f64; 3]| problem.grad_v_exact(x);
    let n_exact = |x: &[f64; 3]| problem.n_exact(x);

    let mut rows = Vec::new();
    let mut converged = Vec::new();
    let mut histories = Vec::new();
    for &m in meshes {
        let start = Instant::now();
        let disc = Discretization::new(m)?;
        let report = fixed_point_solve(&disc, &model, cfg, None)?;
        let mesh = disc.mesh();
        let e_v0 = l2_error(mesh, &report.potential, &v_exact, &quad);
        let e_v1 = h1_error(mesh, &report.potential, &v_exact, &grad_exact, &quad);
        let e_n0 = l2_error(mesh, &report.density, &n_exact, &quad);
        let seconds = if deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        };
        rows.push(StudyRow {
            m,
            ne: mesh.num_tets(),
            h: disc.h(),
            e_v0,
            e_v1,
            e_n0,
            order_v0: None,
            order_v1: None,
            order_n0: None,
            l_h: report.occupation.l_h,
            fermi_h: report.occupation.fermi_level,
            scf_iters: report.iterations.len(),
            seconds,
        });
        converged.push(report.converged);
        histories.push(report.iterations);
    }
    fill_orders(&mut rows);
    Ok(StudyReport {
        rows,
        converged,
        histories,
        exact_fermi: problem.fermi_level(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[StudyRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.ne,
            r.h,
            r.e_v0,
            opt(r.order_v0),
            r.e_v1,
            opt(r.order_v1),
            r.e_n0,
            opt(r.order_n0),
            r.l_h,
            r.fermi_h,
            r.scf_iters,
            r.seconds
        )?;
    }
    Ok(())
}

pub fn emit_csv(rows: &[StudyRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no rows to write".into()));
    }
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<StudyRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header `{CSV_HEADER}`, found {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Parse(format!(
                "line {}: expected 12 fields, found {}",
                n + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}, field {}: {e}", n + 2, i + 1)))
        };
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {}, field {}: {e}", n + 2, i + 1)))
        };
        let maybe = |i: usize| -> Result<Option<f64>> {
            if fields[i].trim().is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let ne = int(0)?;
        let m = ((ne / 6) as f64).cbrt().round() as usize;
        rows.push(StudyRow {
            m,
            ne,
            h: num(1)?,
            e_v0: num(2)?,
            order_v0: maybe(3)?,
            e_v1: num(4)?,
            order_v1: maybe(5)?,
            e_n0: num(6)?,
            order_n0: maybe(7)?,
            l_h: int(8)?,
            fermi_h: num(9)?,
            scf_iters: int(10)?,
            seconds: num(11)?,
        });
    }
    Ok(rows)
}

/// Fixed-width table in the layout of a convergence table.
pub fn format_table(rows: &[StudyRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>9} | {:>10} {:>6} | {:>10} {:>6} | {:>10} {:>6} | {:>4} {:>10} {:>5}",
        "Ne", "eV0", "order", "eV1", "order", "en0", "order", "Lh", "fermi", "iters"
    );
    let ord = |o: Option<f64>| o.map_or("---".to_string(), |v| format!("{v:.2}"));
    for r in rows {
        let _ = writeln!(
            s,
            "{:>9} | {:>10.3e} {:>6} | {:>10.3e} {:>6} | {:>10.3e} {:>6} | {:>4} {:>10.4} {:>5}",
            r.ne,
            r.e_v0,
            ord(r.order_v0),
            r.e_v1,
            ord(r.order_v1),
            r.e_n0,
            ord(r.order_n0),
            r.l_h,
            r.fermi_h,
            r.scf_iters
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_rows() -> Vec<StudyRow> {
        let mut rows = vec![
            StudyRow {
                m: 4,
                ne: 384,
                h: 3f64.sqrt() / 4.0,
                e_v0: 0.1,
                e_v1: 1.1,
                e_n0: 20.5,
                order_v0: None,
                order_v1: None,
                order_n0: None,
                l_h: 5,
                fermi_h: 83.75,
                scf_iters: 7,
                seconds: 0.0,
            },
            StudyRow {
                m: 8,
                ne: 3072,
                h: 3f64.sqrt() / 8.0,
                e_v0: 0.025,
                e_v1: 0.56,
                e_n0: 5.1,
                order_v0: None,
                order_v1: None,
                order_n0: None,
                l_h: 8,
                fermi_h: 76.8,
                scf_iters: 8,
                seconds: 1.25,
            },
        ];
        fill_orders(&mut rows);
        rows
    }

    #[test]
    fn csv_header_and_line_count() {
        let rows = sample_rows();
        let mut buf = Vec::new();
        write_csv(&rows[..1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1].split(',').nth(3), Some(""));
    }

    #[test]
    fn csv_round_trip() {
        let rows = sample_rows();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_csv(&rows, &path).unwrap();
        let back = parse_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(parse_csv("nope\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,2,3\n")).is_err());
        assert!(emit_csv(&[], Path::new("/nonexistent/x.csv")).is_err());
        let rows = sample_rows();
        assert!(emit_csv(&rows, Path::new("/nonexistent/dir/x.csv")).is_err());
    }

    #[test]
    fn orders_from_halving() {
        let rows = sample_rows();
        assert!((rows[1].order_v0.unwrap() - 2.0).abs() < 1e-12);
        assert!(rows[0].order_v0.is_none());
        assert_eq!(estimated_order(0.0, 1.0, 0.2, 0.1), None);
    }

    #[test]
    fn table_lists_every_row() {
        let t = format_table(&sample_rows());
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("---"));
    }

    #[test]
    fn study_rejects_unsorted_meshes() {
        let p = DistributionParams::boltzmann(1.0, 0.1, 100.0).unwrap();
        let cfg = ScfConfig::default();
        assert!(run_study(Example::Sine, p, &[8, 4], &cfg, true).is_err());
        assert!(run_study(Example::Sine, p, &[], &cfg, true).is_err());
    }

    #[test]
    fn deterministic_study_is_bit_identical() {
        let p = DistributionParams::boltzmann(1.0, 0.1, 100.0).unwrap();
        let cfg = ScfConfig::default();
        let csv = || {
            let r = run_study(Example::Sine, p, &[4], &cfg, true).unwrap();
            let mut buf = Vec::new();
            write_csv(&r.rows, &mut buf).unwrap();
            buf
        };
        assert_eq!(csv(), csv());
    }

    proptest! {
        #[test]
        fn orders_invariant_under_error_scaling(
            e1 in 1e-6f64..1e3, e2 in 1e-6f64..1e3, s in 1e-3f64..1e3, h in 0.01f64..1.0
        ) {
            let a = estimated_order(e1, e2, h, h / 2.0).unwrap();
            let b = estimated_order(s * e1, s * e2, h, h / 2.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}
