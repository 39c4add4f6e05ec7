//! CSV emission. Reals are written with 17 significant digits, missing
//! values as empty cells.

use crate::inequalities::{FailureRow, InequalityReport, ProfileRow};
use crate::mesh::FEFunction;
use crate::models::ConditionReport;
use crate::solver::{ConvergenceReport, EnergyLedger};
use crate::Result;
use std::path::{Path, PathBuf};

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

/// Writes `header` and `rows` to `path`; returns the number of data rows.
pub fn write_table<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<String>]) -> Result<usize> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(rows.len())
}

/// Header and data rows of a CSV file.
pub fn read_table<P: AsRef<Path>>(path: P) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

pub const ENERGY_HEADER: [&str; 6] = ["k", "t", "kinetic", "dissipation", "work", "slack"];

pub fn write_energy<P: AsRef<Path>>(path: P, ledger: &EnergyLedger) -> Result<usize> {
    let rows: Vec<Vec<String>> = ledger
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                fmt_real(r.t),
                fmt_real(r.kinetic),
                fmt_real(r.dissipation),
                fmt_real(r.work),
                fmt_real(r.slack),
            ]
        })
        .collect();
    write_table(path, &ENERGY_HEADER, &rows)
}

pub const CONDITION_HEADER: [&str; 8] = ["condition", "samples", "worst_slack", "worst_t", "worst_x1", "worst_x2", "seed", "pass"];

pub fn write_conditions<P: AsRef<Path>>(path: P, reports: &[ConditionReport]) -> Result<usize> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                r.samples.to_string(),
                fmt_real(r.worst_slack),
                fmt_real(r.worst_point.t),
                fmt_real(r.worst_point.x[0]),
                fmt_real(r.worst_point.x[1]),
                r.seed.to_string(),
                r.passes().to_string(),
            ]
        })
        .collect();
    write_table(path, &CONDITION_HEADER, &rows)
}

pub const COUNTEREXAMPLE_HEADER: [&str; 4] = ["tau", "rho_p_u", "rho_p_grad_u", "rho_p_minus_u"];

pub fn write_counterexample<P: AsRef<Path>>(path: P, rows: &[FailureRow]) -> Result<usize> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![fmt_real(r.tau), fmt_real(r.rho_u), fmt_real(r.rho_grad), fmt_real(r.rho_u_p_minus)])
        .collect();
    write_table(path, &COUNTEREXAMPLE_HEADER, &rows)
}

pub const FIGURE1_HEADER: [&str; 4] = ["r", "eta", "grad_eta", "p"];

pub fn write_figure1<P: AsRef<Path>>(path: P, rows: &[ProfileRow]) -> Result<usize> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![fmt_real(r.r), fmt_real(r.eta), fmt_real(r.grad_eta), fmt_real(r.p)])
        .collect();
    write_table(path, &FIGURE1_HEADER, &rows)
}

pub const CONVERGENCE_HEADER: [&str; 8] = [
    "level",
    "steps",
    "l2_diff",
    "modular_diff",
    "proxy_norm",
    "max_kinetic",
    "bound",
    "energy_ok",
];

pub fn write_convergence<P: AsRef<Path>>(path: P, report: &ConvergenceReport) -> Result<usize> {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.level.to_string(),
                r.steps.to_string(),
                fmt_opt(r.l2_diff),
                fmt_opt(r.modular_diff),
                fmt_real(r.proxy_norm),
                fmt_real(r.max_kinetic),
                fmt_real(r.bound),
                r.energy_ok.to_string(),
            ]
        })
        .collect();
    write_table(path, &CONVERGENCE_HEADER, &rows)
}

/// One row per report; the named constants follow the fixed columns.
pub fn write_inequality_report<P: AsRef<Path>>(path: P, report: &InequalityReport) -> Result<usize> {
    let mut header = vec!["name", "samples", "worst_ratio", "bound", "pass", "seed"];
    header.extend(report.constants.iter().map(|(n, _)| n.as_str()));
    let mut row = vec![
        report.name.clone(),
        report.samples.to_string(),
        fmt_real(report.worst_ratio),
        fmt_real(report.bound),
        report.pass.to_string(),
        report.seed.map(|s| s.to_string()).unwrap_or_default(),
    ];
    row.extend(report.constants.iter().map(|&(_, v)| fmt_real(v)));
    write_table(path, &header, &[row])
}

pub const SNAPSHOT_HEADER: [&str; 6] = ["t", "vertex", "x1", "x2", "u1", "u2"];

/// Nodal values of `u` at time `t`, boundary vertices included.
pub fn write_snapshot<P: AsRef<Path>>(path: P, u: &FEFunction, t: f64) -> Result<usize> {
    let rows: Vec<Vec<String>> = u
        .mesh()
        .vertices()
        .iter()
        .zip(u.nodal_values())
        .enumerate()
        .map(|(i, (x, v))| {
            vec![
                fmt_real(t),
                i.to_string(),
                fmt_real(x[0]),
                fmt_real(x[1]),
                fmt_real(v[0]),
                fmt_real(v[1]),
            ]
        })
        .collect();
    write_table(path, &SNAPSHOT_HEADER, &rows)
}

/// Index of the files produced by one command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(PathBuf, usize)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    pub fn record(&mut self, path: impl Into<PathBuf>, rows: usize) {
        self.entries.push((path.into(), rows));
    }

    pub fn entries(&self) -> &[(PathBuf, usize)] {
        &self.entries
    }

    /// Writes `manifest.csv` into `dir` with file names relative to `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.csv");
        let rows: Vec<Vec<String>> = self
            .entries
            .iter()
            .map(|(p, n)| {
                let name = p.strip_prefix(dir).unwrap_or(p);
                vec![name.display().to_string(), n.to_string()]
            })
            .collect();
        write_table(&path, &["file", "rows"], &rows)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::{decade_truncations, figure1_profiles, poincare_failure_run, Counterexample, CounterexampleSpec};
    use crate::mesh::{build_mesh_hierarchy, Domain};

    fn scratch_dir(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("varexp-io-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn reals_round_trip_exactly() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_real(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn counterexample_and_profile_tables() {
        let d = scratch_dir("ce");
        let ce = Counterexample::analytic(CounterexampleSpec::default()).unwrap();
        let rows = poincare_failure_run(&ce, &decade_truncations(5)).unwrap();
        assert_eq!(write_counterexample(d.join("c.csv"), &rows).unwrap(), 5);
        let (h, body) = read_table(d.join("c.csv")).unwrap();
        assert_eq!(h, COUNTEREXAMPLE_HEADER);
        assert_eq!(body.len(), 5);
        assert_eq!(body[4][0].parse::<f64>().unwrap(), 1e-5);
        assert_eq!(write_figure1(d.join("f.csv"), &figure1_profiles(&ce, 11)).unwrap(), 11);
        std::fs::remove_dir_all(d).unwrap();
    }

    #[test]
    fn snapshot_lists_every_vertex_and_manifest_is_relative() {
        let d = scratch_dir("snap");
        let h = build_mesh_hierarchy(Domain::UnitSquare, 2).unwrap();
        let u = FEFunction::interpolate(&h[1], |x| [x[0], -x[1]]);
        let n = write_snapshot(d.join("u.csv"), &u, 0.25).unwrap();
        assert_eq!(n, h[1].vertices().len());
        let mut m = Manifest::new();
        m.record(d.join("u.csv"), n);
        let (header, rows) = read_table(m.write(&d).unwrap()).unwrap();
        assert_eq!(header, ["file", "rows"]);
        assert_eq!(rows, vec![vec!["u.csv".to_string(), n.to_string()]]);
        std::fs::remove_dir_all(d).unwrap();
    }
}
