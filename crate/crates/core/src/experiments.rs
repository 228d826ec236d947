//! Performance-level curves over a range of horizons, the stationary
//! regression report, and their CSV encoding.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bounds::{bisect_lower, bisect_upper, feasibility_floor, BoundsOptions};
use crate::config::{bundled_config, ExperimentSpec};
use crate::error::{Error, Result};
use crate::exact::{exact_gamma, ExactOptions};
use crate::forward::{stationary_defaults, StationarySolution};
use crate::linalg::DEFAULT_PD_TOL;
use crate::model::table1_system;

pub const CURVE_HEADER: [&str; 6] = [
    "N",
    "gamma_floor",
    "gamma_lower",
    "gamma_exact",
    "gamma_upper",
    "error",
];

/// One horizon of a curve run. Missing levels are `None`; the reasons are
/// collected in `error`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub n: usize,
    pub gamma_floor: f64,
    pub gamma_lower: Option<f64>,
    pub gamma_exact: Option<f64>,
    pub gamma_upper: Option<f64>,
    pub error: Option<String>,
}

impl CurveRow {
    /// `floor <= lower <= exact <= upper`, each comparison with slack `slack`,
    /// over the levels that are present.
    pub fn is_ordered(&self, slack: f64) -> bool {
        let levels: Vec<f64> = [
            Some(self.gamma_floor),
            self.gamma_lower,
            self.gamma_exact,
            self.gamma_upper,
        ]
        .into_iter()
        .flatten()
        .collect();
        levels.windows(2).all(|w| w[0] <= w[1] + slack)
    }
}

/// Rounds to 12 significant digits and prints the shortest decimal that
/// reads back to the rounded value.
pub fn format_sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    format!("{rounded}")
}

fn curve_row(spec: &ExperimentSpec, stat: &[StationarySolution], n: usize) -> CurveRow {
    let set = &spec.model_set;
    let bopts = BoundsOptions {
        tol: spec.gamma_tol,
        cap: spec.cap,
        pd_tol: spec.pd_tol,
        qunder: None,
    };
    let mut errors = Vec::new();
    let mut keep = |label: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{label}: {e}"));
            None
        }
    };
    let gamma_lower = keep("lower", bisect_lower(set, stat, n, &bopts));
    let gamma_upper = keep("upper", bisect_upper(set, stat, n, &bopts));
    let gamma_exact = if set.len() <= 2 {
        let eopts = ExactOptions {
            gamma_tol: spec.gamma_tol,
            theta_step: spec.theta_step,
            cap: spec.cap,
            pd_tol: spec.pd_tol,
        };
        keep("exact", exact_gamma(set, stat, n, &eopts).map(|r| r.gamma))
    } else {
        None
    };
    CurveRow {
        n,
        gamma_floor: feasibility_floor(stat),
        gamma_lower,
        gamma_exact,
        gamma_upper,
        error: (!errors.is_empty()).then(|| errors.join("; ")),
    }
}

/// Floor, bounds and (for at most two models) the exact level for every
/// horizon in `spec.horizon`, in increasing `N`.
pub fn run_curves(spec: &ExperimentSpec) -> Result<Vec<CurveRow>> {
    let stat = stationary_defaults(&spec.model_set)?;
    let horizons: Vec<usize> = spec.horizon.clone().collect();
    Ok(horizons
        .par_iter()
        .map(|&n| curve_row(spec, &stat, n))
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_default()
}

pub fn write_curves<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CURVE_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format_sig(r.gamma_floor),
            opt(r.gamma_lower),
            opt(r.gamma_exact),
            opt(r.gamma_upper),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn curves_to_string(rows: &[CurveRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_curves(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_curves<R: Read>(input: R) -> Result<Vec<CurveRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: Some(1),
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().ne(CURVE_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: Some(1),
            message: format!("unexpected header {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line: Some(line),
            message: e.to_string(),
        })?;
        let bad = |field: &str, v: &str| Error::Parse {
            line: Some(line),
            message: format!("invalid {field} `{v}`"),
        };
        let num = |i: usize| -> Result<Option<f64>> {
            match &rec[i] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(CURVE_HEADER[i], s)),
            }
        };
        rows.push(CurveRow {
            n: rec[0].parse().map_err(|_| bad("N", &rec[0]))?,
            gamma_floor: num(1)?.ok_or_else(|| bad("gamma_floor", ""))?,
            gamma_lower: num(2)?,
            gamma_exact: num(3)?,
            gamma_upper: num(4)?,
            error: Some(rec[5].to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(rows)
}

/// Reference stationary weights of the eight scalar models, `(system, model, P)`.
pub const REFERENCE_P: [(char, usize, f64); 8] = [
    ('a', 1, 1.77),
    ('a', 2, 1.77),
    ('b', 1, 1.48),
    ('b', 2, 1.48),
    ('c', 1, 1.16),
    ('c', 2, 1.48),
    ('d', 1, 4.23),
    ('d', 2, 1.00),
];

pub const TABLE1_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub system: char,
    /// One-based model index within the system.
    pub model: usize,
    pub computed: f64,
    pub reference: f64,
    pub pass: bool,
}

/// Recomputes the stationary `P` of the eight scalar models and compares it
/// with the reference values at +/- [`TABLE1_TOLERANCE`].
pub fn run_table1() -> Result<Vec<Table1Row>> {
    let mut rows = Vec::with_capacity(REFERENCE_P.len());
    for key in ['a', 'b', 'c', 'd'] {
        let set = table1_system(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown system {key}")))?
            .validate(DEFAULT_PD_TOL)?;
        let stat = stationary_defaults(&set)?;
        for &(sys, model, reference) in REFERENCE_P.iter().filter(|r| r.0 == key) {
            let computed = stat[model - 1].p.as_matrix()[(0, 0)];
            rows.push(Table1Row {
                system: sys,
                model,
                computed,
                reference,
                pass: (computed - reference).abs() <= TABLE1_TOLERANCE,
            });
        }
    }
    Ok(rows)
}

pub fn write_table1<W: Write>(rows: &[Table1Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["system", "model", "P_computed", "P_reference", "pass"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.system.to_string(),
            r.model.to_string(),
            format_sig(r.computed),
            format_sig(r.reference),
            r.pass.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by [`reference_experiments`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutputs {
    pub table1: PathBuf,
    pub curves: Vec<PathBuf>,
    pub table1_rows: Vec<Table1Row>,
}

/// Writes `table1.csv` and the curves of the four bundled systems into
/// `dir`, restricting horizons to `horizon` when given.
pub fn reference_experiments(
    dir: &Path,
    horizon: Option<std::ops::RangeInclusive<usize>>,
    theta_step: Option<f64>,
) -> Result<ExperimentOutputs> {
    std::fs::create_dir_all(dir)?;
    let table1_rows = run_table1()?;
    let table1 = dir.join("table1.csv");
    write_table1(&table1_rows, std::fs::File::create(&table1)?)?;
    let mut curves = Vec::new();
    for name in crate::config::bundled_names() {
        let mut spec = bundled_config(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown configuration {name}")))?;
        if let Some(h) = horizon.clone() {
            spec.horizon = h;
        }
        if let Some(step) = theta_step {
            spec.theta_step = step;
        }
        let rows = run_curves(&spec)?;
        let path = dir.join(format!("{name}.csv"));
        write_curves(&rows, std::fs::File::create(&path)?)?;
        curves.push(path);
    }
    Ok(ExperimentOutputs {
        table1,
        curves,
        table1_rows,
    })
}
