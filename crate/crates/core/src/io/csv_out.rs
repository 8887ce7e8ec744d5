//! CSV schemas. Floats are written with 17 significant digits so values
//! read back bit-exactly.

use std::io::{Read, Write};

use thiserror::Error;

use crate::analysis::{BounceStats, CrossingReport, DensityEstimate, ExitReport};
use crate::graph::EdgeId;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
}

pub const DENSITY_HEADER: [&str; 5] = ["edge_id", "bin_index", "x_left", "x_right", "density"];

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per cell, sorted by `(edge_id, bin_index)`. An estimate with no
/// samples writes only the header.
pub fn emit_density_csv(
    estimate: &impl DensityEstimate,
    samples: Option<u64>,
    out: impl Write,
) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DENSITY_HEADER)?;
    if samples != Some(0) {
        for (e, g) in estimate.grid().edges().iter().enumerate() {
            for i in 0..g.cells {
                let (lo, hi) = g.bounds(i);
                w.write_record([
                    e.to_string(),
                    i.to_string(),
                    fmt_f64(lo),
                    fmt_f64(hi),
                    fmt_f64(estimate.density(EdgeId(e), i)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub edge_id: usize,
    pub bin_index: usize,
    pub x_left: f64,
    pub x_right: f64,
    pub density: f64,
}

pub fn read_density_csv(input: impl Read) -> Result<Vec<DensityRow>, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(DENSITY_HEADER) {
        return Err(CsvError::Malformed {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| CsvError::Malformed {
            row: i + 1,
            message: m.to_string(),
        };
        let int = |k: usize| rec[k].parse::<usize>().map_err(|_| bad("expected an integer"));
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad("expected a number"));
        rows.push(DensityRow {
            edge_id: int(0)?,
            bin_index: int(1)?,
            x_left: num(2)?,
            x_right: num(3)?,
            density: num(4)?,
        });
    }
    Ok(rows)
}

/// `crossings,steps` for `M = 1..=cap`.
pub fn emit_bounce_csv(stats: &BounceStats, out: impl Write) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["crossings", "steps"])?;
    for (k, c) in stats.m_histogram.iter().enumerate().skip(1) {
        w.write_record([k.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `key,value` pairs.
pub fn emit_summary_csv(pairs: &[(&str, String)], out: impl Write) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "value"])?;
    for (k, v) in pairs {
        w.write_record([*k, v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_crossing_report_csv(report: &CrossingReport, out: impl Write) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "k",
        "empirical_cdf",
        "lower_bound",
        "chi2_tail",
        "bound_violated",
        "chi2_mismatch",
    ])?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.empirical),
            opt(r.bound),
            opt(r.chi2_tail),
            r.bound_violated.to_string(),
            r.chi2_mismatch.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_exit_csv(report: &ExitReport, out: impl Write) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dt",
        "slot",
        "weight",
        "frequency",
        "std_error",
        "max_deviation",
        "max_z",
    ])?;
    for row in &report.rows {
        for (s, ((f, se), b)) in row
            .frequencies
            .iter()
            .zip(&row.std_errors)
            .zip(&report.weights)
            .enumerate()
        {
            w.write_record([
                fmt_f64(row.dt),
                s.to_string(),
                fmt_f64(*b),
                fmt_f64(*f),
                fmt_f64(*se),
                fmt_f64(row.max_deviation),
                fmt_f64(row.max_z),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{histogram_accumulate, Histogram};
    use crate::engine::ParticleState;
    use crate::grid::{EdgeGrid, Grid};
    use proptest::prelude::*;

    struct Fixed(Grid, Vec<Vec<f64>>);

    impl DensityEstimate for Fixed {
        fn grid(&self) -> &Grid {
            &self.0
        }
        fn density(&self, e: EdgeId, i: usize) -> f64 {
            self.1[e.0][i]
        }
    }

    fn emit(h: &Histogram) -> String {
        let mut buf = Vec::new();
        emit_density_csv(h, Some(h.total()), &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_histogram_is_header_only() {
        let h = Histogram::empty(Grid::new(vec![EdgeGrid { cells: 3, width: 0.5 }]).unwrap());
        assert_eq!(emit(&h), "edge_id,bin_index,x_left,x_right,density\n");
    }

    #[test]
    fn single_particle_single_bin() {
        let g = Grid::new(vec![EdgeGrid { cells: 1, width: 0.25 }]).unwrap();
        let h = histogram_accumulate(&[ParticleState::new(EdgeId(0), 0.1)], &g).unwrap();
        let rows = read_density_csv(emit(&h).as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].density, 4.0);
        assert_eq!((rows[0].x_left, rows[0].x_right), (0.0, 0.25));
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_density_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn density_round_trip_is_bit_exact(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..40), width in 1e-6f64..10.0) {
            let g = Grid::new(vec![EdgeGrid { cells: vals.len(), width }]).unwrap();
            let est = Fixed(g, vec![vals.clone()]);
            let mut buf = Vec::new();
            emit_density_csv(&est, None, &mut buf).unwrap();
            let rows = read_density_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(rows.len(), vals.len());
            for (r, v) in rows.iter().zip(&vals) {
                prop_assert_eq!(r.density.to_bits(), v.to_bits());
            }
        }
    }
}
