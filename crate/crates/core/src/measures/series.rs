use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Extended;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Column header of the main diagnostics CSV.
pub const CSV_HEADER: &str = "t,mass,com_x,com_y,m2,s_gamma,d_gamma,logpair1,logpair2,max_ball_mass,g_triple";

/// Column header of the companion CSV holding the extra columns.
pub const EXTRA_CSV_HEADER: &str = "t,moment_gamma,ccc1";

/// Functionals of one sampled state. `m2` and `moment_gamma` are taken about
/// the origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub mass: f64,
    pub com: Vec2,
    pub m2: f64,
    pub s_gamma: f64,
    pub d_gamma: Extended,
    pub logpair1: Extended,
    pub logpair2: Extended,
    pub max_ball_mass: f64,
    pub g_triple: Extended,
    pub moment_gamma: f64,
    pub ccc1: Extended,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub gamma: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub mass: f64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticSeries {
    meta: SeriesMeta,
    rows: Vec<DiagnosticRow>,
}

impl DiagnosticSeries {
    pub fn new(meta: SeriesMeta) -> Self {
        DiagnosticSeries { meta, rows: Vec::new() }
    }

    /// Appends a row; times must be strictly increasing.
    pub fn push(&mut self, row: DiagnosticRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::domain(format!("row time {} does not follow {}", row.t, last.t)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn meta(&self) -> &SeriesMeta {
        &self.meta
    }

    pub fn rows(&self) -> &[DiagnosticRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&DiagnosticRow> {
        self.rows.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(|r| r.t)
    }

    pub fn column(&self, f: impl Fn(&DiagnosticRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Largest relative deviation of the mass column from its first entry.
    pub fn mass_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        self.rows
            .iter()
            .map(|r| ((r.mass - first.mass) / first.mass).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.mass,
                r.com.x,
                r.com.y,
                r.m2,
                r.s_gamma,
                r.d_gamma,
                r.logpair1,
                r.logpair2,
                r.max_ball_mass,
                r.g_triple
            )?;
        }
        Ok(())
    }

    pub fn write_extra_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{EXTRA_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.t, r.moment_gamma, r.ccc1)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, v: f64) -> DiagnosticRow {
        DiagnosticRow {
            t,
            mass: 1.0,
            com: Vec2::new(0.1, -0.2),
            m2: v,
            s_gamma: v,
            d_gamma: Extended::Infinite,
            logpair1: Extended::Finite(v),
            logpair2: Extended::Finite(v),
            max_ball_mass: 1.0,
            g_triple: Extended::Finite(0.0),
            moment_gamma: v,
            ccc1: Extended::Finite(v),
        }
    }

    fn meta() -> SeriesMeta {
        SeriesMeta {
            gamma: 1.5,
            epsilon: 0.1,
            nu: 0.1,
            mass: 1.0,
            seed: Some(3),
        }
    }

    #[test]
    fn times_must_increase() {
        let mut s = DiagnosticSeries::new(meta());
        s.push(row(0.0, 1.0)).unwrap();
        assert!(s.push(row(0.0, 1.0)).is_err());
        assert!(s.push(row(-1.0, 1.0)).is_err());
        s.push(row(0.5, 1.0)).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn csv_round_trips_doubles() {
        let mut s = DiagnosticSeries::new(meta());
        let v = 0.1 + 0.2;
        s.push(row(0.0, v)).unwrap();
        let text = s.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 11);
        assert_eq!(fields[4].parse::<f64>().unwrap(), v);
        assert_eq!(fields[6], "inf");
    }
}
