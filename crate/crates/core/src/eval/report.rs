use crate::error::{Error, Result};
use crate::model::Eta;
use crate::trainer::Strategy;

pub const REPORT_HEADER: &str = "strategy,eta,alpha,n,seed,nmse_db,puzzle_acc,samples";
/// CSV rendering of an exact (minus infinity dB) reconstruction.
pub const EXACT: &str = "exact";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub strategy: Strategy,
    pub eta: Eta,
    pub alpha: f64,
    pub n: usize,
    pub seed: u64,
    /// `-inf` when every reconstruction is exact.
    pub nmse_db: f64,
    /// Only reported for models trained with the permutation head.
    pub puzzle_acc: Option<f64>,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalRow {
    pub fn csv_row(&self) -> String {
        let nmse = if self.nmse_db == f64::NEG_INFINITY {
            EXACT.to_string()
        } else {
            self.nmse_db.to_string()
        };
        let acc = self.puzzle_acc.map(|a| a.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.strategy, self.eta, self.alpha, self.n, self.seed, nmse, acc, self.samples
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("report row {line:?}: bad {what}"));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(bad("field count"));
        }
        let nmse_db = if f[5] == EXACT {
            f64::NEG_INFINITY
        } else {
            f[5].parse().map_err(|_| bad("nmse_db"))?
        };
        if !nmse_db.is_finite() && nmse_db != f64::NEG_INFINITY {
            return Err(bad("nmse_db"));
        }
        Ok(EvalRow {
            strategy: f[0].parse()?,
            eta: f[1].parse()?,
            alpha: f[2].parse().map_err(|_| bad("alpha"))?,
            n: f[3].parse().map_err(|_| bad("n"))?,
            seed: f[4].parse().map_err(|_| bad("seed"))?,
            nmse_db,
            puzzle_acc: if f[6].is_empty() {
                None
            } else {
                Some(f[6].parse().map_err(|_| bad("puzzle_acc"))?)
            },
            samples: f[7].parse().map_err(|_| bad("samples"))?,
        })
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(REPORT_HEADER) {
            return Err(Error::Config("not an evaluation report: header mismatch".into()));
        }
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(EvalRow::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport { rows })
    }
}
