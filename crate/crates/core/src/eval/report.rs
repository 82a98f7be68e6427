use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{median, percentile, skill_score, MetricsReport};
use crate::error::{Error, Result};
use crate::series::YearMonth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LearningCurve,
    Seasonality,
    Misspecification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Previous-day persistence.
    Naive,
    /// Trained from scratch on target data only.
    Target,
    /// Source model, fine-tuned on target data when there is any.
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    /// The data needed for the cell does not exist.
    NotAvailable,
    /// The cell could not be computed, with the cause.
    Failed(String),
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $s:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $s),* }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$variant),)*
                    other => Err(Error::parse(stringify!($ty), format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

str_enum!(ExperimentKind {
    LearningCurve => "learning-curve",
    Seasonality => "seasonality",
    Misspecification => "misspecification",
});

str_enum!(ModelKind {
    Naive => "naive",
    Target => "target",
    Transfer => "transfer",
});

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::NotAvailable => f.write_str(NOT_AVAILABLE),
            CellStatus::Failed(cause) => write!(f, "failed: {cause}"),
        }
    }
}

impl FromStr for CellStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(CellStatus::Ok),
            NOT_AVAILABLE => Ok(CellStatus::NotAvailable),
            _ => s
                .strip_prefix("failed: ")
                .map(|c| CellStatus::Failed(c.to_string()))
                .ok_or_else(|| Error::parse("status", format!("unknown value `{s}`"))),
        }
    }
}

/// Literal written for cells the data cannot support.
pub const NOT_AVAILABLE: &str = "n.a.";

/// One model evaluated in one grid cell for one site.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub site: String,
    pub experiment: ExperimentKind,
    /// Months of target data used for training.
    pub months: u32,
    /// Last month of the training span.
    pub terminal_month: YearMonth,
    /// Distance between source and target location.
    pub offset_km: f64,
    pub model: ModelKind,
    pub status: CellStatus,
    pub metrics: Option<MetricsReport>,
    /// Fingerprint of the scaler used for evaluation.
    pub scaler: String,
    pub seed: u64,
}

impl ReportRow {
    fn key(&self) -> CellKey {
        CellKey {
            experiment: self.experiment,
            months: self.months,
            terminal_month: self.terminal_month,
            offset_bits: self.offset_km.to_bits(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    experiment: ExperimentKind,
    terminal_month: YearMonth,
    months: u32,
    offset_bits: u64,
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "site",
    "experiment",
    "months",
    "terminal_month",
    "offset_km",
    "model",
    "status",
    "rmse",
    "mae",
    "mbe",
    "n",
    "scaler",
    "seed",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("report", e.to_string())
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::parse(REPORT_COLUMNS[i], format!("line {line}: cannot parse `{raw}`")))
}

/// Skill matrix: rows are months of training data, columns terminal
/// months, cells the median skill score across sites (`None` = n.a.).
#[derive(Debug, Clone, PartialEq)]
pub struct SkillMatrix {
    pub model: ModelKind,
    pub months: Vec<u32>,
    pub terminal_months: Vec<YearMonth>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl SkillMatrix {
    pub fn get(&self, months: u32, terminal: YearMonth) -> Option<f64> {
        let r = self.months.iter().position(|m| *m == months)?;
        let c = self.terminal_months.iter().position(|t| *t == terminal)?;
        self.cells[r][c]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["months".to_string()];
        header.extend(self.terminal_months.iter().map(|t| t.to_string()));
        out.write_record(&header).map_err(csv_err)?;
        for (m, row) in self.months.iter().zip(&self.cells) {
            let mut rec = vec![format!("{m}m")];
            rec.extend(row.iter().map(|c| match c {
                Some(v) => format!("{v:.1}"),
                None => NOT_AVAILABLE.to_string(),
            }));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("writing skill matrix", e))
    }
}

/// Median and 5-95% band of each metric across sites for one cell and model.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub experiment: ExperimentKind,
    pub months: u32,
    pub terminal_month: YearMonth,
    pub offset_km: f64,
    pub model: ModelKind,
    pub sites: usize,
    /// `(median, p05, p95)` for rmse, mae, mbe in that order.
    pub stats: [(f64, f64, f64); 3],
}

impl ExperimentReport {
    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            let m = |f: fn(&MetricsReport) -> String| r.metrics.as_ref().map(f).unwrap_or_default();
            out.write_record([
                r.site.clone(),
                r.experiment.to_string(),
                r.months.to_string(),
                r.terminal_month.to_string(),
                r.offset_km.to_string(),
                r.model.to_string(),
                r.status.to_string(),
                m(|x| x.rmse.to_string()),
                m(|x| x.mae.to_string()),
                m(|x| x.mbe.to_string()),
                m(|x| x.n.to_string()),
                r.scaler.clone(),
                r.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("writing report", e))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.iter().ne(REPORT_COLUMNS) {
            return Err(Error::parse("header", format!("expected {}", REPORT_COLUMNS.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let metrics = if rec.get(7).unwrap_or("").is_empty() {
                None
            } else {
                Some(MetricsReport {
                    rmse: field(&rec, 7, line)?,
                    mae: field(&rec, 8, line)?,
                    mbe: field(&rec, 9, line)?,
                    n: field(&rec, 10, line)?,
                })
            };
            rows.push(ReportRow {
                site: rec.get(0).unwrap_or("").to_string(),
                experiment: field(&rec, 1, line)?,
                months: field(&rec, 2, line)?,
                terminal_month: field(&rec, 3, line)?,
                offset_km: field(&rec, 4, line)?,
                model: field(&rec, 5, line)?,
                status: field(&rec, 6, line)?,
                metrics,
                scaler: rec.get(11).unwrap_or("").to_string(),
                seed: field(&rec, 12, line)?,
            });
        }
        Ok(ExperimentReport { rows })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Skill of `model` against the naive rows of the same site and cell,
    /// medianed across sites.
    pub fn skill_matrix(&self, model: ModelKind) -> SkillMatrix {
        let mut months: Vec<u32> = self.rows.iter().map(|r| r.months).collect();
        let mut terminal_months: Vec<YearMonth> = self.rows.iter().map(|r| r.terminal_month).collect();
        months.sort_unstable();
        months.dedup();
        terminal_months.sort_unstable();
        terminal_months.dedup();

        let mut naive: BTreeMap<(String, CellKey), f64> = BTreeMap::new();
        for r in &self.rows {
            if let (ModelKind::Naive, Some(m)) = (r.model, &r.metrics) {
                naive.insert((r.site.clone(), r.key()), m.rmse);
            }
        }
        let mut scores: BTreeMap<(u32, YearMonth), Vec<f64>> = BTreeMap::new();
        for r in self
            .rows
            .iter()
            .filter(|r| r.model == model && r.status == CellStatus::Ok)
        {
            let (Some(m), Some(base)) = (&r.metrics, naive.get(&(r.site.clone(), r.key()))) else {
                continue;
            };
            if let Ok(s) = skill_score(m.rmse, *base) {
                scores.entry((r.months, r.terminal_month)).or_default().push(s);
            }
        }
        let cells = months
            .iter()
            .map(|m| {
                terminal_months
                    .iter()
                    .map(|t| scores.get(&(*m, *t)).and_then(|v| median(v)))
                    .collect()
            })
            .collect();
        SkillMatrix {
            model,
            months,
            terminal_months,
            cells,
        }
    }

    /// Per-cell, per-model statistics across sites, over the rows that
    /// completed.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut groups: BTreeMap<(CellKey, ModelKind), Vec<&MetricsReport>> = BTreeMap::new();
        for r in &self.rows {
            if let Some(m) = &r.metrics {
                groups.entry((r.key(), r.model)).or_default().push(m);
            }
        }
        groups
            .into_iter()
            .map(|((key, model), ms)| {
                let stat = |f: fn(&MetricsReport) -> f64| {
                    let v: Vec<f64> = ms.iter().map(|m| f(m)).collect();
                    (
                        median(&v).unwrap_or(f64::NAN),
                        percentile(&v, 0.05).unwrap_or(f64::NAN),
                        percentile(&v, 0.95).unwrap_or(f64::NAN),
                    )
                };
                AggregateRow {
                    experiment: key.experiment,
                    months: key.months,
                    terminal_month: key.terminal_month,
                    offset_km: f64::from_bits(key.offset_bits),
                    model,
                    sites: ms.len(),
                    stats: [stat(|m| m.rmse), stat(|m| m.mae), stat(|m| m.mbe)],
                }
            })
            .collect()
    }

    /// Long-format plot data: one line per cell, model and metric with the
    /// cross-site median and 5-95% band.
    pub fn write_plot_data<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "experiment",
            "months",
            "terminal_month",
            "offset_km",
            "model",
            "metric",
            "median",
            "p05",
            "p95",
            "sites",
        ])
        .map_err(csv_err)?;
        for a in self.aggregate() {
            for (name, (med, lo, hi)) in ["rmse", "mae", "mbe"].iter().zip(a.stats) {
                out.write_record([
                    a.experiment.to_string(),
                    a.months.to_string(),
                    a.terminal_month.to_string(),
                    a.offset_km.to_string(),
                    a.model.to_string(),
                    name.to_string(),
                    med.to_string(),
                    lo.to_string(),
                    hi.to_string(),
                    a.sites.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        out.flush().map_err(|e| Error::io("writing plot data", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(site: &str, months: u32, terminal: (i32, u32), model: ModelKind, rmse: Option<f64>) -> ReportRow {
        ReportRow {
            site: site.into(),
            experiment: ExperimentKind::Seasonality,
            months,
            terminal_month: YearMonth::new(terminal.0, terminal.1).unwrap(),
            offset_km: 0.0,
            model,
            status: if rmse.is_some() {
                CellStatus::Ok
            } else {
                CellStatus::NotAvailable
            },
            metrics: rmse.map(|r| MetricsReport {
                rmse: r,
                mae: r / 2.0,
                mbe: -r / 3.0,
                n: 240,
            }),
            scaler: "abcd".into(),
            seed: 17,
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = vec![
            row("a", 1, (2019, 7), ModelKind::Naive, Some(0.1 + 0.2)),
            row("a", 3, (2019, 1), ModelKind::Target, None),
        ];
        rows[1].status = CellStatus::Failed("no data, for location".into());
        rows[0].offset_km = 123.456789012345;
        let rep = ExperimentReport { rows };
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let back = ExperimentReport::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn matrix_marks_unavailable() {
        let rep = ExperimentReport {
            rows: vec![
                row("a", 1, (2019, 7), ModelKind::Naive, Some(0.2)),
                row("a", 1, (2019, 7), ModelKind::Target, Some(0.174)),
                row("b", 1, (2019, 7), ModelKind::Naive, Some(0.2)),
                row("b", 1, (2019, 7), ModelKind::Target, Some(0.3)),
                row("c", 1, (2019, 7), ModelKind::Naive, Some(0.2)),
                row("c", 1, (2019, 7), ModelKind::Target, Some(0.2)),
                row("a", 6, (2019, 2), ModelKind::Naive, Some(0.2)),
                row("a", 6, (2019, 2), ModelKind::Target, None),
            ],
        };
        let m = rep.skill_matrix(ModelKind::Target);
        let jul = YearMonth::new(2019, 7).unwrap();
        let feb = YearMonth::new(2019, 2).unwrap();
        assert!(m.get(1, jul).unwrap().abs() < 1e-9);
        assert_eq!(m.get(6, feb), None);
        assert_eq!(m.get(6, jul), None);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "months,2019-02,2019-07\n1m,n.a.,0.0\n6m,n.a.,n.a.\n");
    }

    #[test]
    fn aggregate_medians() {
        let rep = ExperimentReport {
            rows: vec![
                row("a", 1, (2019, 7), ModelKind::Target, Some(0.1)),
                row("b", 1, (2019, 7), ModelKind::Target, Some(0.3)),
                row("c", 1, (2019, 7), ModelKind::Target, Some(0.2)),
            ],
        };
        let agg = rep.aggregate();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].sites, 3);
        assert!((agg[0].stats[0].0 - 0.2).abs() < 1e-15);
        let mut buf = Vec::new();
        rep.write_plot_data(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
