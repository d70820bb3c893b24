//! Report, table, spectrum and measurement files.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::harness::{column_order, DetectionReport, SweepTable};
use crate::rmtdetect::{CriteriaTriple, SpectrumSummary};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Domain(format!(
                "unknown format {other:?}; expected json or csv"
            ))),
        }
    }
}

impl Format {
    /// Format implied by a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

type Getter = (&'static str, fn(&CriteriaTriple) -> f64);

const REPORT_HEADER: [&str; 9] = [
    "c_srl", "c_mpl1", "c_mpl2", "flag", "class", "node", "n", "t", "seed",
];

pub fn report_to_string(report: &DetectionReport, format: Format) -> Result<String> {
    match format {
        Format::Json => report.to_json(),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_HEADER)?;
            let c = report.criteria;
            w.write_record([
                c.c_srl.to_string(),
                c.c_mpl1.to_string(),
                c.c_mpl2.to_string(),
                report.flag.to_string(),
                report.class.clone(),
                report.node.map(|k| k.to_string()).unwrap_or_default(),
                report.n.to_string(),
                report.t.to_string(),
                report.seed.to_string(),
            ])?;
            into_string(w)
        }
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn export_report(
    report: &DetectionReport,
    format: Format,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, report_to_string(report, format)?)?;
    Ok(())
}

pub fn import_report(path: impl AsRef<Path>, format: Format) -> Result<DetectionReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    match format {
        Format::Json => Ok(serde_json::from_str(&text)?),
        Format::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
            if header != REPORT_HEADER {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected header {}", REPORT_HEADER.join(",")),
                ));
            }
            let rec = r
                .records()
                .next()
                .ok_or_else(|| Error::parse(path, 2, "report row missing"))??;
            let field = |i: usize| rec.get(i).unwrap_or("");
            fn num<T: FromStr>(path: &Path, s: &str, name: &str) -> Result<T> {
                s.parse()
                    .map_err(|_| Error::parse(path, 2, format!("cannot parse {name} from {s:?}")))
            }
            Ok(DetectionReport {
                criteria: CriteriaTriple {
                    c_srl: num(path, field(0), "c_srl")?,
                    c_mpl1: num(path, field(1), "c_mpl1")?,
                    c_mpl2: num(path, field(2), "c_mpl2")?,
                },
                flag: num(path, field(3), "flag")?,
                class: field(4).to_string(),
                node: match field(5) {
                    "" => None,
                    s => Some(num(path, s, "node")?),
                },
                n: num(path, field(6), "n")?,
                t: num(path, field(7), "t")?,
                seed: num(path, field(8), "seed")?,
            })
        }
    }
}

/// JSON lists the rows; CSV puts one row per (network, criterion) and
/// one column per scenario.
pub fn table_to_string(table: &SweepTable, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(table)? + "\n"),
        Format::Csv => {
            let cols = column_order(table);
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["network".to_string(), "criterion".to_string()];
            header.extend(cols.iter().cloned());
            w.write_record(&header)?;
            let mut networks: Vec<&str> = Vec::new();
            for r in &table.rows {
                if !networks.contains(&r.network.as_str()) {
                    networks.push(&r.network);
                }
            }
            let getters: [Getter; 3] = [
                ("C_SRL", |c| c.c_srl),
                ("C_MPL1", |c| c.c_mpl1),
                ("C_MPL2", |c| c.c_mpl2),
            ];
            for net in networks {
                for (name, get) in getters {
                    let mut rec = vec![net.to_string(), name.to_string()];
                    for col in &cols {
                        let cell = table
                            .rows
                            .iter()
                            .find(|r| r.network == net && &r.scenario == col)
                            .and_then(|r| r.criteria.as_ref())
                            .map(|c| format!("{:.6e}", get(c)))
                            .unwrap_or_default();
                        rec.push(cell);
                    }
                    w.write_record(&rec)?;
                }
            }
            into_string(w)
        }
    }
}

pub fn export_table(table: &SweepTable, format: Format, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, table_to_string(table, format)?)?;
    Ok(())
}

pub fn import_table(path: impl AsRef<Path>) -> Result<SweepTable> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub const SPECTRUM_HEADER: &str = "index,eigenvalue,mp_lower,mp_upper";

/// Eigenvalues (descending) with the M-P bounds repeated on every row.
pub fn spectrum_to_string(summary: &SpectrumSummary) -> String {
    let (lo, hi) = summary.bounds;
    let mut out = String::from(SPECTRUM_HEADER);
    out.push('\n');
    for (i, l) in summary.eigenvalues.iter().enumerate() {
        out.push_str(&format!("{i},{l},{lo},{hi}\n"));
    }
    out
}

pub fn export_spectrum(summary: &SpectrumSummary, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, spectrum_to_string(summary))?;
    Ok(())
}

/// Writes an `N x T` window as one row per sample: the sample index, then
/// one complex value per bus.
pub fn write_measurements(window: &DMatrix<C64>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write!(f, "sample")?;
    for k in 1..=window.nrows() {
        write!(f, ",{k}")?;
    }
    writeln!(f)?;
    for (t, col) in window.column_iter().enumerate() {
        write!(f, "{t}")?;
        for v in col.iter() {
            write!(f, ",{v}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a measurement CSV into an `N x T` window. The first column is
/// the sample index; every other column is one bus. Values may be real
/// or complex (`a+bi`). A header row is optional and `#` starts a comment.
pub fn read_measurements(path: impl AsRef<Path>) -> Result<DMatrix<C64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_measurements(&text, path)
}

pub fn parse_measurements(text: &str, path: &Path) -> Result<DMatrix<C64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut columns: Vec<Vec<C64>> = Vec::new();
    let mut width = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if rec.len() < 2 {
            return Err(Error::parse(
                path,
                line,
                "expected a sample index and at least one bus column",
            ));
        }
        if i == 0 && rec.get(0).is_some_and(|s| s.parse::<f64>().is_err()) {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {w} fields, got {}", rec.len()),
                ));
            }
            _ => {}
        }
        rec[0]
            .parse::<f64>()
            .map_err(|_| Error::parse(path, line, format!("bad sample index {:?}", &rec[0])))?;
        let col = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<C64>().map_err(|_| {
                    Error::parse(path, line, format!("cannot parse {s:?} as a number"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        columns.push(col);
    }
    let n = width.ok_or_else(|| Error::parse(path, 1, "no measurement rows"))? - 1;
    Ok(DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]))
}
