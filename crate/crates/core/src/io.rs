//! File formats: JSON for states and results, CSV for count and series data.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bell::BellResult;
use crate::detection::{Basis, CountRecord, MeasurementSetting};
use crate::error::{Error, Result};
use crate::fit::{FitPoint, SeriesKind};
use crate::linalg::{c, CMatrix, DensityMatrix};
use crate::tomography::{TomographyDataset, TomographyRecord};

/// `{"dim": d, "re": [...], "im": [...]}`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        Self {
            dim: m.dim(),
            re: m.as_slice().iter().map(|z| z.re).collect(),
            im: m.as_slice().iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.dim * self.dim;
        if self.dim == 0 || self.re.len() != n || self.im.len() != n {
            return Err(Error::Dimension(format!(
                "dim {} needs {n} entries in re and im, got {} and {}",
                self.dim,
                self.re.len(),
                self.im.len()
            )));
        }
        CMatrix::from_row_major(self.re.iter().zip(&self.im).map(|(&r, &i)| c(r, i)).collect())
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.to_matrix()?)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn read_density(path: &Path) -> Result<DensityMatrix> {
    read_json::<MatrixJson>(path)?.to_density()
}

/// Bell result as written by the `bell` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellJson {
    #[serde(rename = "S")]
    pub s: f64,
    pub std_err: f64,
    /// `[α, β]` pairs in the order of `E_values`.
    pub settings: Vec<[f64; 2]>,
    #[serde(rename = "E_values")]
    pub e_values: Vec<f64>,
}

impl From<&BellResult> for BellJson {
    fn from(r: &BellResult) -> Self {
        Self {
            s: r.s_value,
            std_err: r.std_err,
            settings: r.settings.settings().iter().map(|&(a, b)| [a, b]).collect(),
            e_values: r.e_values.to_vec(),
        }
    }
}

fn parse_error(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}:{line}: {msg}", path.display()))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let ok = header.len() >= expected.len() && header.iter().zip(expected).all(|(h, e)| h == e);
    if !ok {
        return Err(parse_error(path, 1, format!("expected header `{}`", expected.join(","))));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, row: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    row.get(i)
        .ok_or_else(|| parse_error(path, line, format!("missing `{name}`")))?
        .parse()
        .map_err(|_| parse_error(path, line, format!("bad value for `{name}`")))
}

const COUNT_HEADER: [&str; 7] = ["alpha_deg", "beta_deg", "n_uu", "n_ud", "n_du", "n_dd", "n_discarded"];

pub fn write_count_records(path: &Path, records: &[CountRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COUNT_HEADER)?;
    for r in records {
        let c = &r.counts;
        w.write_record([
            r.setting.alpha_deg.to_string(),
            r.setting.beta_deg.to_string(),
            c.n_uu.to_string(),
            c.n_ud.to_string(),
            c.n_du.to_string(),
            c.n_dd.to_string(),
            c.n_discarded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_count_records(path: &Path) -> Result<Vec<CountRecord>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &COUNT_HEADER)?;
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let line = k + 2;
        let setting = MeasurementSetting::new(
            field(path, line, &row, 0, "alpha_deg")?,
            field(path, line, &row, 1, "beta_deg")?,
        )?;
        let mut n = [0u64; 4];
        for (j, name) in COUNT_HEADER[2..6].iter().enumerate() {
            n[j] = field(path, line, &row, 2 + j, name)?;
        }
        out.push(CountRecord::new(setting, n, field(path, line, &row, 6, "n_discarded")?));
    }
    if out.is_empty() {
        return Err(Error::EmptyData(format!("{} has no count rows", path.display())));
    }
    Ok(out)
}

const TOMO_HEADER: [&str; 7] = ["basis_a", "basis_b", "n_uu", "n_ud", "n_du", "n_dd", "n_discarded"];

fn basis_label(b: Basis) -> String {
    b.labels().0.to_string()
}

fn format_count(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// One row per basis pair; the basis columns hold the label of the first
/// port (`H`, `D` or `R`). Any port label of a basis is accepted on input.
pub fn write_tomography(path: &Path, ds: &TomographyDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TOMO_HEADER)?;
    for r in &ds.records {
        let mut row = vec![basis_label(r.basis_1), basis_label(r.basis_2)];
        row.extend(r.counts.iter().map(|&n| format_count(n)));
        row.push(format_count(r.n_discarded));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tomography(path: &Path) -> Result<TomographyDataset> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &TOMO_HEADER)?;
    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let line = k + 2;
        let basis_1: Basis = field::<String>(path, line, &row, 0, "basis_a")?.parse()?;
        let basis_2: Basis = field::<String>(path, line, &row, 1, "basis_b")?.parse()?;
        let mut counts = [0.0; 4];
        for (j, name) in TOMO_HEADER[2..6].iter().enumerate() {
            counts[j] = field(path, line, &row, 2 + j, name)?;
        }
        records.push(TomographyRecord {
            basis_1,
            basis_2,
            counts,
            n_discarded: field(path, line, &row, 6, "n_discarded")?,
        });
    }
    TomographyDataset::new(records)
}

const SERIES_HEADER: [&str; 4] = ["dt_us", "value", "kind", "sigma"];

pub fn write_series(path: &Path, points: &[FitPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SERIES_HEADER)?;
    for p in points {
        let kind = match p.kind {
            SeriesKind::N => "N",
            SeriesKind::EN => "EN",
        };
        w.write_record([
            p.dt_us.to_string(),
            p.value.to_string(),
            kind.to_string(),
            p.sigma.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `dt_us,value,kind,sigma` with `kind` in {N, EN} and `sigma` optional
/// (empty cell or missing column).
pub fn read_series(path: &Path) -> Result<Vec<FitPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    check_header(path, &mut rdr, &SERIES_HEADER[..3])?;
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let line = k + 2;
        let kind = match row.get(2).unwrap_or("") {
            "N" => SeriesKind::N,
            "EN" => SeriesKind::EN,
            other => return Err(parse_error(path, line, format!("kind must be N or EN, got `{other}`"))),
        };
        let sigma = match row.get(3).unwrap_or("") {
            "" => None,
            _ => Some(field(path, line, &row, 3, "sigma")?),
        };
        out.push(FitPoint {
            dt_us: field(path, line, &row, 0, "dt_us")?,
            value: field(path, line, &row, 1, "value")?,
            kind,
            sigma,
        });
    }
    Ok(out)
}
