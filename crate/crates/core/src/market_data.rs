//! Historical price ingestion: wide-CSV loading, date alignment and log-returns.
//!
//! The canonical input is a wide CSV whose first header cell is `date` and whose
//! remaining header cells are tickers. Each data row is an ISO-8601 date
//! (`YYYY-MM-DD`) followed by one decimal close price per ticker. A blank cell
//! marks a missing observation; missing observations are resolved by an inner
//! join on dates, never by filling.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Layout descriptor for wide price CSV files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvFormat {
    pub date_column: String,
    pub delimiter: u8,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self {
            date_column: "date".to_string(),
            delimiter: b',',
        }
    }
}

/// Aligned daily close prices, one row per date and one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    tickers: Vec<String>,
    dates: Vec<String>,
    prices: DMatrix<f64>,
}

impl PriceSeries {
    /// Builds a series from parts, checking every invariant: dates strictly
    /// increasing, prices finite and strictly positive, shape consistent.
    pub fn new(tickers: Vec<String>, dates: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if dates.is_empty() || tickers.is_empty() {
            return Err(Error::EmptySeries);
        }
        if prices.nrows() != dates.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                got: prices.nrows(),
            });
        }
        if prices.ncols() != tickers.len() {
            return Err(Error::DimensionMismatch {
                expected: tickers.len(),
                got: prices.ncols(),
            });
        }
        let unique: BTreeSet<&String> = tickers.iter().collect();
        if unique.len() != tickers.len() {
            return Err(Error::InvalidSeries("duplicate ticker".into()));
        }
        for w in dates.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateDate(w[1].clone()));
            }
            if w[0] > w[1] {
                return Err(Error::InvalidSeries(format!(
                    "dates not increasing: {} before {}",
                    w[0], w[1]
                )));
            }
        }
        for (r, date) in dates.iter().enumerate() {
            for (c, ticker) in tickers.iter().enumerate() {
                let value = prices[(r, c)];
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::NonPositivePrice {
                        ticker: ticker.clone(),
                        date: date.clone(),
                        value,
                    });
                }
            }
        }
        Ok(Self {
            tickers,
            dates,
            prices,
        })
    }

    /// Single-asset series from `(date, price)` pairs in any order.
    pub fn single(ticker: impl Into<String>, mut points: Vec<(String, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.cmp(&b.0));
        let dates: Vec<String> = points.iter().map(|(d, _)| d.clone()).collect();
        let prices = DMatrix::from_iterator(points.len(), 1, points.iter().map(|(_, p)| *p));
        Self::new(vec![ticker.into()], dates, prices)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    /// Most recent close per asset; the simulation's starting prices.
    pub fn last_prices(&self) -> Vec<f64> {
        let last = self.prices.nrows() - 1;
        self.prices.row(last).iter().copied().collect()
    }

    /// Restricts the series to `tickers`, in the order given.
    pub fn select(&self, tickers: &[String]) -> Result<Self> {
        let mut cols = Vec::with_capacity(tickers.len());
        for t in tickers {
            let idx = self
                .tickers
                .iter()
                .position(|x| x == t)
                .ok_or_else(|| Error::UnknownTicker(t.clone()))?;
            cols.push(idx);
        }
        let prices = self.prices.select_columns(&cols);
        Self::new(tickers.to_vec(), self.dates.clone(), prices)
    }

    /// Rows whose date lies in `[start, end]` (inclusive, lexicographic).
    pub fn window(&self, start: &str, end: &str) -> Result<Self> {
        let rows: Vec<usize> = self
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| d.as_str() >= start && d.as_str() <= end)
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptySeries);
        }
        let dates = rows.iter().map(|&i| self.dates[i].clone()).collect();
        Self::new(self.tickers.clone(), dates, self.prices.select_rows(&rows))
    }

    /// Splits a multi-asset series into single-asset series.
    pub fn split(&self) -> Vec<PriceSeries> {
        (0..self.n_assets())
            .map(|c| PriceSeries {
                tickers: vec![self.tickers[c].clone()],
                dates: self.dates.clone(),
                prices: self.prices.columns(c, 1).into_owned(),
            })
            .collect()
    }
}

/// Daily log-returns; row `t` is the move from date `t` to date `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    tickers: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnMatrix {
    pub fn new(tickers: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.ncols() != tickers.len() {
            return Err(Error::DimensionMismatch {
                expected: tickers.len(),
                got: returns.ncols(),
            });
        }
        Ok(Self { tickers, returns })
    }

    /// Convenience constructor from row-major data.
    pub fn from_rows(tickers: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = tickers.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        let m = DMatrix::from_row_iterator(rows.len(), n, rows.iter().flatten().copied());
        Self::new(tickers, m)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Sub-matrix of periods `[start, end)`.
    pub fn rows(&self, start: usize, end: usize) -> ReturnMatrix {
        ReturnMatrix {
            tickers: self.tickers.clone(),
            returns: self.returns.rows(start, end - start).into_owned(),
        }
    }
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
}

/// Loads a wide price CSV from disk.
pub fn load_prices(path: impl AsRef<Path>, format: &CsvFormat) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices(file, format)
}

/// Parses a wide price CSV. Blank cells are treated as missing and dropped by
/// the inner join in [`align`]; everything else must parse as a positive number.
pub fn read_prices<R: Read>(reader: R, format: &CsvFormat) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    match headers.get(0) {
        Some(h) if h == format.date_column => {}
        other => {
            return Err(Error::Csv(format!(
                "first header cell must be `{}`, found {:?}",
                format.date_column,
                other.unwrap_or("")
            )))
        }
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if tickers.is_empty() {
        return Err(Error::Csv("no ticker columns".into()));
    }
    if let Some(t) = tickers.iter().find(|t| t.is_empty()) {
        return Err(Error::Csv(format!("empty ticker name {t:?} in header")));
    }

    let mut columns: Vec<Vec<(String, f64)>> = vec![Vec::new(); tickers.len()];
    let mut seen = BTreeSet::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let date = record.get(0).unwrap_or("").to_string();
        if !is_iso_date(&date) {
            return Err(Error::Csv(format!(
                "row {}: date {date:?} is not YYYY-MM-DD",
                line + 2
            )));
        }
        if !seen.insert(date.clone()) {
            return Err(Error::DuplicateDate(date));
        }
        if record.len() != tickers.len() + 1 {
            return Err(Error::Csv(format!(
                "row {}: expected {} fields, found {}",
                line + 2,
                tickers.len() + 1,
                record.len()
            )));
        }
        for (c, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| {
                Error::Csv(format!(
                    "row {}: non-numeric price {cell:?} for {}",
                    line + 2,
                    tickers[c]
                ))
            })?;
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositivePrice {
                    ticker: tickers[c].clone(),
                    date,
                    value,
                });
            }
            columns[c].push((date.clone(), value));
        }
    }
    if seen.is_empty() {
        return Err(Error::EmptySeries);
    }

    let singles = tickers
        .into_iter()
        .zip(columns)
        .map(|(t, pts)| PriceSeries::single(t, pts))
        .collect::<Result<Vec<_>>>()?;
    align(&singles)
}

/// Writes a series in the canonical wide-CSV layout. Prices use the shortest
/// representation that round-trips exactly.
pub fn write_prices<W: Write>(series: &PriceSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(series.tickers.iter().cloned());
    wtr.write_record(&header)?;
    for (r, date) in series.dates.iter().enumerate() {
        let mut row = vec![date.clone()];
        row.extend(series.prices.row(r).iter().map(|p| p.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

pub fn save_prices(series: &PriceSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_prices(series, file)
}

/// Inner join on dates: only dates present in every input survive.
pub fn align(series_list: &[PriceSeries]) -> Result<PriceSeries> {
    let first = series_list.first().ok_or(Error::EmptySeries)?;
    let mut common: BTreeSet<&str> = first.dates.iter().map(String::as_str).collect();
    for s in &series_list[1..] {
        let dates: BTreeSet<&str> = s.dates.iter().map(String::as_str).collect();
        common = common.intersection(&dates).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }

    let tickers: Vec<String> = series_list
        .iter()
        .flat_map(|s| s.tickers.iter().cloned())
        .collect();
    let dates: Vec<String> = common.iter().map(|d| d.to_string()).collect();
    let mut prices = DMatrix::zeros(dates.len(), tickers.len());
    let mut col = 0;
    for s in series_list {
        // both date lists are sorted, so a single merge pass picks the rows
        let mut r_src = 0;
        for (r_out, d) in dates.iter().enumerate() {
            while s.dates[r_src] != *d {
                r_src += 1;
            }
            for c in 0..s.n_assets() {
                prices[(r_out, col + c)] = s.prices[(r_src, c)];
            }
        }
        col += s.n_assets();
    }
    PriceSeries::new(tickers, dates, prices)
}

/// `ln(p[t+1] / p[t])` for every asset and consecutive date pair.
pub fn log_returns(series: &PriceSeries) -> Result<ReturnMatrix> {
    let n = series.n_dates();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let p = &series.prices;
    let returns = DMatrix::from_fn(n - 1, series.n_assets(), |t, i| {
        (p[(t + 1, i)] / p[(t, i)]).ln()
    });
    ReturnMatrix::new(series.tickers.clone(), returns)
}

/// A source of historical prices for one asset over a date window.
///
/// Network-backed implementations can be plugged in behind this trait; the
/// crate ships only the file-backed [`WideCsvSource`].
pub trait PriceSource {
    fn fetch(&self, ticker: &str, start: &str, end: &str) -> Result<PriceSeries>;
}

/// Serves single-asset series out of a wide price CSV on disk.
#[derive(Debug, Clone)]
pub struct WideCsvSource {
    path: PathBuf,
    format: CsvFormat,
}

impl WideCsvSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            format: CsvFormat::default(),
        }
    }

    pub fn with_format(mut self, format: CsvFormat) -> Self {
        self.format = format;
        self
    }
}

impl PriceSource for WideCsvSource {
    fn fetch(&self, ticker: &str, start: &str, end: &str) -> Result<PriceSeries> {
        let all = load_prices(&self.path, &self.format)?;
        all.select(&[ticker.to_string()])?.window(start, end)
    }
}
