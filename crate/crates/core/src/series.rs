//! Multivariate series container, CSV ingestion, chronological splitting,
//! normalization, and supervised windowing.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// T x N matrix of finite values with distinct column names.
/// Row order is temporal order. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    names: Vec<String>,
    values: Tensor,
}

impl SeriesFrame {
    pub fn new(names: Vec<String>, values: Tensor) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::EmptyInput("series frame must be at least 1x1".into()));
        }
        if names.len() != values.cols() {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: values.cols(),
            });
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        for r in 0..values.rows() {
            for c in 0..values.cols() {
                if !values.get(r, c).is_finite() {
                    return Err(Error::NonFiniteValue { row: r, col: c });
                }
            }
        }
        Ok(SeriesFrame { names, values })
    }

    /// Convenience constructor with generated column names `s0..s{N-1}`.
    pub fn from_values(values: Tensor) -> Result<Self> {
        let names = (0..values.cols()).map(|i| format!("s{i}")).collect();
        SeriesFrame::new(names, values)
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn n_series(&self) -> usize {
        self.values.cols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row_slice(t)
    }

    pub fn get(&self, t: usize, series: usize) -> f64 {
        self.values.get(t, series)
    }

    /// One column as a plain vector.
    pub fn column(&self, series: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.get(t, series)).collect()
    }

    fn slice_rows(&self, start: usize, end: usize) -> SeriesFrame {
        let cols = self.n_series();
        let data = self.values.data()[start * cols..end * cols].to_vec();
        SeriesFrame {
            names: self.names.clone(),
            values: Tensor::new(end - start, cols, data),
        }
    }

    /// Stack frames that share column names, in order.
    pub fn concat(frames: &[&SeriesFrame]) -> Result<SeriesFrame> {
        let first = frames
            .first()
            .ok_or_else(|| Error::EmptyInput("concat of zero frames".into()))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for f in frames {
            if f.names != first.names {
                return Err(Error::InvalidSplit("concat with mismatched columns".into()));
            }
            rows += f.len();
            data.extend_from_slice(f.values.data());
        }
        Ok(SeriesFrame {
            names: first.names.clone(),
            values: Tensor::new(rows, first.n_series(), data),
        })
    }
}

/// Parses a comma-separated file: one time step per row, one series per
/// column, optional single header row, `.` decimal point.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<SeriesFrame> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, has_header)
}

pub fn parse_csv(text: &str, has_header: bool) -> Result<SeriesFrame> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.is_empty());
    let names: Vec<String>;
    let mut data: Vec<f64> = Vec::new();
    let n_cols;
    let mut n_rows = 0;

    let first = lines.next().ok_or_else(|| Error::EmptyInput("empty file".into()))?;
    let parse_row = |line_no: usize, line: &str, data: &mut Vec<f64>| -> Result<usize> {
        let mut count = 0;
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|e| Error::Parse {
                row: line_no,
                col,
                message: format!("{e}: `{}`", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row: line_no, col });
            }
            data.push(v);
            count += 1;
        }
        Ok(count)
    };

    if has_header {
        names = first.1.split(',').map(|s| s.trim().to_string()).collect();
        n_cols = names.len();
    } else {
        n_cols = parse_row(first.0, first.1, &mut data)?;
        names = (0..n_cols).map(|i| format!("s{i}")).collect();
        n_rows = 1;
    }

    for (line_no, line) in lines {
        let got = parse_row(line_no, line, &mut data)?;
        if got != n_cols {
            return Err(Error::RaggedRow {
                row: line_no,
                expected: n_cols,
                found: got,
            });
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::EmptyInput("no data rows".into()));
    }
    SeriesFrame::new(names, Tensor::new(n_rows, n_cols, data))
}

/// Canonical output: header row, shortest round-trip float formatting.
pub fn format_csv(frame: &SeriesFrame) -> String {
    let mut out = String::new();
    out.push_str(&frame.names().join(","));
    out.push('\n');
    for t in 0..frame.len() {
        for (i, v) in frame.row(t).iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(frame: &SeriesFrame, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_csv(frame))?;
    Ok(())
}

/// Chronological split fractions; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.6,
            valid_frac: 0.2,
            test_frac: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for f in [self.train_frac, self.valid_frac, self.test_frac] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidSplit(format!("fraction {f} not in (0,1)")));
            }
        }
        let sum = self.train_frac + self.valid_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSplit(format!("fractions sum to {sum}")));
        }
        Ok(())
    }
}

/// Splits in chronological order. Boundaries fall at
/// `floor(T*train_frac)` and `floor(T*(train_frac+valid_frac))`;
/// remainder rows land in the test split.
pub fn split_chronological(
    frame: &SeriesFrame,
    spec: &SplitSpec,
) -> Result<(SeriesFrame, SeriesFrame, SeriesFrame)> {
    spec.validate()?;
    let t = frame.len();
    let b1 = (t as f64 * spec.train_frac).floor() as usize;
    let b2 = (t as f64 * (spec.train_frac + spec.valid_frac)).floor() as usize;
    if b1 == 0 || b2 <= b1 || b2 >= t {
        return Err(Error::InvalidSplit(format!(
            "T={t} leaves an empty split at boundaries {b1},{b2}"
        )));
    }
    Ok((
        frame.slice_rows(0, b1),
        frame.slice_rows(b1, b2),
        frame.slice_rows(b2, t),
    ))
}

/// Per-column affine map fitted on training statistics only.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Population (1/T) variance. Constant columns get std = 1 so the
    /// inverse stays exact.
    pub fn fit(train: &SeriesFrame) -> Normalizer {
        let n = train.n_series();
        let t = train.len() as f64;
        let mut mean = vec![0.0; n];
        for r in 0..train.len() {
            for (m, v) in mean.iter_mut().zip(train.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t);
        let mut var = vec![0.0; n];
        for r in 0..train.len() {
            for (c, v) in train.row(r).iter().enumerate() {
                let d = v - mean[c];
                var[c] += d * d;
            }
        }
        let std = var
            .iter()
            .enumerate()
            .map(|(c, v)| {
                let s = (v / t).sqrt();
                if s > 0.0 {
                    s
                } else {
                    log::warn!("column {c} is constant; normalizer std forced to 1");
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn apply(&self, frame: &SeriesFrame) -> SeriesFrame {
        self.map(frame, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, frame: &SeriesFrame) -> SeriesFrame {
        self.map(frame, |v, m, s| v * s + m)
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    fn map(&self, frame: &SeriesFrame, f: impl Fn(f64, f64, f64) -> f64) -> SeriesFrame {
        let cols = frame.n_series();
        let mut data = Vec::with_capacity(frame.len() * cols);
        for r in 0..frame.len() {
            for (c, v) in frame.row(r).iter().enumerate() {
                data.push(f(*v, self.mean[c], self.std[c]));
            }
        }
        SeriesFrame {
            names: frame.names().to_vec(),
            values: Tensor::new(frame.len(), cols, data),
        }
    }
}

/// Supervised windowing parameters. The horizon is fixed at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WindowSpec {
    pub window: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { window: 60 }
    }
}

/// The step just before the oldest history row, needed by the series
/// transform; the earliest window in a frame has none and is mean-filled.
#[derive(Debug, Clone, PartialEq)]
pub enum Preceding {
    Value(Vec<f64>),
    MeanFill,
}

/// One training example: W history rows (most recent first), the preceding
/// slot, and the target row.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub target_index: usize,
    /// W x N, row j holds X_{t-1-j}.
    pub history: Vec<f64>,
    pub preceding: Preceding,
    pub target: Vec<f64>,
}

/// Enumerates targets t = W .. T-1. Requires T >= W+1.
pub fn make_windows(frame: &SeriesFrame, spec: &WindowSpec) -> Result<Vec<Window>> {
    let w = spec.window;
    if w == 0 {
        return Err(Error::InvalidSplit("window must be >= 1".into()));
    }
    if frame.len() < w + 1 {
        return Err(Error::FrameTooShort {
            len: frame.len(),
            window: w,
        });
    }
    let n = frame.n_series();
    let mut out = Vec::with_capacity(frame.len() - w);
    for t in w..frame.len() {
        let mut history = Vec::with_capacity(w * n);
        for j in 1..=w {
            history.extend_from_slice(frame.row(t - j));
        }
        let preceding = if t >= w + 1 {
            Preceding::Value(frame.row(t - w - 1).to_vec())
        } else {
            Preceding::MeanFill
        };
        out.push(Window {
            target_index: t,
            history,
            preceding,
            target: frame.row(t).to_vec(),
        });
    }
    Ok(out)
}
