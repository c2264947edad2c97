//! Loading discretized curve panels from CSV and smoothing them into basis
//! coefficients.
//!
//! Two layouts are accepted, both UTF-8 with a mandatory header row:
//!
//! * `long`: columns `series,time,grid,value` and optionally `weight`, one
//!   row per observed cell.
//! * `wide`: columns `series,time,<grid label>...`, one row per curve.
//!
//! Empty cells and `NA`/`NaN` mark missing values. Labels keep their order of
//! first appearance. Grid point `j` of `m` is placed at `j / (m - 1)` on the
//! unit interval.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spfts_core::basis::{build_fourier_basis, BasisContext, FunctionalPanel};
use thiserror::Error;

use crate::error::{AppError, Result, StageExt};

pub const PANEL_SCHEMA_VERSION: u32 = 1;
pub const PANEL_FORMAT: &str = "spfts-panel";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    Long,
    Wide,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("inconsistent dimensions at line {line}: {message}")]
    Dimension { line: u64, message: String },
    #[error("duplicate key {key} at line {line} (first seen at line {first})")]
    DuplicateKey { line: u64, first: u64, key: String },
    #[error("tail cutoff {0:?} is not a grid label")]
    CutoffAbsent(String),
}

/// A `p x T x m` panel of raw curve samples with a missing-value mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPanel {
    pub series_ids: Vec<String>,
    pub times: Vec<String>,
    pub grid_labels: Vec<String>,
    /// `(series, time, grid)` order; `NaN` where missing.
    values: Vec<f64>,
    missing: Vec<bool>,
    /// Exposure weights in the same layout, if the source had them.
    weights: Option<Vec<f64>>,
}

impl RawPanel {
    pub fn new(
        series_ids: Vec<String>,
        times: Vec<String>,
        grid_labels: Vec<String>,
        values: Vec<Option<f64>>,
        weights: Option<Vec<f64>>,
    ) -> std::result::Result<Self, IngestError> {
        let len = series_ids.len() * times.len() * grid_labels.len();
        if values.len() != len || weights.as_ref().is_some_and(|w| w.len() != len) {
            return Err(IngestError::Dimension {
                line: 0,
                message: format!("expected {len} cells, got {}", values.len()),
            });
        }
        let missing = values.iter().map(|v| v.is_none()).collect();
        Ok(Self {
            series_ids,
            times,
            grid_labels,
            values: values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            missing,
            weights,
        })
    }

    /// `(p, T, m)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.series_ids.len(),
            self.times.len(),
            self.grid_labels.len(),
        )
    }

    fn index(&self, i: usize, t: usize, j: usize) -> usize {
        let (_, t_len, m) = self.dims();
        (i * t_len + t) * m + j
    }

    pub fn value(&self, i: usize, t: usize, j: usize) -> Option<f64> {
        let idx = self.index(i, t, j);
        (!self.missing[idx]).then_some(self.values[idx])
    }

    pub fn weight(&self, i: usize, t: usize, j: usize) -> Option<f64> {
        self.weights.as_ref().map(|w| w[self.index(i, t, j)])
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }

    /// Samples each curve of `panel` on the grid of `ctx`, optionally
    /// exponentiated. Labels are `s<i>`, `<t>` and `<j>`.
    pub fn from_functional(
        panel: &FunctionalPanel,
        ctx: &BasisContext,
        exponentiate: bool,
    ) -> Self {
        let (p, t_len, m) = (panel.p(), panel.t_len(), ctx.m());
        let eval = ctx.eval_matrix();
        let mut values = Vec::with_capacity(p * t_len * m);
        for i in 0..p {
            for t in 0..t_len {
                let coeffs = nalgebra::DVector::from_vec(panel.curve(i, t).coeffs);
                let samples = eval * coeffs;
                values.extend(
                    samples
                        .iter()
                        .map(|v| Some(if exponentiate { v.exp() } else { *v })),
                );
            }
        }
        Self::new(
            (0..p).map(|i| format!("s{i}")).collect(),
            (0..t_len).map(|t| t.to_string()).collect(),
            (0..m).map(|j| j.to_string()).collect(),
            values,
            None,
        )
        .expect("dimensions agree by construction")
    }
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

fn parse_cell(raw: &str, line: u64, column: &str) -> std::result::Result<Option<f64>, IngestError> {
    let s = raw.trim();
    if is_missing_token(s) {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Err(IngestError::Parse {
            line,
            message: format!("non-finite {column} {s:?}"),
        }),
        Err(_) => Err(IngestError::Parse {
            line,
            message: format!("cannot parse {column} {s:?} as a number"),
        }),
    }
}

/// Label interner preserving first-appearance order.
#[derive(Default)]
struct Labels {
    order: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Labels {
    fn id(&mut self, label: &str) -> usize {
        if let Some(i) = self.lookup.get(label) {
            return *i;
        }
        self.order.push(label.to_string());
        self.lookup.insert(label.to_string(), self.order.len() - 1);
        self.order.len() - 1
    }
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn csv_error(err: csv::Error) -> IngestError {
    let line = err.position().map_or(0, |p| p.line());
    match err.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => IngestError::Dimension {
            line,
            message: format!("row has {len} fields, header has {expected_len}"),
        },
        _ => IngestError::Parse {
            line,
            message: err.to_string(),
        },
    }
}

pub fn load_panel_csv(path: &Path, schema: Schema) -> std::result::Result<RawPanel, IngestError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_panel_csv(&text, schema)
}

pub fn parse_panel_csv(text: &str, schema: Schema) -> std::result::Result<RawPanel, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    match schema {
        Schema::Long => parse_long(reader, &header),
        Schema::Wide => parse_wide(reader, &header),
    }
}

fn column(header: &[String], name: &str) -> std::result::Result<usize, IngestError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::Parse {
            line: 1,
            message: format!("header lacks a {name:?} column"),
        })
}

type Cell = (Option<f64>, Option<f64>, u64);

fn parse_long(
    mut reader: csv::Reader<&[u8]>,
    header: &[String],
) -> std::result::Result<RawPanel, IngestError> {
    let (cs, ct, cg, cv) = (
        column(header, "series")?,
        column(header, "time")?,
        column(header, "grid")?,
        column(header, "value")?,
    );
    let cw = header.iter().position(|h| h == "weight");
    let (mut series, mut times, mut grid) =
        (Labels::default(), Labels::default(), Labels::default());
    let mut cells: HashMap<(usize, usize, usize), Cell> = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let key = (series.id(&rec[cs]), times.id(&rec[ct]), grid.id(&rec[cg]));
        let value = parse_cell(&rec[cv], line, "value")?;
        let weight =
            match cw {
                Some(c) => Some(parse_cell(&rec[c], line, "weight")?.ok_or_else(|| {
                    IngestError::Parse {
                        line,
                        message: "missing weight".into(),
                    }
                })?),
                None => None,
            };
        if let Some((_, _, first)) = cells.get(&key) {
            return Err(IngestError::DuplicateKey {
                line,
                first: *first,
                key: format!("({}, {}, {})", &rec[cs], &rec[ct], &rec[cg]),
            });
        }
        cells.insert(key, (value, weight, line));
    }
    let (p, t_len, m) = (series.order.len(), times.order.len(), grid.order.len());
    if p * t_len * m == 0 {
        return Err(IngestError::Dimension {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let mut values = vec![None; p * t_len * m];
    let mut weights = cw.map(|_| vec![0.0; p * t_len * m]);
    for ((i, t, j), (v, w, _)) in cells {
        let idx = (i * t_len + t) * m + j;
        values[idx] = v;
        if let (Some(ws), Some(w)) = (weights.as_mut(), w) {
            ws[idx] = w;
        }
    }
    RawPanel::new(series.order, times.order, grid.order, values, weights)
}

/// Grid values and source line of one wide row.
type WideRow = (Vec<Option<f64>>, u64);

fn parse_wide(
    mut reader: csv::Reader<&[u8]>,
    header: &[String],
) -> std::result::Result<RawPanel, IngestError> {
    let (cs, ct) = (column(header, "series")?, column(header, "time")?);
    let grid_cols: Vec<usize> = (0..header.len()).filter(|c| *c != cs && *c != ct).collect();
    if grid_cols.is_empty() {
        return Err(IngestError::Dimension {
            line: 1,
            message: "no grid columns".into(),
        });
    }
    let grid_labels: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .enumerate()
        .filter(|(c, _)| grid_cols.contains(c))
        .map(|(_, h)| h.to_string())
        .collect();
    let (mut series, mut times) = (Labels::default(), Labels::default());
    let mut rows: HashMap<(usize, usize), WideRow> = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let key = (series.id(&rec[cs]), times.id(&rec[ct]));
        let curve = grid_cols
            .iter()
            .map(|c| parse_cell(&rec[*c], line, &format!("grid {}", header[*c])))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if let Some((_, first)) = rows.get(&key) {
            return Err(IngestError::DuplicateKey {
                line,
                first: *first,
                key: format!("({}, {})", &rec[cs], &rec[ct]),
            });
        }
        rows.insert(key, (curve, line));
    }
    let (p, t_len, m) = (series.order.len(), times.order.len(), grid_labels.len());
    if p * t_len == 0 {
        return Err(IngestError::Dimension {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let mut values = vec![None; p * t_len * m];
    for ((i, t), (curve, _)) in rows {
        let start = (i * t_len + t) * m;
        values[start..start + m].copy_from_slice(&curve);
    }
    RawPanel::new(series.order, times.order, grid_labels, values, None)
}

/// Pools grid points at and beyond `cutoff` into one terminal point labelled
/// `<cutoff>+`: an exposure-weighted mean when weights are present, otherwise
/// the arithmetic mean of the present values.
pub fn aggregate_tail(
    panel: &RawPanel,
    cutoff: &str,
) -> std::result::Result<RawPanel, IngestError> {
    let start = panel
        .grid_labels
        .iter()
        .position(|g| g == cutoff)
        .ok_or_else(|| IngestError::CutoffAbsent(cutoff.to_string()))?;
    let (p, t_len, m) = panel.dims();
    if start + 1 == m {
        return Ok(panel.clone());
    }
    let new_m = start + 1;
    let mut values = Vec::with_capacity(p * t_len * new_m);
    let mut weights = panel
        .weights
        .as_ref()
        .map(|_| Vec::with_capacity(p * t_len * new_m));
    for i in 0..p {
        for t in 0..t_len {
            for j in 0..start {
                values.push(panel.value(i, t, j));
                if let Some(w) = weights.as_mut() {
                    w.push(panel.weight(i, t, j).unwrap_or(0.0));
                }
            }
            let tail: Vec<(f64, f64)> = (start..m)
                .filter_map(|j| {
                    panel
                        .value(i, t, j)
                        .map(|v| (v, panel.weight(i, t, j).unwrap_or(1.0)))
                })
                .collect();
            let total_weight: f64 = tail.iter().map(|(_, w)| w).sum();
            let pooled = if tail.is_empty() {
                None
            } else if panel.has_weights() {
                (total_weight > 0.0)
                    .then(|| tail.iter().map(|(v, w)| v * w).sum::<f64>() / total_weight)
            } else {
                Some(tail.iter().map(|(v, _)| v).sum::<f64>() / tail.len() as f64)
            };
            values.push(pooled);
            if let Some(w) = weights.as_mut() {
                w.push(total_weight);
            }
        }
    }
    let mut grid_labels = panel.grid_labels[..start].to_vec();
    grid_labels.push(format!("{cutoff}+"));
    RawPanel::new(
        panel.series_ids.clone(),
        panel.times.clone(),
        grid_labels,
        values,
        weights,
    )
}

/// Pointwise transform applied before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Natural log; nonpositive values count as gaps.
    Log,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledCell {
    pub series: String,
    pub time: String,
    pub grid: String,
    /// `missing` or `nonpositive`.
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    /// SHA-256 of the input file.
    pub source_sha256: Option<String>,
    pub schema: Option<Schema>,
    pub tail_cutoff: Option<String>,
    pub transform: Transform,
    /// Cells replaced by linear interpolation along the grid.
    pub filled: Vec<FilledCell>,
}

/// Fills gaps by linear interpolation along the grid, holding the nearest
/// value past either end. Returns `None` when no value is usable.
fn fill_gaps(samples: &mut [f64], usable: &[bool]) -> Option<Vec<usize>> {
    let known: Vec<usize> = (0..samples.len()).filter(|j| usable[*j]).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut filled = Vec::new();
    let mut next = 0;
    for j in 0..samples.len() {
        if usable[j] {
            next += 1;
            continue;
        }
        filled.push(j);
        samples[j] = if j < first {
            samples[first]
        } else if j > last {
            samples[last]
        } else {
            let (lo, hi) = (known[next - 1], known[next]);
            let w = (j - lo) as f64 / (hi - lo) as f64;
            samples[lo] + w * (samples[hi] - samples[lo])
        };
    }
    Some(filled)
}

/// Transforms and projects every curve onto `ctx`, whose grid must match the
/// panel's. Curves are processed in parallel.
pub fn log_smooth(
    panel: &RawPanel,
    ctx: &BasisContext,
    transform: Transform,
) -> Result<(FunctionalPanel, Vec<FilledCell>)> {
    let (p, t_len, m) = panel.dims();
    if ctx.m() != m {
        return Err(AppError::Config(format!(
            "basis grid has {} points but the panel has {m}",
            ctx.m()
        )));
    }
    let q = ctx.q();
    let curves: Vec<(Vec<f64>, Vec<FilledCell>)> = (0..p * t_len)
        .into_par_iter()
        .map(|it| {
            let (i, t) = (it / t_len, it % t_len);
            let mut samples = vec![0.0; m];
            let mut usable = vec![false; m];
            let mut reasons = vec!["missing"; m];
            for j in 0..m {
                if let Some(v) = panel.value(i, t, j) {
                    if transform == Transform::Log && v <= 0.0 {
                        reasons[j] = "nonpositive";
                    } else {
                        samples[j] = v;
                        usable[j] = true;
                    }
                }
            }
            let filled = fill_gaps(&mut samples, &usable).ok_or_else(|| AppError::Data {
                stage: "smooth",
                message: format!(
                    "curve ({}, {}) has no usable values",
                    panel.series_ids[i], panel.times[t]
                ),
            })?;
            if transform == Transform::Log {
                samples.iter_mut().for_each(|v| *v = v.ln());
            }
            let curve = ctx.project(&samples).stage("smooth")?;
            let cells = filled
                .into_iter()
                .map(|j| FilledCell {
                    series: panel.series_ids[i].clone(),
                    time: panel.times[t].clone(),
                    grid: panel.grid_labels[j].clone(),
                    reason: reasons[j].to_string(),
                })
                .collect();
            Ok((curve.coeffs, cells))
        })
        .collect::<Result<_>>()?;
    let mut tensor = Vec::with_capacity(p * t_len * q);
    let mut filled = Vec::new();
    for (coeffs, cells) in curves {
        tensor.extend(coeffs);
        filled.extend(cells);
    }
    let out = FunctionalPanel::from_tensor(p, t_len, q, &tensor).stage("smooth")?;
    Ok((out, filled))
}

/// Serialized Fourier basis description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: String,
    pub q: usize,
    pub m: usize,
    pub interval: (f64, f64),
}

impl BasisSpec {
    pub fn of(ctx: &BasisContext) -> Self {
        Self {
            family: "fourier".into(),
            q: ctx.q(),
            m: ctx.m(),
            interval: ctx.interval(),
        }
    }

    pub fn build(&self) -> Result<BasisContext> {
        if self.family != "fourier" {
            return Err(AppError::Config(format!(
                "unknown basis family {:?}",
                self.family
            )));
        }
        build_fourier_basis(self.q, self.m).stage("basis")
    }
}

/// JSON container for a smoothed panel. Coefficients are stored flat in
/// `(series, time, coefficient)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelContainer {
    pub schema_version: u32,
    pub format: String,
    pub basis: BasisSpec,
    pub series_ids: Vec<String>,
    pub times: Vec<String>,
    pub p: usize,
    pub t_len: usize,
    pub coefficients: Vec<f64>,
    pub provenance: Provenance,
}

impl PanelContainer {
    pub fn new(
        panel: &FunctionalPanel,
        ctx: &BasisContext,
        series_ids: Vec<String>,
        times: Vec<String>,
        provenance: Provenance,
    ) -> Self {
        Self {
            schema_version: PANEL_SCHEMA_VERSION,
            format: PANEL_FORMAT.into(),
            basis: BasisSpec::of(ctx),
            series_ids,
            times,
            p: panel.p(),
            t_len: panel.t_len(),
            coefficients: panel.to_tensor(),
            provenance,
        }
    }

    pub fn panel(&self) -> Result<FunctionalPanel> {
        FunctionalPanel::from_tensor(self.p, self.t_len, self.basis.q, &self.coefficients)
            .stage("container")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("container serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| AppError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        let container: Self = serde_json::from_slice(&bytes).map_err(|e| AppError::Data {
            stage: "container",
            message: e.to_string(),
        })?;
        if container.format != PANEL_FORMAT || container.schema_version != PANEL_SCHEMA_VERSION {
            return Err(AppError::Data {
                stage: "container",
                message: format!(
                    "unsupported container {:?} version {}",
                    container.format, container.schema_version
                ),
            });
        }
        Ok(container)
    }
}

/// Writes `panel` in the long layout.
pub fn write_long_csv(panel: &RawPanel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| AppError::io(path, std::io::Error::other(e));
    let weighted = panel.has_weights();
    if weighted {
        w.write_record(["series", "time", "grid", "value", "weight"])
            .map_err(io)?;
    } else {
        w.write_record(["series", "time", "grid", "value"])
            .map_err(io)?;
    }
    let (p, t_len, m) = panel.dims();
    for i in 0..p {
        for t in 0..t_len {
            for j in 0..m {
                let value = panel
                    .value(i, t, j)
                    .map_or_else(String::new, |v| format!("{v:?}"));
                let mut row = vec![
                    panel.series_ids[i].clone(),
                    panel.times[t].clone(),
                    panel.grid_labels[j].clone(),
                    value,
                ];
                if weighted {
                    row.push(format!("{:?}", panel.weight(i, t, j).unwrap_or(0.0)));
                }
                w.write_record(&row).map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Settings for one run of the ingest-and-smooth pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub schema: Schema,
    pub q: usize,
    pub tail_cutoff: Option<String>,
    pub transform: Transform,
}

/// Load, pool the tail, smooth. The basis grid follows the panel's grid.
pub fn ingest(path: &Path, opts: &IngestOptions) -> Result<(PanelContainer, BasisContext)> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| AppError::Data {
        stage: "ingest",
        message: format!("input is not UTF-8: {e}"),
    })?;
    let mut raw = parse_panel_csv(&text, opts.schema).map_err(AppError::from_ingest)?;
    if let Some(cutoff) = &opts.tail_cutoff {
        raw = aggregate_tail(&raw, cutoff).map_err(AppError::from_ingest)?;
    }
    let ctx = build_fourier_basis(opts.q, raw.dims().2).stage("basis")?;
    let (panel, filled) = log_smooth(&raw, &ctx, opts.transform)?;
    let provenance = Provenance {
        source: Some(path.display().to_string()),
        source_sha256: Some(sha256_hex(&bytes)),
        schema: Some(opts.schema),
        tail_cutoff: opts.tail_cutoff.clone(),
        transform: opts.transform,
        filled,
    };
    let container = PanelContainer::new(
        &panel,
        &ctx,
        raw.series_ids.clone(),
        raw.times.clone(),
        provenance,
    );
    Ok((container, ctx))
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| AppError::io(path, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(path, e))
}
