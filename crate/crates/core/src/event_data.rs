//! Event-based tactile inputs: binary spike grids, on-disk datasets and
//! seeded synthetic generators.
//!
//! A stream is an `N x T` grid (taxel by time bin). Location-recurrent
//! networks consume its transpose, a `T x N` grid whose recurrence axis is
//! the taxel index.
//!
//! On disk, a dataset is a directory `<root>/<class>/<sample>.evt` plus a
//! flat key-value manifest. Each event file starts with a header line
//! `N T bin_width label` followed by one `taxel time_bin` pair per line.
//! Multi-sensor layouts concatenate sensors taxel-wise (sensor-major).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kv::KvFile;

/// Dense binary grid stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeGrid {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl SpikeGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    /// Builds a grid from explicit rows; every entry must be 0 or 1.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut grid = Self::zeros(n_rows, n_cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Shape(format!(
                    "row {r} has {} entries, expected {n_cols}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::Contract(format!(
                        "non-binary entry {v} at ({r}, {c})"
                    )));
                }
                grid.bits[r * n_cols + c] = v;
            }
        }
        Ok(grid)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        self.bits[r * self.cols + c] = u8::from(on);
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn transposed(&self) -> SpikeGrid {
        let mut out = SpikeGrid::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.bits[c * self.rows + r] = self.bits[r * self.cols + c];
            }
        }
        out
    }

    /// Keeps the first `cols` columns, zero-padding if the grid is shorter.
    pub fn resized_cols(&self, cols: usize) -> SpikeGrid {
        let mut out = SpikeGrid::zeros(self.rows, cols);
        let keep = cols.min(self.cols);
        for r in 0..self.rows {
            out.bits[r * cols..r * cols + keep].copy_from_slice(&self.row(r)[..keep]);
        }
        out
    }

    /// Reorders rows so that output row `i` is input row `perm[i]`.
    pub fn permuted_rows(&self, perm: &[usize]) -> SpikeGrid {
        let mut out = SpikeGrid::zeros(perm.len(), self.cols);
        for (i, &src) in perm.iter().enumerate() {
            out.bits[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(src));
        }
        out
    }

    pub fn as_bits(&self) -> &[u8] {
        &self.bits
    }
}

/// One tactile sample: an `N x T` spike grid with its class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    grid: SpikeGrid,
    pub label: usize,
    pub sample_id: String,
}

impl EventStream {
    pub fn new(grid: SpikeGrid, label: usize, sample_id: impl Into<String>) -> Result<Self> {
        if grid.rows() == 0 || grid.cols() == 0 {
            return Err(Error::Shape(format!(
                "stream must have at least one taxel and one step, got {}x{}",
                grid.rows(),
                grid.cols()
            )));
        }
        Ok(Self {
            grid,
            label,
            sample_id: sample_id.into(),
        })
    }

    pub fn grid(&self) -> &SpikeGrid {
        &self.grid
    }

    pub fn n_taxels(&self) -> usize {
        self.grid.rows()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.cols()
    }

    /// The first `t` time bins, zero-padded back to full length.
    pub fn padded_prefix(&self, t: usize) -> EventStream {
        let mut grid = SpikeGrid::zeros(self.n_taxels(), self.n_steps());
        let keep = t.min(self.n_steps());
        for n in 0..self.n_taxels() {
            for s in 0..keep {
                grid.set(n, s, self.grid.get(n, s) == 1);
            }
        }
        EventStream {
            grid,
            label: self.label,
            sample_id: self.sample_id.clone(),
        }
    }

    /// The first `t` time bins only (an `N x t` stream).
    pub fn prefix(&self, t: usize) -> EventStream {
        EventStream {
            grid: self.grid.resized_cols(t.min(self.n_steps())),
            label: self.label,
            sample_id: self.sample_id.clone(),
        }
    }

    pub fn with_grid(&self, grid: SpikeGrid) -> EventStream {
        EventStream {
            grid,
            label: self.label,
            sample_id: self.sample_id.clone(),
        }
    }
}

/// A stream viewed as `T x N`: time is the channel axis, taxels the recurrence axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransposedStream {
    grid: SpikeGrid,
    pub label: usize,
    pub sample_id: String,
}

impl TransposedStream {
    pub fn grid(&self) -> &SpikeGrid {
        &self.grid
    }

    pub fn transpose(&self) -> EventStream {
        EventStream {
            grid: self.grid.transposed(),
            label: self.label,
            sample_id: self.sample_id.clone(),
        }
    }
}

pub fn transpose(s: &EventStream) -> TransposedStream {
    TransposedStream {
        grid: s.grid.transposed(),
        label: s.label,
        sample_id: s.sample_id.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub name: String,
    pub n_taxels: usize,
    pub n_steps: usize,
    pub n_classes: usize,
    pub sample_count: usize,
    /// Seconds per time bin.
    pub bin_width: f64,
    /// Optional taxel coordinate file, relative to the dataset root.
    pub coords: Option<PathBuf>,
}

impl DatasetMeta {
    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("name", &self.name);
        kv.set("N", self.n_taxels);
        kv.set("T", self.n_steps);
        kv.set("K", self.n_classes);
        kv.set("bin_width", self.bin_width);
        kv.set("sample_count", self.sample_count);
        kv.set("taxel_order", "sensor-major");
        if let Some(c) = &self.coords {
            kv.set("coords", c.display());
        }
        kv
    }

    fn from_kv(kv: &KvFile) -> Result<Self> {
        let meta = DatasetMeta {
            name: kv.get("name").unwrap_or("unnamed").to_string(),
            n_taxels: kv.required("N")?,
            n_steps: kv.required("T")?,
            n_classes: kv.required("K")?,
            sample_count: kv.parsed("sample_count")?.unwrap_or(0),
            bin_width: kv.required("bin_width")?,
            coords: kv.get("coords").map(PathBuf::from),
        };
        if meta.n_taxels == 0 || meta.n_steps == 0 || meta.n_classes == 0 {
            return Err(Error::Config("manifest N, T and K must be positive".into()));
        }
        if !(meta.bin_width > 0.0) {
            return Err(Error::Config("manifest bin_width must be positive".into()));
        }
        Ok(meta)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub streams: Vec<EventStream>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<usize> {
        self.streams.iter().map(|s| s.label).collect()
    }
}

/// Parses one event file against the dataset manifest.
pub fn parse_event_file(text: &str, path: &Path, meta: &DatasetMeta) -> Result<EventStream> {
    let malformed = |line: usize, msg: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "missing header `N T bin_width label`".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(malformed(hline, format!("header needs 4 fields, got {}", fields.len())));
    }
    let parse_usize = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| malformed(hline, format!("bad {what} `{s}`")))
    };
    let n = parse_usize(fields[0], "N")?;
    let t_file = parse_usize(fields[1], "T")?;
    let bin_width: f64 = fields[2]
        .parse()
        .map_err(|_| malformed(hline, format!("bad bin_width `{}`", fields[2])))?;
    let label = parse_usize(fields[3], "label")?;
    if n != meta.n_taxels {
        return Err(malformed(hline, format!("header N={n} but manifest N={}", meta.n_taxels)));
    }
    if (bin_width - meta.bin_width).abs() > 1e-9 * meta.bin_width.abs().max(1.0) {
        return Err(malformed(
            hline,
            format!("header bin_width={bin_width} but manifest bin_width={}", meta.bin_width),
        ));
    }
    if label >= meta.n_classes {
        return Err(malformed(hline, format!("label {label} >= K={}", meta.n_classes)));
    }

    let mut grid = SpikeGrid::zeros(n, meta.n_steps);
    for (lineno, line) in lines {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed(lineno, format!("expected `taxel time_bin`, got `{line}`")));
        };
        let taxel = a
            .parse::<usize>()
            .map_err(|_| malformed(lineno, format!("bad taxel `{a}`")))?;
        let bin = b
            .parse::<usize>()
            .map_err(|_| malformed(lineno, format!("bad time bin `{b}`")))?;
        if taxel >= n {
            return Err(malformed(lineno, format!("taxel={taxel} out of range for N={n}")));
        }
        if bin >= t_file {
            return Err(malformed(lineno, format!("time bin {bin} >= declared duration {t_file}")));
        }
        // Bins past the dataset length are truncated.
        if bin < meta.n_steps {
            grid.set(taxel, bin, true);
        }
    }
    let sample_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EventStream::new(grid, label, sample_id)
}

/// Serializes a stream in the event file format.
pub fn format_event_file(stream: &EventStream, bin_width: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {} {}",
        stream.n_taxels(),
        stream.n_steps(),
        bin_width,
        stream.label
    );
    for n in 0..stream.n_taxels() {
        for t in 0..stream.n_steps() {
            if stream.grid().get(n, t) == 1 {
                let _ = writeln!(out, "{n} {t}");
            }
        }
    }
    out
}

/// Loads `<root>/<class>/<sample>.evt` files using the given manifest.
///
/// Class directories and files are visited in lexicographic order so the
/// resulting stream order is reproducible.
pub fn load_dataset(root: &Path, manifest: &Path) -> Result<Dataset> {
    let mut meta = DatasetMeta::from_kv(&KvFile::load(manifest)?)?;
    let mut class_dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();

    let mut streams = Vec::new();
    for dir in class_dirs {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "evt"))
            .collect();
        files.sort();
        for file in files {
            let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let mut stream = parse_event_file(&text, &file, &meta)?;
            let class = dir.file_name().map(|s| s.to_string_lossy().into_owned());
            stream.sample_id = format!("{}/{}", class.unwrap_or_default(), stream.sample_id);
            streams.push(stream);
        }
    }
    if meta.sample_count != 0 && meta.sample_count != streams.len() {
        return Err(Error::Dataset(format!(
            "manifest declares {} samples but {} event files were found",
            meta.sample_count,
            streams.len()
        )));
    }
    meta.sample_count = streams.len();
    Ok(Dataset { meta, streams })
}

/// Writes a dataset in the on-disk layout, manifest at `<root>/manifest.txt`.
pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let width = dataset.meta.n_classes.saturating_sub(1).to_string().len();
    let mut per_class = vec![0usize; dataset.meta.n_classes];
    for stream in &dataset.streams {
        let dir = root.join(format!("{:0width$}", stream.label));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let idx = per_class[stream.label];
        per_class[stream.label] += 1;
        let file = dir.join(format!("{idx:05}.evt"));
        std::fs::write(&file, format_event_file(stream, dataset.meta.bin_width))
            .map_err(|e| Error::io(&file, e))?;
    }
    dataset.meta.to_kv().save(&root.join("manifest.txt"))
}

/// Class structure of a generated task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SyntheticTask {
    /// Class `k` drives its own disjoint taxel subset during its own time window.
    Disjoint,
    /// All classes share one taxel subset and identical early activity; they
    /// differ only in where a burst lands in the second half of the stream.
    LateTiming,
}

impl std::str::FromStr for SyntheticTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disjoint" => Ok(SyntheticTask::Disjoint),
            "late-timing" => Ok(SyntheticTask::LateTiming),
            other => Err(Error::SyntheticSpec(format!("unknown task `{other}`"))),
        }
    }
}

impl std::fmt::Display for SyntheticTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SyntheticTask::Disjoint => "disjoint",
            SyntheticTask::LateTiming => "late-timing",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_taxels: usize,
    pub n_steps: usize,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub rate_hi: f64,
    pub rate_lo: f64,
    pub seed: u64,
    pub task: SyntheticTask,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_taxels == 0 || self.n_steps == 0 || self.n_classes == 0 {
            return Err(Error::SyntheticSpec("N, T and K must be positive".into()));
        }
        if self.n_classes > self.n_taxels {
            return Err(Error::SyntheticSpec(format!(
                "K={} exceeds N={}: cannot assign disjoint taxel subsets",
                self.n_classes, self.n_taxels
            )));
        }
        if !(0.0 <= self.rate_lo && self.rate_lo < self.rate_hi && self.rate_hi <= 1.0) {
            return Err(Error::SyntheticSpec(format!(
                "need 0 <= rate_lo < rate_hi <= 1, got lo={} hi={}",
                self.rate_lo, self.rate_hi
            )));
        }
        if self.task == SyntheticTask::LateTiming && self.n_steps < 4 * self.n_classes {
            return Err(Error::SyntheticSpec(format!(
                "late-timing task needs T >= 4K, got T={} K={}",
                self.n_steps, self.n_classes
            )));
        }
        Ok(())
    }

    /// Per-class `(taxel mask, step mask)` of the high-rate region.
    fn active_regions(&self, rng: &mut ChaCha8Rng) -> Vec<(Vec<bool>, Vec<bool>)> {
        let (n, t, k) = (self.n_taxels, self.n_steps, self.n_classes);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        match self.task {
            SyntheticTask::Disjoint => (0..k)
                .map(|c| {
                    let mut taxels = vec![false; n];
                    for &x in &perm[c * n / k..(c + 1) * n / k] {
                        taxels[x] = true;
                    }
                    let width = (t / 2).max(1);
                    let start = if k == 1 { 0 } else { c * (t - width) / (k - 1) };
                    let steps = (0..t).map(|s| s >= start && s < start + width).collect();
                    (taxels, steps)
                })
                .collect(),
            SyntheticTask::LateTiming => {
                let mut taxels = vec![false; n];
                for &x in &perm[..(n / 2).max(1)] {
                    taxels[x] = true;
                }
                let late_start = t / 2;
                let late_end = t - t / 8;
                let slot = (late_end - late_start) / k;
                (0..k)
                    .map(|c| {
                        let (a, b) = (late_start + c * slot, late_start + (c + 1) * slot);
                        let steps = (0..t).map(|s| s >= a && s < b).collect();
                        (taxels.clone(), steps)
                    })
                    .collect()
            }
        }
    }
}

/// Generates a seeded labelled task; the same spec always yields identical grids.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Vec<EventStream>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let regions = spec.active_regions(&mut rng);
    // Shared early activity for the late-timing task.
    let early_rate = 0.5 * (spec.rate_hi + spec.rate_lo);
    let mut out = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for (class, (taxels, steps)) in regions.iter().enumerate() {
        for i in 0..spec.samples_per_class {
            let mut grid = SpikeGrid::zeros(spec.n_taxels, spec.n_steps);
            for n in 0..spec.n_taxels {
                for t in 0..spec.n_steps {
                    let p = if taxels[n] && steps[t] {
                        spec.rate_hi
                    } else if spec.task == SyntheticTask::LateTiming
                        && taxels[n]
                        && t < spec.n_steps / 2
                    {
                        early_rate
                    } else {
                        spec.rate_lo
                    };
                    grid.set(n, t, rng.gen::<f64>() < p);
                }
            }
            out.push(EventStream::new(grid, class, format!("c{class}_s{i:03}"))?);
        }
    }
    Ok(out)
}

/// Wraps generated streams with a manifest-style description.
pub fn synthetic_dataset(name: &str, spec: &SyntheticSpec) -> Result<Dataset> {
    let streams = gen_synthetic(spec)?;
    Ok(Dataset {
        meta: DatasetMeta {
            name: name.to_string(),
            n_taxels: spec.n_taxels,
            n_steps: spec.n_steps,
            n_classes: spec.n_classes,
            sample_count: streams.len(),
            bin_width: 0.02,
            coords: None,
        },
        streams,
    })
}
