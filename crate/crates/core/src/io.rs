//! Plain-text configuration and CSV interchange.
//!
//! Every output file starts with `# key = value` metadata lines (tool
//! version, command, seed, config hash and command-specific entries)
//! followed by a CSV header row. Floats are written in Rust's shortest
//! round-trip form, so a file read back reproduces the exact values.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{HawkesError, Result};
use crate::model::{bin_count, bin_of, BinnedCounts, EventSequence, ModelParams};

pub const TOOL_VERSION: &str = concat!("hawkes-agg ", env!("CARGO_PKG_VERSION"));

fn parse_err(line: usize, message: impl Into<String>) -> HawkesError {
    HawkesError::Parse { line, message: message.into() }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// `key = value` configuration. Blank lines and lines starting with `#` are
/// ignored; keys must be unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| parse_err(i + 1, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(parse_err(i + 1, "empty key"));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(parse_err(i + 1, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HawkesError::Argument(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Fails on any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        let unknown: Vec<&str> = self.entries.keys().map(String::as_str).filter(|k| !allowed.contains(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(HawkesError::arg(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| HawkesError::arg(format!("config key `{key}`: expected {what}, got `{v}`"))))
            .transpose()
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.typed(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(HawkesError::arg(format!("config key `{key}` must be finite"))),
            v => Ok(v),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.typed(key, "a non-negative integer")
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.typed(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.typed(key, "true or false")
    }

    /// Comma-separated numbers.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| HawkesError::arg(format!("config key `{key}`: bad number `{}`", s.trim())))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn require<T>(value: Option<T>, key: &str) -> Result<T> {
        value.ok_or_else(|| HawkesError::arg(format!("missing config key `{key}`")))
    }

    /// Sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    /// [`digest`] of [`Config::canonical`].
    pub fn hash(&self) -> String {
        digest(self.canonical().as_bytes())
    }

    /// Model parameters from `prefix` + `nu`, `alpha`, `beta` (row-major lists).
    pub fn params(&self, prefix: &str) -> Result<Option<ModelParams>> {
        let keys = [format!("{prefix}nu"), format!("{prefix}alpha"), format!("{prefix}beta")];
        let lists: Vec<Option<Vec<f64>>> = keys.iter().map(|k| self.f64_list(k)).collect::<Result<_>>()?;
        match (&lists[0], &lists[1], &lists[2]) {
            (None, None, None) => Ok(None),
            (Some(nu), Some(alpha), Some(beta)) => ModelParams::from_rows(nu, alpha, beta).map(Some),
            _ => Err(HawkesError::arg(format!("config needs all of {}, {} and {}", keys[0], keys[1], keys[2]))),
        }
    }
}

/// Metadata lines of an output file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    /// Standard header: tool, command, seed and config hash.
    pub fn new(command: &str, seed: Option<u64>, config_hash: &str) -> Self {
        let mut m = Self::default();
        m.push("tool", TOOL_VERSION);
        m.push("command", command);
        m.push("seed", seed.map_or_else(|| "none".to_string(), |s| s.to_string()));
        m.push("config_hash", config_hash);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Reads the leading `# key = value` lines of a file.
    pub fn parse(text: &str) -> Self {
        let mut m = Self::default();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix('#') else { break };
            if let Some((k, v)) = rest.split_once('=') {
                m.push(k.trim(), v.trim());
            }
        }
        m
    }

    fn render(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "# {k} = {v}");
            s
        })
    }
}

/// Flattened parameters as a single comma list, for metadata lines.
pub fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// A CSV document: metadata header, column names, rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(meta: Metadata, columns: &[&str]) -> Self {
        Self { meta, columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn render(&self) -> String {
        let mut out = self.meta.render();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| HawkesError::Io(format!("{}: {e}", path.display())))
    }
}

/// Parses a CSV document with optional `#` metadata and a header row.
/// Line numbers in errors refer to the original text.
pub fn read_table(text: &str) -> Result<Table> {
    let meta = Metadata::parse(text);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(&e))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.is_empty() || columns.iter().all(String::is_empty) {
        return Err(parse_err(1, "missing CSV header row"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(Table { meta, columns, rows })
}

fn csv_error(e: &csv::Error) -> HawkesError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(line, e.to_string())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HawkesError::Io(format!("{}: {e}", path.display())))
}

/// Line number of data row `i` in `text` (1-based, skipping comments and header).
fn data_line(text: &str, i: usize) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .nth(i + 1)
        .map_or(0, |(n, _)| n + 1)
}

/// `time,process` rows (process numbered from 1), sorted by time.
pub fn events_table(events: &EventSequence, meta: Metadata) -> Table {
    let meta = meta.with("horizon", events.horizon()).with("processes", events.dim());
    let mut rows: Vec<(f64, usize)> =
        events.times().iter().enumerate().flat_map(|(p, ts)| ts.iter().map(move |&t| (t, p + 1))).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut table = Table::new(meta, &["time", "process"]);
    for (t, p) in rows {
        table.push([t.to_string(), p.to_string()]);
    }
    table
}

/// Reads an events file. The horizon and number of processes come from the
/// metadata unless given explicitly.
pub fn parse_events(text: &str, horizon: Option<f64>, processes: Option<usize>) -> Result<EventSequence> {
    let table = read_table(text)?;
    let col = |name: &str| {
        table
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| parse_err(1, format!("events file needs a `{name}` column")))
    };
    let (tc, pc) = (col("time")?, col("process")?);
    let mut parsed = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let t: f64 = row[tc].parse().ok().filter(|t: &f64| t.is_finite()).ok_or_else(|| {
            parse_err(data_line(text, i), format!("bad time `{}`", row[tc]))
        })?;
        let p: usize = row[pc]
            .parse()
            .ok()
            .filter(|&p| p >= 1)
            .ok_or_else(|| parse_err(data_line(text, i), format!("bad process `{}`", row[pc])))?;
        parsed.push((t, p - 1, data_line(text, i)));
    }
    let meta_f64 = |key: &str| -> Result<Option<f64>> {
        table
            .meta
            .get(key)
            .map(|v| v.parse::<f64>().map_err(|_| parse_err(0, format!("bad metadata `{key} = {v}`"))))
            .transpose()
    };
    let horizon = match horizon {
        Some(h) => h,
        None => meta_f64("horizon")?.ok_or_else(|| HawkesError::arg("events file has no horizon; set it in the config"))?,
    };
    let dim = match processes {
        Some(p) => p,
        None => match table.meta.get("processes") {
            Some(v) => v.parse().map_err(|_| parse_err(0, format!("bad metadata `processes = {v}`")))?,
            None => parsed.iter().map(|r| r.1 + 1).max().unwrap_or(1),
        },
    };
    let mut times = vec![Vec::new(); dim];
    for (t, p, line) in parsed {
        if p >= dim {
            return Err(parse_err(line, format!("process {} exceeds the {dim} processes", p + 1)));
        }
        if !(0.0..horizon).contains(&t) {
            return Err(parse_err(line, format!("time {t} outside [0, {horizon})")));
        }
        times[p].push(t);
    }
    for ts in &mut times {
        ts.sort_by(f64::total_cmp);
        if let Some(w) = ts.windows(2).find(|w| w[0] == w[1]) {
            return Err(HawkesError::DegenerateData(format!("duplicate event time {} within a process", w[0])));
        }
    }
    EventSequence::new(times, horizon)
}

/// `bin,count_1..count_P` rows.
pub fn counts_table(binned: &BinnedCounts, meta: Metadata) -> Table {
    let meta = meta.with("delta", binned.delta()).with("bins", binned.bins()).with("processes", binned.dim());
    let mut columns = vec!["bin".to_string()];
    columns.extend((1..=binned.dim()).map(|p| format!("count_{p}")));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new(meta, &cols);
    for j in 0..binned.bins() {
        let mut row = vec![j.to_string()];
        row.extend(binned.row(j).iter().map(u64::to_string));
        table.push(row);
    }
    table
}

/// Reads a counts file; `delta` comes from the metadata unless given.
pub fn parse_counts(text: &str, delta: Option<f64>) -> Result<BinnedCounts> {
    let table = read_table(text)?;
    if table.columns.first().map(String::as_str) != Some("bin") || table.columns.len() < 2 {
        return Err(parse_err(1, "counts file needs columns bin,count_1,...,count_P"));
    }
    for (p, c) in table.columns[1..].iter().enumerate() {
        if *c != format!("count_{}", p + 1) {
            return Err(parse_err(1, format!("expected column count_{}, found `{c}`", p + 1)));
        }
    }
    let dim = table.columns.len() - 1;
    let delta = match delta {
        Some(d) => d,
        None => table
            .meta
            .get("delta")
            .ok_or_else(|| HawkesError::arg("counts file has no delta; set it in the config"))?
            .parse()
            .map_err(|_| parse_err(0, "bad metadata `delta`"))?,
    };
    let mut counts = Vec::with_capacity(table.rows.len() * dim);
    for (i, row) in table.rows.iter().enumerate() {
        let line = data_line(text, i);
        if row[0].parse::<usize>().ok() != Some(i) {
            return Err(parse_err(line, format!("expected bin index {i}, found `{}`", row[0])));
        }
        for cell in &row[1..] {
            counts.push(cell.parse::<u64>().map_err(|_| parse_err(line, format!("bad count `{cell}`")))?);
        }
    }
    if table.rows.is_empty() {
        return Err(HawkesError::DegenerateData("counts file has no rows".into()));
    }
    BinnedCounts::new(counts, table.rows.len(), dim, delta)
}

/// Long-format estimates: one `set,parameter,value` row per parameter,
/// followed by the branching ratios `gamma_p_m`.
pub fn push_estimates(table: &mut Table, set: &str, dim: usize, flat: &[f64]) {
    for (name, v) in ModelParams::param_names(dim).iter().zip(flat) {
        table.push([set.to_string(), name.clone(), v.to_string()]);
    }
    let n2 = dim * dim;
    for p in 0..dim {
        for m in 0..dim {
            let gamma = flat[dim + p * dim + m] / flat[dim + n2 + p * dim + m];
            table.push([set.to_string(), format!("gamma_{}_{}", p + 1, m + 1), gamma.to_string()]);
        }
    }
}

pub fn estimates_table(meta: Metadata) -> Table {
    Table::new(meta, &["set", "parameter", "value"])
}

/// Parameter sets of an estimates file, in order of first appearance.
/// Rows other than `nu_*`, `alpha_*`, `beta_*` are ignored.
pub fn parse_estimates(text: &str) -> Result<Vec<(String, ModelParams)>> {
    let table = read_table(text)?;
    if table.columns != ["set", "parameter", "value"] {
        return Err(parse_err(1, "estimates file needs columns set,parameter,value"));
    }
    let mut order: Vec<String> = Vec::new();
    let mut values: HashMap<String, BTreeMap<String, (f64, usize)>> = HashMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let line = data_line(text, i);
        let (set, name) = (&row[0], &row[1]);
        if !(name.starts_with("nu_") || name.starts_with("alpha_") || name.starts_with("beta_")) {
            continue;
        }
        let v: f64 = row[2].parse().map_err(|_| parse_err(line, format!("bad value `{}`", row[2])))?;
        if !values.contains_key(set) {
            order.push(set.clone());
        }
        if values.entry(set.clone()).or_default().insert(name.clone(), (v, line)).is_some() {
            return Err(parse_err(line, format!("duplicate parameter `{name}` in set `{set}`")));
        }
    }
    if order.is_empty() {
        return Err(HawkesError::DegenerateData("estimates file has no parameters".into()));
    }
    order
        .into_iter()
        .map(|set| {
            let map = &values[&set];
            let dim = map.keys().filter(|k| k.starts_with("nu_")).count();
            let names = ModelParams::param_names(dim);
            if map.len() != names.len() {
                return Err(HawkesError::arg(format!("set `{set}` needs exactly {} parameters", names.len())));
            }
            let flat: Vec<f64> = names
                .iter()
                .map(|n| map.get(n).map(|v| v.0).ok_or_else(|| HawkesError::arg(format!("set `{set}` is missing `{n}`"))))
                .collect::<Result<_>>()?;
            Ok((set, ModelParams::from_flat(dim, &flat)?))
        })
        .collect()
}

/// `key,value` rows.
pub fn report_table(meta: Metadata, rows: &[(&str, String)]) -> Table {
    let mut table = Table::new(meta, &["key", "value"]);
    for (k, v) in rows {
        table.push([k.to_string(), v.clone()]);
    }
    table
}

/// Options for [`ingest`].
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub time_col: String,
    pub label_col: String,
    pub delta: f64,
    /// Label-to-process mapping; first-seen order when absent.
    pub labels: Option<Vec<String>>,
    /// Time mapped to 0; the smallest timestamp when absent.
    pub origin: Option<f64>,
    /// Window length; `(floor((max - origin) / delta) + 1) delta` when absent.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub labels: Vec<String>,
    pub origin: f64,
    pub binned: BinnedCounts,
    /// Shifted times per process, unsorted duplicates allowed.
    pub times: Vec<Vec<f64>>,
}

impl Ingested {
    /// The exact times as an event sequence; fails on duplicate times.
    pub fn events(&self) -> Result<EventSequence> {
        let mut times = self.times.clone();
        for ts in &mut times {
            ts.sort_by(f64::total_cmp);
            if let Some(w) = ts.windows(2).find(|w| w[0] == w[1]) {
                return Err(HawkesError::DegenerateData(format!(
                    "duplicate time {} within a process; use the binned counts instead",
                    w[0]
                )));
            }
        }
        EventSequence::new(times, self.binned.horizon())
    }
}

/// Reads a raw `(timestamp, label)` CSV and bins it at resolution `delta`.
pub fn ingest(text: &str, options: &IngestOptions) -> Result<Ingested> {
    if !(options.delta > 0.0 && options.delta.is_finite()) {
        return Err(HawkesError::arg("delta must be positive"));
    }
    let table = read_table(text)?;
    let col = |name: &str| {
        table
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| HawkesError::arg(format!("no column `{name}` (columns: {})", table.columns.join(", "))))
    };
    let (tc, lc) = (col(&options.time_col)?, col(&options.label_col)?);
    let mut bad = Vec::new();
    let mut rows = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        match row[tc].parse::<f64>() {
            Ok(t) if t.is_finite() => rows.push((t, row[lc].clone())),
            _ => bad.push(data_line(text, i)),
        }
    }
    if let Some(first) = bad.first() {
        return Err(parse_err(*first, format!("{} unparseable rows; first bad timestamp at line {first}", bad.len())));
    }
    if rows.is_empty() {
        return Err(HawkesError::DegenerateData("no rows to ingest".into()));
    }
    let labels = match &options.labels {
        Some(l) => {
            let unknown: Vec<&str> = {
                let mut u: Vec<&str> = rows.iter().map(|r| r.1.as_str()).filter(|x| !l.iter().any(|k| k == x)).collect();
                u.sort_unstable();
                u.dedup();
                u
            };
            if !unknown.is_empty() {
                return Err(HawkesError::DegenerateData(format!("unknown labels: {}", unknown.join(", "))));
            }
            l.clone()
        }
        None => {
            let mut seen: Vec<String> = Vec::new();
            for (_, label) in &rows {
                if !seen.contains(label) {
                    seen.push(label.clone());
                }
            }
            seen
        }
    };
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let min = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let origin = options.origin.unwrap_or(min);
    let horizon = match options.horizon {
        Some(h) => h,
        None => (((max - origin) / options.delta).floor() + 1.0) * options.delta,
    };
    let bins = bin_count(horizon, options.delta)?;
    let dim = labels.len();
    let mut counts = vec![0u64; bins * dim];
    let mut times = vec![Vec::new(); dim];
    for (t, label) in &rows {
        let s = t - origin;
        if !(0.0..horizon).contains(&s) {
            return Err(HawkesError::DegenerateData(format!("timestamp {t} falls outside the window")));
        }
        let p = index[label.as_str()];
        counts[bin_of(s, options.delta, bins) * dim + p] += 1;
        times[p].push(s);
    }
    let binned = BinnedCounts::new(counts, bins, dim, options.delta)?;
    Ok(Ingested { labels, origin, binned, times })
}
