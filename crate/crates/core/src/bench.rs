//! Single-thread inference latency harness.
//!
//! Each model is timed at the benchmark batch size and at batch 1, with
//! warmup passes discarded. Only the forward pass sits inside the timed
//! region; inputs are generated once per model from the configured seed.
//! When several models are compared their passes are interleaved.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub batch_size: usize,
    pub warmup_iters: usize,
    pub measure_iters: usize,
    /// Expected per-sample input `(c, h, w)`; `None` accepts the network's own.
    pub input: Option<(usize, usize, usize)>,
    /// Pin the calling thread to the CPU it is currently running on.
    pub pin_thread: bool,
    /// Name of the reference row; `None` picks the largest parameter count.
    pub reference: Option<String>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch_size: 32,
            warmup_iters: 10,
            measure_iters: 100,
            input: None,
            pin_thread: false,
            reference: None,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.measure_iters == 0 {
            return Err(Error::InvalidArgument("measure iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Median of a set of timings with optional 5th/95th percentiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latency {
    pub median_ms: f64,
    pub percentiles: Option<(f64, f64)>,
}

impl Latency {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no latency samples".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Latency {
            median_ms: percentile(&sorted, 0.5),
            percentiles: Some((percentile(&sorted, 0.05), percentile(&sorted, 0.95))),
        })
    }

    pub fn median_only(median_ms: f64) -> Self {
        Latency { median_ms, percentiles: None }
    }
}

/// Linear-interpolated percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub batch: Latency,
    pub individual: Latency,
}

/// Times `net` at `config.batch_size` and at batch 1.
pub fn measure(net: &Network<f32>, config: &BenchConfig) -> Result<Measurement> {
    let mut all = measure_interleaved(&[net], config)?;
    Ok(all.remove(0))
}

/// Fixed random inputs for one model at batch 1 and at the benchmark batch.
fn bench_inputs(net: &Network<f32>, config: &BenchConfig) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let dims = net.input_dims();
    if let Some((c, h, w)) = config.input {
        if (c, h, w) != (dims.c, dims.h, dims.w) {
            return Err(Error::ShapeMismatch(format!(
                "benchmark input ({c}, {h}, {w}) but network `{}` expects ({}, {}, {})",
                net.name(),
                dims.c,
                dims.h,
                dims.w
            )));
        }
    }
    let mut rng = Rng::stream(config.seed, &[0]);
    let mut input = |n: usize| {
        let d = dims.with_batch(n);
        Tensor::from_values(d, (0..d.len()).map(|_| rng.next_f64() as f32).collect())
    };
    let single = input(1)?;
    Ok((single, input(config.batch_size)?))
}

/// Times every model round-robin, one forward pass each per iteration, so
/// that a burst of background load lands on all models alike.
fn measure_interleaved(nets: &[&Network<f32>], config: &BenchConfig) -> Result<Vec<Measurement>> {
    config.validate()?;
    let inputs = nets.iter().map(|n| bench_inputs(n, config)).collect::<Result<Vec<_>>>()?;
    if config.pin_thread {
        pin_current_thread()?;
    }
    let singles: Vec<&Tensor<f32>> = inputs.iter().map(|i| &i.0).collect();
    let batches: Vec<&Tensor<f32>> = inputs.iter().map(|i| &i.1).collect();
    let individual = time_round_robin(nets, &singles, config)?;
    let batch = time_round_robin(nets, &batches, config)?;
    Ok(individual.into_iter().zip(batch).map(|(individual, batch)| Measurement { batch, individual }).collect())
}

fn time_round_robin(nets: &[&Network<f32>], inputs: &[&Tensor<f32>], config: &BenchConfig) -> Result<Vec<Latency>> {
    for _ in 0..config.warmup_iters {
        for (net, x) in nets.iter().zip(inputs) {
            std::hint::black_box(net.forward(x)?);
        }
    }
    let mut samples = vec![Vec::with_capacity(config.measure_iters); nets.len()];
    for _ in 0..config.measure_iters {
        for ((net, x), s) in nets.iter().zip(inputs).zip(&mut samples) {
            let start = Instant::now();
            let y = net.forward(std::hint::black_box(x))?;
            s.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(y);
        }
    }
    samples.iter().map(|s| Latency::from_samples(s)).collect()
}

#[cfg(target_os = "linux")]
fn pin_current_thread() -> Result<()> {
    // SAFETY: cpu_set_t is plain data; the calls only read/write the set we own.
    unsafe {
        let cpu = libc::sched_getcpu();
        if cpu < 0 {
            return Err(std::io::Error::last_os_error().into());
        }
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu as usize, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(std::io::Error::last_os_error().into());
        }
    }
    Ok(())
}

#[cfg(not(target_os = "linux"))]
fn pin_current_thread() -> Result<()> {
    Err(Error::InvalidArgument("thread pinning is only supported on Linux".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub params: usize,
    /// Reference parameter count divided by this row's.
    pub param_ratio: f64,
    pub batch: Latency,
    pub individual: Latency,
    /// Reference individual latency divided by this row's.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub reference: usize,
    pub batch_size: usize,
    pub warmup_iters: usize,
    pub measure_iters: usize,
    pub precision: &'static str,
    pub host: String,
}

impl BenchReport {
    /// Builds rows from raw `(name, params, measurement)` entries, computing
    /// ratio columns against `reference` (or the largest parameter count).
    pub fn from_measurements(
        entries: Vec<(String, usize, Measurement)>,
        config: &BenchConfig,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("benchmark needs at least one model".into()));
        }
        let reference = match &config.reference {
            Some(name) => entries
                .iter()
                .position(|(n, _, _)| n == name)
                .ok_or_else(|| Error::InvalidArgument(format!("reference model `{name}` is not benchmarked")))?,
            None => {
                let max = entries.iter().map(|e| e.1).max().unwrap_or(0);
                entries.iter().position(|e| e.1 == max).unwrap_or(0)
            }
        };
        let (ref_params, ref_indiv) = (entries[reference].1 as f64, entries[reference].2.individual.median_ms);
        let rows = entries
            .into_iter()
            .map(|(name, params, m)| BenchRow {
                name,
                params,
                param_ratio: ratio(ref_params, params as f64),
                batch: m.batch,
                individual: m.individual,
                speedup: ratio(ref_indiv, m.individual.median_ms),
            })
            .collect();
        Ok(BenchReport {
            rows,
            reference,
            batch_size: config.batch_size,
            warmup_iters: config.warmup_iters,
            measure_iters: config.measure_iters,
            precision: "f32",
            host: host_description(),
        })
    }

    fn has_percentiles(&self) -> bool {
        self.rows.iter().all(|r| r.batch.percentiles.is_some() && r.individual.percentiles.is_some())
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Measures every model and assembles the report.
pub fn compare(models: &[&Network<f32>], config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    if models.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one model".into()));
    }
    let measured = measure_interleaved(models, config)?;
    let entries = models
        .iter()
        .zip(measured)
        .map(|(net, m)| (net.name().to_string(), net.param_count(), m))
        .collect();
    BenchReport::from_measurements(entries, config)
}

fn host_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|info| {
        info.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split_once(':'))
            .map(|(_, v)| v.trim().to_string())
    });
    let arch = format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS);
    match cpu {
        Some(cpu) => format!("{cpu} ({arch})"),
        None => arch,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

pub const CSV_HEADER: &str = "model,params,param_ratio,batch_ms,indiv_ms,speedup";
const CSV_PERCENTILE_HEADER: &str = "batch_p5_ms,batch_p95_ms,indiv_p5_ms,indiv_p95_ms";

/// Renders the report. Percentile columns appear only when every row has them.
pub fn emit(report: &BenchReport, format: Format) -> String {
    match format {
        Format::Csv => emit_csv(report),
        Format::Markdown => emit_markdown(report),
    }
}

fn emit_csv(report: &BenchReport) -> String {
    let pct = report.has_percentiles();
    let mut out = String::from(CSV_HEADER);
    if pct {
        out.push(',');
        out.push_str(CSV_PERCENTILE_HEADER);
    }
    out.push('\n');
    for r in &report.rows {
        let _ = write!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4}",
            r.name, r.params, r.param_ratio, r.batch.median_ms, r.individual.median_ms, r.speedup
        );
        if let (true, Some((b5, b95)), Some((i5, i95))) = (pct, r.batch.percentiles, r.individual.percentiles) {
            let _ = write!(out, ",{b5:.4},{b95:.4},{i5:.4},{i95:.4}");
        }
        out.push('\n');
    }
    out
}

fn emit_markdown(report: &BenchReport) -> String {
    let pct = report.has_percentiles();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "batch size {}, {} warmup + {} measured iterations, {} precision, single thread",
        report.batch_size, report.warmup_iters, report.measure_iters, report.precision
    );
    let _ = writeln!(out, "host: {}", report.host);
    let _ = writeln!(out, "reference: {}", report.rows[report.reference].name);
    out.push('\n');
    let mut header = vec!["Model", "Parameters", "Param ratio", "Batch latency (ms)", "Individual latency (ms)", "Speedup"];
    if pct {
        header.extend(["Batch p5/p95 (ms)", "Individual p5/p95 (ms)"]);
    }
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in &report.rows {
        let _ = write!(
            out,
            "| {} | {} | {:.2}x | {:.3} | {:.3} | {:.2}x |",
            r.name, r.params, r.param_ratio, r.batch.median_ms, r.individual.median_ms, r.speedup
        );
        if let (true, Some((b5, b95)), Some((i5, i95))) = (pct, r.batch.percentiles, r.individual.percentiles) {
            let _ = write!(out, " {b5:.3} / {b95:.3} | {i5:.3} / {i95:.3} |");
        }
        out.push('\n');
    }
    out
}
