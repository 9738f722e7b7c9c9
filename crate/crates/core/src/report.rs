//! Report records and their table, JSON and CSV renderings.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DuetError, Result};
use crate::model::SplitPoint;

pub const FLOW_SCHEMA: &str = "flow-report/1";
pub const COMPARE_SCHEMA: &str = "flow-compare/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Processor {
    DO,
    DS,
}

impl fmt::Display for Processor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Processor::DO => "DO",
            Processor::DS => "DS",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub forward_step: String,
    pub processor: Processor,
    /// Total chain bits; `None` for plaintext.
    pub modulus_bits: Option<u32>,
    /// Index of the top active chain prime; `None` for plaintext.
    pub level: Option<usize>,
    /// Serialized size of the step's output.
    pub payload_bytes: usize,
    pub compute_ms: f64,
    pub serialize_ms: f64,
}

impl FlowRow {
    pub fn modulus_label(&self) -> String {
        self.modulus_bits.map_or_else(|| "plaintext".into(), |b| b.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub split_point: SplitPoint,
    pub poly_degree: usize,
    pub scale_bits: u32,
    pub seed: u64,
    pub weight_seed: u64,
    pub weights: String,
    pub image_index: usize,
    pub transport: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainInfo {
    pub depth: usize,
    pub prime_bits: Vec<u32>,
    pub primes: Vec<u64>,
    pub total_bits: u32,
    pub special_prime_bits: u32,
    pub scale_bits: u32,
    pub poly_degree: usize,
    pub slots: usize,
    pub security_bits: u32,
    pub rotation_steps: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupInfo {
    pub client_weights_bytes: usize,
    pub manifest_bytes: usize,
    pub context_bytes: usize,
    pub eval_key_bytes: usize,
    pub handshake_ms: f64,
    pub weights_transfer_ms: f64,
    pub keygen_ms: f64,
    pub key_serialize_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub do_compute_ms: f64,
    pub ds_compute_ms: f64,
    pub serialize_ms: f64,
    /// Remote call plus result resolution as seen by the DO.
    pub roundtrip_ms: f64,
    pub do_bytes: usize,
    pub ds_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub image_index: usize,
    pub label: u8,
    pub predicted: usize,
    pub logits: Vec<f64>,
    /// Unencrypted full-model forward pass on the same weights.
    pub reference_predicted: usize,
    pub reference_logits: Vec<f64>,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub schema: String,
    pub config: ConfigEcho,
    pub chain: ChainInfo,
    pub setup: SetupInfo,
    pub rows: Vec<FlowRow>,
    pub totals: Totals,
    pub result: InferenceResult,
}

impl FlowReport {
    pub fn ds_rows(&self) -> impl Iterator<Item = &FlowRow> {
        self.rows.iter().filter(|r| r.processor == Processor::DS)
    }

    pub fn row(&self, step: &str) -> Option<&FlowRow> {
        self.rows.iter().find(|r| r.forward_step == step)
    }

    /// Copy with every wall-clock field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.compute_ms = 0.0;
            row.serialize_ms = 0.0;
        }
        let s = &mut r.setup;
        s.handshake_ms = 0.0;
        s.weights_transfer_ms = 0.0;
        s.keygen_ms = 0.0;
        s.key_serialize_ms = 0.0;
        let t = &mut r.totals;
        t.do_compute_ms = 0.0;
        t.ds_compute_ms = 0.0;
        t.serialize_ms = 0.0;
        t.roundtrip_ms = 0.0;
        r
    }

    /// Canonical JSON with timings removed; equal for equal seeds.
    pub fn reproducible_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.without_timings()).expect("report serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split_point: SplitPoint,
    pub modulus_bits: u32,
    pub depth: usize,
    pub fresh_ciphertext_bytes: usize,
    pub result_ciphertext_bytes: usize,
    pub eval_key_bytes: usize,
    /// Median over repetitions of the per-image mean.
    pub do_encrypt_ms: f64,
    pub ds_compute_ms: f64,
    pub roundtrip_ms: f64,
    pub ds_compute_runs_ms: Vec<f64>,
    pub images: usize,
    pub argmax_agreement: usize,
    pub max_abs_error: f64,
    /// Rows of the first image's run.
    pub rows: Vec<FlowRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema: String,
    pub seed: u64,
    pub weight_seed: u64,
    pub poly_degree: usize,
    pub images: usize,
    pub repeats: usize,
    pub conv2: SplitSummary,
    pub fc1_act: SplitSummary,
    /// fc1_act fresh ciphertext size over conv2's.
    pub size_ratio: f64,
    /// conv2 DS compute over fc1_act's.
    pub ds_speedup: f64,
    /// conv2 DO encrypt time over fc1_act's.
    pub encrypt_speedup: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Table,
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = DuetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(DuetError::Config(format!("unknown output format {other:?}"))),
        }
    }
}

/// `529 B` below a kilobyte, otherwise decimal kilobytes.
pub fn format_size(bytes: usize) -> String {
    if bytes < 1000 {
        format!("{bytes} B")
    } else {
        format!("{:.2} KB", bytes as f64 / 1000.0)
    }
}

fn format_ms(ms: f64) -> String {
    if ms >= 1000.0 {
        format!("{:.2} s", ms / 1000.0)
    } else {
        format!("{ms:.2} ms")
    }
}

const HEADERS: [&str; 5] = ["Forward Step", "Processor", "Modulus (bits)", "File Size", "Time Taken"];

/// Rows render in execution order with a bar between the DO and DS parts.
pub fn render_table(rows: &[FlowRow]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.forward_step.clone(),
                r.processor.to_string(),
                r.modulus_label(),
                format_size(r.payload_bytes),
                format_ms(r.compute_ms),
            ]
        })
        .collect();
    let mut widths = HEADERS.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |out: &mut String, cols: &[&str]| {
        let parts: Vec<String> = cols.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "| {} |", parts.join(" | "));
    };
    let total: usize = widths.iter().sum::<usize>() + 3 * widths.len() + 1;
    let mut out = String::new();
    let _ = writeln!(out, "{}", "-".repeat(total));
    line(&mut out, &HEADERS);
    let _ = writeln!(out, "{}", "-".repeat(total));
    for (i, row) in cells.iter().enumerate() {
        let split = i > 0 && rows[i - 1].processor == Processor::DO && rows[i].processor == Processor::DS;
        if split {
            let _ = writeln!(out, "{}", "=".repeat(total));
        }
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let _ = writeln!(out, "{}", "-".repeat(total));
    out
}

pub fn render_flow_table(r: &FlowReport) -> String {
    let mut out = format!(
        "split point {} | N = {} | chain {:?} = {} bits | image {} (label {})\n",
        r.config.split_point, r.chain.poly_degree, r.chain.prime_bits, r.chain.total_bits, r.result.image_index, r.result.label
    );
    out.push_str(&render_table(&r.rows));
    let _ = writeln!(
        out,
        "KB = 1000 bytes. Time Taken is compute only; serialization took {} in total.",
        format_ms(r.totals.serialize_ms)
    );
    let _ = writeln!(
        out,
        "setup: eval keys {} ({} to generate), client weights {}; roundtrip {}",
        format_size(r.setup.eval_key_bytes),
        format_ms(r.setup.keygen_ms),
        format_size(r.setup.client_weights_bytes),
        format_ms(r.totals.roundtrip_ms)
    );
    let _ = writeln!(
        out,
        "predicted {} (plaintext reference {}), max |logit error| {:.3e}",
        r.result.predicted, r.result.reference_predicted, r.result.max_abs_error
    );
    out
}

pub fn render_compare_table(c: &ComparisonReport) -> String {
    let mut out = String::new();
    for s in [&c.conv2, &c.fc1_act] {
        let _ = writeln!(out, "split point {} ({} bits)", s.split_point, s.modulus_bits);
        out.push_str(&render_table(&s.rows));
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "over {} images, median of {} runs:\n  fresh ciphertext {} -> {} (ratio {:.3})\n  DS compute {} -> {} ({:.1}x faster)\n  DO encrypt {} -> {} ({:.2}x faster)\n  argmax agreement {}/{} and {}/{}",
        c.images,
        c.repeats,
        format_size(c.conv2.fresh_ciphertext_bytes),
        format_size(c.fc1_act.fresh_ciphertext_bytes),
        c.size_ratio,
        format_ms(c.conv2.ds_compute_ms),
        format_ms(c.fc1_act.ds_compute_ms),
        c.ds_speedup,
        format_ms(c.conv2.do_encrypt_ms),
        format_ms(c.fc1_act.do_encrypt_ms),
        c.encrypt_speedup,
        c.conv2.argmax_agreement,
        c.conv2.images,
        c.fc1_act.argmax_agreement,
        c.fc1_act.images,
    );
    out.push_str("KB = 1000 bytes.\n");
    out
}

#[derive(Serialize)]
struct CsvRow<'a> {
    split_point: &'a str,
    forward_step: &'a str,
    processor: Processor,
    modulus_bits: String,
    payload_bytes: usize,
    compute_ms: f64,
    serialize_ms: f64,
}

/// One record per table row, under a single header.
pub fn render_csv(split_rows: &[(SplitPoint, &[FlowRow])]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (split, rows) in split_rows {
        for r in rows.iter() {
            w.serialize(CsvRow {
                split_point: split.as_str(),
                forward_step: &r.forward_step,
                processor: r.processor,
                modulus_bits: r.modulus_label(),
                payload_bytes: r.payload_bytes,
                compute_ms: r.compute_ms,
                serialize_ms: r.serialize_ms,
            })
            .expect("csv into memory");
        }
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}

pub fn emit_flow(r: &FlowReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Table => render_flow_table(r),
        OutputFormat::Json => serde_json::to_string_pretty(r).expect("report serializes") + "\n",
        OutputFormat::Csv => render_csv(&[(r.config.split_point, &r.rows)]),
    }
}

pub fn emit_comparison(c: &ComparisonReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Table => render_compare_table(c),
        OutputFormat::Json => serde_json::to_string_pretty(c).expect("report serializes") + "\n",
        OutputFormat::Csv => render_csv(&[
            (c.conv2.split_point, &c.conv2.rows),
            (c.fc1_act.split_point, &c.fc1_act.rows),
        ]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(format_size(529), "529 B");
        assert_eq!(format_size(139_620), "139.62 KB");
    }
}
