//! Aggregates pipeline records into run reports and renders them.
//!
//! Rates stay exact rationals all the way through aggregation; rounding
//! happens only at render time. Two averages are always computed: the
//! macro average (unweighted mean of per-set rates) and the micro average
//! (total passed / total items). Headline tables print the micro figure
//! in the Average column; JSON output carries both, each as an exact
//! fraction plus a percent rounded to 0.01.

use std::collections::{BTreeMap, HashMap};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grading::math::{normalize_math_answer, render_rational};
use crate::grading::VerdictStatus;
use crate::router::{PipelineRecord, RoutingVariant};

/// An exact rational rendered to JSON as
/// `{"fraction": "p/q", "percent": 12.34}`; only the fraction is read
/// back, so round-tripping is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct Rate(pub BigRational);

impl Rate {
    pub fn from_counts(numer: usize, denom: usize) -> Self {
        Rate(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    /// Percent string at the given precision, e.g. `50%` or `81.67%`.
    pub fn percent_string(&self, decimals: u32) -> String {
        render_scaled(
            &(&self.0 * BigRational::from_integer(BigInt::from(100))),
            decimals,
        )
    }

    fn percent_f64(&self) -> f64 {
        rounded_f64(&(&self.0 * BigRational::from_integer(BigInt::from(100))))
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut state = serializer.serialize_struct("Rate", 2)?;
        state.serialize_field("fraction", &render_rational(&self.0))?;
        state.serialize_field("percent", &self.percent_f64())?;
        state.end()
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            fraction: String,
        }
        let repr = Repr::deserialize(deserializer)?;
        let value = normalize_math_answer(&repr.fraction)
            .map_err(|e| D::Error::custom(format!("bad fraction: {e}")))?;
        Ok(Rate(value))
    }
}

/// Signed percentage-point value (for deltas), serialized like [`Rate`]
/// but with a `points` field.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentPoints(pub BigRational);

impl PercentPoints {
    /// Signed string at the given precision: `+40`, `0`, `-5`, `+23.33`.
    pub fn signed_string(&self, decimals: u32) -> String {
        let body = render_scaled(&self.0, decimals);
        if body.starts_with('-') || body.chars().all(|c| c == '0' || c == '.') {
            body
        } else {
            format!("+{body}")
        }
    }
}

impl Serialize for PercentPoints {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut state = serializer.serialize_struct("PercentPoints", 2)?;
        state.serialize_field("fraction", &render_rational(&self.0))?;
        state.serialize_field("points", &rounded_f64(&self.0))?;
        state.end()
    }
}

impl<'de> Deserialize<'de> for PercentPoints {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            fraction: String,
        }
        let repr = Repr::deserialize(deserializer)?;
        let value = normalize_math_answer(&repr.fraction)
            .map_err(|e| D::Error::custom(format!("bad fraction: {e}")))?;
        Ok(PercentPoints(value))
    }
}

/// Rounds half away from zero to an integer at `decimals` places and
/// renders without a percent sign.
fn render_scaled(value: &BigRational, decimals: u32) -> String {
    let scale = BigInt::from(10u32).pow(decimals);
    let scaled = round_half_away(&(value * BigRational::from_integer(scale.clone())));
    if decimals == 0 {
        return scaled.to_string();
    }
    let negative = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = if digits.len() <= decimals as usize {
        format!(
            "{}{}",
            "0".repeat(decimals as usize + 1 - digits.len()),
            digits
        )
    } else {
        digits
    };
    let split = digits.len() - decimals as usize;
    format!(
        "{}{}.{}",
        if negative { "-" } else { "" },
        &digits[..split],
        &digits[split..]
    )
}

fn round_half_away(value: &BigRational) -> BigInt {
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let rounded = (value.abs() + half).floor().to_integer();
    if value.is_negative() {
        -rounded
    } else {
        rounded
    }
}

fn rounded_f64(value: &BigRational) -> f64 {
    let scaled = round_half_away(&(value * BigRational::from_integer(BigInt::from(100))));
    scaled.to_f64().unwrap_or(f64::NAN) / 100.0
}

/// Per-set success summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set_name: String,
    pub total: usize,
    pub passed: usize,
    pub rate: Rate,
    pub status_breakdown: BTreeMap<String, usize>,
}

/// Aggregated cost figures for one stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub count: usize,
    pub prompt_tokens_total: u64,
    pub completion_tokens_total: u64,
    pub latency_ms_total: u64,
    pub retries_total: u64,
    /// Derived means (totals / count), rounded for display; absent when
    /// no calls ran. Recomputed on serialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms_mean: Option<f64>,
}

impl StageCost {
    fn finish(mut self) -> Self {
        if self.count > 0 {
            let mean = |total: u64| {
                let value = BigRational::new(BigInt::from(total), BigInt::from(self.count));
                Some(rounded_f64(&value))
            };
            self.prompt_tokens_mean = mean(self.prompt_tokens_total);
            self.completion_tokens_mean = mean(self.completion_tokens_total);
            self.latency_ms_mean = mean(self.latency_ms_total);
        }
        self
    }
}

/// Per-stage totals/means plus failure counts for a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub stages: BTreeMap<String, StageCost>,
    pub stage_errors: usize,
}

/// The aggregate outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: RoutingVariant,
    pub summaries: Vec<SetSummary>,
    /// Unweighted mean of per-set rates.
    pub macro_average: Rate,
    /// Total passed / total items; matches headline-table averages.
    pub micro_average: Rate,
    pub cost: CostSummary,
    pub manifest_digest: String,
}

/// Per-set score difference between two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDelta {
    pub set_name: String,
    pub total: usize,
    pub delta_pp: PercentPoints,
}

/// Percentage-point differences `a - b` between two comparable runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub variant_a: RoutingVariant,
    pub variant_b: RoutingVariant,
    pub per_set: Vec<SetDelta>,
    pub macro_delta_pp: PercentPoints,
    pub micro_delta_pp: PercentPoints,
}

/// Groups records by set and computes per-set rates plus both averages.
///
/// All records must share one variant and every problem id must appear in
/// `set_index`; aggregation is permutation-invariant because summaries
/// come out in sorted set order and counting is order-free.
pub fn aggregate(
    records: &[PipelineRecord],
    set_index: &HashMap<String, String>,
    manifest_digest: &str,
) -> Result<RunReport> {
    if records.is_empty() {
        return Err(Error::usage("cannot aggregate zero records".to_string()));
    }
    let variant = records[0].variant.clone();
    if let Some(stray) = records.iter().find(|r| r.variant != variant) {
        return Err(Error::usage(format!(
            "mixed variants in one aggregation: {} and {} (problem '{}')",
            variant.name.as_str(),
            stray.variant.name.as_str(),
            stray.problem_id
        )));
    }

    let mut by_set: BTreeMap<&str, Vec<&PipelineRecord>> = BTreeMap::new();
    for record in records {
        let set_name = set_index.get(&record.problem_id).ok_or_else(|| {
            Error::usage(format!(
                "problem id '{}' is not in the set index",
                record.problem_id
            ))
        })?;
        by_set.entry(set_name).or_default().push(record);
    }

    let mut summaries = Vec::with_capacity(by_set.len());
    let mut rate_sum = BigRational::zero();
    let mut total_all = 0usize;
    let mut passed_all = 0usize;
    for (set_name, set_records) in &by_set {
        let total = set_records.len();
        let passed = set_records.iter().filter(|r| r.verdict.is_pass()).count();
        let mut breakdown: BTreeMap<String, usize> = BTreeMap::new();
        for record in set_records {
            *breakdown
                .entry(record.verdict.status.as_str().to_string())
                .or_insert(0) += 1;
        }
        let rate = Rate::from_counts(passed, total);
        rate_sum += rate.value();
        total_all += total;
        passed_all += passed;
        summaries.push(SetSummary {
            set_name: set_name.to_string(),
            total,
            passed,
            rate,
            status_breakdown: breakdown,
        });
    }

    let macro_average = Rate(rate_sum / BigRational::from_integer(BigInt::from(summaries.len())));
    let micro_average = Rate::from_counts(passed_all, total_all);

    let mut stages: BTreeMap<String, StageCost> = BTreeMap::new();
    let mut stage_errors = 0usize;
    for record in records {
        if record.verdict.status == VerdictStatus::StageError {
            stage_errors += 1;
        }
        for stat in &record.stage_stats {
            let entry = stages.entry(stat.stage.as_str().to_string()).or_default();
            entry.count += 1;
            entry.prompt_tokens_total += stat.prompt_tokens;
            entry.completion_tokens_total += stat.completion_tokens;
            entry.latency_ms_total += stat.latency_ms;
            entry.retries_total += u64::from(stat.retries_used);
        }
    }
    let stages = stages
        .into_iter()
        .map(|(stage, cost)| (stage, cost.finish()))
        .collect();

    Ok(RunReport {
        variant,
        summaries,
        macro_average,
        micro_average,
        cost: CostSummary {
            stages,
            stage_errors,
        },
        manifest_digest: manifest_digest.to_string(),
    })
}

/// Percentage-point deltas `a - b`, per set and for both averages.
pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<DeltaReport> {
    let mut mismatches = Vec::new();
    let b_by_name: HashMap<&str, &SetSummary> = b
        .summaries
        .iter()
        .map(|s| (s.set_name.as_str(), s))
        .collect();
    for summary in &a.summaries {
        match b_by_name.get(summary.set_name.as_str()) {
            None => mismatches.push(format!("set '{}' only in first run", summary.set_name)),
            Some(other) if other.total != summary.total => mismatches.push(format!(
                "set '{}' has {} items vs {}",
                summary.set_name, summary.total, other.total
            )),
            Some(_) => {}
        }
    }
    for summary in &b.summaries {
        if !a.summaries.iter().any(|s| s.set_name == summary.set_name) {
            mismatches.push(format!("set '{}' only in second run", summary.set_name));
        }
    }
    if !mismatches.is_empty() {
        return Err(Error::usage(format!(
            "runs are not comparable: {}",
            mismatches.join("; ")
        )));
    }

    let hundred = BigRational::from_integer(BigInt::from(100));
    let per_set = a
        .summaries
        .iter()
        .map(|summary| {
            let other = b_by_name[summary.set_name.as_str()];
            SetDelta {
                set_name: summary.set_name.clone(),
                total: summary.total,
                delta_pp: PercentPoints((summary.rate.value() - other.rate.value()) * &hundred),
            }
        })
        .collect();
    Ok(DeltaReport {
        variant_a: a.variant.clone(),
        variant_b: b.variant.clone(),
        per_set,
        macro_delta_pp: PercentPoints(
            (a.macro_average.value() - b.macro_average.value()) * &hundred,
        ),
        micro_delta_pp: PercentPoints(
            (a.micro_average.value() - b.micro_average.value()) * &hundred,
        ),
    })
}

/// Text output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Plain,
    Markdown,
}

impl RunReport {
    /// Deterministic table: set columns in sorted order, Average (micro)
    /// last, macro disclosed on a footer line at 0.01 precision.
    pub fn render_table(&self, format: TableFormat, decimals: u32) -> String {
        let header: Vec<String> = std::iter::once("variant".to_string())
            .chain(self.summaries.iter().map(|s| s.set_name.clone()))
            .chain(std::iter::once("average".to_string()))
            .collect();
        let row: Vec<String> = std::iter::once(self.variant.name.as_str().to_string())
            .chain(
                self.summaries
                    .iter()
                    .map(|s| format!("{}%", s.rate.percent_string(decimals))),
            )
            .chain(std::iter::once(format!(
                "{}%",
                self.micro_average.percent_string(decimals)
            )))
            .collect();
        let mut footer = format!("macro average: {}%", self.macro_average.percent_string(2));
        if self.variant.think_backend.is_none() {
            footer.push_str("\nsingle-stage baseline (harness extension, no handoff)");
        }
        render_rows(format, &header, &row, &footer)
    }
}

impl DeltaReport {
    pub fn render_table(&self, format: TableFormat, decimals: u32) -> String {
        let header: Vec<String> = std::iter::once("delta".to_string())
            .chain(self.per_set.iter().map(|d| d.set_name.clone()))
            .chain(std::iter::once("average".to_string()))
            .collect();
        let label = format!(
            "{}-vs-{}",
            self.variant_a.name.as_str(),
            self.variant_b.name.as_str()
        );
        let row: Vec<String> = std::iter::once(label)
            .chain(
                self.per_set
                    .iter()
                    .map(|d| d.delta_pp.signed_string(decimals)),
            )
            .chain(std::iter::once(self.micro_delta_pp.signed_string(decimals)))
            .collect();
        let footer = format!("macro delta: {}", self.macro_delta_pp.signed_string(2));
        render_rows(format, &header, &row, &footer)
    }
}

fn render_rows(format: TableFormat, header: &[String], row: &[String], footer: &str) -> String {
    match format {
        TableFormat::Plain => {
            format!("{}\n{}\n{}\n", header.join(" "), row.join(" "), footer)
        }
        TableFormat::Markdown => {
            let separator: Vec<&str> = header.iter().map(|_| "---").collect();
            format!(
                "| {} |\n| {} |\n| {} |\n\n{}\n",
                header.join(" | "),
                separator.join(" | "),
                row.join(" | "),
                footer
            )
        }
    }
}

/// Lossless JSON emission; `parse(emit(report)) == report`.
pub fn emit_json<T: Serialize>(report: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Internal(format!("report serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn parse_run_report(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).map_err(|e| Error::data(format!("bad run report JSON: {e}")))
}

pub fn parse_delta_report(text: &str) -> Result<DeltaReport> {
    serde_json::from_str(text).map_err(|e| Error::data(format!("bad delta report JSON: {e}")))
}
