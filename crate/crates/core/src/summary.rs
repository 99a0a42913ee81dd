//! Aggregation from raw trial logs and questionnaire responses to the final
//! condition-comparison report.
//!
//! Completion times are summed per participant and condition (one navigation
//! block each), described per condition, and paired across participants for
//! the gated test in [`crate::stats`]. Questionnaire responses arrive as
//! flat CSV rows (`participant,condition,kind,item_index,value`), are scored
//! per instrument, and every resulting measure gets the same paired
//! treatment. Participants missing a condition are excluded from the paired
//! samples with a warning rather than an error, so one dropout does not
//! sink the whole analysis.

use crate::session::{Condition, TrialLog};
use crate::stats::{select_test, StatsError, TestReport};
use crate::survey::{score_questionnaire, QuestionnaireKind, QuestionnaireScores, SurveyError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("response file: {0}")]
    Csv(#[from] csv::Error),
    #[error("response file: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unknown condition \"{0}\" in responses")]
    BadCondition(String),
    #[error("{participant}/{condition} {kind}: expected item {expected}, found item {found}")]
    ItemSequence {
        participant: String,
        condition: &'static str,
        kind: String,
        expected: usize,
        found: usize,
    },
}

/// Paired observations across the two conditions, one row per participant
/// that completed both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub label_a: String,
    pub label_b: String,
    /// Participant ids, sorted; `values_a[i]` and `values_b[i]` belong to
    /// `participants[i]`.
    pub participants: Vec<String>,
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
}

impl PairedSample {
    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }
}

/// Mean and sample SD of one measure under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDescriptives {
    pub condition: Condition,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); absent for n < 2.
    pub sd: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64], m: f64) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

fn describe(condition: Condition, values: &[f64]) -> ConditionDescriptives {
    let m = mean(values);
    ConditionDescriptives {
        condition,
        n: values.len(),
        mean: m,
        sd: sample_sd(values, m),
    }
}

const CONDITIONS: [Condition; 2] = [Condition::Scooter, Condition::Joystick];

fn cond_index(c: Condition) -> usize {
    match c {
        Condition::Scooter => 0,
        Condition::Joystick => 1,
    }
}

/// Per-participant values under each condition, keyed by participant id.
/// The inner array is indexed scooter = 0, joystick = 1.
type ConditionCells = BTreeMap<String, [Option<f64>; 2]>;

/// Splits cells into per-condition descriptives plus the paired sample over
/// participants present in both, warning (with `what` naming the measure)
/// about the rest.
fn pair_cells(cells: &ConditionCells, what: &str, warnings: &mut Vec<String>) -> PairedReport {
    let mut per_condition: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut paired = PairedSample {
        label_a: Condition::Scooter.as_str().to_string(),
        label_b: Condition::Joystick.as_str().to_string(),
        participants: Vec::new(),
        values_a: Vec::new(),
        values_b: Vec::new(),
    };
    for (participant, cell) in cells {
        for (i, value) in cell.iter().enumerate() {
            if let Some(v) = value {
                per_condition[i].push(*v);
            }
        }
        match cell {
            [Some(a), Some(b)] => {
                paired.participants.push(participant.clone());
                paired.values_a.push(*a);
                paired.values_b.push(*b);
            }
            [present, _] => {
                let missing = if present.is_some() {
                    Condition::Joystick
                } else {
                    Condition::Scooter
                };
                warnings.push(format!(
                    "{participant} has no {} data for {what}; excluded from the paired sample",
                    missing.as_str()
                ));
            }
        }
    }
    let descriptives = CONDITIONS
        .iter()
        .zip(&per_condition)
        .filter(|(_, values)| !values.is_empty())
        .map(|(&c, values)| describe(c, values))
        .collect();
    PairedReport {
        descriptives,
        paired,
    }
}

struct PairedReport {
    descriptives: Vec<ConditionDescriptives>,
    paired: PairedSample,
}

/// Completion-time aggregation over a set of trial logs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    /// One entry per condition with any completed trials, scooter first.
    pub descriptives: Vec<ConditionDescriptives>,
    /// Per-participant completion-time sums, over participants with
    /// completed trials in both conditions.
    pub paired: PairedSample,
    pub warnings: Vec<String>,
}

/// Sums completion times per participant and condition. Aborted trials are
/// excluded from the sums; participants covering only one condition are
/// excluded from the paired sample. Both exclusions produce warnings.
pub fn summarize_trials(logs: &[TrialLog]) -> TrialSummary {
    let mut warnings = Vec::new();
    let mut cells: ConditionCells = BTreeMap::new();
    for log in logs {
        if log.aborted {
            warnings.push(format!(
                "{} {} trial {} ({}) was aborted; excluded from completion sums",
                log.participant,
                log.condition.as_str(),
                log.trial_index,
                log.goal_id
            ));
            continue;
        }
        let cell = cells.entry(log.participant.clone()).or_default();
        let slot = &mut cell[cond_index(log.condition)];
        *slot = Some(slot.unwrap_or(0.0) + log.completion_s);
    }
    let report = pair_cells(&cells, "completion_s", &mut warnings);
    TrialSummary {
        descriptives: report.descriptives,
        paired: report.paired,
        warnings,
    }
}

/// One questionnaire response row, as stored in the responses CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub participant: String,
    pub condition: Condition,
    /// Instrument short name, as accepted by
    /// [`QuestionnaireKind::parse`].
    pub kind: String,
    /// 1-based item number within the instrument.
    pub item_index: usize,
    pub value: f64,
}

/// Reads `participant,condition,kind,item_index,value` rows.
pub fn read_responses_csv(path: &Path) -> Result<Vec<ResponseRecord>, SummaryError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

pub fn write_responses_csv(path: &Path, records: &[ResponseRecord]) -> Result<(), SummaryError> {
    let mut writer = csv::Writer::from_path(path)?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

/// One scored instrument for one participant under one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredResponse {
    pub participant: String,
    pub condition: Condition,
    pub kind: String,
    pub scores: QuestionnaireScores,
}

/// Groups response rows by participant, condition, and instrument, checks
/// that each group's item numbers run 1..=n with no gaps or duplicates, and
/// scores each group.
pub fn score_responses(records: &[ResponseRecord]) -> Result<Vec<ScoredResponse>, SummaryError> {
    let mut groups: BTreeMap<(String, usize, String), Vec<(usize, f64)>> = BTreeMap::new();
    for r in records {
        groups
            .entry((
                r.participant.clone(),
                cond_index(r.condition),
                r.kind.clone(),
            ))
            .or_default()
            .push((r.item_index, r.value));
    }
    let mut scored = Vec::new();
    for ((participant, cond_idx, kind_name), mut items) in groups {
        let condition = CONDITIONS[cond_idx];
        items.sort_by_key(|&(index, _)| index);
        for (position, &(index, _)) in items.iter().enumerate() {
            if index != position + 1 {
                return Err(SummaryError::ItemSequence {
                    participant,
                    condition: condition.as_str(),
                    kind: kind_name,
                    expected: position + 1,
                    found: index,
                });
            }
        }
        let responses: Vec<f64> = items.iter().map(|&(_, v)| v).collect();
        let kind = QuestionnaireKind::parse(&kind_name)?;
        let scores = score_questionnaire(kind, &responses)?;
        scored.push(ScoredResponse {
            participant,
            condition,
            kind: kind_name,
            scores,
        });
    }
    Ok(scored)
}

/// Named scalar measures extracted from one instrument's scores, in
/// instrument order.
pub fn measure_values(scores: &QuestionnaireScores) -> Vec<(&'static str, f64)> {
    match scores {
        QuestionnaireScores::Sus { score } => vec![("sus", *score)],
        QuestionnaireScores::Ssq {
            nausea,
            oculomotor,
            disorientation,
            total,
        } => vec![
            ("ssq_nausea", *nausea),
            ("ssq_oculomotor", *oculomotor),
            ("ssq_disorientation", *disorientation),
            ("ssq_total", *total),
        ],
        QuestionnaireScores::RawTlx {
            mental,
            physical,
            temporal,
            performance,
            effort,
            frustration,
        } => vec![
            ("tlx_mental", *mental),
            ("tlx_physical", *physical),
            ("tlx_temporal", *temporal),
            ("tlx_performance", *performance),
            ("tlx_effort", *effort),
            ("tlx_frustration", *frustration),
        ],
        QuestionnaireScores::Borg { rating } => vec![("borg", *rating)],
        QuestionnaireScores::Ipq {
            general,
            spatial_presence,
            involvement,
            realism,
        } => vec![
            ("ipq_general", *general),
            ("ipq_spatial_presence", *spatial_presence),
            ("ipq_involvement", *involvement),
            ("ipq_realism", *realism),
        ],
        QuestionnaireScores::UeqShort {
            pragmatic,
            hedonic,
            overall,
        } => vec![
            ("ueq_pragmatic", *pragmatic),
            ("ueq_hedonic", *hedonic),
            ("ueq_overall", *overall),
        ],
        QuestionnaireScores::Enjoyment { rating } => vec![("enjoyment", *rating)],
    }
}

/// Paired comparison of one measure across conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureReport {
    pub measure: String,
    pub descriptives: Vec<ConditionDescriptives>,
    pub n_pairs: usize,
    /// Absent when the gated test could not run (too few pairs, or all
    /// differences zero); the report's warnings say which.
    pub test: Option<TestReport>,
}

/// Full analysis output: completion time plus every questionnaire measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub completion: MeasureReport,
    pub measures: Vec<MeasureReport>,
    pub warnings: Vec<String>,
}

/// Runs the normality-gated paired test, downgrading the two expected
/// degenerate cases (too few pairs, all-zero differences) to warnings.
fn gated_test(
    paired: &PairedSample,
    measure: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<TestReport>, SummaryError> {
    match select_test(&paired.values_a, &paired.values_b) {
        Ok(report) => Ok(Some(report)),
        Err(e @ StatsError::TooFewSamples { .. }) | Err(e @ StatsError::AllDifferencesZero) => {
            warnings.push(format!("{measure}: test skipped ({e})"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn measure_report(
    measure: &str,
    cells: &ConditionCells,
    warnings: &mut Vec<String>,
) -> Result<MeasureReport, SummaryError> {
    let report = pair_cells(cells, measure, warnings);
    let test = gated_test(&report.paired, measure, warnings)?;
    Ok(MeasureReport {
        measure: measure.to_string(),
        descriptives: report.descriptives,
        n_pairs: report.paired.len(),
        test,
    })
}

/// Produces the full report from trial logs and (possibly empty)
/// questionnaire responses.
pub fn analyze(
    logs: &[TrialLog],
    responses: &[ResponseRecord],
) -> Result<AnalysisReport, SummaryError> {
    let trials = summarize_trials(logs);
    let mut warnings = trials.warnings;
    let completion_test = gated_test(&trials.paired, "completion_s", &mut warnings)?;
    let completion = MeasureReport {
        measure: "completion_s".to_string(),
        descriptives: trials.descriptives,
        n_pairs: trials.paired.len(),
        test: completion_test,
    };

    let scored = score_responses(responses)?;
    let mut by_measure: BTreeMap<String, ConditionCells> = BTreeMap::new();
    for block in &scored {
        for (measure, value) in measure_values(&block.scores) {
            by_measure
                .entry(measure.to_string())
                .or_default()
                .entry(block.participant.clone())
                .or_default()[cond_index(block.condition)] = Some(value);
        }
    }
    let mut measures = Vec::new();
    for (measure, cells) in &by_measure {
        measures.push(measure_report(measure, cells, &mut warnings)?);
    }

    Ok(AnalysisReport {
        completion,
        measures,
        warnings,
    })
}

fn fmt_opt(value: Option<f64>, decimals: usize) -> String {
    match value {
        Some(v) => format!("{v:.decimals$}"),
        None => "-".to_string(),
    }
}

impl MeasureReport {
    fn table_row(&self) -> [String; 9] {
        let mut cols: [String; 9] = Default::default();
        cols[0] = self.measure.clone();
        for d in &self.descriptives {
            let text = format!("{:.2} ({})", d.mean, fmt_opt(d.sd, 2));
            cols[1 + cond_index(d.condition)] = text;
        }
        for i in 1..=2 {
            if cols[i].is_empty() {
                cols[i] = "-".to_string();
            }
        }
        cols[3] = self.n_pairs.to_string();
        match &self.test {
            Some(t) => {
                cols[4] = match t.kind {
                    crate::stats::TestKind::PairedT => "paired_t".to_string(),
                    crate::stats::TestKind::WilcoxonSignedRank => "wilcoxon".to_string(),
                };
                cols[5] = fmt_opt(t.normality.map(|sw| sw.p), 4);
                cols[6] = format!("{:.3}", t.statistic);
                cols[7] = format!("{:.4}", t.p_value);
                cols[8] = format!("{:.2}", t.effect_size);
            }
            None => {
                for col in cols.iter_mut().skip(4) {
                    *col = "-".to_string();
                }
            }
        }
        cols
    }
}

impl AnalysisReport {
    /// Renders the report as a fixed-width text table, one row per measure,
    /// completion time first.
    pub fn render_table(&self) -> String {
        let header = [
            "measure",
            "scooter mean (sd)",
            "joystick mean (sd)",
            "pairs",
            "test",
            "gate p",
            "stat",
            "p",
            "effect",
        ];
        let mut rows: Vec<[String; 9]> = vec![header.map(str::to_string)];
        rows.push(self.completion.table_row());
        rows.extend(self.measures.iter().map(MeasureReport::table_row));

        let mut widths = [0usize; 9];
        for row in &rows {
            for (w, col) in widths.iter_mut().zip(row) {
                *w = (*w).max(col.len());
            }
        }
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(col, &w)| format!("{col:<w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }
}
