//! Questionnaire scoring for the standard self-report instruments in the
//! study battery.
//!
//! Each instrument takes a flat response vector (items in instrument order)
//! and returns its published scores: SUS usability (0-100), SSQ sickness
//! subscales with the Kennedy weights, unweighted raw TLX workload
//! subscales, Borg RPE, IPQ presence subscale sums, UEQ-Short scale means
//! on the -3..+3 scale, and a single enjoyment rating. Validation reports
//! the 1-based item number of the first offending response so a bad CSV row
//! can be traced back to the form.

use serde::Serialize;
use thiserror::Error;

/// SSQ items feeding the nausea subscale (1-based instrument numbering).
const SSQ_NAUSEA: [usize; 7] = [1, 6, 7, 8, 9, 15, 16];
/// SSQ items feeding the oculomotor subscale.
const SSQ_OCULOMOTOR: [usize; 7] = [1, 2, 3, 4, 5, 9, 11];
/// SSQ items feeding the disorientation subscale.
const SSQ_DISORIENTATION: [usize; 7] = [5, 8, 10, 11, 12, 13, 14];

/// Published SSQ subscale weights and the shared total weight.
const SSQ_WEIGHT_NAUSEA: f64 = 9.54;
const SSQ_WEIGHT_OCULOMOTOR: f64 = 7.58;
const SSQ_WEIGHT_DISORIENTATION: f64 = 13.92;
const SSQ_WEIGHT_TOTAL: f64 = 3.74;

/// Raw TLX subscales in instrument order.
pub const TLX_SUBSCALES: [&str; 6] = [
    "mental",
    "physical",
    "temporal",
    "performance",
    "effort",
    "frustration",
];

/// Default raw TLX item range. The administration scale varies across
/// deployments, so [`QuestionnaireKind::RawTlx`] carries the range as data;
/// this default matches a 7-point form.
pub const TLX_DEFAULT_MIN: f64 = 1.0;
pub const TLX_DEFAULT_MAX: f64 = 7.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurveyError {
    #[error("{kind} expects {expected} responses, got {got}")]
    Arity {
        kind: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("{kind} item {item} is {value}, outside {min}..={max}")]
    ItemRange {
        kind: &'static str,
        item: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("{kind} item {item} is not finite")]
    NonFinite { kind: &'static str, item: usize },
    #[error("unknown questionnaire kind \"{0}\"")]
    UnknownKind(String),
}

/// Which instrument a response vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "instrument")]
pub enum QuestionnaireKind {
    /// System Usability Scale: 10 items, each 1-5.
    Sus,
    /// Simulator Sickness Questionnaire: 16 symptom items, each 0-3.
    Ssq,
    /// Raw (unweighted) NASA-TLX: one value per subscale in
    /// [`TLX_SUBSCALES`] order, or k values per subscale grouped
    /// subscale-major when a form administers multiple items.
    RawTlx { scale_min: f64, scale_max: f64 },
    /// Borg RPE: a single rating on the 6-20 scale.
    Borg,
    /// Igroup Presence Questionnaire: 14 items, each 0-6, ordered general
    /// presence (1), spatial presence (2-6), involvement (7-10), realism
    /// (11-14).
    Ipq,
    /// UEQ-Short: 8 semantic differentials answered 1-7, scored as means
    /// shifted to -3..+3; items 1-4 pragmatic, 5-8 hedonic.
    UeqShort,
    /// Single enjoyment rating, 1-7.
    Enjoyment,
}

impl QuestionnaireKind {
    pub fn name(&self) -> &'static str {
        match self {
            QuestionnaireKind::Sus => "sus",
            QuestionnaireKind::Ssq => "ssq",
            QuestionnaireKind::RawTlx { .. } => "tlx",
            QuestionnaireKind::Borg => "borg",
            QuestionnaireKind::Ipq => "ipq",
            QuestionnaireKind::UeqShort => "ueq",
            QuestionnaireKind::Enjoyment => "enjoyment",
        }
    }

    /// Parses the short names used in response CSVs. The TLX range cannot be
    /// expressed in a name, so `tlx` parses to the default 1-7 form.
    pub fn parse(name: &str) -> Result<Self, SurveyError> {
        match name {
            "sus" => Ok(QuestionnaireKind::Sus),
            "ssq" => Ok(QuestionnaireKind::Ssq),
            "tlx" => Ok(QuestionnaireKind::RawTlx {
                scale_min: TLX_DEFAULT_MIN,
                scale_max: TLX_DEFAULT_MAX,
            }),
            "borg" => Ok(QuestionnaireKind::Borg),
            "ipq" => Ok(QuestionnaireKind::Ipq),
            "ueq" => Ok(QuestionnaireKind::UeqShort),
            "enjoyment" => Ok(QuestionnaireKind::Enjoyment),
            other => Err(SurveyError::UnknownKind(other.to_string())),
        }
    }
}

/// Scores produced by [`score_questionnaire`], one variant per instrument.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "instrument")]
pub enum QuestionnaireScores {
    Sus {
        score: f64,
    },
    Ssq {
        nausea: f64,
        oculomotor: f64,
        disorientation: f64,
        total: f64,
    },
    RawTlx {
        mental: f64,
        physical: f64,
        temporal: f64,
        performance: f64,
        effort: f64,
        frustration: f64,
    },
    Borg {
        rating: f64,
    },
    Ipq {
        general: f64,
        spatial_presence: f64,
        involvement: f64,
        realism: f64,
    },
    UeqShort {
        pragmatic: f64,
        hedonic: f64,
        overall: f64,
    },
    Enjoyment {
        rating: f64,
    },
}

fn check_items(
    kind: &'static str,
    responses: &[f64],
    min: f64,
    max: f64,
) -> Result<(), SurveyError> {
    for (i, &value) in responses.iter().enumerate() {
        let item = i + 1;
        if !value.is_finite() {
            return Err(SurveyError::NonFinite { kind, item });
        }
        if value < min || value > max {
            return Err(SurveyError::ItemRange {
                kind,
                item,
                value,
                min,
                max,
            });
        }
    }
    Ok(())
}

fn check_arity(
    kind: &'static str,
    responses: &[f64],
    expected: usize,
    describe: &'static str,
) -> Result<(), SurveyError> {
    if responses.len() != expected {
        return Err(SurveyError::Arity {
            kind,
            expected: describe,
            got: responses.len(),
        });
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Scores one response vector against its instrument's published rules.
pub fn score_questionnaire(
    kind: QuestionnaireKind,
    responses: &[f64],
) -> Result<QuestionnaireScores, SurveyError> {
    match kind {
        QuestionnaireKind::Sus => {
            check_arity("sus", responses, 10, "10")?;
            check_items("sus", responses, 1.0, 5.0)?;
            // Odd items are agreement with positive statements (item - 1),
            // even items with negative ones (5 - item); the contribution sum
            // lands in 0..=40 and stretches to the 0-100 scale.
            let sum: f64 = responses
                .iter()
                .enumerate()
                .map(|(i, &v)| if i % 2 == 0 { v - 1.0 } else { 5.0 - v })
                .sum();
            Ok(QuestionnaireScores::Sus { score: sum * 2.5 })
        }
        QuestionnaireKind::Ssq => {
            check_arity("ssq", responses, 16, "16")?;
            check_items("ssq", responses, 0.0, 3.0)?;
            let raw = |items: &[usize]| -> f64 { items.iter().map(|&i| responses[i - 1]).sum() };
            let n_raw = raw(&SSQ_NAUSEA);
            let o_raw = raw(&SSQ_OCULOMOTOR);
            let d_raw = raw(&SSQ_DISORIENTATION);
            Ok(QuestionnaireScores::Ssq {
                nausea: n_raw * SSQ_WEIGHT_NAUSEA,
                oculomotor: o_raw * SSQ_WEIGHT_OCULOMOTOR,
                disorientation: d_raw * SSQ_WEIGHT_DISORIENTATION,
                total: (n_raw + o_raw + d_raw) * SSQ_WEIGHT_TOTAL,
            })
        }
        QuestionnaireKind::RawTlx {
            scale_min,
            scale_max,
        } => {
            if responses.is_empty() || responses.len() % 6 != 0 {
                return Err(SurveyError::Arity {
                    kind: "tlx",
                    expected: "a multiple of 6",
                    got: responses.len(),
                });
            }
            check_items("tlx", responses, scale_min, scale_max)?;
            // Subscale-major: with k items per subscale the first k are
            // mental, the next k physical, and so on. Single-item forms
            // (k = 1) pass each rating through unchanged.
            let k = responses.len() / 6;
            let sub = |s: usize| mean(&responses[s * k..(s + 1) * k]);
            Ok(QuestionnaireScores::RawTlx {
                mental: sub(0),
                physical: sub(1),
                temporal: sub(2),
                performance: sub(3),
                effort: sub(4),
                frustration: sub(5),
            })
        }
        QuestionnaireKind::Borg => {
            check_arity("borg", responses, 1, "1")?;
            check_items("borg", responses, 6.0, 20.0)?;
            Ok(QuestionnaireScores::Borg {
                rating: responses[0],
            })
        }
        QuestionnaireKind::Ipq => {
            check_arity("ipq", responses, 14, "14")?;
            check_items("ipq", responses, 0.0, 6.0)?;
            Ok(QuestionnaireScores::Ipq {
                general: responses[0],
                spatial_presence: responses[1..6].iter().sum(),
                involvement: responses[6..10].iter().sum(),
                realism: responses[10..14].iter().sum(),
            })
        }
        QuestionnaireKind::UeqShort => {
            check_arity("ueq", responses, 8, "8")?;
            check_items("ueq", responses, 1.0, 7.0)?;
            let shifted: Vec<f64> = responses.iter().map(|&v| v - 4.0).collect();
            Ok(QuestionnaireScores::UeqShort {
                pragmatic: mean(&shifted[0..4]),
                hedonic: mean(&shifted[4..8]),
                overall: mean(&shifted),
            })
        }
        QuestionnaireKind::Enjoyment => {
            check_arity("enjoyment", responses, 1, "1")?;
            check_items("enjoyment", responses, 1.0, 7.0)?;
            Ok(QuestionnaireScores::Enjoyment {
                rating: responses[0],
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tlx_default() -> QuestionnaireKind {
        QuestionnaireKind::RawTlx {
            scale_min: TLX_DEFAULT_MIN,
            scale_max: TLX_DEFAULT_MAX,
        }
    }

    #[test]
    fn sus_neutral_scores_fifty() {
        let scores = score_questionnaire(QuestionnaireKind::Sus, &[3.0; 10]).unwrap();
        assert_eq!(scores, QuestionnaireScores::Sus { score: 50.0 });
    }

    #[test]
    fn sus_extremes_hit_scale_ends() {
        let best: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 5.0 } else { 1.0 })
            .collect();
        let worst: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { 5.0 })
            .collect();
        assert_eq!(
            score_questionnaire(QuestionnaireKind::Sus, &best).unwrap(),
            QuestionnaireScores::Sus { score: 100.0 }
        );
        assert_eq!(
            score_questionnaire(QuestionnaireKind::Sus, &worst).unwrap(),
            QuestionnaireScores::Sus { score: 0.0 }
        );
    }

    #[test]
    fn ssq_all_zero_scores_zero() {
        let scores = score_questionnaire(QuestionnaireKind::Ssq, &[0.0; 16]).unwrap();
        assert_eq!(
            scores,
            QuestionnaireScores::Ssq {
                nausea: 0.0,
                oculomotor: 0.0,
                disorientation: 0.0,
                total: 0.0,
            }
        );
    }

    #[test]
    fn ssq_shared_items_count_toward_both_subscales() {
        // Item 9 (difficulty concentrating) sits on both the nausea and
        // oculomotor subscales; item 5 (difficulty focusing) on oculomotor
        // and disorientation.
        let mut responses = [0.0; 16];
        responses[8] = 3.0;
        let scores = score_questionnaire(QuestionnaireKind::Ssq, &responses).unwrap();
        assert_eq!(
            scores,
            QuestionnaireScores::Ssq {
                nausea: 3.0 * 9.54,
                oculomotor: 3.0 * 7.58,
                disorientation: 0.0,
                total: 6.0 * 3.74,
            }
        );
        let mut responses = [0.0; 16];
        responses[4] = 2.0;
        let scores = score_questionnaire(QuestionnaireKind::Ssq, &responses).unwrap();
        assert_eq!(
            scores,
            QuestionnaireScores::Ssq {
                nausea: 0.0,
                oculomotor: 2.0 * 7.58,
                disorientation: 2.0 * 13.92,
                total: 4.0 * 3.74,
            }
        );
    }

    #[test]
    fn ssq_ceiling_uses_seven_items_per_subscale() {
        let scores = score_questionnaire(QuestionnaireKind::Ssq, &[3.0; 16]).unwrap();
        assert_eq!(
            scores,
            QuestionnaireScores::Ssq {
                nausea: 21.0 * 9.54,
                oculomotor: 21.0 * 7.58,
                disorientation: 21.0 * 13.92,
                total: 63.0 * 3.74,
            }
        );
    }

    #[test]
    fn tlx_single_item_form_passes_through() {
        let scores = score_questionnaire(tlx_default(), &[6.0, 7.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert_eq!(
            scores,
            QuestionnaireScores::RawTlx {
                mental: 6.0,
                physical: 7.0,
                temporal: 3.0,
                performance: 2.0,
                effort: 5.0,
                frustration: 4.0,
            }
        );
    }

    #[test]
    fn tlx_multi_item_form_averages_each_subscale() {
        let responses = [
            6.0, 7.0, // mental
            7.0, 6.0, // physical
            3.0, 4.0, // temporal
            2.0, 3.0, // performance
            5.0, 6.0, // effort
            4.0, 1.0, // frustration
        ];
        let scores = score_questionnaire(tlx_default(), &responses).unwrap();
        assert_eq!(
            scores,
            QuestionnaireScores::RawTlx {
                mental: 6.5,
                physical: 6.5,
                temporal: 3.5,
                performance: 2.5,
                effort: 5.5,
                frustration: 2.5,
            }
        );
    }

    #[test]
    fn tlx_range_is_configurable() {
        let wide = QuestionnaireKind::RawTlx {
            scale_min: 0.0,
            scale_max: 100.0,
        };
        let responses = [55.0, 80.0, 20.0, 15.0, 60.0, 35.0];
        assert!(score_questionnaire(wide, &responses).is_ok());
        assert!(matches!(
            score_questionnaire(tlx_default(), &responses),
            Err(SurveyError::ItemRange {
                kind: "tlx",
                item: 1,
                ..
            })
        ));
    }

    #[test]
    fn ipq_sums_each_subscale() {
        let responses = [
            5.0, // general presence
            4.0, 3.0, 5.0, 4.0, 6.0, // spatial presence
            2.0, 3.0, 2.0, 4.0, // involvement
            1.0, 2.0, 3.0, 2.0, // realism
        ];
        let scores = score_questionnaire(QuestionnaireKind::Ipq, &responses).unwrap();
        assert_eq!(
            scores,
            QuestionnaireScores::Ipq {
                general: 5.0,
                spatial_presence: 22.0,
                involvement: 11.0,
                realism: 8.0,
            }
        );
    }

    #[test]
    fn ueq_means_land_on_shifted_scale() {
        let responses = [7.0, 6.0, 7.0, 6.0, 2.0, 1.0, 3.0, 2.0];
        let scores = score_questionnaire(QuestionnaireKind::UeqShort, &responses).unwrap();
        match scores {
            QuestionnaireScores::UeqShort {
                pragmatic,
                hedonic,
                overall,
            } => {
                assert_abs_diff_eq!(pragmatic, 2.5, epsilon = 1e-12);
                assert_abs_diff_eq!(hedonic, -2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(overall, 0.25, epsilon = 1e-12);
            }
            other => panic!("unexpected scores {other:?}"),
        }
        let all_neutral = score_questionnaire(QuestionnaireKind::UeqShort, &[4.0; 8]).unwrap();
        assert_eq!(
            all_neutral,
            QuestionnaireScores::UeqShort {
                pragmatic: 0.0,
                hedonic: 0.0,
                overall: 0.0,
            }
        );
    }

    #[test]
    fn single_item_instruments_pass_through() {
        assert_eq!(
            score_questionnaire(QuestionnaireKind::Borg, &[13.0]).unwrap(),
            QuestionnaireScores::Borg { rating: 13.0 }
        );
        assert_eq!(
            score_questionnaire(QuestionnaireKind::Enjoyment, &[6.0]).unwrap(),
            QuestionnaireScores::Enjoyment { rating: 6.0 }
        );
    }

    #[test]
    fn arity_errors_name_the_instrument() {
        let err = score_questionnaire(QuestionnaireKind::Sus, &[3.0; 9]).unwrap_err();
        assert_eq!(
            err,
            SurveyError::Arity {
                kind: "sus",
                expected: "10",
                got: 9,
            }
        );
        let err = score_questionnaire(tlx_default(), &[3.0; 7]).unwrap_err();
        assert_eq!(
            err,
            SurveyError::Arity {
                kind: "tlx",
                expected: "a multiple of 6",
                got: 7,
            }
        );
        let err = score_questionnaire(tlx_default(), &[]).unwrap_err();
        assert!(matches!(err, SurveyError::Arity { kind: "tlx", .. }));
    }

    #[test]
    fn range_errors_name_the_offending_item() {
        let mut responses = [2.0; 16];
        responses[11] = 4.0;
        let err = score_questionnaire(QuestionnaireKind::Ssq, &responses).unwrap_err();
        assert_eq!(
            err,
            SurveyError::ItemRange {
                kind: "ssq",
                item: 12,
                value: 4.0,
                min: 0.0,
                max: 3.0,
            }
        );
        assert_eq!(err.to_string(), "ssq item 12 is 4, outside 0..=3");
        let err = score_questionnaire(QuestionnaireKind::Borg, &[5.0]).unwrap_err();
        assert!(matches!(
            err,
            SurveyError::ItemRange {
                kind: "borg",
                item: 1,
                ..
            }
        ));
        let err = score_questionnaire(QuestionnaireKind::Sus, &[f64::NAN; 10]).unwrap_err();
        assert_eq!(
            err,
            SurveyError::NonFinite {
                kind: "sus",
                item: 1
            }
        );
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [
            QuestionnaireKind::Sus,
            QuestionnaireKind::Ssq,
            tlx_default(),
            QuestionnaireKind::Borg,
            QuestionnaireKind::Ipq,
            QuestionnaireKind::UeqShort,
            QuestionnaireKind::Enjoyment,
        ] {
            assert_eq!(QuestionnaireKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(matches!(
            QuestionnaireKind::parse("moodboard"),
            Err(SurveyError::UnknownKind(_))
        ));
    }
}
