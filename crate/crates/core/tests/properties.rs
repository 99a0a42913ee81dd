//! Property tests for the invariants the rest of the system leans on:
//! codec round-trips, mapping continuity and bounds, count conservation in
//! the device emulator, and the agreement of the exact Wilcoxon
//! distribution with brute-force enumeration.

use loco_core::device::{CountAccumulator, DeviceCalibration, InputTrace, TraceKey, TraceMode};
use loco_core::mapping::{clamp_step, deadzone_rescale, shortest_angle_deg};
use loco_core::sim::wrap_heading;
use loco_core::stats::{paired_t, wilcoxon_signed_rank};
use loco_core::survey::{score_questionnaire, QuestionnaireKind, QuestionnaireScores};
use loco_core::wire::{EncoderFrame, FRAME_LEN, HANDLEBAR_RAW_MAX};
use proptest::prelude::*;

fn frame_strategy() -> impl Strategy<Value = EncoderFrame> {
    (
        any::<u32>(),
        any::<u32>(),
        0u16..=HANDLEBAR_RAW_MAX,
        any::<i16>(),
        any::<u8>(),
    )
        .prop_map(
            |(seq, device_time_ms, handlebar_raw, treadmill_delta, flags)| EncoderFrame {
                seq,
                device_time_ms,
                handlebar_raw,
                treadmill_delta,
                flags,
            },
        )
}

fn trace_strategy() -> impl Strategy<Value = InputTrace> {
    (
        prop::collection::vec((0.05f64..2.0, -8.0f64..8.0, -120.0f64..120.0), 2..8),
        any::<bool>(),
    )
        .prop_map(|(segments, step)| {
            let mut t = 0.0;
            let mut keys = Vec::new();
            for (duration, speed, handlebar) in segments {
                keys.push(TraceKey {
                    time_s: t,
                    handlebar_deg: handlebar,
                    belt_speed_mps: speed,
                });
                t += duration;
            }
            let mode = if step {
                TraceMode::Step
            } else {
                TraceMode::Linear
            };
            InputTrace::new(mode, keys).unwrap()
        })
}

/// Values on a 0.25 grid are exactly representable, and so are their sums
/// and differences at these magnitudes, which lets the symmetry properties
/// assert bitwise equality instead of tolerances.
fn quarter_grid_pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((-200i32..=200, -200i32..=200), 3..=20).prop_map(|pairs| {
        pairs
            .into_iter()
            .map(|(a, b)| (a as f64 * 0.25, b as f64 * 0.25))
            .unzip()
    })
}

/// Independent implementation of the exact two-tailed p: enumerate every
/// sign assignment over the midranks and count those whose smaller rank sum
/// is at most the observed one.
fn brute_force_min_sum_p(diffs: &[f64]) -> f64 {
    let nz: Vec<f64> = diffs.iter().copied().filter(|&v| v != 0.0).collect();
    let m = nz.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| nz[i].abs().partial_cmp(&nz[j].abs()).unwrap());
    let mut ranks = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j < m && nz[order[j]].abs() == nz[order[i]].abs() {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for k in i..j {
            ranks[order[k]] = midrank;
        }
        i = j;
    }
    let total: f64 = ranks.iter().sum();
    let observed_plus: f64 = ranks
        .iter()
        .zip(&nz)
        .filter(|(_, &v)| v > 0.0)
        .map(|(r, _)| r)
        .sum();
    let observed = observed_plus.min(total - observed_plus);
    // Rank sums are multiples of one half, so the comparisons are exact.
    let favorable = (0u64..1 << m)
        .filter(|mask| {
            let s_plus: f64 = (0..m)
                .filter(|&k| mask >> k & 1 == 1)
                .map(|k| ranks[k])
                .sum();
            s_plus.min(total - s_plus) <= observed
        })
        .count();
    favorable as f64 / (1u64 << m) as f64
}

proptest! {
    #[test]
    fn wire_frames_round_trip(frame in frame_strategy()) {
        let bytes = frame.encode().unwrap();
        prop_assert_eq!(EncoderFrame::decode(&bytes).unwrap(), frame);
    }

    #[test]
    fn wire_decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..=2 * FRAME_LEN)) {
        let _ = EncoderFrame::decode(&bytes);
    }

    #[test]
    fn deadzone_is_odd_bounded_and_dead(x in -1.0f64..=1.0, dz in 0.0f64..0.5) {
        let y = deadzone_rescale(x, dz);
        prop_assert!(y.abs() <= 1.0);
        prop_assert_eq!(deadzone_rescale(-x, dz), -y);
        if x.abs() <= dz {
            prop_assert_eq!(y, 0.0);
        }
    }

    #[test]
    fn deadzone_is_monotone(x1 in -1.0f64..=1.0, x2 in -1.0f64..=1.0, dz in 0.0f64..0.5) {
        let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        prop_assert!(deadzone_rescale(lo, dz) <= deadzone_rescale(hi, dz));
    }

    #[test]
    fn clamp_step_respects_rate_and_direction(
        current in -10.0f64..=10.0,
        target in -10.0f64..=10.0,
        limit in 0.01f64..=10.0,
    ) {
        let dt = 0.01;
        let next = clamp_step(current, target, limit, dt);
        prop_assert!((next - current).abs() <= limit * dt + 1e-12);
        prop_assert!(next >= current.min(target) - 1e-12);
        prop_assert!(next <= current.max(target) + 1e-12);
    }

    #[test]
    fn heading_wraps_stay_in_range(h in -1.0e6f64..=1.0e6) {
        let wrapped = wrap_heading(h);
        prop_assert!((0.0..360.0).contains(&wrapped));
        let turns = (h - wrapped) / 360.0;
        prop_assert!((turns - turns.round()).abs() < 1e-6);

        let shortest = shortest_angle_deg(h);
        prop_assert!(shortest > -180.0 && shortest <= 180.0);
        let turns = (h - shortest) / 360.0;
        prop_assert!((turns - turns.round()).abs() < 1e-6);
    }

    #[test]
    fn belt_counts_conserve_distance(trace in trace_strategy()) {
        let calibration = DeviceCalibration::default();
        let dt = calibration.sample_dt();
        let samples = (trace.duration_s() / dt).ceil() as usize + 10;
        let mut accumulator = CountAccumulator::new();
        let mut emitted: i64 = 0;
        for i in 0..samples {
            let t = i as f64 * dt;
            let meters = trace.integrate_belt(t, t + dt);
            emitted += i64::from(accumulator.advance(meters, calibration.counts_per_meter));
        }
        let exact = calibration.counts_per_meter * trace.integrate_belt(0.0, samples as f64 * dt);
        prop_assert!(
            (emitted as f64 - exact).abs() <= 1.0,
            "emitted {} vs exact {}",
            emitted,
            exact
        );
    }

    #[test]
    fn wilcoxon_exact_p_matches_enumeration(
        raw in prop::collection::vec(-4i32..=4, 1..=10),
    ) {
        prop_assume!(raw.iter().any(|&v| v != 0));
        let diffs: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
        let zeros = vec![0.0; diffs.len()];
        let result = wilcoxon_signed_rank(&diffs, &zeros).unwrap();
        prop_assert!(result.exact);
        prop_assert_eq!(result.p, brute_force_min_sum_p(&diffs));
        let m = result.n_used as f64;
        prop_assert_eq!(result.r_plus + result.r_minus, m * (m + 1.0) / 2.0);
    }

    #[test]
    fn paired_t_is_antisymmetric((a, b) in quarter_grid_pairs()) {
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assume!(diffs.windows(2).any(|w| w[0] != w[1]));
        let forward = paired_t(&a, &b).unwrap();
        let backward = paired_t(&b, &a).unwrap();
        prop_assert_eq!(forward.t, -backward.t);
        prop_assert_eq!(forward.cohen_d, -backward.cohen_d);
        prop_assert_eq!(forward.p, backward.p);
        prop_assert_eq!(forward.df, backward.df);
    }

    #[test]
    fn paired_tests_are_shift_invariant(
        (a, b) in quarter_grid_pairs(),
        shift_q in -200i32..=200,
    ) {
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        prop_assume!(diffs.windows(2).any(|w| w[0] != w[1]));
        let c = f64::from(shift_q) * 0.25;
        let a2: Vec<f64> = a.iter().map(|x| x + c).collect();
        let b2: Vec<f64> = b.iter().map(|x| x + c).collect();

        let t1 = paired_t(&a, &b).unwrap();
        let t2 = paired_t(&a2, &b2).unwrap();
        prop_assert_eq!(t1, t2);

        let w1 = wilcoxon_signed_rank(&a, &b).unwrap();
        let w2 = wilcoxon_signed_rank(&a2, &b2).unwrap();
        prop_assert_eq!(w1, w2);
    }

    #[test]
    fn sus_scores_stay_on_scale(items in prop::collection::vec(1.0f64..=5.0, 10)) {
        match score_questionnaire(QuestionnaireKind::Sus, &items).unwrap() {
            QuestionnaireScores::Sus { score } => {
                prop_assert!((0.0..=100.0).contains(&score));
            }
            other => prop_assert!(false, "unexpected scores {:?}", other),
        }
    }

    #[test]
    fn ssq_subscales_stay_non_negative(items in prop::collection::vec(0.0f64..=3.0, 16)) {
        match score_questionnaire(QuestionnaireKind::Ssq, &items).unwrap() {
            QuestionnaireScores::Ssq {
                nausea,
                oculomotor,
                disorientation,
                total,
            } => {
                for value in [nausea, oculomotor, disorientation, total] {
                    prop_assert!(value >= 0.0);
                }
                prop_assert!(nausea <= 21.0 * 9.54);
                prop_assert!(oculomotor <= 21.0 * 7.58);
                prop_assert!(disorientation <= 21.0 * 13.92);
                prop_assert!(total <= 63.0 * 3.74);
            }
            other => prop_assert!(false, "unexpected scores {:?}", other),
        }
    }
}
