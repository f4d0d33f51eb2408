mod common;

use common::{random_trajectory, synthetic_instance, Cell, TableExecutor};
use harness::curate::{
    export_sft, filter_entry, normalize_actions, render_sample, CorpusEntry, ExportFormat,
    StageLabel,
};
use harness::eval::{
    mean_pass_at_k, pass_at_k, percent_of, run_iterative, DriverOptions, EvalReport,
    IterationSchedule, PassAtKQuery, RetryPredicate,
};
use harness::model::{
    deserialize_event_log, serialize_event_log, AttemptStatus, Resolved, TaskInstance,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn trajectory_from(seed: u64) -> harness::model::Trajectory {
    random_trajectory(&mut ChaCha8Rng::seed_from_u64(seed), &format!("t{seed}"))
}

proptest! {
    #[test]
    fn pass_at_k_is_monotone_in_k_and_c(n in 1u32..30, c in 0u32..30, k in 1u32..30) {
        prop_assume!(c <= n && k < n);
        let q = |c, k| pass_at_k(PassAtKQuery { n, c, k }).unwrap();
        prop_assert!((0.0..=1.0).contains(&q(c, k)));
        prop_assert!(q(c, k + 1) >= q(c, k) - 1e-15);
        if c < n {
            prop_assert!(q(c + 1, k) >= q(c, k) - 1e-15);
        }
    }

    #[test]
    fn pass_at_1_is_success_fraction(n in 1u32..50, c in 0u32..50) {
        prop_assume!(c <= n);
        let v = pass_at_k(PassAtKQuery { n, c, k: 1 }).unwrap();
        prop_assert!((v - c as f64 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn mean_pass_at_k_matches_row_average(rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 1..20), k in 1u32..=4) {
        let got = mean_pass_at_k(&rows, k).unwrap();
        let want: f64 = rows
            .iter()
            .map(|r| {
                let c = r.iter().filter(|b| **b).count() as u32;
                pass_at_k(PassAtKQuery { n: 4, c, k }).unwrap()
            })
            .sum::<f64>()
            / rows.len() as f64;
        prop_assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn percent_of_rounds_half_up(count in 0usize..10_000, extra in 1usize..10_000) {
        let total = count + extra;
        let text = percent_of(count, total, 1);
        // Tenths of a percent, rounded half up, in exact integer arithmetic.
        let tenths = (count * 2000 + total) / (2 * total);
        prop_assert_eq!(text, format!("{}.{}", tenths / 10, tenths % 10));
    }

    #[test]
    fn event_log_round_trips(seed in any::<u64>(), attempt in 1u32..5) {
        let t = trajectory_from(seed);
        let bytes = serialize_event_log(&t, attempt).unwrap();
        let (header, back) = deserialize_event_log(&bytes).unwrap();
        prop_assert_eq!(header.attempt_index, attempt);
        prop_assert_eq!(back, t);
    }

    #[test]
    fn torn_final_line_is_dropped(seed in any::<u64>(), cut in 1usize..40) {
        let t = trajectory_from(seed);
        let bytes = serialize_event_log(&t, 1).unwrap();
        let body_end = bytes.len() - 1;
        let last_start = bytes[..body_end].iter().rposition(|b| *b == b'\n').unwrap() + 1;
        let torn_at = (last_start + cut).min(body_end - 1).max(last_start + 1);
        let (_, back) = deserialize_event_log(&bytes[..torn_at]).unwrap();
        prop_assert!(back.events.len() + 1 >= t.events.len());
        prop_assert_eq!(&back.events[..], &t.events[..back.events.len()]);
    }

    #[test]
    fn export_round_trips_actions(seed in any::<u64>()) {
        let t = trajectory_from(seed);
        for format in [ExportFormat::FunctionCalling, ExportFormat::XmlPseudoScaffold] {
            let sample = render_sample("x", &t, StageLabel::Stage2, format).unwrap();
            prop_assert_eq!(sample.actions().unwrap(), normalize_actions(&t.actions()));
            let line = serde_json::to_string(&sample).unwrap();
            let back: harness::curate::SftSample = serde_json::from_str(&line).unwrap();
            prop_assert_eq!(back, sample);
        }
    }

    #[test]
    fn export_is_idempotent_under_duplication(seeds in prop::collection::vec(0u64..50, 1..10)) {
        let ts: Vec<(String, harness::model::Trajectory)> =
            seeds.iter().map(|s| (format!("t{s}"), trajectory_from(*s))).collect();
        let once = export_sft(ts.iter().map(|(id, t)| (id.as_str(), t, StageLabel::Stage1)), ExportFormat::XmlPseudoScaffold);
        let twice = export_sft(
            ts.iter().chain(ts.iter()).map(|(id, t)| (id.as_str(), t, StageLabel::Stage1)),
            ExportFormat::XmlPseudoScaffold,
        );
        prop_assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn stage2_implies_stage1(
        seed in any::<u64>(),
        status in 0usize..4,
        empty in any::<bool>(),
        resolved in prop::option::of(any::<bool>()),
        max in prop::option::of(1u32..10),
    ) {
        let statuses = [
            AttemptStatus::Finished,
            AttemptStatus::IterationLimit,
            AttemptStatus::AgentError,
            AttemptStatus::InfraError,
        ];
        let entry = CorpusEntry {
            trajectory_id: "x".into(),
            trajectory: trajectory_from(seed),
            attempt: common::summary("x", 1, 0.0, statuses[status], Resolved::NotEvaluated, empty),
            resolved,
            max_iterations: max,
        };
        let v = filter_entry(&entry);
        prop_assert!(!v.stage2_pass || v.stage1_pass);
        prop_assert_eq!(v.stage1_pass, v.stage1_reasons.is_empty());
        prop_assert_eq!(v.stage2_pass, v.stage2_reasons.is_empty());
    }

    #[test]
    fn resolved_instances_never_rerun(
        cells in prop::collection::vec(prop::collection::vec((0usize..4, 0usize..3, any::<bool>()), 3), 1..15),
        policy in 0usize..3,
    ) {
        let statuses = [
            AttemptStatus::Finished,
            AttemptStatus::IterationLimit,
            AttemptStatus::AgentError,
            AttemptStatus::InfraError,
        ];
        let verdicts = [Resolved::Resolved, Resolved::Unresolved, Resolved::NotEvaluated];
        let suite: Vec<TaskInstance> =
            (0..cells.len()).map(|i| synthetic_instance(&format!("i{i}"))).collect();
        let mut table: BTreeMap<(String, u32), Cell> = BTreeMap::new();
        for (inst, row) in suite.iter().zip(&cells) {
            for (a, (s, r, e)) in row.iter().enumerate() {
                table.insert((inst.id.clone(), a as u32 + 1), (statuses[*s], verdicts[*r], *e));
            }
        }
        let schedule = IterationSchedule {
            temperatures: vec![0.0, 0.1, 0.1],
            retry_predicate: RetryPredicate::ALL[policy],
        };
        let outcomes =
            run_iterative(&suite, &TableExecutor(table), &schedule, &DriverOptions::default()).unwrap();
        for o in &outcomes {
            for pair in o.attempts.windows(2) {
                prop_assert!(!pair[0].resolved.is_resolved());
                prop_assert_eq!(pair[1].attempt_index, pair[0].attempt_index + 1);
            }
        }
        let report = EvalReport::from_outcomes(&outcomes, &schedule.temperatures);
        prop_assert_eq!(report.resolved, report.iterations.last().unwrap().resolved_cumulative);
    }
}
