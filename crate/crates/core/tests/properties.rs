use std::collections::HashSet;
use std::num::NonZeroUsize;

use proptest::prelude::*;

use forensic_kg::consolidate::{consolidate, RecordIndex};
use forensic_kg::entity::{normalize, EntityType};
use forensic_kg::evaluate::{compute_metrics, Tally, VerdictBook, VerdictState, VerdictSubmission};
use forensic_kg::flatten::{make_uid, parse_uid, unify, Denylist, FlatRecord, Pairs, UidParts};
use forensic_kg::graph::{EdgeType, HypothesisInstance};
use forensic_kg::refine::{apply_threshold, parse_refinement, RefinedArtifact};

fn entity_type() -> impl Strategy<Value = EntityType> {
    prop::sample::select(EntityType::ALL.to_vec())
}

fn artifact(uids: usize) -> impl Strategy<Value = RefinedArtifact> {
    (0..uids, entity_type(), "[a-z@. ]{1,12}", 1u8..=10).prop_map(|(u, t, v, c)| RefinedArtifact {
        uid: format!("0123abcd_t_{}", u + 1),
        entity_type: t,
        refined_value: v,
        confidence: c,
        engine: "p".into(),
    })
}

fn records(n: usize) -> Vec<FlatRecord> {
    (1..=n as u64)
        .map(|lid| FlatRecord {
            database: "x.db".into(),
            table: "t".into(),
            path: "/p/".into(),
            uid: format!("0123abcd_t_{lid}"),
            lid,
            pairs: Pairs::default(),
        })
        .collect()
}

fn sorted(mut v: Vec<RefinedArtifact>) -> Vec<RefinedArtifact> {
    v.sort_by(|a, b| {
        (&a.uid, a.entity_type, &a.refined_value, a.confidence).cmp(&(
            &b.uid,
            b.entity_type,
            &b.refined_value,
            b.confidence,
        ))
    });
    v
}

fn tally() -> impl Strategy<Value = Tally> {
    // Shaped like a matcher's output: the extraction fields derive from
    // tp/fp, and each (part, whole) pair has part <= whole.
    let pair = || (0u64..200).prop_flat_map(|w| (0..=w, Just(w)));
    (pair(), pair(), pair(), 0u64..200, 0u64..200, 0u64..200).prop_flat_map(
        |((cc, tc), (cn, tn), (ci, ta), tp, fp, fn_)| {
            (0..=tp, 0..=tp).prop_map(move |(exact, ctx)| Tally {
                true_extractions: tp,
                total_potential_extractions: tp + fp,
                tp,
                fp,
                fn_,
                correctly_consolidated: cc,
                total_consolidated: tc,
                correct_connections: cn,
                total_connections: tn,
                exact_value_matches: exact,
                artifacts_matching_context: ctx,
                artifacts_with_intact_custody: ci,
                total_artifacts: ta,
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn uid_is_deterministic_and_parses_back(
        device in "[ -~]{1,16}",
        path in "/[a-z0-9./_]{0,30}/",
        db in "[A-Za-z0-9._-]{1,16}",
        table in "[A-Za-z0-9_]{1,16}",
        lid in 1u64..=u64::MAX,
    ) {
        let parts = UidParts { device_id: &device, file_path: &path, database_name: &db, table_name: &table, lid };
        let uid = make_uid(&parts).unwrap();
        prop_assert_eq!(&uid, &make_uid(&parts).unwrap());
        let back = parse_uid(&uid).unwrap();
        prop_assert_eq!(back.table, table.as_str());
        prop_assert_eq!(back.lid, lid);
    }

    #[test]
    fn parse_is_total(raw in "(\\PC|\n){0,400}") {
        let valid: HashSet<String> = ["0123abcd_t_1".to_string()].into_iter().collect();
        let (a, w) = parse_refinement(&raw, &valid, "p");
        prop_assert_eq!(a.len() + w.len(), raw.lines().count());
    }

    #[test]
    fn threshold_is_monotone(arts in prop::collection::vec(artifact(5), 0..40), k in 1u8..10) {
        let lo = apply_threshold(&arts, k).unwrap();
        let hi = apply_threshold(&arts, k + 1).unwrap();
        prop_assert!(hi.len() <= lo.len());
        prop_assert!(hi.iter().all(|a| lo.contains(a)));
        prop_assert!(lo.iter().all(|a| a.confidence >= k));
    }

    #[test]
    fn consolidation_conserves_and_ignores_order(
        arts in prop::collection::vec(artifact(6), 0..40).prop_shuffle(),
        seed in any::<u64>(),
    ) {
        let index = RecordIndex::new(records(6)).unwrap();
        let out = consolidate(&arts, &index).unwrap();
        let flat: Vec<RefinedArtifact> = out.iter().flat_map(|r| r.artifacts.clone()).collect();
        prop_assert_eq!(sorted(flat), sorted(arts.clone()));
        for r in &out {
            prop_assert!(r.artifacts.iter().all(|a| a.uid == r.uid));
        }
        let mut rotated = arts.clone();
        if !rotated.is_empty() {
            let n = (seed % rotated.len() as u64) as usize;
            rotated.rotate_left(n);
        }
        let again = consolidate(&rotated, &index).unwrap();
        prop_assert_eq!(out.len(), again.len());
        for (a, b) in out.iter().zip(&again) {
            prop_assert_eq!(&a.uid, &b.uid);
            prop_assert_eq!(sorted(a.artifacts.clone()), sorted(b.artifacts.clone()));
        }
    }

    #[test]
    fn metrics_are_bounded_and_f1_is_a_harmonic_mean(t in tally()) {
        let m = compute_metrics(&t);
        for (_, v) in m.named() {
            if let Some(h) = v.hundredths() {
                prop_assert!(h <= 10_000);
            }
        }
        prop_assert_eq!(m.FAF1.is_defined(), t.tp > 0);
        if t.tp > 0 {
            // Exact rationals: F1 = 2tp/(2tp+fp+fn), P = tp/(tp+fp), R = tp/(tp+fn).
            let (tp, fp, fn_) = (t.tp as u128, t.fp as u128, t.fn_ as u128);
            let f1_num = 2 * tp;
            let f1_den = 2 * tp + fp + fn_;
            // (P+R)/2 = tp(2tp+fp+fn) / (2(tp+fp)(tp+fn))
            let mean_num = tp * (2 * tp + fp + fn_);
            let mean_den = 2 * (tp + fp) * (tp + fn_);
            let lhs = f1_num * mean_den;
            let rhs = mean_num * f1_den;
            prop_assert!(lhs <= rhs);
            prop_assert_eq!(lhs == rhs, fp == fn_);
        }
    }

    #[test]
    fn metrics_are_pure(t in tally()) {
        prop_assert_eq!(compute_metrics(&t), compute_metrics(&t));
    }

    #[test]
    fn verdict_counts_partition_instances(
        n in 0usize..30,
        ops in prop::collection::vec((0usize..40, 0u8..3, any::<bool>()), 0..80),
    ) {
        let instances: Vec<HypothesisInstance> = (0..n)
            .map(|i| HypothesisInstance {
                edge_id: format!("e{i}"),
                uid: format!("u{i}"),
                type_pair: EdgeType::TimestampApp,
                values: ["t".into(), "a".into()],
                hypothesis: String::new(),
            })
            .collect();
        let mut book = VerdictBook::new(&instances);
        for (i, v, note) in ops {
            let verdict = [VerdictState::Pending, VerdictState::Valid, VerdictState::Invalid][v as usize];
            let _ = book.apply(
                &VerdictSubmission {
                    edge_id: format!("e{i}"),
                    uid: format!("u{i}"),
                    verdict,
                    reviewer: "r".into(),
                    note: if note { "why".into() } else { String::new() },
                },
                "t",
            );
            prop_assert_eq!(book.counts().total(), n as u64);
        }
    }

    #[test]
    fn normalization_is_idempotent(t in entity_type(), v in "[ -~]{0,24}") {
        if let Ok(once) = normalize(t, &v) {
            prop_assert_eq!(normalize(t, &once).unwrap(), once);
        }
    }

    #[test]
    fn sampling_keeps_every_kth_allowed_record(n in 0usize..200, k in 1usize..10) {
        let recs = records(n);
        let kept = unify(recs.clone(), NonZeroUsize::new(k).unwrap(), &Denylist::empty());
        prop_assert_eq!(kept.len(), n.div_ceil(k));
        for (i, r) in kept.iter().enumerate() {
            prop_assert_eq!(r.lid, (i * k + 1) as u64);
        }
    }
}
