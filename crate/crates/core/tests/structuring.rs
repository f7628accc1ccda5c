mod common;

use d2t_core::corpus::{linearize_ordered, DatasetInstance, InstanceMeta, Partition, Triple};
use d2t_core::structuring::{
    parse_structured, structure_majority, structure_majority_train, structure_random, StructModel,
};
use proptest::prelude::*;

fn chain(preds: &[&str]) -> Vec<Triple> {
    preds.iter().enumerate().map(|(i, p)| Triple::new("A", p, &format!("o{i}")).unwrap()).collect()
}

fn instance(preds: &[&str], targets: &[&str]) -> DatasetInstance {
    DatasetInstance {
        source: linearize_ordered(&chain(preds)).unwrap(),
        targets: targets.iter().map(|s| common::strings(s)).collect(),
        meta: InstanceMeta {
            eid: "x".into(),
            domain: "D".into(),
            seen: true,
            size: preds.len(),
        },
    }
}

#[test]
fn parse_structured_accepts_well_formed_brackets() {
    let (preds, p) = parse_structured(&common::strings("<SNT> a b </SNT> <SNT> c </SNT>")).unwrap();
    assert_eq!(preds, ["a", "b", "c"]);
    assert_eq!(p, Partition(vec![vec![0, 1], vec![2]]));
}

#[test]
fn parse_structured_rejects_malformed_input() {
    for bad in ["", "a b", "<SNT> a", "<SNT> </SNT>", "<SNT> a <SNT> b </SNT> </SNT>", "a <SNT> b </SNT>", "</SNT>"] {
        assert!(parse_structured(&common::strings(bad)).is_none(), "{bad}");
    }
}

#[test]
fn majority_returns_the_stored_partition_of_a_seen_sequence() {
    let ds = vec![instance(
        &["p", "q", "r"],
        &["<SNT> p q </SNT> <SNT> r </SNT>", "<SNT> p q </SNT> <SNT> r </SNT>", "<SNT> p </SNT> <SNT> q r </SNT>"],
    )];
    let m = structure_majority_train(&ds).unwrap();
    assert_eq!(structure_majority(&m, &chain(&["p", "q", "r"])), Partition(vec![vec![0, 1], vec![2]]));
}

#[test]
fn unseen_sequence_is_covered_by_stored_prefixes() {
    let ds = vec![instance(&["p", "q"], &["<SNT> p q </SNT>"]), instance(&["r", "s"], &["<SNT> r </SNT> <SNT> s </SNT>"])];
    let m = structure_majority_train(&ds).unwrap();
    let p = structure_majority(&m, &chain(&["p", "q", "r", "s", "t"]));
    assert_eq!(p, Partition(vec![vec![0, 1], vec![2], vec![3], vec![4]]));
}

#[test]
fn empty_model_gives_one_sentence_per_triple() {
    let p = structure_majority(&StructModel::default(), &chain(&["p", "q", "r"]));
    assert_eq!(p, Partition::singletons(3));
}

#[test]
fn malformed_training_target_is_rejected() {
    assert!(structure_majority_train(&[instance(&["p", "q"], &["<SNT> q p </SNT>"])]).is_err());
}

#[test]
fn model_save_load_roundtrip() {
    let ds = vec![instance(&["p", "q", "r"], &["<SNT> p </SNT> <SNT> q r </SNT>"])];
    let m = structure_majority_train(&ds).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("structure.jsonl");
    m.save(&path).unwrap();
    let back = StructModel::load(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(structure_majority(&back, &chain(&["q", "r"])), Partition(vec![vec![0, 1]]));
}

#[test]
fn random_partitions_cover_all_shapes() {
    let shapes: std::collections::BTreeSet<Vec<usize>> =
        (0..200).map(|s| structure_random(4, s).sizes()).collect();
    assert_eq!(shapes.len(), 8);
}

proptest! {
    #[test]
    fn random_partition_is_valid(n in 1usize..8, seed in any::<u64>()) {
        let p = structure_random(n, seed);
        prop_assert!(p.validate(n).is_ok());
        prop_assert_eq!(p, structure_random(n, seed));
    }

    #[test]
    fn majority_partition_is_valid(
        train in prop::collection::vec((prop::collection::vec("[p-s]", 1..5), any::<u64>()), 0..5),
        query in prop::collection::vec("[p-s]", 1..8),
    ) {
        let ds: Vec<DatasetInstance> = train
            .iter()
            .map(|(preds, seed)| {
                let p = structure_random(preds.len(), *seed);
                let mut target = Vec::new();
                for s in &p.0 {
                    target.push("<SNT>".to_owned());
                    target.extend(s.iter().map(|&i| preds[i].clone()));
                    target.push("</SNT>".to_owned());
                }
                let refs: Vec<&str> = preds.iter().map(String::as_str).collect();
                let mut inst = instance(&refs, &[]);
                inst.targets = vec![target];
                inst
            })
            .collect();
        let m = structure_majority_train(&ds).unwrap();
        let refs: Vec<&str> = query.iter().map(String::as_str).collect();
        prop_assert!(structure_majority(&m, &chain(&refs)).validate(query.len()).is_ok());
    }
}
