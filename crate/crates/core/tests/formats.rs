//! The on-disk formats as an external producer writes them.

use std::fs;

use audsae::data::{Assigned, EGEMAPS_NAMES};
use audsae::{DatasetManifest, FactorFamilyMap, FactorTable, Family, Split, Tensor};
use proptest::prelude::*;

/// ATNS bytes assembled field by field.
fn atns(shape: &[u64], data: &[f32]) -> Vec<u8> {
    let mut b = b"ATNS".to_vec();
    b.push(1);
    b.push(shape.len() as u8);
    b.extend([0, 0]);
    for d in shape {
        b.extend(d.to_le_bytes());
    }
    for v in data {
        b.extend(v.to_le_bytes());
    }
    b
}

#[test]
fn handwritten_atns_files_load() {
    let t = Tensor::from_bytes(&atns(&[2, 3], &[1., 2., 3., 4., 5., 6.])).unwrap();
    assert_eq!(t.shape(), &[2, 3]);
    assert_eq!(t.data(), &[1., 2., 3., 4., 5., 6.]);
    let v = Tensor::from_bytes(&atns(&[4], &[0.5, -0.0, 1e-30, 3.0])).unwrap();
    assert_eq!(v.shape(), &[4]);
    assert_eq!(v.to_bytes(), atns(&[4], &[0.5, -0.0, 1e-30, 3.0]));
    assert_eq!(t.to_bytes().len(), 8 + 16 + 24);
}

#[test]
fn extractor_style_corpus_loads_and_pools() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("emb")).unwrap();
    // Three utterances of different lengths, T x 4.
    let utts: [(&str, usize, usize, &str); 3] = [("a", 2, 0, "train"), ("b", 5, 1, "train"), ("c", 1, 1, "test")];
    for (id, t, _, _) in &utts {
        let data: Vec<f32> = (0..t * 4).map(|i| (i % 4) as f32 + *t as f32).collect();
        fs::write(dir.path().join(format!("emb/{id}.atns")), atns(&[*t as u64, 4], &data)).unwrap();
    }
    let entries: Vec<String> = utts
        .iter()
        .map(|(id, _, label, split)| {
            format!(r#"{{"id":"{id}","path":"emb/{id}.atns","label":{label},"split":"{split}"}}"#)
        })
        .collect();
    let json = format!(r#"{{"dim":4,"num_classes":2,"entries":[{}]}}"#, entries.join(","));
    let path = dir.path().join("layer6.json");
    fs::write(&path, json).unwrap();

    let m = DatasetManifest::load(&path).unwrap();
    let train = m.load_split(Split::Train).unwrap();
    assert_eq!(train.ids, ["a", "b"]);
    assert_eq!(train.labels, [0, 1]);
    assert_eq!(train.x.row(1), &[5., 6., 7., 8.]);
    let test = m.load_split(Split::Test).unwrap();
    assert_eq!(test.x.row(0), &[1., 2., 3., 4.]);

    // Wrong width is rejected at load time.
    fs::write(dir.path().join("emb/c.atns"), atns(&[1, 3], &[0.; 3])).unwrap();
    assert!(m.load_split(Split::Test).is_err());
}

#[test]
fn egemaps_table_maps_every_column() {
    let mut csv = String::from("id");
    for n in EGEMAPS_NAMES {
        csv.push(',');
        csv.push_str(n);
    }
    csv.push('\n');
    for r in 0..3 {
        csv.push_str(&format!("utt{r}"));
        for j in 0..EGEMAPS_NAMES.len() {
            csv.push_str(&format!(",{}", r as f64 + j as f64 / 100.0));
        }
        csv.push('\n');
    }
    let t = FactorTable::from_csv_str(&csv).unwrap();
    assert_eq!((t.num_rows(), t.num_factors()), (3, 88));
    let (assigned, unmapped) = FactorFamilyMap::egemaps().resolve(&t.names);
    assert!(unmapped.is_empty());
    let count = |f: Family| assigned.iter().filter(|a| **a == Assigned::Known(f)).count();
    let total: usize = Family::ALL.iter().map(|&f| count(f)).sum();
    assert_eq!(total, 88);
}

#[test]
fn handwritten_family_map() {
    let m = FactorFamilyMap::from_json(r#"{"jitterLocal": "quality", "F0_mean": "pitch"}"#).unwrap();
    let (a, unmapped) = m.resolve(&["F0_mean".into(), "zcr".into()]);
    assert_eq!(a, vec![Assigned::Known(Family::Pitch), Assigned::Other]);
    assert_eq!(unmapped, vec!["zcr".to_string()]);
    assert!(FactorFamilyMap::from_json(r#"{"x": "timbre"}"#).is_err());
    let back = FactorFamilyMap::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
}

fn id_strategy() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,8}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn manifest_parse_emit_parse_fixpoint(
        ids in prop::collection::btree_set(id_strategy(), 1..20),
        dim in 1usize..2000,
        classes in 1usize..12,
        seed in any::<u64>(),
    ) {
        let mut rng = audsae::numerics::Rng::new(seed);
        let entries: Vec<String> = ids.iter().map(|id| {
            let split = if rng.below(2) == 0 { "train" } else { "test" };
            format!(r#"{{"id":"{id}","path":"x/{id}.atns","label":{},"split":"{split}"}}"#, rng.below(classes as u64))
        }).collect();
        let json = format!(r#"{{"dim":{dim},"num_classes":{classes},"entries":[{}]}}"#, entries.join(","));
        let first = DatasetManifest::from_json(&json).unwrap();
        let emitted = first.to_json();
        let second = DatasetManifest::from_json(&emitted).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(emitted, second.to_json());
    }

    #[test]
    fn factor_csv_parse_emit_parse_fixpoint(
        rows in prop::collection::btree_map(id_strategy(), prop::collection::vec(-1e12f64..1e12, 3), 1..30),
    ) {
        let mut csv = String::from("id,F0_mean,loudness_peak,hnr\n");
        for (id, vals) in &rows {
            csv.push_str(id);
            for v in vals {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        let first = FactorTable::from_csv_str(&csv).unwrap();
        let emitted = first.to_csv_string();
        let second = FactorTable::from_csv_str(&emitted).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(emitted, second.to_csv_string());
    }
}
