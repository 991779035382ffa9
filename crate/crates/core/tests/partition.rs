mod common;

use std::collections::BTreeSet;

use antispoof::protocol::{partition_dataset, PartitionSpec, SpeakerSelection, Subset};
use antispoof::{Key, TrialEntry};
use common::Row;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn entries(rows: &[Row]) -> Vec<TrialEntry> {
    rows.iter()
        .map(|r| {
            let key = if r.bonafide { Key::Bonafide } else { Key::Spoof };
            TrialEntry::new(&r.speaker, &r.utt, &r.attack, key).unwrap()
        })
        .collect()
}

fn rows_for(r: &mut ChaCha8Rng, prefix: &str, speakers: usize, attacks: &[String], n: usize) -> Vec<Row> {
    (0..n)
        .map(|i| {
            let bonafide = r.gen_bool(0.3);
            Row {
                speaker: format!("{prefix}S{}", r.gen_range(0..speakers)),
                utt: format!("{prefix}_{i:04}"),
                attack: if bonafide { "-".into() } else { attacks.choose(r).unwrap().clone() },
                bonafide,
            }
        })
        .collect()
}

fn utts(e: &[TrialEntry]) -> BTreeSet<String> {
    e.iter().map(|e| e.utterance_id.clone()).collect()
}

#[test]
fn fuzzed_partitions_match_set_algebra() {
    let mut r = common::rng(42);
    let (mut ok, mut refused) = (0, 0);
    for case in 0..100 {
        let attacks: Vec<String> = (1..=r.gen_range(2..7)).map(|a| format!("A{a:02}")).collect();
        let (n_train_spk, n_train) = (r.gen_range(1..5), r.gen_range(10..80));
        let train = rows_for(&mut r, "T", n_train_spk, &attacks, n_train);
        let (n_dev_spk, n_dev) = (r.gen_range(2..8), r.gen_range(10..120));
        let dev = rows_for(&mut r, "D", n_dev_spk, &attacks, n_dev);
        let dev_attacks: Vec<String> = common::attack_set(&dev).into_iter().collect();
        if dev_attacks.is_empty() {
            continue;
        }
        let n_held = r.gen_range(1..=dev_attacks.len());
        let heldout: BTreeSet<String> = dev_attacks
            .choose_multiple(&mut r, n_held)
            .cloned()
            .collect();
        let dev_speakers: Vec<String> = common::speaker_set(&dev).into_iter().collect();
        let n_es = r.gen_range(1..=dev_speakers.len());
        let es: BTreeSet<String> = dev_speakers
            .choose_multiple(&mut r, n_es)
            .cloned()
            .collect();
        let spec = PartitionSpec {
            heldout_attacks: heldout.clone(),
            dev_es_speakers: SpeakerSelection::Explicit(es.clone()),
            seed: case,
        };
        let got = partition_dataset(&entries(&train), &entries(&dev), &spec);
        match (common::expected_partition(&train, &dev, &heldout, &es), got) {
            (Some(want), Ok(p)) => {
                ok += 1;
                for (s, w) in Subset::ALL.iter().zip(&want) {
                    assert_eq!(&utts(p.subset(*s)), w, "case {case}: {s}");
                }
                // spoof attacks of train_tr and dev_es are disjoint
                let tr_rows: Vec<&Row> = train.iter().filter(|x| want[0].contains(&x.utt)).collect();
                let es_rows: Vec<&Row> = dev.iter().filter(|x| want[2].contains(&x.utt)).collect();
                let lr_rows: Vec<&Row> = dev.iter().filter(|x| want[3].contains(&x.utt)).collect();
                assert!(common::attack_set(tr_rows).is_disjoint(&common::attack_set(es_rows.iter().copied())));
                assert!(common::speaker_set(es_rows).is_disjoint(&common::speaker_set(lr_rows.iter().copied())));
                assert_eq!(common::attack_set(lr_rows), common::attack_set(&dev));
                let train_back: BTreeSet<String> = want[0].union(&want[1]).cloned().collect();
                assert_eq!(train_back, common::utt_set(&train));
                assert!(want[0].is_disjoint(&want[1]));
                let dev_back: BTreeSet<String> = want[2].iter().chain(&want[3]).chain(&want[4]).cloned().collect();
                assert_eq!(dev_back, common::utt_set(&dev));
                let rows = p.manifest_csv().lines().count() - 1;
                assert_eq!(rows, train.len() + dev.len(), "manifest accounts for every row");
            }
            (None, Err(e)) => {
                refused += 1;
                assert_eq!(e.kind(), "config", "case {case}: {e}");
            }
            (want, got) => panic!("case {case}: oracle {:?} vs partition {:?}", want.is_some(), got.map(|_| ())),
        }
    }
    assert!(ok >= 30, "only {ok} usable cases ({refused} refused)");
}

#[test]
fn fraction_selection_is_seeded() {
    let mut r = common::rng(7);
    let attacks: Vec<String> = vec!["A01".into(), "A02".into()];
    let mut dev = Vec::new();
    for s in 0..6 {
        for (i, a) in ["-", "A01", "A02"].iter().enumerate() {
            dev.push(Row {
                speaker: format!("D{s}"),
                utt: format!("D{s}_{i}"),
                attack: a.to_string(),
                bonafide: *a == "-",
            });
        }
    }
    let train = rows_for(&mut r, "T", 3, &attacks, 40);
    let spec = |seed| PartitionSpec {
        heldout_attacks: ["A01".to_string()].into(),
        dev_es_speakers: SpeakerSelection::Fraction(0.5),
        seed,
    };
    let a = partition_dataset(&entries(&train), &entries(&dev), &spec(3)).unwrap();
    let b = partition_dataset(&entries(&train), &entries(&dev), &spec(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dev_es_speakers.len(), 3);
}
