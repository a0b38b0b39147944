mod common;

use std::collections::BTreeSet;

use aec_core::data::dataset::{load_split, load_training_set};
use aec_core::data::{
    build_dataset, read_manifest, spec_augment, EchoStyle, Channel, SpecAugmentConfig, Split, SplitCounts, Stem,
};
use aec_core::data::specaug::augment_inputs;
use aec_core::room::RoomConstraints;
use aec_core::signal::{LogMelFrames, MelConfig};
use common::{small_pool, small_set};
use ndarray::Array2;
use proptest::prelude::*;

fn db(a: f64, b: f64) -> f64 {
    10.0 * (a / b).log10()
}

fn ramp(frames: usize, bins: usize) -> LogMelFrames {
    LogMelFrames {
        frames: Array2::from_shape_fn((frames, bins), |(i, j)| 1.0 + (i * bins + j) as f32 * 1e-3),
        mel_config: MelConfig {
            num_mels: bins,
            ..MelConfig::default()
        },
    }
}

/// Columns and rows entirely replaced by the floor value.
fn masked(out: &LogMelFrames) -> (usize, usize) {
    let floor = out.mel_config.floor_value();
    let (t, m) = out.frames.dim();
    let cols = (0..m).filter(|&j| (0..t).all(|i| out.frames[[i, j]] == floor)).count();
    let rows = (0..t).filter(|&i| (0..m).all(|j| out.frames[[i, j]] == floor)).count();
    (cols, rows)
}

#[test]
fn mixes_hit_requested_ratios() {
    let set = small_set(3, SplitCounts { train: 12, dev: 3, test: 9 }, 24, true);
    for (rec, ex) in &set {
        let s = ex.stem(Stem::ReverberantTarget).unwrap().power();
        let n = ex.stem(Stem::Noise).unwrap().power();
        let e = ex.stem(Stem::EchoedReference).unwrap().power();
        assert!((db(s, n) - rec.tnr_db).abs() <= 0.1, "{}: tnr {} vs {}", rec.id, db(s, n), rec.tnr_db);
        assert!((db(s, e) - rec.terr_db).abs() <= 0.1, "{}: terr {} vs {}", rec.id, db(s, e), rec.terr_db);
        assert!(rec.tnr_db > 0.0 && rec.tnr_db < 20.0);
        if rec.split == Split::Train {
            assert!(rec.terr_db > -20.0 && rec.terr_db < 0.0);
        } else {
            assert!([0.0, -5.0, -10.0].contains(&rec.terr_db));
        }
        let probe = ex.stem(Stem::Probe).unwrap().samples();
        let residual = ex.stem(Stem::Residual).unwrap().samples();
        let echo = ex.stem(Stem::EchoedReference).unwrap().samples();
        for i in 0..probe.len() {
            assert!((probe[i] - residual[i] - echo[i]).abs() < 1e-5);
        }
    }
    let eval_levels: BTreeSet<i64> = set.iter().filter(|(r, _)| r.split.is_eval()).map(|(r, _)| r.terr_db as i64).collect();
    assert_eq!(eval_levels, [-10, -5, 0].into_iter().collect());
}

#[test]
fn splits_share_no_sources_or_rooms() {
    let set = small_set(5, SplitCounts { train: 10, dev: 3, test: 6 }, 24, false);
    let rooms = |s: Split| -> BTreeSet<String> { set.iter().filter(|(r, _)| r.split == s).map(|(r, _)| r.room_id.clone()).collect() };
    assert!(rooms(Split::Train).is_disjoint(&rooms(Split::Test)));
    for (r, _) in set.iter().filter(|(r, _)| r.split.is_eval()) {
        assert_eq!(r.echo_style, EchoStyle::Replayed);
    }
}

#[test]
fn same_seed_same_checksum() {
    let pool = small_pool(4);
    let plan = aec_core::data::DatasetPlan {
        counts: SplitCounts { train: 4, dev: 1, test: 3 },
        ..Default::default()
    };
    let settings = aec_core::data::SynthSettings {
        mel: common::mel(24),
        ..Default::default()
    };
    let c = RoomConstraints::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = build_dataset(&pool, &plan, &c, &settings, 8, "h", a.path()).unwrap();
    let mb = build_dataset(&pool, &plan, &c, &settings, 8, "h", b.path()).unwrap();
    assert_eq!(ma.checksum(), mb.checksum());
    let read = read_manifest(a.path()).unwrap();
    assert_eq!(read.checksum(), ma.checksum());
    let other = tempfile::tempdir().unwrap();
    let mc = build_dataset(&pool, &plan, &c, &settings, 9, "h", other.path()).unwrap();
    assert_ne!(ma.checksum(), mc.checksum());

    let test = load_split(a.path(), &read, Split::Test, true).unwrap();
    assert_eq!(test.len(), 3);
    let mem = aec_core::data::synthesize(&pool, &plan, &c, &settings, 8).unwrap();
    let mem_test: Vec<_> = mem.iter().filter(|(r, _)| r.split == Split::Test).collect();
    for (disk, (_, m)) in test.iter().zip(mem_test) {
        assert_eq!(disk.id, m.id);
        assert_eq!(disk.probe_feats.frames, m.probe_feats.frames);
        assert_eq!(disk.target_feats.frames, m.target_feats.frames);
    }
    let all = load_training_set(a.path(), &read, true).unwrap();
    let replayed = load_training_set(a.path(), &read, false).unwrap();
    assert_eq!(all.len(), 4);
    let n_rep = read.split(Split::Train).filter(|r| r.echo_style == EchoStyle::Replayed).count();
    assert_eq!(replayed.len(), n_rep);
}

#[test]
fn specaugment_budgets_over_many_draws() {
    let cfg = SpecAugmentConfig::default();
    let feats = ramp(100, 80);
    for seed in 0..10_000u64 {
        let (freq, time) = aec_core::data::specaug::draw_masks(&cfg, 100, 80, seed);
        assert!(freq.len() <= 2 && time.len() <= 10);
        assert!(freq.iter().map(|s| s.width).sum::<usize>() <= 27);
        assert!(time.iter().map(|s| s.width).sum::<usize>() <= 5);
        if seed % 100 == 0 {
            let (cols, rows) = masked(&spec_augment(&feats, &cfg, seed));
            assert!(cols <= 27, "cols {cols}");
            assert!(rows <= 5, "rows {rows}");
        }
    }
}

#[test]
fn specaugment_channel_selection() {
    let p = ramp(60, 24);
    let r = ramp(60, 24);
    let cfg = SpecAugmentConfig::default();
    let (po, ro) = augment_inputs(&p, &r, &cfg, 1);
    assert_eq!(po.frames, p.frames);
    let changed = (0..20).any(|s| augment_inputs(&p, &r, &cfg, s).1.frames != r.frames);
    assert!(changed);
    let _ = ro;
    let both = SpecAugmentConfig {
        channels: [Channel::Probe, Channel::Reference].into_iter().collect(),
        ..cfg
    };
    assert!((0..20).any(|s| augment_inputs(&p, &r, &both, s).0.frames != p.frames));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_budget_is_identity(seed in any::<u64>(), frames in 1usize..200, bins in 1usize..80) {
        let feats = ramp(frames, bins);
        let out = spec_augment(&feats, &SpecAugmentConfig::disabled(), seed);
        prop_assert_eq!(out, feats.clone());
        let zero = SpecAugmentConfig { max_total_freq_bins: 0, max_total_time_fraction: 0.0, ..SpecAugmentConfig::default() };
        prop_assert_eq!(spec_augment(&feats, &zero, seed).frames, feats.frames);
    }

    #[test]
    fn masks_stay_in_bounds(seed in any::<u64>(), frames in 1usize..300, bins in 1usize..80) {
        let cfg = SpecAugmentConfig::default();
        let (freq, time) = aec_core::data::specaug::draw_masks(&cfg, frames, bins, seed);
        prop_assert!(freq.iter().all(|s| s.start + s.width <= bins));
        prop_assert!(time.iter().all(|s| s.start + s.width <= frames));
        prop_assert!(time.iter().map(|s| s.width).sum::<usize>() <= cfg.time_budget(frames));
    }
}
