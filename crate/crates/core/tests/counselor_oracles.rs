use doraemon_core::counselor::{
    advise, analyze, query_cost, sketch_mse, Candidate, CounselorConfig, ModelCache, Provenance,
    ShiftMonitor, TuneContext, DEFAULT_TAU,
};
use doraemon_core::index::{compute_error_bounds, train_staged, CostModel};
use doraemon_core::models::{ModelArch, TrainConfig};
use doraemon_core::workload::{gen_dataset, Preset};
use doraemon_core::SortedDataset;

fn config() -> CounselorConfig {
    CounselorConfig {
        search_space: Candidate::grid(&[ModelArch::LIN, ModelArch::NN4], &[50]),
        train: TrainConfig {
            epochs: 3,
            batch_size: 64,
            fine_tune_epochs: 2,
            ..TrainConfig::default()
        },
        ..CounselorConfig::default()
    }
}

fn assert_exact(index: &doraemon_core::StagedIndex, data: &SortedDataset) {
    for (pos, &k) in data.keys().iter().enumerate() {
        assert_eq!(index.lookup(data, k), Some(pos));
    }
}

#[test]
fn sketch_matches_exact_quantiles() {
    let data = gen_dataset(&Preset::D1.spec(100_000, 2)).unwrap();
    let k = 64;
    let s = analyze(&data.to_pairs(), k).unwrap();
    let keys = data.keys();
    let (lo, hi) = (keys[0] as f64, *keys.last().unwrap() as f64);
    for (i, &v) in s.values().iter().enumerate() {
        // Smallest key whose empirical CDF reaches i / K.
        let p = i as f64 / k as f64;
        let q = keys
            .iter()
            .enumerate()
            .find(|&(r, _)| (r + 1) as f64 / keys.len() as f64 >= p)
            .map(|(_, &key)| key)
            .unwrap();
        let want = (q as f64 - lo) / (hi - lo);
        assert!((v - want).abs() <= 1.0 / k as f64, "q{i}: {v} vs {want}");
    }
}

#[test]
fn presets_separate_and_reseeds_collide() {
    let sketches: Vec<_> = Preset::ALL
        .iter()
        .map(|p| analyze(&gen_dataset(&p.spec(100_000, 1)).unwrap().to_pairs(), 64).unwrap())
        .collect();
    for i in 0..4 {
        for j in i + 1..4 {
            let d = sketch_mse(&sketches[i], &sketches[j]).unwrap();
            assert!(
                d > 10.0 * DEFAULT_TAU,
                "{:?} vs {:?}: {d}",
                Preset::ALL[i],
                Preset::ALL[j]
            );
        }
        let again = analyze(
            &gen_dataset(&Preset::ALL[i].spec(100_000, 99))
                .unwrap()
                .to_pairs(),
            64,
        )
        .unwrap();
        assert!(sketch_mse(&sketches[i], &again).unwrap() <= DEFAULT_TAU);
    }
}

#[test]
fn advise_tunes_then_reuses() {
    let data = gen_dataset(&Preset::D2.spec(20_000, 3)).unwrap();
    let pairs = data.to_pairs();
    let costs = CostModel::Deterministic;
    let ctx = TuneContext {
        data: &data,
        probe: None,
        costs: &costs,
        finalize: false,
    };
    let mut cache = ModelCache::in_memory(8, DEFAULT_TAU);

    let cold = advise(&mut cache, &pairs, &config(), &ctx).unwrap();
    assert_eq!(cold.provenance, Provenance::AutoTuned);
    assert_eq!(cache.len(), 1);
    assert!(cold.tune.is_some());
    assert_exact(&cold.index, &data);

    let warm = advise(&mut cache, &pairs, &config(), &ctx).unwrap();
    assert_eq!(warm.provenance, Provenance::FineTuned);
    assert_eq!(warm.mse, 0.0);
    assert_eq!(warm.cache_id, cold.cache_id);
    assert_eq!(warm.index.arch(), cold.index.arch());
    assert_eq!(cache.len(), 1);
    assert_exact(&warm.index, &data);

    let other = gen_dataset(&Preset::D4.spec(20_000, 3)).unwrap();
    let ctx = TuneContext {
        data: &other,
        ..ctx
    };
    let miss = advise(&mut cache, &other.to_pairs(), &config(), &ctx).unwrap();
    assert_eq!(miss.provenance, Provenance::AutoTuned);
    assert_eq!(cache.len(), 2);
    assert_exact(&miss.index, &other);
}

#[test]
fn provenance_is_reproducible() {
    let run = || {
        let mut cache = ModelCache::in_memory(8, DEFAULT_TAU);
        let costs = CostModel::Deterministic;
        let mut out = Vec::new();
        for (p, seed) in [(Preset::D1, 1), (Preset::D1, 2), (Preset::D3, 1)] {
            let data = gen_dataset(&p.spec(10_000, seed)).unwrap();
            let ctx = TuneContext {
                data: &data,
                probe: None,
                costs: &costs,
                finalize: false,
            };
            let a = advise(&mut cache, &data.to_pairs(), &config(), &ctx).unwrap();
            out.push((a.provenance, a.mse.to_bits(), a.index.to_bytes()));
        }
        out
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(
        a.iter().map(|x| x.0).collect::<Vec<_>>(),
        vec![
            Provenance::AutoTuned,
            Provenance::FineTuned,
            Provenance::AutoTuned
        ]
    );
}

#[test]
fn cache_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(&Preset::D3.spec(10_000, 5)).unwrap();
    let costs = CostModel::Deterministic;
    let ctx = TuneContext {
        data: &data,
        probe: None,
        costs: &costs,
        finalize: false,
    };
    {
        let mut cache = ModelCache::open(dir.path(), 4, DEFAULT_TAU).unwrap();
        advise(&mut cache, &data.to_pairs(), &config(), &ctx).unwrap();
    }
    let mut cache = ModelCache::open(dir.path(), 4, DEFAULT_TAU).unwrap();
    let a = advise(&mut cache, &data.to_pairs(), &config(), &ctx).unwrap();
    assert_eq!(a.provenance, Provenance::FineTuned);
    assert_exact(&a.index, &data);
}

#[test]
fn swapped_distribution_trips_the_monitor_within_one_window() {
    let a = gen_dataset(&Preset::D1.spec(50_000, 1)).unwrap();
    let b = gen_dataset(&Preset::D3.spec(50_000, 1)).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 64,
        fine_tune_epochs: 1,
        ..TrainConfig::default()
    };
    let idx = compute_error_bounds(
        train_staged(&a.to_pairs(), ModelArch::NN8, 50, &cfg).unwrap(),
        &a,
    );
    let costs = CostModel::Deterministic;
    let window = 1000;
    let mut monitor = ShiftMonitor::new(window, 1.5);
    let step = 37;
    for i in 0..3 * window {
        let key = a.keys()[(i * step) % a.len()];
        let report = monitor.record(query_cost(&idx, &a, key, &costs));
        assert!(report.is_none_or(|r| !r.shifted));
    }
    let mut tripped = None;
    for i in 0..window {
        let key = b.keys()[(i * step) % b.len()];
        if let Some(r) = monitor.record(query_cost(&idx, &b, key, &costs)) {
            tripped = Some(r.shifted);
        }
    }
    assert_eq!(tripped, Some(true));
}
