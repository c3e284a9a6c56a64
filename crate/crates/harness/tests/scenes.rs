use sqap::config::Config;
use sqap::pipeline::{run_detailed, run_pipeline, RunOptions, Trial};
use sqap::scene::SceneSpec;
use sqap_core::attention::{distortion_metrics, Regime};
use sqap_core::pruner::{PruneConfig, Strategies};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    (v[(v.len() - 1) / 2] + v[v.len() / 2]) / 2.0
}

fn paired<F: Fn(&Trial, &RunOptions) -> f64>(f: F) -> (Vec<f64>, Vec<f64>) {
    let cfg = Config::default();
    let naive = RunOptions::from_config(&cfg, Regime::QuantNaive, Strategies::Full).unwrap();
    let hadamard = RunOptions::from_config(&cfg, Regime::QuantHadamard, Strategies::Full).unwrap();
    (0..100)
        .map(|t| {
            let trial = Trial::prepare(&SceneSpec::for_trial(&cfg, t).unwrap(), &naive).unwrap();
            (f(&trial, &naive), f(&trial, &hadamard))
        })
        .unzip()
}

fn metrics(trial: &Trial, opts: &RunOptions) -> sqap_core::attention::DistortionMetrics {
    let att = trial.attention(opts).unwrap();
    distortion_metrics(&trial.fp, &att.attention, 8).unwrap()
}

#[test]
fn rotation_preserves_rank_order_more_often() {
    let (naive, hadamard) = paired(|t, o| metrics(t, o).rank_corr);
    let wins = naive.iter().zip(&hadamard).filter(|(n, h)| h >= n).count();
    assert!(wins >= 90, "{wins}/100");
}

#[test]
fn naive_quantization_flattens_attention() {
    let (naive, _) = paired(|t, o| metrics(t, o).entropy_delta);
    assert!(median(naive) > 0.0);
}

#[test]
fn retained_tokens_cover_the_grid_on_scenes() {
    let cfg = Config::default();
    let opts = RunOptions::from_config(&cfg, Regime::QuantHadamard, Strategies::Full).unwrap();
    let covered = (0..100)
        .filter(|&t| {
            let spec = SceneSpec::for_trial(&cfg, t).unwrap();
            let out = run_detailed(&spec, &cfg.prune_config(), &opts).unwrap();
            let mut blocks = [false; 16];
            for &i in &out.prune.final_set {
                blocks[(i / 16 / 4) * 4 + (i % 16) / 4] = true;
            }
            blocks.iter().all(|&b| b)
        })
        .count();
    assert!(covered >= 95, "{covered}/100");
}

#[test]
fn robot_ring_is_kept() {
    let cfg = Config::default();
    let spec = SceneSpec::for_trial(&cfg, 0).unwrap();
    let opts = RunOptions::from_config(&cfg, Regime::QuantNaive, Strategies::Full).unwrap();
    let out = run_detailed(&spec, &cfg.prune_config(), &opts).unwrap();
    assert_eq!(out.prune.ring_set.len(), 9);
    assert!(out.prune.ring_set.is_subset(&out.prune.final_set));
    assert!(out.record.ring_projected);
}

#[test]
fn out_of_frame_robot_degrades_to_attention_and_sampling() {
    let mut cfg = Config::default();
    cfg.scene.robot_point = [10.0, 0.0, 1.0];
    let spec = SceneSpec::for_trial(&cfg, 0).unwrap();
    assert_eq!(spec.grid.len(), 256);
    let opts = RunOptions::from_config(&cfg, Regime::QuantHadamard, Strategies::Full).unwrap();
    let rec = run_pipeline(&spec, &cfg.prune_config(), &opts);
    assert!(rec.is_ok());
    assert!(!rec.ring_projected);
    assert_eq!((rec.ring_size, rec.final_size), (0, 154));
    assert_eq!(rec.attn_size + rec.fps_size, 154);
}

#[test]
fn pruning_ratios_set_the_budget() {
    let cfg = Config::default();
    let spec = SceneSpec::for_trial(&cfg, 1).unwrap();
    let opts = RunOptions::from_config(&cfg, Regime::QuantHadamard, Strategies::Full).unwrap();
    for (ratio, keep) in [(0.3, 179), (0.4, 154), (0.5, 128), (0.6, 102)] {
        let rec = run_pipeline(
            &spec,
            &PruneConfig {
                ratio,
                ..cfg.prune_config()
            },
            &opts,
        );
        assert_eq!(rec.final_size, keep, "ρ = {ratio}");
        assert!(rec.bops_speedup > 16.0);
    }
}
