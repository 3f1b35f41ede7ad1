use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cdrl_core::agents::TrainedBundle;
use cdrl_core::config::RunConfig;
use cdrl_core::envs::{make_env, Environment};
use cdrl_core::explain::{
    explain_state, export_episodes, read_mask_image, read_record, render_mask_image, write_record,
    MaskImage, StateId, SCHEMA_VERSION,
};

fn bundle(method: &str, env: &str) -> (TrainedBundle, Box<dyn Environment>) {
    let mut cfg = RunConfig::defaults_for(env);
    cfg.method = method.into();
    cfg.hidden = 8;
    let e = make_env(env, &cfg.env_settings()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    (TrainedBundle::new(&cfg, e.as_ref(), &mut rng).unwrap(), e)
}

#[test]
fn record_roundtrips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    for (method, env) in [("r_mask", "monster_treasure"), ("q_mask", "pixel_grid"), ("rd", "monster_treasure")] {
        let (b, mut e) = bundle(method, env);
        let s = e.reset(11);
        let rec = explain_state(&b, &s, StateId { episode: 2, step: 5 });
        assert_eq!(rec.schema_version, SCHEMA_VERSION);
        assert_eq!(rec.q.len(), b.k);
        let path = dir.path().join(format!("{method}.record"));
        write_record(&rec, &path).unwrap();
        assert_eq!(read_record(&path).unwrap(), rec, "{method} on {env}");
    }
}

#[test]
fn reward_field_only_for_methods_with_reward_heads() {
    let dir = tempfile::tempdir().unwrap();
    for (method, has) in [("q_mask", false), ("rd", false), ("r_mask", true), ("rd_pred", true)] {
        let (b, mut e) = bundle(method, "monster_treasure");
        let rec = explain_state(&b, &e.reset(0), StateId { episode: 0, step: 0 });
        let path = dir.path().join("r.record");
        write_record(&rec, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.contains("reward_predictions"), has, "{method}");
        assert_eq!(text.contains("\"masks\""), b.has_masks(), "{method}");
    }
}

#[test]
fn rdx_compares_chosen_action_with_runner_up() {
    let (b, mut e) = bundle("rd", "monster_treasure");
    let rec = explain_state(&b, &e.reset(4), StateId { episode: 0, step: 0 });
    assert_eq!(rec.rdx.a1, rec.chosen_action);
    assert_ne!(rec.rdx.a2, rec.rdx.a1);
    assert!(rec.rdx.total >= 0.0);
    assert!((rec.rdx.total - rec.criticality.gap).abs() < 1e-9);
}

#[test]
fn pixel_masks_are_upsampled_to_input_size() {
    let (b, mut e) = bundle("r_mask", "pixel_grid");
    let rec = explain_state(&b, &e.reset(1), StateId { episode: 0, step: 0 });
    let masks = rec.masks.unwrap();
    let [_, h, w] = b.input_shape[..] else { panic!("pixel input") };
    assert_eq!(masks.display()[0].shape, [h, w]);
    let sub = &masks.substrate[0];
    assert_eq!(sub.shape[0] * sub.shape[1], sub.values.len());
}

#[test]
fn pgm_bytes_follow_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pgm");
    let m = MaskImage {
        shape: [1, 3],
        values: vec![1.0, 0.0, 0.5],
    };
    render_mask_image(&m, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P5\n3 1\n255\n"));
    assert_eq!(&bytes[bytes.len() - 3..], &[255, 0, 128]);
    let back = read_mask_image(&path).unwrap();
    assert_eq!(back.shape, [1, 3]);
    assert_eq!(back.values[0], 1.0);
    assert_eq!(back.values[1], 0.0);
    assert!((back.values[2] - 0.5).abs() <= 0.5 / 255.0 + 1e-12);
}

#[test]
fn export_writes_one_record_per_index_row() {
    let dir = tempfile::tempdir().unwrap();
    let (b, _) = bundle("q_mask", "monster_treasure");
    let rows = export_episodes(&b, 2, false, 9, dir.path()).unwrap();
    assert!(!rows.is_empty());
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let records = names.iter().filter(|n| n.ends_with(".record")).count();
    let images = names.iter().filter(|n| n.ends_with(".pgm")).count();
    assert_eq!(records, rows.len());
    assert_eq!(images, rows.len() * b.k);
    let index = fs::read_to_string(dir.path().join("index.csv")).unwrap();
    assert_eq!(index.lines().next().unwrap(), "episode,step,C,is_critical,chosen_action");
    assert_eq!(index.lines().count(), rows.len() + 1);

    let crit = tempfile::tempdir().unwrap();
    let only = export_episodes(&b, 2, true, 9, crit.path()).unwrap();
    let expected: Vec<_> = rows.into_iter().filter(|r| r.is_critical).collect();
    assert_eq!(only, expected);
}
