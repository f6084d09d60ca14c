use std::fs;

use zsda::config::{apply_override, load_config, preset, Vary, DEFAULT_LAMBDAS, PRESETS};
use zsda::Error;
use zsda_core::eval::{Generator, MaskDesign, Trainer};
use zsda_core::model::BankVariant;

#[test]
fn presets_are_valid_and_echo_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    for name in PRESETS {
        let cfg = preset(name).unwrap();
        assert!(cfg.violations().is_empty(), "{name}: {:?}", cfg.violations());
        let path = dir.path().join(format!("{name}.toml"));
        fs::write(&path, cfg.to_toml()).unwrap();
        let back = load_config(Some(path.to_str().unwrap()), &[]).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
}

#[test]
fn default_lambda_list() {
    assert_eq!(DEFAULT_LAMBDAS, [0.005, 0.01, 0.03, 0.05, 0.1, 0.5, 1.0]);
    let cfg = preset("planted_grid").unwrap();
    assert_eq!(cfg.sweep.vary, Vary::Lambda);
    assert_eq!(cfg.sweep.values, DEFAULT_LAMBDAS);
}

#[test]
fn fiber_preset_sweeps_the_source_domain_counts() {
    let cfg = preset("fiber").unwrap();
    assert_eq!(cfg.experiment.generator.grid().unwrap().dims(), &[2, 3, 3, 2]);
    assert_eq!(cfg.sweep.values, [5.0, 10.0, 15.0, 20.0]);
    assert_eq!(cfg.sweep.seeds, 10);
}

#[test]
fn file_values_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(
        &path,
        "preset = \"fiber\"\nseed = 7\n[experiment.train]\nlr = 0.01\nlambda = 0\n[experiment.mask]\nkind = \"explicit\"\nseen = [0, 5]\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let cfg = load_config(Some(p), &["experiment.train.lr=0.002".into(), "sweep.values=[4, 8]".into()]).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.experiment.train.lr, 0.002);
    assert_eq!(cfg.experiment.train.lambda, 0.0);
    assert_eq!(cfg.experiment.train.window, 100);
    assert_eq!(cfg.experiment.mask, MaskDesign::Explicit { seen: vec![0, 5] });
    assert_eq!(cfg.sweep.values, [4.0, 8.0]);
    assert!(matches!(cfg.experiment.generator, Generator::Planted(_)));
}

#[test]
fn switching_a_tagged_section_replaces_it() {
    let cfg = load_config(None, &["experiment.trainer.kind=end_to_end".into(), "experiment.trainer.variant=additive".into()]).unwrap();
    assert_eq!(cfg.experiment.trainer, Trainer::EndToEnd { variant: BankVariant::Additive, rank: 2 });
    let cfg = load_config(None, &["experiment.bound.head_norm=2.5".into()]).unwrap();
    assert_eq!(cfg.experiment.bound.head_norm, Some(2.5));
}

#[test]
fn every_violation_is_listed() {
    let err = load_config(
        Some("planted_small"),
        &[
            "experiment.nonsense=1".into(),
            "experiment.train.speed=3".into(),
            "experiment.train.lr=0".into(),
            "experiment.mask.count=40".into(),
            "threads=0".into(),
            "sweep.values=[2.5]".into(),
        ],
    )
    .unwrap_err();
    let Error::ConfigInvalid(list) = &err else { panic!("{err:?}") };
    assert_eq!(list.len(), 6, "{list:?}");
    assert!(list.iter().any(|e| e.contains("experiment.nonsense")));
    assert!(list.iter().any(|e| e.contains("experiment.train.speed")));
    assert!(list.iter().any(|e| e.contains("lr")));
    assert!(list.iter().any(|e| e.contains("mask count 40")));
    assert!(list.iter().any(|e| e.contains("threads")));
    assert!(list.iter().any(|e| e.contains("2.5")));
    assert_eq!(err.category(), "config-invalid");
}

#[test]
fn type_errors_are_reported() {
    let err = load_config(None, &["experiment.train.lr=\"fast\"".into()]).unwrap_err();
    assert!(matches!(err, Error::ConfigInvalid(ref v) if v.len() == 1), "{err:?}");
}

#[test]
fn missing_config_is_its_own_category() {
    let err = load_config(Some("/definitely/not/here.toml"), &[]).unwrap_err();
    assert!(matches!(err, Error::ConfigNotFound(_)));
    assert_eq!(err.category(), "config-not-found");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn override_syntax() {
    let mut t = toml::Table::new();
    apply_override(&mut t, "a.b.c=3").unwrap();
    apply_override(&mut t, "a.name=plain words").unwrap();
    assert_eq!(t["a"]["b"]["c"].as_integer(), Some(3));
    assert_eq!(t["a"]["name"].as_str(), Some("plain words"));
    assert!(apply_override(&mut t, "novalue").is_err());
    assert!(apply_override(&mut t, "a..b=1").is_err());
    assert!(apply_override(&mut t, "a.b.c.d=1").is_err());
}
