use clap::Parser;
use gsedit_cli::commands::{resolve_config, Cli};
use gsedit_cli::config::{ConfigError, PipelineConfig};

#[test]
fn defaults_survive_a_toml_round_trip() {
    let cfg = PipelineConfig::default();
    let text = cfg.to_toml();
    let back = PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml(), text);
    cfg.validate().unwrap();
}

#[test]
fn edited_config_round_trips() {
    let text = r#"
seed = 7
prompt = "make it red"
refine_prompt = "add stripes"
oracle = "hue_shift:red"

[rig]
cameras_per_ring = 4
elevations = [0.0, 45.0]
width = 32
height = 24

[reconstruct]
n_steps = 10
densify_interval = 5
densify_until = 5

[edit]
t_max = 0.7

[mesh]
resolution = 32
"#;
    let cfg = PipelineConfig::from_toml(text).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.rig.elevations, vec![0.0, 45.0]);
    assert_eq!(cfg.reconstruct.densify_until, Some(5));
    assert_eq!(cfg.edited_caption(), "make it red");
    assert_eq!(cfg.refine_oracle(), "hue_shift:red");
    cfg.validate().unwrap();
    let again = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_toml(), cfg.to_toml());
}

#[test]
fn unknown_keys_are_named() {
    for (text, key) in [("sed = 1", "sed"), ("[edit]\nt_maximum = 0.5", "t_maximum")] {
        let err = PipelineConfig::from_toml(text).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains(key), "{err}");
    }
}

#[test]
fn invalid_values_fail_validation() {
    let cases: Vec<fn(&mut PipelineConfig)> = vec![
        |c| c.mesh.resolution = 30,
        |c| c.mesh.threshold = 0.0,
        |c| c.mesh.texture_size = 4,
        |c| c.remote_timeout_s = 0.0,
        |c| c.oracle = "paint_it".into(),
        |c| c.embedder = "clip".into(),
        |c| c.codec = "jpeg".into(),
        |c| c.edit.t_min = 0.99,
        |c| c.rig.width = 0,
    ];
    for (i, f) in cases.into_iter().enumerate() {
        let mut cfg = PipelineConfig::default();
        f(&mut cfg);
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))), "case {i}");
    }
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "seed = 3\nprompt = \"from file\"\n[edit]\nn_edit_steps = 9\n").unwrap();
    let p = path.to_str().unwrap();

    let cli = Cli::try_parse_from(["gsedit", "edit", "--scene", "s.ply", "--config", p, "--seed", "5", "--tmax", "0.6"])
        .unwrap();
    let cfg = resolve_config(&cli).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.prompt, "from file");
    assert_eq!(cfg.edit.t_max, 0.6);
    assert_eq!(cfg.edit.n_edit_steps, 9);

    let cli = Cli::try_parse_from(["gsedit", "--config", p, "--steps", "11", "reconstruct", "--input", "m.obj"]).unwrap();
    let cfg = resolve_config(&cli).unwrap();
    assert_eq!(cfg.reconstruct.n_steps, 11);
    assert_eq!(cfg.edit.n_edit_steps, 9);

    let cli = Cli::try_parse_from(["gsedit", "refine-texture", "--input", "m.obj", "--steps", "4", "--st", "5"]).unwrap();
    let cfg = resolve_config(&cli).unwrap();
    assert_eq!(cfg.refine.n_steps, 4);
    assert_eq!((cfg.refine.text_scale, cfg.edit.text_scale), (5.0, 5.0));
}

#[test]
fn missing_config_file_is_a_read_error() {
    let cli = Cli::try_parse_from(["gsedit", "edit", "--scene", "s.ply", "--config", "/nonexistent/c.toml"]).unwrap();
    assert!(matches!(resolve_config(&cli), Err(ConfigError::Read { .. })));
}
