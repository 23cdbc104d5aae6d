use std::path::{Path, PathBuf};

use mobmix::config::PipelineConfig;
use mobmix::io::{read_store, read_trajectories_csv, write_trajectories_csv};
use mobmix::model::ModelKind;
use mobmix::pipeline::{cmd_evaluate, cmd_ingest, cmd_prune, cmd_shift_eval, cmd_stratify, cmd_synth, cmd_train, load_scenario, EvalFlags};
use mobmix::synth::{GridConfig, PingConfig, ShiftConfig, SynthConfig};
use mobmix::Error;

fn small_scenario() -> SynthConfig {
    SynthConfig {
        n_users: 30,
        n_days: 30,
        grid: GridConfig {
            rows: 8,
            cols: 8,
            ..GridConfig::default()
        },
        ..SynthConfig::default()
    }
}

fn config_in(dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.output_dir = dir.join("out");
    cfg.paths.model_store = dir.join("model");
    cfg.paths.input = Some(dir.join("data/trajectories.csv"));
    cfg.paths.poi = Some(dir.join("data/poi.csv"));
    cfg.spatial.permutations = 99;
    cfg.pruning.n_samples = 3;
    cfg
}

fn full_run(dir: &Path, scenario: &SynthConfig) -> PipelineConfig {
    cmd_synth(scenario, &dir.join("data"), None).unwrap();
    let cfg = config_in(dir);
    cmd_ingest(&cfg).unwrap();
    cmd_train(&cfg, &cfg.paths.output_dir.join("trajectories.csv")).unwrap();
    let flags = EvalFlags {
        stratify: true,
        spatial: true,
        prune: true,
        pois: true,
        shift: false,
    };
    cmd_evaluate(&cfg, flags).unwrap();
    cfg
}

fn read(path: PathBuf) -> Vec<u8> {
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn pipeline_writes_every_table_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = full_run(dir.path(), &small_scenario());
    let out = &cfg.paths.output_dir;
    for (file, header) in [
        ("stops.csv", "user_id,tile,time_start,time_end"),
        ("trajectories.csv", "user_id,day,seq,tile,time"),
        ("fig2a.csv", "model,k,acc,hits,total"),
        ("fig2b.csv", "bin,model,acc,hits,total"),
        ("fig2c.csv", "bin,user_id,origin,confidence"),
        ("overlap.csv", "user_id,day,lcst_raw,lcst_norm,bin"),
        ("fig3.csv", "group,model,tile,lat,lon,acc,n,below_min"),
        ("fig3_moran.csv", "group,model,moran_i,expected,p_value,permutations,n_tiles,note"),
        ("fig4a.csv", "tile,lat,lon,entropy,acc,n,below_min,poi_count,near"),
        ("fig4c.csv", "area,r_lo_km,r_hi_km,count,density"),
        ("ensemble.csv", "tile,mean_acc,std_acc,n_samples"),
    ] {
        let text = String::from_utf8(read(out.join(file))).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{file}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&read(out.join("summary.json"))).unwrap();
    for kind in ["I", "C", "M"] {
        let acc = summary["overall"][kind]["acc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    assert!(summary["consistency_gap"].as_f64().unwrap() <= 1e-9);
    assert!(summary["spatial"]["all"]["M"].is_object());
}

#[test]
fn pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = full_run(a.path(), &small_scenario());
    let cb = full_run(b.path(), &small_scenario());
    for file in ["summary.json", "fig2c.csv", "fig3_moran.csv", "ensemble.csv"] {
        assert_eq!(read(ca.paths.output_dir.join(file)), read(cb.paths.output_dir.join(file)), "{file}");
    }
    for file in ["collective.csv", "individual.csv", "entropy.csv", "model.json"] {
        assert_eq!(read(ca.paths.model_store.join(file)), read(cb.paths.model_store.join(file)), "{file}");
    }
}

#[test]
fn retraining_rewrites_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = full_run(dir.path(), &small_scenario());
    let before = read(cfg.paths.model_store.join("individual.csv"));
    cmd_train(&cfg, &cfg.paths.output_dir.join("trajectories.csv")).unwrap();
    assert_eq!(read(cfg.paths.model_store.join("individual.csv")), before);
}

#[test]
fn single_user_collective_equals_individual() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_scenario(), &dir.path().join("data"), None).unwrap();
    let all = read_trajectories_csv(&dir.path().join("data/trajectories.csv")).unwrap();
    let first = all[0].user_id.clone();
    let one: Vec<_> = all.into_iter().filter(|t| t.user_id == first).collect();
    let path = dir.path().join("one.csv");
    write_trajectories_csv(&path, &one).unwrap();
    let cfg = config_in(dir.path());
    cmd_train(&cfg, &path).unwrap();
    let store = read_store(&cfg.paths.model_store).unwrap();
    let model = store.trained.models.values().next().unwrap();
    assert_eq!(model.counts, store.trained.collective.counts);
    for origin in model.counts.origins() {
        assert_eq!(model.predict(ModelKind::I, origin, 5).unwrap(), model.predict(ModelKind::C, origin, 5).unwrap());
    }
}

#[test]
fn empty_input_gives_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "").unwrap();
    let mut cfg = config_in(dir.path());
    cfg.paths.input = Some(input);
    let s = cmd_ingest(&cfg).unwrap();
    assert_eq!((s.rows, s.users, s.trajectories), (0, 0, 0));
    assert!(read_trajectories_csv(&cfg.paths.output_dir.join("trajectories.csv")).unwrap().is_empty());
    let stops = String::from_utf8(read(cfg.paths.output_dir.join("stops.csv"))).unwrap();
    assert_eq!(stops.trim(), "user_id,tile,time_start,time_end");
}

#[test]
fn malformed_rows_above_threshold_fail() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    let mut text = String::from("user_id,lat,lon,timestamp\n");
    for i in 0..100 {
        if i % 50 == 7 {
            text.push_str("u1,not-a-number,9.1,0\n");
        } else {
            text.push_str(&format!("u1,45.45,9.15,{}\n", i * 60));
        }
    }
    std::fs::write(&input, text).unwrap();
    let mut cfg = config_in(dir.path());
    cfg.paths.input = Some(input);
    let err = cmd_ingest(&cfg).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("2 of 100"), "{err}");
    assert!(!cfg.paths.output_dir.join("trajectories.csv").exists());

    cfg.geo.max_malformed_fraction = 0.05;
    let s = cmd_ingest(&cfg).unwrap();
    assert_eq!((s.rows, s.malformed, s.users), (100, 2, 1));
}

#[test]
fn tile_input_skips_stop_detection() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_scenario(), &dir.path().join("data"), None).unwrap();
    let cfg = config_in(dir.path());
    let s = cmd_ingest(&cfg).unwrap();
    assert!(!s.stop_detection);
    assert_eq!(s.stops, 0);
    let original = read_trajectories_csv(&dir.path().join("data/trajectories.csv")).unwrap();
    let ingested = read_trajectories_csv(&cfg.paths.output_dir.join("trajectories.csv")).unwrap();
    assert_eq!(ingested, original);
}

#[test]
fn ping_input_recovers_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = SynthConfig {
        n_users: 10,
        n_days: 5,
        ..small_scenario()
    };
    let s = cmd_synth(&scenario, &dir.path().join("data"), Some(&PingConfig::default())).unwrap();
    assert!(s.pings.unwrap() > 0);
    let mut cfg = config_in(dir.path());
    cfg.paths.input = Some(dir.path().join("data/pings.csv"));
    let ingest = cmd_ingest(&cfg).unwrap();
    assert!(ingest.stop_detection);
    let original = read_trajectories_csv(&dir.path().join("data/trajectories.csv")).unwrap();
    let ingested = read_trajectories_csv(&cfg.paths.output_dir.join("trajectories.csv")).unwrap();
    let tiles = |ts: &[mobmix::Trajectory]| ts.iter().map(|t| (t.user_id.clone(), t.day, t.tiles())).collect::<Vec<_>>();
    assert_eq!(tiles(&ingested), tiles(&original));
}

#[test]
fn shift_without_cutoff_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    let flags = EvalFlags {
        shift: true,
        ..EvalFlags::default()
    };
    let err = cmd_evaluate(&cfg, flags).unwrap_err();
    assert!(matches!(err, Error::Usage(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
    assert!(matches!(cmd_shift_eval(&cfg, Path::new("unused.csv")), Err(Error::Usage(_))));
}

#[test]
fn missing_model_store_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    for err in [
        cmd_evaluate(&cfg, EvalFlags::default()).unwrap_err(),
        cmd_stratify(&cfg).unwrap_err(),
        cmd_prune(&cfg).unwrap_err(),
    ] {
        assert!(matches!(err, Error::Data(_)), "{err}");
    }
}

#[test]
fn no_surviving_users_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = SynthConfig {
        min_points: 2,
        max_points: 3,
        ..small_scenario()
    };
    cmd_synth(&scenario, &dir.path().join("data"), None).unwrap();
    let cfg = config_in(dir.path());
    let err = cmd_train(&cfg, &dir.path().join("data/trajectories.csv")).unwrap_err();
    assert!(err.to_string().contains("no users survive filtering"), "{err}");
}

#[test]
fn shift_eval_and_prune_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = SynthConfig {
        n_days: 120,
        shift: Some(ShiftConfig::default()),
        ..small_scenario()
    };
    cmd_synth(&scenario, &dir.path().join("data"), None).unwrap();
    let mut cfg = config_in(dir.path());
    cfg.shift.cutoff = Some(ShiftConfig::default().day);
    let report = cmd_shift_eval(&cfg, &dir.path().join("data/trajectories.csv")).unwrap();
    assert_eq!(report.months.first().unwrap().month, "2020-03");
    assert!(cfg.paths.output_dir.join("table3.csv").is_file());

    cmd_train(&cfg, &dir.path().join("data/trajectories.csv")).unwrap();
    let s = cmd_prune(&cfg).unwrap();
    assert!(s.pruned_transitions as usize <= s.training_transitions);
    for file in ["collective_pruned.csv", "ensemble.csv", "prune.json"] {
        assert!(cfg.paths.output_dir.join(file).is_file(), "{file}");
    }
    let bins = cmd_stratify(&cfg).unwrap();
    assert_eq!(bins.values().sum::<usize>(), read_store(&cfg.paths.model_store).unwrap().meta.n_test_trajectories);
}

#[test]
fn scenario_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = SynthConfig {
        n_days: 90,
        shift: Some(ShiftConfig::default()),
        routine_lambda_km: Some(1.0),
        ..small_scenario()
    };
    cmd_synth(&scenario, dir.path(), None).unwrap();
    assert_eq!(load_scenario(&dir.path().join("scenario.toml")).unwrap(), scenario);
}

#[test]
fn bundled_scenarios_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["default.toml", "shift.toml", "anchor-poi.toml"] {
        load_scenario(&root.join(name)).unwrap();
    }
    assert_eq!(load_scenario(&root.join("default.toml")).unwrap(), SynthConfig::default());
}
