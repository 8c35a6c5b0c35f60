use std::fs;
use std::path::Path;

use bidaf::data::synth::Task;
use bidaf::train::log::{read_log, SplitName, HEADER};
use bidaf::train::{
    build_model, evaluate, load_dataset, load_run, sweep, train, train_on, DataConfig, RunConfig, BEST_CHECKPOINT,
    COMPARISON_FILE, LAST_CHECKPOINT, LOSSES_FILE, METRICS_FILE,
};
use bidaf::Real;

fn copy_config(seed: u64) -> RunConfig {
    RunConfig {
        hidden: 8,
        word_dim: 12,
        batch_size: 16,
        max_steps: 24,
        eval_every: 8,
        seed,
        data: DataConfig::Synthetic {
            task: Task::Copy,
            train: 64,
            dev: 40,
            vocab_size: 60,
            context_len: 10,
            corpus_seed: None,
        },
        ..RunConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = copy_config(4);
    cfg.variant = "highway:2".parse().unwrap();
    for run in ["a", "b"] {
        cfg.output_dir = Some(dir.path().join(run));
        train(&cfg, &mut |_| {}).unwrap();
    }
    for file in [LOSSES_FILE, METRICS_FILE, BEST_CHECKPOINT, LAST_CHECKPOINT] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    let losses = fs::read_to_string(dir.path().join("a").join(LOSSES_FILE)).unwrap();
    assert_eq!(losses.lines().next(), Some("step,loss"));
    assert_eq!(losses.lines().count(), 1 + cfg.max_steps);

    cfg.seed = 5;
    cfg.output_dir = Some(dir.path().join("c"));
    train(&cfg, &mut |_| {}).unwrap();
    assert_ne!(
        fs::read(dir.path().join("a").join(LOSSES_FILE)).unwrap(),
        fs::read(dir.path().join("c").join(LOSSES_FILE)).unwrap()
    );
}

#[test]
fn metric_log_schema_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = copy_config(1);
    cfg.max_steps = 20;
    cfg.output_dir = Some(dir.path().to_path_buf());
    let out = train(&cfg, &mut |_| {}).unwrap();
    let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
    let records = read_log(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(records, out.records);
    let dev_steps: Vec<usize> = records.iter().filter(|r| r.split == SplitName::Dev).map(|r| r.step).collect();
    // every eval_every steps plus the final step
    assert_eq!(dev_steps, vec![0, 8, 16, 20]);
    for r in &records {
        for v in [r.em, r.f1, r.avna] {
            assert!((0.0..=100.0).contains(&v));
        }
        assert!(r.loss.is_finite() && r.loss > 0.0);
    }
}

fn assert_same_evaluation(a: &bidaf::train::Evaluation, b: &bidaf::train::Evaluation) {
    assert_eq!(a.result, b.result);
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert_eq!(a.predictions, b.predictions);
}

#[test]
fn checkpoints_round_trip_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = copy_config(2);
    cfg.variant = "bypass:2".parse().unwrap();
    cfg.use_char = true;
    cfg.ensemble_k = 2;
    cfg.output_dir = Some(dir.path().to_path_buf());
    let out = train(&cfg, &mut |_| {}).unwrap();
    let data = load_dataset(&cfg).unwrap();
    let direct = evaluate(&out.model, &out.store, &data.dev, None, cfg.batch_size, 1).unwrap();

    let run = load_run::<Real>(dir.path(), &dir.path().join(LAST_CHECKPOINT)).unwrap();
    assert_eq!(run.config, cfg);
    let split = run.split(data.dev.examples.clone());
    let loaded = evaluate(&run.model, &run.store, &split, None, cfg.batch_size, 1).unwrap();
    assert_same_evaluation(&direct, &loaded);

    // the best checkpoint reproduces its logged dev metrics exactly
    let (best_step, best) = out.best.unwrap();
    let run = load_run::<Real>(dir.path(), &dir.path().join(BEST_CHECKPOINT)).unwrap();
    let e = evaluate(&run.model, &run.store, &run.split(data.dev.examples.clone()), None, cfg.batch_size, 1).unwrap();
    assert_eq!(e.result, best);
    let logged = out
        .records
        .iter()
        .find(|r| r.step == best_step && r.split == SplitName::Dev)
        .unwrap();
    assert_eq!(e.loss.to_bits(), logged.loss.to_bits());
}

#[test]
fn checkpoint_rejects_a_different_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = copy_config(3);
    cfg.max_steps = 2;
    cfg.output_dir = Some(dir.path().to_path_buf());
    train(&cfg, &mut |_| {}).unwrap();
    let mut other = cfg.clone();
    other.hidden = 10;
    other.save(dir.path().join("config.json")).unwrap();
    assert!(load_run::<Real>(dir.path(), &dir.path().join(LAST_CHECKPOINT)).is_err());
}

#[test]
fn parallel_evaluation_equals_serial() {
    let mut cfg = copy_config(6);
    cfg.variant = "densenet:2+1".parse().unwrap();
    cfg.max_steps = 10;
    let data = load_dataset(&cfg).unwrap();
    let out = train_on::<Real>(&cfg, &data, &mut |_| {}).unwrap();
    let serial = evaluate(&out.model, &out.store, &data.dev, None, 8, 1).unwrap();
    for workers in [2, 4, 7] {
        let parallel = evaluate(&out.model, &out.store, &data.dev, None, 8, workers).unwrap();
        assert_same_evaluation(&serial, &parallel);
    }
    let again = evaluate(&out.model, &out.store, &data.dev, None, 8, 1).unwrap();
    assert_same_evaluation(&serial, &again);
}

#[test]
fn initial_loss_matches_uniform_prediction() {
    for (task, len) in [(Task::Copy, 12), (Task::CharSensitive, 16), (Task::MultiHop, 15)] {
        let mut cfg = copy_config(7);
        cfg.max_steps = 1;
        cfg.data = DataConfig::Synthetic {
            task,
            train: 64,
            dev: 64,
            vocab_size: 100,
            context_len: len,
            corpus_seed: None,
        };
        let data = load_dataset(&cfg).unwrap();
        let (model, store) = build_model::<Real>(&cfg.model(), &data.vocabs, &data.vectors.values, cfg.seed).unwrap();
        let e = evaluate(&model, &store, &data.dev, None, 16, 1).unwrap();
        let n_bar = data.dev.encoded.iter().map(|x| x.context_words.len() + 1).sum::<usize>() as f64 / data.dev.encoded.len() as f64;
        let expected = 2.0 * n_bar.ln();
        assert!((e.loss - expected).abs() < 0.2 * expected, "{task}: {} vs {expected}", e.loss);
    }
}

#[test]
fn untrained_model_is_near_chance_on_copy() {
    for seed in 1..=3 {
        let mut cfg = copy_config(seed);
        cfg.data = DataConfig::Synthetic {
            task: Task::Copy,
            train: 64,
            dev: 400,
            vocab_size: 200,
            context_len: 12,
            corpus_seed: None,
        };
        let data = load_dataset(&cfg).unwrap();
        let (model, store) = build_model::<Real>(&cfg.model(), &data.vocabs, &data.vectors.values, seed).unwrap();
        let e = evaluate(&model, &store, &data.dev, None, 16, 1).unwrap();
        assert!(e.result.em < 10.0, "seed {seed}: EM {}", e.result.em);
    }
}

fn comparison_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["variant", "best_f1", "best_em", "best_avna", "step_of_best"]);
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn sweep_writes_one_log_per_variant_and_a_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = copy_config(8);
    cfg.max_steps = 8;
    cfg.eval_every = 4;
    cfg.dropout = 0.0;
    cfg.zero_init_blocks = true;
    cfg.output_dir = Some(dir.path().to_path_buf());
    let variants: Vec<_> = ["baseline", "bypass:3", "highway:8"].iter().map(|v| v.parse().unwrap()).collect();
    let mut seen = Vec::new();
    let rows = sweep(&cfg, &variants, &mut |label, r| seen.push((label.to_string(), *r))).unwrap();
    assert_eq!(rows.len(), 3);
    for label in ["baseline", "bypass_3", "highway_8"] {
        assert!(dir.path().join(label).join(METRICS_FILE).exists(), "{label}");
    }
    let table = comparison_rows(&dir.path().join(COMPARISON_FILE));
    assert_eq!(table.len(), 3);
    for (row, expected) in table.iter().zip(&rows) {
        assert_eq!(row[0], expected.variant);
        assert_eq!(row[1].parse::<f64>().unwrap(), expected.best_f1);
        assert_eq!(row[4].parse::<usize>().unwrap(), expected.step_of_best);
    }
    assert_eq!(seen.iter().filter(|(l, _)| l == "bypass:3").count(), 2 * 3);

    // zero-initialised residual blocks leave the baseline function unchanged,
    // so the step-0 evaluation and the first (shared) batch agree exactly
    let logs: Vec<_> = ["baseline", "bypass_3"]
        .iter()
        .map(|l| read_log(dir.path().join(l).join(METRICS_FILE)).unwrap())
        .collect();
    assert_eq!(logs[0][..2], logs[1][..2]);
    let first_loss = |l: &str| {
        let text = fs::read_to_string(dir.path().join(l).join(LOSSES_FILE)).unwrap();
        text.lines().nth(1).unwrap().to_string()
    };
    assert_eq!(first_loss("baseline"), first_loss("bypass_3"));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = copy_config(1);
    cfg.batch_size = 0;
    assert!(train(&cfg, &mut |_| {}).is_err());
    let mut cfg = copy_config(1);
    cfg.ensemble_k = 3;
    assert!(train(&cfg, &mut |_| {}).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"hidden": 8, "learning_rate": 0.1}"#).unwrap();
    assert!(RunConfig::load(&path).is_err());
}

#[test]
fn run_config_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let mut cfg = copy_config(11);
    cfg.variant = "densenet:2+2+1".parse().unwrap();
    cfg.output_dir = Some(dir.path().join("out"));
    cfg.save(&path).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);
}
