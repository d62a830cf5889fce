use super::*;

const TINY: &str = "epochs = 1\nbatch_size = 4\npatch_size = 8\ncritic_steps = 1\ngen_levels = 1\ngen_width = 4\n\
den_levels = 1\nden_width = 4\ncritic_dim = 8\ncritic_heads = 2\ncritic_ff_ratio = 1\nval_fraction = 0.2\nseed = 3\n";

fn run_args(args: &[&str]) -> i32 {
    run(std::iter::once("lownoise").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Scenes plus oracle captures in one directory, a profile table and a config.
fn setup(dir: &Path, count: usize) -> (PathBuf, PathBuf, PathBuf) {
    let data = dir.join("data");
    assert_eq!(run_args(&["scenes", "--out", s(&data), "--count", &count.to_string(), "--size", "8", "--iso", "1600"]), 0);
    let profile = dir.join("profiles.txt");
    std::fs::write(&profile, "1600 2 2.25 2 1 1\n3200 4 4.5 4 2 1\n").unwrap();
    assert_eq!(
        run_args(&["simulate", "--clean", s(&data), "--profile", s(&profile), "--mode", "oracle", "--out", s(&data), "--force"]),
        0
    );
    let config = dir.join("tiny.cfg");
    std::fs::write(&config, TINY).unwrap();
    (data, profile, config)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn simulate_pairs_files_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (data, profile, _) = setup(dir.path(), 3);
    let frames = load_clean_dir(&data).unwrap();
    assert_eq!(frames.len(), 3);
    for f in &frames {
        assert!(noisy_path(&data, &f.stem).exists());
        assert!(data.join(format!("{}_noisy.pgm", f.stem)).exists());
    }
    let again = dir.path().join("again");
    assert_eq!(
        run_args(&["simulate", "--clean", s(&data), "--profile", s(&profile), "--mode", "oracle", "--out", s(&again)]),
        0
    );
    for f in &frames {
        assert_eq!(read(&noisy_path(&data, &f.stem)), read(&noisy_path(&again, &f.stem)));
    }
    let awgn = dir.path().join("awgn");
    assert_eq!(
        run_args(&["simulate", "--clean", s(&data), "--profile", s(&profile), "--mode", "awgn", "--out", s(&awgn)]),
        0
    );
    assert_ne!(read(&noisy_path(&data, &frames[0].stem)), read(&noisy_path(&awgn, &frames[0].stem)));
}

#[test]
fn simulate_reports_missing_iso() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert_eq!(run_args(&["scenes", "--out", s(&data), "--count", "1", "--size", "4", "--iso", "400"]), 0);
    let profile = dir.path().join("p.txt");
    std::fs::write(&profile, "1600 2 2\n").unwrap();
    let out = dir.path().join("o");
    let args = SimulateArgs {
        clean: data,
        profile,
        mode: SimMode::Pg,
        out: out.clone(),
        seed: 0,
        preview_gain: 1.0,
        force: false,
    };
    match cmd_simulate(&args) {
        Err(Error::Parameter(m)) => assert!(m.contains("ISO 400"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert!(!out.exists(), "nothing written on failure");
}

#[test]
fn training_commands_write_artifacts_and_resume_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _, config) = setup(dir.path(), 8);
    let den = dir.path().join("den.ckpt");
    let train = ["train-denoiser", "--pairs", s(&data), "--config", s(&config), "--out", s(&den)];
    assert_eq!(run_args(&train), 0);
    assert!(den.exists() && log_path(&den).exists() && manifest_path(&den).exists());
    assert_eq!(run_args(&train), 2, "refuses to overwrite");

    // two epochs straight vs one epoch then --resume
    let two = dir.path().join("two.cfg");
    std::fs::write(&two, format!("{TINY}epochs = 2\n")).unwrap();
    let nm_a = dir.path().join("a.ckpt");
    let nm_b = dir.path().join("b.ckpt");
    let base = |cfg: &Path, out: &Path| {
        vec![
            "train-noise-model".to_string(),
            "--pairs".into(),
            s(&data).into(),
            "--denoiser".into(),
            s(&den).into(),
            "--config".into(),
            s(cfg).into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let go = |v: Vec<String>| run(std::iter::once("lownoise".to_string()).chain(v));
    assert_eq!(go(base(&two, &nm_a)), 0);
    assert_eq!(go(base(&config, &nm_b)), 0);
    let mut resume = base(&two, &nm_b);
    resume.push("--resume".into());
    assert_eq!(go(resume), 0);
    assert_eq!(read(&nm_a), read(&nm_b));
    assert_eq!(read(&log_path(&nm_a)), read(&log_path(&nm_b)));

    let missing = ["train-noise-model", "--pairs", s(&data), "--config", s(&config), "--out", "x.ckpt"];
    assert_eq!(run_args(&missing), 2);

    let wide = dir.path().join("wide.cfg");
    std::fs::write(&wide, format!("{TINY}den_width = 8\n")).unwrap();
    let args = TrainNoiseModelArgs {
        pairs: data.clone(),
        denoiser: den.clone(),
        config: wide,
        out: dir.path().join("c.ckpt"),
        resume: false,
        force: false,
    };
    assert!(matches!(cmd_train_noise_model(&args), Err(Error::Architecture(_))));
}

#[test]
fn synthesize_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let (data, profile, config) = setup(dir.path(), 6);
    let den = dir.path().join("den.ckpt");
    assert_eq!(run_args(&["train-denoiser", "--pairs", s(&data), "--config", s(&config), "--out", s(&den)]), 0);
    let nm = dir.path().join("nm.ckpt");
    let args = ["train-noise-model", "--pairs", s(&data), "--denoiser", s(&den), "--config", s(&config), "--out", s(&nm)];
    assert_eq!(run_args(&args), 0);

    let synth = |iso: &str, out: &Path| run_args(&["synthesize", "--clean", s(&data), "--model", s(&nm), "--iso", iso, "--seed", "5", "--out", s(out)]);
    let (o1, o2) = (dir.path().join("s1"), dir.path().join("s2"));
    assert_eq!(synth("1600", &o1), 0);
    assert_eq!(synth("1600", &o2), 0);
    let stem = &load_clean_dir(&data).unwrap()[0].stem;
    assert_eq!(read(&noisy_path(&o1, stem)), read(&noisy_path(&o2, stem)));
    assert_eq!(synth("3200", &dir.path().join("s3")), 3, "ISO not in the model's table");

    let csv = dir.path().join("eval").join("akld.csv");
    let ev = [
        "evaluate", "--clean", s(&data), "--real", s(&data), "--models", &format!("real,awgn,pg,oracle,{}", s(&nm)),
        "--out", s(&csv), "--samples", "2", "--profile", s(&profile),
    ];
    assert_eq!(run_args(&ev), 0);
    let summary = std::fs::read_to_string(summary_path(&csv)).unwrap();
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(summary.lines().count(), 6);
    assert!(summary.lines().nth(1).unwrap().ends_with(",0"), "{summary}");
    let pg: Vec<f64> = rows
        .lines()
        .filter(|l| l.starts_with("pg,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let mean: f64 = summary.lines().find(|l| l.starts_with("pg,")).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((pg.iter().sum::<f64>() / pg.len() as f64 - mean).abs() < 1e-12);
    assert_eq!(run_args(&ev), 2, "existing output without --force");
}
