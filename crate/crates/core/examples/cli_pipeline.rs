//! Drives the command-line verbs end to end in a temporary directory:
//! scenes, simulate, train-denoiser, train-noise-model, synthesize, evaluate.

use lownoise::cli;

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    std::fs::write(p("profiles.txt"), "1600 2 2.25 2 1 1\n").expect("profiles");
    std::fs::write(
        p("small.cfg"),
        "epochs = 1\nbatch_size = 4\npatch_size = 16\ncritic_steps = 1\ncritic_dim = 8\ncritic_heads = 2\n\
         gen_levels = 2\ngen_width = 4\nden_levels = 2\nden_width = 4\nval_fraction = 0.25\n",
    )
    .expect("config");

    let steps: Vec<Vec<String>> = vec![
        vec!["scenes", "--out", &p("data"), "--count", "8", "--size", "16", "--iso", "1600"],
        vec!["simulate", "--clean", &p("data"), "--profile", &p("profiles.txt"), "--mode", "oracle", "--out", &p("data"), "--force"],
        vec!["train-denoiser", "--pairs", &p("data"), "--config", &p("small.cfg"), "--out", &p("den.ckpt")],
        vec!["train-noise-model", "--pairs", &p("data"), "--denoiser", &p("den.ckpt"), "--config", &p("small.cfg"), "--out", &p("nm.ckpt")],
        vec!["synthesize", "--clean", &p("data"), "--model", &p("nm.ckpt"), "--iso", "1600", "--out", &p("synth")],
        vec![
            "evaluate", "--clean", &p("data"), "--real", &p("data"), "--models", &format!("awgn,pg,oracle,{}", p("nm.ckpt")),
            "--profile", &p("profiles.txt"), "--out", &p("akld.csv"),
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();

    for args in steps {
        let code = cli::run(std::iter::once("lownoise".to_string()).chain(args.iter().cloned()));
        println!("{} -> exit {code}", args[0]);
        if code != 0 {
            std::process::exit(code);
        }
    }
    print!("{}", std::fs::read_to_string(p("akld_summary.csv")).expect("summary"));
}
