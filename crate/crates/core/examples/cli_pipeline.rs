//! Runs the command-line pipeline in-process: synth, train, eval, render
//! and localize in a temporary directory.
//!
//! cargo run --release --example cli_pipeline -- [iterations]

use geomsplat::cli::run;

fn main() {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let dir = tempfile::tempdir().expect("temporary directory");
    let p = |name: &str| dir.path().join(name).display().to_string();
    std::fs::write(p("config.toml"), format!("[train]\niterations = {iterations}\n")).expect("write config");

    let steps: [Vec<String>; 5] = [
        vec!["synth".into(), "--out".into(), p("data")],
        vec!["--config".into(), p("config.toml"), "train".into(), "--data".into(), p("data"), "--out".into(), p("run")],
        vec!["eval".into(), "--map".into(), p("run/checkpoint.ggs"), "--data".into(), p("data")],
        vec!["render".into(), "--map".into(), p("run/map.ply"), "--data".into(), p("data"), "--out".into(), p("renders")],
        vec![
            "localize".into(),
            "--map".into(),
            p("run/checkpoint.ggs"),
            "--data".into(),
            p("data"),
            "--frame".into(),
            "5".into(),
            "--init-error".into(),
            "5".into(),
            "0.5".into(),
            "--out".into(),
            p("loc"),
        ],
    ];
    for args in steps {
        println!("$ geomsplat {}", args.join(" "));
        let code = run(std::iter::once("geomsplat".to_string()).chain(args));
        if code != 0 {
            eprintln!("exit code {code}");
            std::process::exit(code);
        }
    }
}
