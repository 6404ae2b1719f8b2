//! The `stap` command end to end in a temporary directory: simulate a track,
//! fit it, summarise the draws and subsample the track.

use stap_hmm::cli::run;

fn stap(args: &[&str]) -> i32 {
    println!("$ stap {}", args.join(" "));
    run(std::iter::once("stap").chain(args.iter().copied()))
}

fn main() -> std::io::Result<()> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    std::fs::write(p("sim.toml"), "preset = \"dataset1\"\nt = 400\nseed = 2\n")?;
    std::fs::write(p("run.toml"), "iterations = 1500\nburnin = 750\nthin = 5\ntruncation = 10\n")?;

    let steps: [Vec<String>; 4] = [
        vec!["simulate".into(), "--config".into(), p("sim.toml"), "--out".into(), p("sim")],
        vec![
            "fit".into(),
            "--data".into(),
            p("sim/path.csv"),
            "--config".into(),
            p("run.toml"),
            "--out".into(),
            p("draws"),
            "--quiet".into(),
        ],
        vec!["summarize".into(), "--draws".into(), p("draws"), "--out".into(), p("report"), "--predictive-samples".into(), "2000".into()],
        vec!["subsample".into(), "--data".into(), p("sim/path.csv"), "--d".into(), "4".into(), "--out".into(), p("every4.csv")],
    ];
    for args in &steps {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let code = stap(&args);
        if code != 0 {
            eprintln!("exit code {code}");
            std::process::exit(code);
        }
    }
    let mut files: Vec<String> = std::fs::read_dir(dir.path().join("report"))?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    files.sort();
    println!("report files: {}", files.join(", "));
    println!("{}", std::fs::read_to_string(dir.path().join("report/table.csv"))?);
    Ok(())
}
