// Drives the `mmtfl` command line in-process: generate a small dataset,
// fit it and export the gate-weighted heatmap.

use mmtfl::cli::run;
use mmtfl::io::{read_json, DatasetManifest, MANIFEST_FILE};

pub fn main() {
    let dir = std::env::temp_dir().join(format!("mmtfl-cli-{}", std::process::id()));
    let data = dir.join("data");
    let fit = dir.join("fit");
    let s = |p: &std::path::Path| p.display().to_string();
    let _ = std::fs::remove_dir_all(&dir);

    let steps: Vec<Vec<String>> = vec![
        vec!["generate".into(), "--pattern".into(), "d2".into(), "--tasks".into(), "12".into(), "--n".into(), "40".into(), "--seed".into(), "3".into(), "--out".into(), s(&data)],
        vec!["fit".into(), "--data".into(), s(&data), "--p".into(), "1".into(), "--k".into(), "2".into(), "--gamma1".into(), "1".into(), "--gamma2".into(), "1".into(), "--out".into(), s(&fit)],
        vec!["export-heatmap".into(), "--fit".into(), s(&fit), "--out".into(), s(&dir.join("heatmap.csv"))],
    ];
    for args in steps {
        println!("$ mmtfl {}", args.join(" "));
        let code = run(std::iter::once("mmtfl".to_string()).chain(args));
        assert_eq!(code, 0);
    }
    let heat = std::fs::read_to_string(dir.join("heatmap.csv")).expect("heatmap written");
    println!("heatmap: {} task rows", heat.lines().count() - 1);
    let manifest: DatasetManifest = read_json(&data.join(MANIFEST_FILE)).expect("manifest");
    println!(
        "manifest: {} tasks, d = {}, pattern {:?}, seed {:?}, config hash {}",
        manifest.tasks,
        manifest.d,
        manifest.pattern,
        manifest.seed,
        manifest.config_hash.as_deref().unwrap_or("-")
    );
    std::fs::remove_dir_all(&dir).expect("cleanup");
}
