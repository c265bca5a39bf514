// Writes a generated dataset in the on-disk layout used by the `mmtfl`
// binary, reads it back and saves it again without changing a byte.

use std::fs;

use mmtfl::datagen::{generate, SyntheticSpec};
use mmtfl::io::{config_hash, read_dataset, write_dataset, write_ground_truth, DatasetManifest};

pub fn main() -> mmtfl::Result<()> {
    let spec = SyntheticSpec { tasks: 4, n: 30, d: 12, ..SyntheticSpec::d1(11) };
    let (data, truth) = generate(&spec)?;

    let root = std::env::temp_dir().join(format!("mmtfl-round-trip-{}", std::process::id()));
    let first = root.join("first");
    let second = root.join("second");
    fs::create_dir_all(&first)?;

    let mut manifest = DatasetManifest::for_dataset(&data);
    manifest.seed = Some(spec.seed);
    manifest.pattern = Some(spec.pattern);
    manifest.config_hash = Some(config_hash(&spec)?);
    manifest.truth = Some(write_ground_truth(&first, &truth)?);
    write_dataset(&first, &data, &manifest)?;

    let (loaded, loaded_manifest) = read_dataset(&first)?;
    write_dataset(&second, &loaded, &loaded_manifest)?;

    for file in &loaded_manifest.files {
        let same = fs::read(first.join(file))? == fs::read(second.join(file))?;
        println!("{file}: {} rows, identical after re-save: {same}", loaded.tasks()[0].n_samples());
        assert!(same);
    }
    let header = fs::read_to_string(first.join(&loaded_manifest.files[0]))?;
    println!("header: {}", header.lines().next().unwrap_or_default());
    fs::remove_dir_all(&root)?;
    Ok(())
}
