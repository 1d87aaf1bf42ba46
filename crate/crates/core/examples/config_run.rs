//! Drives a study from a TOML config the same way the `robust-design` binary
//! does: materialize defaults, run, then read the design file back.
//!
//! Run with `cargo run --release --example config_run`.

use robust_design::cli::{import_design, run, DesignFormat, ExperimentConfig, Overrides};

const CONFIG: &str = r#"
problem = "robust_design"
seed = 17

[model]
kind = "hetero_alpha"

[prior]
kind = "discrete_atoms"
atoms = [
  { value = [1.0, 0.0], mass = 0.2 },
  { value = [0.75, 0.25], mass = 0.2 },
  { value = [0.5, 0.5], mass = 0.2 },
  { value = [0.25, 0.75], mass = 0.2 },
  { value = [0.0, 1.0], mass = 0.2 },
]

[optimizer]
restarts = 2
"#;

fn main() -> robust_design::Result<()> {
    let dir = std::env::temp_dir().join("robust-design-config-run");
    let config = ExperimentConfig::from_toml_str(CONFIG)?.materialize(&Overrides {
        out_dir: Some(dir.clone()),
        ..Overrides::default()
    })?;
    println!("materialized config:\n{}", config.to_toml_string());

    let (report, files) = run(&config)?;
    println!("criterion {}", report.result["criterion"]);
    let path = files.design.expect("weighted problems write a design");
    let (design, _) = import_design(&path, DesignFormat::Csv, None)?;
    println!("{} support points read back from {}", design.len(), path.display());
    println!("{}", std::fs::read_to_string(&path).expect("design file"));
    Ok(())
}
