//! The staged pipeline driven from the library: a small cohort through every
//! stage into a temporary run directory, then a hash-identical rerun.

use lungmtl::pipeline::{run_pipeline, Config, RunOptions};

fn main() -> lungmtl::Result<()> {
    let mut cfg = Config::default();
    cfg.phantoms.cases = 24;
    cfg.train.epochs = 20;
    cfg.ablate.seeds = vec![1, 2];
    let base = std::env::temp_dir().join(format!("lungmtl-example-{}", std::process::id()));
    let first = run_pipeline(&cfg, &RunOptions::new(base.join("a")))?;
    let second = run_pipeline(&cfg, &RunOptions::new(base.join("b")))?;
    println!("{} outputs under {}", first.outputs.len(), base.display());
    for o in first.outputs.iter().filter(|o| o.path.ends_with(".csv") && !o.path.contains("curve_")) {
        println!("  {:<34} {:>8} bytes  {}", o.path, o.bytes, &o.sha256[..16]);
    }
    println!("run digest {} / rerun {}", first.digest(), second.digest());
    std::fs::remove_dir_all(&base).map_err(|e| lungmtl::Error::InvalidArgument(e.to_string()))?;
    Ok(())
}
