//! Loads a bundled scenario, runs it and writes the trace, filter log,
//! report and plotting script to a directory (default: a temp dir).

use std::path::{Path, PathBuf};

use resilient_consensus::cli::{presets, write_run, Report};
use resilient_consensus::Result;

fn main() -> Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fig5-sync-dpmsr".into());
    let out = std::env::args()
        .nth(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rescon-example").join(&name));
    let exp = presets::load(&name)?.build(Path::new("."))?;
    let trace = exp.run()?;
    let report = Report::compute(&exp, &trace)?;
    let files = write_run(&out, &trace, Some(&report))?;
    print!("{}", report.summary());
    println!("files in {}", files.dir.display());
    Ok(())
}
