//! Runs the synchronous experiment over a grid of filter parameters and
//! graphs and prints the summary table.

use std::path::Path;

use resilient_consensus::cli::sweep::{run_sweep, write_table, Axis, Grid};
use resilient_consensus::cli::presets;
use resilient_consensus::{Error, Result};

fn main() -> Result<()> {
    let template: toml::Table = presets::find("fig5-sync-dpmsr")
        .expect("bundled preset")
        .source
        .parse()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let graphs = r#"v = [
        { generator = "example" },
        { generator = "example", remove_edges = [[2, 5]] },
        { generator = "complete", n = 5 },
    ]"#;
    let graphs: toml::Table = graphs.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let grid = Grid {
        axes: vec![
            Grid::parse_axis("params.f=[0, 1]")?,
            Axis {
                key: "graph".into(),
                values: graphs["v"].as_array().cloned().unwrap_or_default(),
            },
        ],
    };
    let rows = run_sweep(&template, Path::new("."), &grid, None);
    write_table(&grid, &rows, std::io::stdout())
}
