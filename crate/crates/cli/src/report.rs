//! `report`: recompute a run's digests, optionally replaying it.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{run_resolved, EXIT_CONTRACT, EXIT_OK};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of an earlier run.
    pub dir: PathBuf,
    /// Re-execute the recorded configuration into this directory and compare
    /// every output byte for byte.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

pub fn execute(args: &ReportArgs) -> Result<i32> {
    let manifest = RunManifest::load(&args.dir)?;
    let changed = manifest.verify(&args.dir);
    let mut result = json!({
        "command": manifest.command,
        "version": manifest.version,
        "timestamp_utc": manifest.timestamp_utc,
        "outputs": manifest.outputs.len(),
        "changed": changed,
    });
    let mut ok = changed.is_empty();
    if let Some(replay) = &args.replay {
        if replay == &args.dir {
            bail!("replay directory must differ from the original");
        }
        let (_, outputs) = run_resolved(&manifest.command, &manifest.config, Some(replay))?;
        let differing: Vec<&str> = manifest
            .outputs
            .iter()
            .filter(|o| !outputs.contains(o))
            .map(|o| o.path.as_str())
            .collect();
        let identical = differing.is_empty() && outputs.len() == manifest.outputs.len();
        ok &= identical;
        result["replay"] = json!({ "identical": identical, "differing": differing });
    }
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(if ok { EXIT_OK } else { EXIT_CONTRACT })
}
