//! Parameter bag shared by all subcommands: a flat JSON file merged under the
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sfs_core::domains::Symmetry;
use sfs_core::{BoundaryCondition, SpaceForm};

use crate::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub verbose: Option<u8>,

    pub form: Option<SpaceForm>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub bc: Option<BoundaryCondition>,
    pub max_j: Option<usize>,
    #[serde(alias = "grid_points")]
    pub grid: Option<usize>,

    pub kmax: Option<usize>,
    pub jmax: Option<usize>,
    pub count: Option<usize>,
    pub certify: Option<bool>,

    pub specs: Option<Vec<PathBuf>>,
    pub random_family: Option<String>,
    pub hole: Option<f64>,
    pub base_out: Option<f64>,
    pub levels: Option<u32>,
    pub dump_mesh: Option<bool>,
    pub check: Option<String>,
    pub max_m: Option<u32>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
    }
}

/// Settings every subcommand sees after merging flags over the file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub verbosity: u8,
    pub quiet: bool,
    pub file: FileConfig,
}

impl RunConfig {
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        if self.verbosity > 0 {
            eprintln!("wrote {}", path.display());
        }
        Ok(path)
    }
}

/// `s=4 count=5 amplitude=0.1 hole=0.4 base_out=1`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilySpec {
    pub symmetry: Symmetry,
    pub count: usize,
    pub amplitude: f64,
    pub hole: Option<f64>,
    pub base_out: Option<f64>,
}

impl FamilySpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut spec = FamilySpec {
            symmetry: Symmetry::Order4,
            count: 5,
            amplitude: 0.1,
            hole: None,
            base_out: None,
        };
        let bad = |item: &str| CliError::Input(format!("bad random-family item '{item}'"));
        for item in text.split([' ', ',']).filter(|s| !s.is_empty()) {
            let (key, value) = item.split_once('=').ok_or_else(|| bad(item))?;
            match key {
                "s" | "symmetry" => {
                    spec.symmetry = value.parse().map_err(CliError::Core)?;
                }
                "count" => spec.count = value.parse().map_err(|_| bad(item))?,
                "amplitude" => spec.amplitude = value.parse().map_err(|_| bad(item))?,
                "hole" => spec.hole = Some(value.parse().map_err(|_| bad(item))?),
                "base_out" => spec.base_out = Some(value.parse().map_err(|_| bad(item))?),
                _ => return Err(bad(item)),
            }
        }
        if spec.count == 0 || spec.amplitude.is_nan() || spec.amplitude < 0.0 {
            return Err(CliError::Input(format!(
                "random family needs count >= 1 and amplitude >= 0, got '{text}'"
            )));
        }
        Ok(spec)
    }
}
