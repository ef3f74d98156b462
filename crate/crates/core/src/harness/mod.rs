//! Experiment drivers behind the `kbs` command line.
//!
//! Each experiment resolves a flat [`ConfigTable`] into its typed config,
//! runs, and writes CSV files whose first line records the config hash and
//! seed. Identical configs produce byte-identical files.

pub mod config;
pub mod dyad;
pub mod io;
pub mod l84;
pub mod l96;
pub mod linear;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use config::{config_hash, ConfigTable};
pub use dyad::{run_dyad_aci, DyadExperimentConfig};
pub use l84::{run_l84_discover, L84Config};
pub use l96::{run_l96_table, L96TableConfig};
pub use linear::{run_linear_consistency, LinearConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    L96Table,
    DyadAci,
    L84Discover,
    LinearConsistency,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::L96Table,
        Experiment::DyadAci,
        Experiment::L84Discover,
        Experiment::LinearConsistency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::L96Table => "l96-table",
            Experiment::DyadAci => "dyad-aci",
            Experiment::L84Discover => "l84-discover",
            Experiment::LinearConsistency => "linear-consistency",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Files written by one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub hash: String,
    pub files: Vec<PathBuf>,
}

pub fn run_experiment(experiment: Experiment, table: &ConfigTable, out: &Path) -> Result<ExperimentOutput> {
    std::fs::create_dir_all(out)?;
    match experiment {
        Experiment::L96Table => run_l96_table(&table.resolve()?, out),
        Experiment::DyadAci => run_dyad_aci(&table.resolve()?, out),
        Experiment::L84Discover => run_l84_discover(&table.resolve()?, out),
        Experiment::LinearConsistency => run_linear_consistency(&table.resolve()?, out),
    }
}
