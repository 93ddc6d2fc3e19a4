//! Run specification shared by all drivers: configuration, mesh sizes,
//! tolerances, output location, and the seed that makes runs reproducible.

use anyhow::{Context, Result};
use cellrom::newton::NewtonOptions;
use cellrom::rom::RomTolerances;
use cellrom::simulate::SimOptions;
use cellrom::{CellConfig, PseudoMesh, Region};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: CellConfig,
    /// Macro nodes per region.
    pub n_per_region: usize,
    /// Micro nodes per electrode column.
    pub n_micro: usize,
    pub dtau: f64,
    pub t_end: f64,
    pub newton_rtol: f64,
    pub tolerances: RomTolerances,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            config: CellConfig::default(),
            n_per_region: 20,
            n_micro: 10,
            dtau: 1e-2,
            t_end: 1.0,
            newton_rtol: 1e-5,
            tolerances: RomTolerances::default(),
            seed: 2024,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunSpec {
    pub fn load_config(&mut self, path: Option<&Path>) -> Result<()> {
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading configuration {}", path.display()))?;
            self.config = CellConfig::from_key_values(&text)
                .with_context(|| format!("parsing configuration {}", path.display()))?;
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<PseudoMesh> {
        Ok(PseudoMesh::build(
            self.n_per_region,
            self.n_micro,
            [
                self.config.width_fraction(Region::Anode),
                self.config.width_fraction(Region::Separator),
                self.config.width_fraction(Region::Cathode),
            ],
        )?)
    }

    pub fn sim_options(&self, record_stages: bool) -> SimOptions {
        SimOptions {
            dtau: self.dtau,
            t_end: self.t_end,
            e_min: self.config.e_min,
            newton: NewtonOptions {
                rtol: self.newton_rtol,
                ..NewtonOptions::default()
            },
            record_stages,
        }
    }

    pub fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating output directory {}", self.out_dir.display()))?;
        Ok(())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write_out(&self, name: &str, contents: &str) -> Result<PathBuf> {
        self.ensure_out_dir()?;
        let path = self.out_path(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
