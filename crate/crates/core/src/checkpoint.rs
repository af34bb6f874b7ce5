//! Versioned JSON checkpoints for trained teachers and students.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cpf::{CpfConfig, CpfParams};
use crate::error::{Error, Result};
use crate::graphdata::{Graph, SplitScheme};
use crate::models::{ModelKind, Network, TrainConfig};

pub const FORMAT: &str = "hmsf-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum Payload {
    Supervised {
        config: TrainConfig,
        network: Network,
    },
    Student {
        config: CpfConfig,
        teacher: ModelKind,
        params: CpfParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dataset: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub scheme: SplitScheme,
    pub seed: u64,
    pub payload: Payload,
}

impl Checkpoint {
    pub fn new(g: &Graph, scheme: SplitScheme, seed: u64, payload: Payload) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            dataset: g.name().to_string(),
            num_nodes: g.num_nodes(),
            num_features: g.num_features(),
            num_classes: g.num_classes(),
            scheme,
            seed,
            payload,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let json = serde_json::to_string(self).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&raw).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: not a checkpoint file",
                path.display()
            )));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: version {} is not supported (expected {VERSION})",
                path.display(),
                ck.version
            )));
        }
        Ok(ck)
    }

    /// Fails unless the checkpoint was trained on a graph of this shape.
    pub fn check_graph(&self, g: &Graph) -> Result<()> {
        let have = (self.num_nodes, self.num_features, self.num_classes);
        let want = (g.num_nodes(), g.num_features(), g.num_classes());
        if have != want || self.dataset != g.name() {
            return Err(Error::Checkpoint(format!(
                "checkpoint for {} {:?} does not match dataset {} {:?}",
                self.dataset,
                have,
                g.name(),
                want
            )));
        }
        Ok(())
    }

    pub fn supervised(&self) -> Result<(&TrainConfig, &Network)> {
        match &self.payload {
            Payload::Supervised { config, network } => Ok((config, network)),
            Payload::Student { .. } => Err(Error::Checkpoint(
                "expected a teacher checkpoint, found a student".into(),
            )),
        }
    }

    pub fn student(&self) -> Result<(&CpfConfig, ModelKind, &CpfParams)> {
        match &self.payload {
            Payload::Student {
                config,
                teacher,
                params,
            } => Ok((config, *teacher, params)),
            Payload::Supervised { .. } => Err(Error::Checkpoint(
                "expected a student checkpoint, found a teacher".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GcnParams;
    use crate::synthetic::two_clusters;
    use rand::SeedableRng;

    #[test]
    fn round_trip_and_mismatch() {
        let g = two_clusters(4, true);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let net = Network::Gcn(GcnParams::init(4, 3, 2, &mut rng));
        let ck = Checkpoint::new(
            &g,
            SplitScheme::H2gcn,
            3,
            Payload::Supervised {
                config: TrainConfig::new(ModelKind::Gcn),
                network: net,
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        back.check_graph(&g).unwrap();
        assert!(back.student().is_err());
        assert!(back.check_graph(&two_clusters(5, true)).is_err());
        std::fs::write(&path, r#"{"format":"other"}"#).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
