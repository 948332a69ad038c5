use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp};
use super::windows::{features, NormStats};
use super::PolicyConfig;
use crate::error::{Error, Result};
use crate::io::{read_input, write_atomic};
use crate::kinematics::{JointVector, JOINT_COUNT};
use crate::trajectory::Provenance;

pub const POLICY_SCHEMA: &str = "policy-v1";

/// A trained network with everything needed to run it on raw joint angles.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub config: PolicyConfig,
    pub norm: NormStats,
    pub net: Mlp,
    pub joint_names: Vec<String>,
    pub provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
    joint_names: Vec<String>,
    config: PolicyConfig,
    norm: NormStats,
    layers: Vec<LayerFile>,
}

impl PolicyBundle {
    pub fn new(config: PolicyConfig, norm: NormStats, net: Mlp, joint_names: Vec<String>) -> Result<Self> {
        let b = Self { config, norm, net, joint_names, provenance: None };
        b.check()?;
        Ok(b)
    }

    pub fn with_provenance(mut self, prov: Provenance) -> Self {
        self.provenance = Some(prov);
        self
    }

    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        let expect = self.config.layer_sizes(JOINT_COUNT);
        if self.net.sizes() != expect {
            return Err(Error::Contract(format!(
                "network layout {:?} does not match config {:?}",
                self.net.sizes(),
                expect
            )));
        }
        if self.norm.input_dim() != expect[0] || self.norm.output_dim() != JOINT_COUNT {
            return Err(Error::Contract("normalization width does not match the network".into()));
        }
        self.norm.check()?;
        if !self.net.is_finite() {
            return Err(Error::Contract("network weights are not finite".into()));
        }
        if self.joint_names.len() != JOINT_COUNT {
            return Err(Error::Contract(format!("bundle lists {} joints", self.joint_names.len())));
        }
        Ok(())
    }

    pub fn history_len(&self) -> usize {
        self.config.history_len
    }

    /// Next absolute configuration given the last `H` frames (oldest first).
    /// Non-finite outputs are returned as-is for the caller to judge.
    pub fn predict(&self, history: &[JointVector], distance_m: f64) -> Result<JointVector> {
        if history.len() != self.history_len() {
            return Err(Error::Contract(format!(
                "history has {} frames, policy expects {}",
                history.len(),
                self.history_len()
            )));
        }
        let x = features(history, distance_m, self.config.distance_scale);
        let mut xm = Array2::from_shape_vec((1, x.len()), x).expect("one row");
        self.norm.normalize_x(&mut xm);
        let yn = self.net.forward(xm.view())?;
        let y = self.norm.denormalize_y(yn.row(0));
        let mut q = [0.0; JOINT_COUNT];
        q.copy_from_slice(&y);
        Ok(q)
    }

    pub fn to_json(&self) -> String {
        let layers = self
            .net
            .layers
            .iter()
            .map(|l| LayerFile {
                rows: l.outputs(),
                cols: l.inputs(),
                weight: l.weight.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect();
        let file = BundleFile {
            schema: POLICY_SCHEMA.into(),
            provenance: self.provenance.clone(),
            joint_names: self.joint_names.clone(),
            config: self.config.clone(),
            norm: self.norm.clone(),
            layers,
        };
        let mut s = serde_json::to_string(&file).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::Parse { offset: 0, message: e.to_string() })?;
        let found = value.get("schema").and_then(|v| v.as_str()).unwrap_or("");
        if found != POLICY_SCHEMA {
            return Err(Error::SchemaMismatch { expected: POLICY_SCHEMA.into(), found: found.into() });
        }
        let file: BundleFile = serde_json::from_value(value)
            .map_err(|e| Error::validation("policy", e.to_string()))?;
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, l) in file.layers.into_iter().enumerate() {
            if l.bias.len() != l.rows {
                return Err(Error::validation(format!("layers[{i}].bias"), "length differs from rows"));
            }
            let weight = Array2::from_shape_vec((l.rows, l.cols), l.weight)
                .map_err(|e| Error::validation(format!("layers[{i}].weight"), e.to_string()))?;
            layers.push(Dense { weight, bias: Array1::from(l.bias) });
        }
        let bundle = Self {
            config: file.config,
            norm: file.norm,
            net: Mlp { layers },
            joint_names: file.joint_names,
            provenance: file.provenance,
        };
        bundle.check()?;
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_input(path)?)
    }
}
