use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::attention::AttentionWeights;
use crate::geom::{IcpParams, RansacParams};
use crate::matching::SinkhornParams;
use crate::metrics::{MetricKind, DEFAULT_AUC_MAX, DEFAULT_AUC_STEP, DEFAULT_RECALL_FRACTION};
use crate::rgbd::{FeatureParams, DESCRIPTOR_DIM};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    /// Seed of the Gaussian initialization used when no weights file is given.
    pub seed: u64,
    pub weights_path: Option<PathBuf>,
}

impl AttentionConfig {
    pub fn load(&self) -> Result<AttentionWeights, PipelineError> {
        let w = match &self.weights_path {
            Some(p) => AttentionWeights::load(p).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?,
            None => AttentionWeights::random(DESCRIPTOR_DIM, self.seed),
        };
        if w.descriptor_dim != DESCRIPTOR_DIM {
            return Err(PipelineError::InvalidConfig(format!(
                "attention weights have dimension {}, descriptors have {DESCRIPTOR_DIM}",
                w.descriptor_dim
            )));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Support views per object.
    pub support_k: usize,
    /// Side of the square object crop fed to the feature extractor (pixels).
    pub patch_size: usize,
    /// Relative growth of the mask bounding box before cropping.
    pub box_padding: f64,
    /// `n_points` is the token budget per patch.
    pub features: FeatureParams,
    pub attention: AttentionConfig,
    pub sinkhorn: SinkhornParams,
    pub ransac: RansacParams,
    pub use_icp: bool,
    /// Point-to-plane refinement of the chosen candidate against the query.
    pub icp: IcpParams,
    /// Refinement pairs whose normals differ by more than this (radians) are dropped.
    pub icp_max_normal_angle: f64,
    /// Depth step (m) that marks a query occlusion boundary for refinement.
    pub icp_depth_jump: f64,
    pub metrics: Vec<MetricKind>,
    pub auc_max: f64,
    pub auc_step: f64,
    pub recall_fraction: f64,
    /// Random poses per object for the chance-level recall baseline.
    pub baseline_poses: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            support_k: 16,
            patch_size: 255,
            box_padding: 0.1,
            features: FeatureParams::default(),
            attention: AttentionConfig::default(),
            sinkhorn: SinkhornParams::default(),
            ransac: RansacParams::default(),
            use_icp: false,
            icp: IcpParams { max_iterations: 50, convergence_eps: 1e-12, max_corr_dist: 0.01 },
            icp_max_normal_angle: 30f64.to_radians(),
            icp_depth_jump: 0.005,
            metrics: vec![MetricKind::Add, MetricKind::Adds],
            auc_max: DEFAULT_AUC_MAX,
            auc_step: DEFAULT_AUC_STEP,
            recall_fraction: DEFAULT_RECALL_FRACTION,
            baseline_poses: 1000,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text =
            fs::read_to_string(path).map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let cfg: EvalConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.support_k == 0 {
            return bad("support_k must be >= 1".into());
        }
        if self.patch_size < 8 {
            return bad(format!("patch_size {} too small", self.patch_size));
        }
        if !(self.box_padding >= 0.0 && self.box_padding.is_finite()) {
            return bad(format!("box_padding {}", self.box_padding));
        }
        if self.features.n_points == 0 || self.features.normal_neighbors < 3 || !(self.features.geometry_radius > 0.0) {
            return bad("feature parameters out of range".into());
        }
        if self.sinkhorn.iterations == 0 || !(self.sinkhorn.temperature > 0.0) {
            return bad("sinkhorn iterations and temperature must be positive".into());
        }
        if self.ransac.iterations == 0 || !(self.ransac.inlier_threshold > 0.0) {
            return bad("ransac iterations and threshold must be positive".into());
        }
        if !(self.icp.max_corr_dist > 0.0) || self.icp.max_iterations == 0 {
            return bad("icp gate and iterations must be positive".into());
        }
        if !(self.auc_step > 0.0 && self.auc_max >= self.auc_step) {
            return bad(format!("auc_max {} / auc_step {}", self.auc_max, self.auc_step));
        }
        if !(self.recall_fraction > 0.0) {
            return bad(format!("recall_fraction {}", self.recall_fraction));
        }
        if self.metrics.is_empty() {
            return bad("no metrics selected".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = EvalConfig::default();
        assert_eq!(c.support_k, 16);
        assert_eq!(c.patch_size, 255);
        assert!(!c.use_icp);
        c.validate().unwrap();
        let back: EvalConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: EvalConfig = serde_json::from_str(r#"{"support_k": 4, "ransac": {"iterations": 64}}"#).unwrap();
        assert_eq!(c.support_k, 4);
        assert_eq!(c.ransac.iterations, 64);
        assert_eq!(c.ransac.inlier_threshold, RansacParams::default().inlier_threshold);
        assert_eq!(c.patch_size, 255);
        assert!(serde_json::from_str::<EvalConfig>(r#"{"supportk": 4}"#).is_err());
    }
}
