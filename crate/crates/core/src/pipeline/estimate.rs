use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::video::boundary_flags;
use super::{EvalConfig, PipelineError, SupportSet};
use crate::attention::{enhance, AttentionWeights};
use crate::geom::{icp_refine_point_to_plane, ransac_align, CorrespondenceSet, Oriented, PointCloud, Pose};
use crate::matching::{extract_matches, score_matrix, sinkhorn, SinkhornParams};
use crate::nn::PointIndex;
use crate::rgbd::{estimate_normals, extract_toy_features, FeatureCloud, RgbdPatch};

/// Support view with descriptors and its sampled points in the object frame.
#[derive(Debug, Clone)]
pub struct PreparedView {
    pub features: FeatureCloud,
    pub pose: Pose,
    pub object_points: Vec<Vector3<f64>>,
    /// Surface normals at `object_points`, object frame.
    pub object_normals: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone)]
pub struct PreparedSupport {
    pub object_id: String,
    pub views: Vec<PreparedView>,
}

impl PreparedSupport {
    /// Extracts support descriptors once so they can be reused across queries.
    pub fn new(support: &SupportSet, config: &EvalConfig) -> Result<Self, PipelineError> {
        if support.views.is_empty() {
            return Err(PipelineError::NotEnoughFrames { needed: 1, available: 0 });
        }
        let views = support
            .views
            .iter()
            .map(|v| {
                let features = extract_toy_features(&v.patch, &config.features, config.seed)
                    .map_err(|e| PipelineError::DatasetFormat(format!("support view {}: {e}", v.source)))?;
                let to_object = v.pose.inverse();
                let object_points = features.points.iter().map(|p| to_object.apply(p)).collect();
                let (cloud, _) = v.patch.backproject();
                let object_normals =
                    crate::rgbd::normals_near(&features.points, &cloud, config.features.normal_neighbors)
                        .iter()
                        .map(|n| to_object.rotation * n)
                        .collect();
                Ok(PreparedView { features, pose: v.pose, object_points, object_normals })
            })
            .collect::<Result<_, PipelineError>>()?;
        Ok(PreparedSupport { object_id: support.object_id.clone(), views })
    }
}

/// Query features plus its full masked cloud for refinement.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub features: FeatureCloud,
    pub cloud: PointCloud,
    /// Cloud points on a mask edge or depth step; never paired by ICP.
    pub boundary: Vec<bool>,
}

impl PreparedQuery {
    pub fn new(query: &RgbdPatch, config: &EvalConfig) -> Result<Self, PipelineError> {
        if query.mask_count() == 0 {
            return Err(PipelineError::EmptyQuery);
        }
        let (cloud, pixels) = query.backproject();
        if cloud.is_empty() {
            return Err(PipelineError::EmptyQuery);
        }
        let features = extract_toy_features(query, &config.features, config.seed)
            .map_err(|e| PipelineError::DatasetFormat(format!("query: {e}")))?;
        let boundary = boundary_flags(query, &pixels, config.icp_depth_jump);
        Ok(PreparedQuery { features, cloud, boundary })
    }
}

/// Produces `(object-frame point, query camera point)` pairs for one view.
pub trait Matcher: Sync {
    fn match_view(&self, view: &PreparedView, query: &PreparedQuery) -> Result<Vec<Pair>, PipelineError>;
}

pub type Pair = (Vector3<f64>, Vector3<f64>);

/// Attention enhancement, Sinkhorn assignment and mutual-argmax extraction.
#[derive(Debug, Clone)]
pub struct FeatureMatcher {
    pub weights: AttentionWeights,
    pub sinkhorn: SinkhornParams,
}

impl FeatureMatcher {
    pub fn from_config(config: &EvalConfig) -> Result<Self, PipelineError> {
        Ok(FeatureMatcher { weights: config.attention.load()?, sinkhorn: config.sinkhorn })
    }
}

impl Matcher for FeatureMatcher {
    fn match_view(&self, view: &PreparedView, query: &PreparedQuery) -> Result<Vec<Pair>, PipelineError> {
        let internal = |e: String| PipelineError::InvalidConfig(e);
        let (protos, queries) =
            enhance(&view.features, &query.features, &self.weights).map_err(|e| internal(e.to_string()))?;
        let scores = score_matrix(&protos, &queries, self.sinkhorn.temperature).map_err(|e| internal(e.to_string()))?;
        let dustbin = self.sinkhorn.use_dustbin.then_some(self.sinkhorn.dustbin_score);
        let assignment = sinkhorn(&scores, self.sinkhorn.iterations, dustbin).map_err(|e| internal(e.to_string()))?;
        let matches = extract_matches(&assignment, self.sinkhorn.match_threshold);
        Ok(matches.matches.iter().map(|m| (view.object_points[m.prototype], query.features.points[m.query])).collect())
    }
}

/// Ground-truth correspondences: each query point is carried into the object
/// frame with the true query pose and paired with that exact location. Only
/// points within `tolerance` meters of the view's samples count, so a view
/// gets pairs for the surface it actually sees.
#[derive(Debug, Clone, Copy)]
pub struct OracleMatcher {
    pub query_pose: Pose,
    pub tolerance: f64,
}

impl Matcher for OracleMatcher {
    fn match_view(&self, view: &PreparedView, query: &PreparedQuery) -> Result<Vec<Pair>, PipelineError> {
        if view.object_points.is_empty() {
            return Ok(Vec::new());
        }
        let index = PointIndex::new(&view.object_points);
        let to_object = self.query_pose.inverse();
        let tol2 = self.tolerance * self.tolerance;
        Ok(query
            .features
            .points
            .iter()
            .filter_map(|q| {
                let p = to_object.apply(q);
                (index.nearest(&p).1 <= tol2).then_some((p, *q))
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub pose: Pose,
    pub chosen_view: usize,
    /// Mean squared inlier residual per view (m²); `+∞` for failed views.
    pub per_view_losses: Vec<f64>,
    pub match_counts: Vec<usize>,
    pub inlier_counts: Vec<usize>,
    pub refined: bool,
}

/// Aligns the query against every prepared view and keeps the candidate with
/// the lowest loss; ties go to the lower view index.
pub fn estimate_prepared(
    support: &PreparedSupport,
    query: &PreparedQuery,
    config: &EvalConfig,
    matcher: &dyn Matcher,
) -> Result<EstimateResult, PipelineError> {
    let k = support.views.len();
    let mut losses = vec![f64::INFINITY; k];
    let mut match_counts = vec![0; k];
    let mut inlier_counts = vec![0; k];
    let mut best: Option<(usize, Pose)> = None;
    for (v, view) in support.views.iter().enumerate() {
        let pairs = matcher.match_view(view, query)?;
        match_counts[v] = pairs.len();
        if pairs.len() < 3 {
            continue;
        }
        let corr = CorrespondenceSet::from_pairs(pairs);
        let Ok(aligned) = ransac_align(&corr, &config.ransac) else {
            continue;
        };
        losses[v] = aligned.residual;
        inlier_counts[v] = aligned.inlier_count();
        if best.is_none_or(|(b, _)| aligned.residual < losses[b]) {
            best = Some((v, aligned.pose));
        }
    }
    let (chosen_view, mut pose) = best.ok_or_else(|| {
        PipelineError::PoseEstimationFailed(format!("no support view of {} reached consensus", support.object_id))
    })?;
    let mut refined = false;
    if config.use_icp {
        if let Some(p) = refine(&support.views[chosen_view], query, &pose, config) {
            pose = p;
            refined = true;
        }
    }
    Ok(EstimateResult { pose, chosen_view, per_view_losses: losses, match_counts, inlier_counts, refined })
}

/// Point-to-plane ICP of the chosen view's samples against the query cloud.
fn refine(view: &PreparedView, query: &PreparedQuery, init: &Pose, config: &EvalConfig) -> Option<Pose> {
    let normals = estimate_normals(&query.cloud, config.features.normal_neighbors).ok()?;
    let model = PointCloud::new(view.object_points.clone());
    let src = Oriented::new(&model, &view.object_normals).ok()?;
    let dst = Oriented::new(&query.cloud, &normals).ok()?.with_boundary(&query.boundary).ok()?;
    icp_refine_point_to_plane(src, dst, init, &config.icp, config.icp_max_normal_angle).ok().map(|r| r.pose)
}

/// Full estimation with the configured feature matcher.
pub fn estimate_pose(
    support: &SupportSet,
    query: &RgbdPatch,
    config: &EvalConfig,
) -> Result<EstimateResult, PipelineError> {
    config.validate()?;
    let prepared = PreparedSupport::new(support, config)?;
    let q = PreparedQuery::new(query, config)?;
    let matcher = FeatureMatcher::from_config(config)?;
    estimate_prepared(&prepared, &q, config, &matcher)
}
