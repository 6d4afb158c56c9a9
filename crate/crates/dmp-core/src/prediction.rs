//! Bidirectional target prediction.
//!
//! Forward path: every target cell gets a label vector, initialized to the
//! cell's offset from its cluster centroid and refined by gradient descent
//! on an objective that pulls labels toward their cluster centroid while
//! pushing the label-enhanced cluster centroids apart. The optimized labels
//! are added onto the feature map block-wise, producing the enhanced map
//! used for a sharper affinity.
//!
//! Backward path: target and reference maps are split into per-cluster
//! tensors (zero outside each cluster's cells); a restricted affinity is
//! computed per cluster and the results merged with weights that favor
//! clusters whose centroids agree across the two frames.

use crate::affinity::AffinityMatrix;
use crate::clustering::{ClusterModel, GridCell, GridGeometry};
use crate::error::{Error, Result};
use crate::feature::FeatureMap;

/// Norms below this threshold are treated as zero when normalizing
/// directions (the objective is non-differentiable at exact coincidence).
const NORM_FLOOR: f64 = 1e-12;

/// One label vector per grid cell, indexed by cell id; labels share the
/// cell feature dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    labels: Vec<Vec<f64>>,
}

impl LabelSet {
    pub fn new(labels: Vec<Vec<f64>>) -> Result<Self> {
        let dim = labels
            .first()
            .ok_or_else(|| Error::validation("label set must not be empty".to_string()))?
            .len();
        for (id, l) in labels.iter().enumerate() {
            if l.len() != dim {
                return Err(Error::validation(format!(
                    "label {id} has dimension {} but the first label has {dim}",
                    l.len()
                )));
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("label {id} is not finite")));
            }
        }
        Ok(LabelSet { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.labels[0].len()
    }

    pub fn label(&self, id: usize) -> &[f64] {
        &self.labels[id]
    }
}

/// Output of the forward label refinement: the labels plus the objective
/// value before refinement and after each descent step (never increasing).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelOptimization {
    pub labels: LabelSet,
    pub objective_trace: Vec<f64>,
}

/// Per-cluster centroids of the label-enhanced cell features `f_k + l_k`,
/// plus the member count of each cluster.
fn enhanced_centroids(
    model: &ClusterModel,
    cells: &[GridCell],
    labels: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = cells[0].feature().len();
    let m = model.cluster_count();
    let mut sums = vec![vec![0.0f64; dim]; m];
    let mut counts = vec![0.0f64; m];
    for (k, cell) in cells.iter().enumerate() {
        let c = model.assignment()[k];
        counts[c] += 1.0;
        for (s, (f, l)) in sums[c].iter_mut().zip(cell.feature().iter().zip(&labels[k])) {
            *s += f + l;
        }
    }
    for (sum, &n) in sums.iter_mut().zip(&counts) {
        for s in sum.iter_mut() {
            *s /= n;
        }
    }
    (sums, counts)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Objective: sum over cells of the distance from each label to its
/// cluster's (frozen) feature centroid, minus `zeta` times the separation
/// of the enhanced centroids summed over ordered pairs of cells in
/// different clusters.
fn objective(model: &ClusterModel, cells: &[GridCell], labels: &[Vec<f64>], zeta: f64) -> f64 {
    let mut pull = 0.0;
    for (k, l) in labels.iter().enumerate() {
        let mu = model.clusters()[model.assignment()[k]].mu_f();
        pull += l
            .iter()
            .zip(mu)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    }

    let (centroids, counts) = enhanced_centroids(model, cells, labels);
    let m = centroids.len();
    let mut spread = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let d: f64 = centroids[i]
                    .iter()
                    .zip(&centroids[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                spread += counts[i] * counts[j] * d;
            }
        }
    }
    pull - zeta * spread
}

fn gradient(model: &ClusterModel, cells: &[GridCell], labels: &[Vec<f64>], zeta: f64) -> Vec<Vec<f64>> {
    let dim = labels[0].len();
    let (centroids, counts) = enhanced_centroids(model, cells, labels);
    let m = centroids.len();

    // Per-cluster push term: for a cell in cluster i the spread term
    // contributes -2 * zeta * sum_{j != i} n_j * (mu_i - mu_j) / ||mu_i - mu_j||.
    let mut push = vec![vec![0.0f64; dim]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let diff: Vec<f64> = centroids[i]
                .iter()
                .zip(&centroids[j])
                .map(|(a, b)| a - b)
                .collect();
            let d = norm(&diff);
            if d > NORM_FLOOR {
                for (p, v) in push[i].iter_mut().zip(&diff) {
                    *p -= 2.0 * zeta * counts[j] * v / d;
                }
            }
        }
    }

    let mut grad = vec![vec![0.0f64; dim]; labels.len()];
    for (k, l) in labels.iter().enumerate() {
        let c = model.assignment()[k];
        let mu = model.clusters()[c].mu_f();
        let diff: Vec<f64> = l.iter().zip(mu).map(|(a, b)| a - b).collect();
        let d = norm(&diff);
        if d > NORM_FLOOR {
            for (g, v) in grad[k].iter_mut().zip(&diff) {
                *g += v / d;
            }
        }
        for (g, p) in grad[k].iter_mut().zip(&push[c]) {
            *g += p;
        }
    }
    grad
}

/// Initializes each cell's label to its offset from the cluster centroid
/// and refines by `steps` gradient-descent iterations. A step that would
/// raise the objective halves the step size and retries (at most five
/// halvings); if every retry fails the labels stay put for that step, so
/// the recorded objective trace never increases.
pub fn forward_label_optimize(
    model: &ClusterModel,
    cells: &[GridCell],
    zeta: f64,
    steps: usize,
    step_size: f64,
) -> Result<LabelOptimization> {
    if !zeta.is_finite() || zeta < 0.0 {
        return Err(Error::validation(format!(
            "zeta must be non-negative, got {zeta}"
        )));
    }
    if !step_size.is_finite() || step_size <= 0.0 {
        return Err(Error::validation(format!(
            "step size must be positive, got {step_size}"
        )));
    }
    if cells.len() != model.assignment().len() {
        return Err(Error::validation(format!(
            "{} cells but the cluster model assigns {}",
            cells.len(),
            model.assignment().len()
        )));
    }
    let dim = model.clusters()[0].mu_f().len();
    if cells.iter().any(|c| c.feature().len() != dim) {
        return Err(Error::validation(
            "cell features do not match the cluster model's dimension".to_string(),
        ));
    }

    let mut labels: Vec<Vec<f64>> = cells
        .iter()
        .enumerate()
        .map(|(k, cell)| {
            let mu = model.clusters()[model.assignment()[k]].mu_f();
            cell.feature().iter().zip(mu).map(|(f, m)| f - m).collect()
        })
        .collect();

    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(objective(model, cells, &labels, zeta));

    for _ in 0..steps {
        let grad = gradient(model, cells, &labels, zeta);
        let current = *trace.last().expect("trace seeded above");
        let mut eta = step_size;
        let mut accepted = None;
        for _attempt in 0..6 {
            let candidate: Vec<Vec<f64>> = labels
                .iter()
                .zip(&grad)
                .map(|(l, g)| l.iter().zip(g).map(|(a, b)| a - eta * b).collect())
                .collect();
            let value = objective(model, cells, &candidate, zeta);
            if value <= current {
                accepted = Some((candidate, value));
                break;
            }
            eta /= 2.0;
        }
        match accepted {
            Some((candidate, value)) => {
                labels = candidate;
                trace.push(value);
            }
            None => trace.push(current),
        }
    }

    Ok(LabelOptimization {
        labels: LabelSet::new(labels)?,
        objective_trace: trace,
    })
}

/// Adds each cell's label vector onto every pixel of that cell's block:
/// `out(p) = map(p) + label(cell_of(p))`. Zero labels leave the map
/// untouched.
pub fn apply_labels(map: &FeatureMap, geom: &GridGeometry, labels: &LabelSet) -> Result<FeatureMap> {
    if geom.map_height() != map.height() || geom.map_width() != map.width() {
        return Err(Error::validation(
            "grid geometry does not match the feature map".to_string(),
        ));
    }
    if labels.len() != geom.cell_count() {
        return Err(Error::validation(format!(
            "{} labels for {} grid cells",
            labels.len(),
            geom.cell_count()
        )));
    }
    if labels.dim() != map.channels() {
        return Err(Error::validation(format!(
            "label dimension {} does not match {} channels",
            labels.dim(),
            map.channels()
        )));
    }

    let mut out = map.clone();
    for y in 0..map.height() {
        for x in 0..map.width() {
            let l = labels.label(geom.cell_of_pixel(y, x));
            for (ch, v) in l.iter().enumerate() {
                let cur = out.get(y, x, ch);
                out.set(y, x, ch, cur + v);
            }
        }
    }
    Ok(out)
}

/// Per-cluster zero-padded views of one frame: tensor `i` equals the source
/// map on cluster-`i` cells and is zero elsewhere. Also keeps each
/// cluster's flat pixel support and the mean feature of its member cells
/// (`None` when no cell landed in the cluster).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSplitFeatures {
    tensors: Vec<FeatureMap>,
    support: Vec<Vec<usize>>,
    centroids: Vec<Option<Vec<f64>>>,
    pixel_assignment: Vec<Option<usize>>,
}

impl ClusterSplitFeatures {
    pub fn cluster_count(&self) -> usize {
        self.tensors.len()
    }

    pub fn tensors(&self) -> &[FeatureMap] {
        &self.tensors
    }

    /// Flat row-major pixel indices covered by each cluster.
    pub fn support(&self) -> &[Vec<usize>] {
        &self.support
    }

    /// Mean member-cell feature per cluster; `None` for empty clusters.
    pub fn centroids(&self) -> &[Option<Vec<f64>>] {
        &self.centroids
    }

    /// Cluster id of each flat pixel (`None` on unassigned cells).
    pub fn pixel_assignment(&self) -> &[Option<usize>] {
        &self.pixel_assignment
    }

    pub fn height(&self) -> usize {
        self.tensors[0].height()
    }

    pub fn width(&self) -> usize {
        self.tensors[0].width()
    }

    pub fn channels(&self) -> usize {
        self.tensors[0].channels()
    }
}

/// Splits `map` into `cluster_count` zero-padded tensors according to a
/// per-cell cluster assignment (`None` marks a discarded cell, which stays
/// zero in every tensor).
pub fn split_by_cluster(
    map: &FeatureMap,
    geom: &GridGeometry,
    cells: &[GridCell],
    assignment: &[Option<usize>],
    cluster_count: usize,
) -> Result<ClusterSplitFeatures> {
    if geom.map_height() != map.height() || geom.map_width() != map.width() {
        return Err(Error::validation(
            "grid geometry does not match the feature map".to_string(),
        ));
    }
    if assignment.len() != geom.cell_count() || cells.len() != geom.cell_count() {
        return Err(Error::validation(format!(
            "assignment covers {} cells, cells list {}, but the grid has {}",
            assignment.len(),
            cells.len(),
            geom.cell_count()
        )));
    }
    if cluster_count == 0 {
        return Err(Error::validation("cluster count must be positive".to_string()));
    }
    if let Some(c) = assignment.iter().flatten().find(|&&c| c >= cluster_count) {
        return Err(Error::validation(format!(
            "assignment names cluster {c} but only {cluster_count} exist"
        )));
    }

    let mut tensors = Vec::with_capacity(cluster_count);
    for _ in 0..cluster_count {
        tensors.push(FeatureMap::zeros(map.height(), map.width(), map.channels())?);
    }
    let mut support = vec![Vec::new(); cluster_count];
    let mut feature_sums = vec![vec![0.0f64; cells[0].feature().len()]; cluster_count];
    let mut member_counts = vec![0usize; cluster_count];
    let mut pixel_assignment = vec![None; map.height() * map.width()];

    for (id, assigned) in assignment.iter().enumerate() {
        let Some(c) = *assigned else { continue };
        member_counts[c] += 1;
        for (s, f) in feature_sums[c].iter_mut().zip(cells[id].feature()) {
            *s += f;
        }
        let (rows, cols) = geom.cell_pixel_bounds(id);
        for y in rows {
            for x in cols.clone() {
                support[c].push(y * map.width() + x);
                pixel_assignment[y * map.width() + x] = Some(c);
                for ch in 0..map.channels() {
                    tensors[c].set(y, x, ch, map.get(y, x, ch));
                }
            }
        }
    }
    for s in &mut support {
        s.sort_unstable();
    }

    let centroids = feature_sums
        .into_iter()
        .zip(&member_counts)
        .map(|(sum, &n)| {
            if n == 0 {
                None
            } else {
                Some(sum.into_iter().map(|v| v / n as f64).collect())
            }
        })
        .collect();

    Ok(ClusterSplitFeatures {
        tensors,
        support,
        centroids,
        pixel_assignment,
    })
}

/// Merge weights for a split pair: per cluster `1 / (1 + ||mu_query - mu_ref||)`,
/// zeroed when the reference side has no support, then normalized to sum 1.
/// All-zero weights (no usable cluster at all) normalize to all-zero; the
/// merge falls back to uniform rows in that case.
pub fn merge_weights(
    query_split: &ClusterSplitFeatures,
    ref_split: &ClusterSplitFeatures,
) -> Result<Vec<f64>> {
    if query_split.cluster_count() != ref_split.cluster_count() {
        return Err(Error::validation(format!(
            "query side has {} clusters, reference side {}",
            query_split.cluster_count(),
            ref_split.cluster_count()
        )));
    }
    let mut weights = Vec::with_capacity(query_split.cluster_count());
    for i in 0..query_split.cluster_count() {
        let usable = !ref_split.support()[i].is_empty();
        let w = match (usable, &query_split.centroids()[i], &ref_split.centroids()[i]) {
            (true, Some(q), Some(r)) => {
                let d: f64 = q
                    .iter()
                    .zip(r)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                1.0 / (1.0 + d)
            }
            _ => 0.0,
        };
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
    }
    Ok(weights)
}

/// Cluster-restricted affinity between a split query frame and a split
/// reference frame. Per cluster `i`, query pixels inside the cluster get a
/// softmax over cluster-`i` reference pixels; query pixels outside get a
/// uniform row over that support, keeping every per-cluster matrix
/// row-stochastic. The merged matrix is the weight-blended sum; when no
/// cluster is usable every row falls back to uniform over all reference
/// pixels.
pub fn merged_restricted_affinity(
    query_split: &ClusterSplitFeatures,
    ref_split: &ClusterSplitFeatures,
    temperature: f64,
) -> Result<AffinityMatrix> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::validation(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if query_split.channels() != ref_split.channels() {
        return Err(Error::validation(format!(
            "query has {} channels, reference {}",
            query_split.channels(),
            ref_split.channels()
        )));
    }
    let weights = merge_weights(query_split, ref_split)?;

    let rows = query_split.height() * query_split.width();
    let cols = ref_split.height() * ref_split.width();
    let c = query_split.channels();
    let mut merged = vec![0.0f64; rows * cols];

    if weights.iter().all(|&w| w == 0.0) {
        let fill = 1.0 / cols as f64;
        merged.fill(fill);
        return AffinityMatrix::new(query_split.height(), query_split.width(), cols, merged);
    }

    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let ref_support = &ref_split.support()[i];
        let ref_tensor = &ref_split.tensors()[i];
        let query_tensor = &query_split.tensors()[i];
        let uniform = 1.0 / ref_support.len() as f64;

        for q in 0..rows {
            let out_row = &mut merged[q * cols..(q + 1) * cols];
            if query_split.pixel_assignment()[q] == Some(i) {
                let qf = query_tensor.pixel_flat(q);
                let mut scores = Vec::with_capacity(ref_support.len());
                let mut max = f64::NEG_INFINITY;
                for &j in ref_support {
                    let rf = ref_tensor.pixel_flat(j);
                    let dot: f64 = qf.iter().zip(rf).take(c).map(|(a, b)| a * b).sum();
                    let s = dot / temperature;
                    if s > max {
                        max = s;
                    }
                    scores.push(s);
                }
                let mut denom = 0.0;
                for s in &mut scores {
                    *s = (*s - max).exp();
                    denom += *s;
                }
                for (&j, s) in ref_support.iter().zip(&scores) {
                    out_row[j] += w * s / denom;
                }
            } else {
                for &j in ref_support {
                    out_row[j] += w * uniform;
                }
            }
        }
    }

    AffinityMatrix::new(query_split.height(), query_split.width(), cols, merged)
}
