//! Frame-region clustering: grid partition, similarity, and the incremental
//! cluster builder.
//!
//! A feature map is cut into an `s x s` grid of cells (edge-replicated when
//! the map does not divide evenly); each cell carries its block-mean feature
//! vector and its normalized center. Target-frame cells are clustered
//! incrementally: a cell joins its best cluster when that similarity stands
//! out from the rest (`S_max > mean + 2 * std`), otherwise it founds a new
//! cluster. Because that statistic is degenerate while fewer than three
//! clusters exist (for two clusters it reduces to `S_max < S_min`), a plain
//! threshold `tau_join` decides instead in that regime. Reference-frame
//! cells are matched against the frozen target clusters by the same rule,
//! except failures discard the cell rather than founding a cluster.

use crate::error::{Error, Result};
use crate::feature::{FeatureMap, NormalizedPoint};

/// Spatial layout of a grid partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    height: usize,
    width: usize,
    grid_size: usize,
    cells_x: usize,
    cells_y: usize,
}

impl GridGeometry {
    pub fn new(height: usize, width: usize, grid_size: usize) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::validation("grid size must be positive".to_string()));
        }
        if grid_size > height || grid_size > width {
            return Err(Error::validation(format!(
                "grid size {grid_size} exceeds map {height}x{width}"
            )));
        }
        Ok(GridGeometry {
            height,
            width,
            grid_size,
            cells_x: width.div_ceil(grid_size),
            cells_y: height.div_ceil(grid_size),
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn cells_x(&self) -> usize {
        self.cells_x
    }

    pub fn cells_y(&self) -> usize {
        self.cells_y
    }

    pub fn cell_count(&self) -> usize {
        self.cells_x * self.cells_y
    }

    pub fn map_height(&self) -> usize {
        self.height
    }

    pub fn map_width(&self) -> usize {
        self.width
    }

    /// Cell id owning pixel `(y, x)`; cells are row-major over the grid.
    #[inline]
    pub fn cell_of_pixel(&self, y: usize, x: usize) -> usize {
        debug_assert!(y < self.height && x < self.width);
        (y / self.grid_size) * self.cells_x + x / self.grid_size
    }

    /// Pixel rows/cols covered by a cell, clipped to the real map (the
    /// replicated padding belongs to the edge cells conceptually but has no
    /// pixels of its own).
    pub fn cell_pixel_bounds(&self, id: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        debug_assert!(id < self.cell_count());
        let cy = id / self.cells_x;
        let cx = id % self.cells_x;
        let y0 = cy * self.grid_size;
        let x0 = cx * self.grid_size;
        (
            y0..(y0 + self.grid_size).min(self.height),
            x0..(x0 + self.grid_size).min(self.width),
        )
    }
}

/// One grid cell: block-mean feature and normalized block center.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    id: usize,
    feature: Vec<f64>,
    center: NormalizedPoint,
}

impl GridCell {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn feature(&self) -> &[f64] {
        &self.feature
    }

    pub fn center(&self) -> NormalizedPoint {
        self.center
    }
}

/// Cuts `map` into grid cells of size `s`, replicating the last row/column
/// of pixels into blocks that overhang the map. Cell centers are normalized
/// by the padded extent, so a 4x4 map at `s = 2` yields centers
/// `(0.25, 0.25) ... (0.75, 0.75)`.
pub fn partition_grids(map: &FeatureMap, s: usize) -> Result<(GridGeometry, Vec<GridCell>)> {
    let geom = GridGeometry::new(map.height(), map.width(), s)?;
    let c = map.channels();
    let padded_w = (geom.cells_x * s) as f64;
    let padded_h = (geom.cells_y * s) as f64;

    let mut cells = Vec::with_capacity(geom.cell_count());
    for cy in 0..geom.cells_y {
        for cx in 0..geom.cells_x {
            let mut feature = vec![0.0f64; c];
            for by in 0..s {
                // Clamped indexing implements edge replication.
                let y = (cy * s + by).min(map.height() - 1);
                for bx in 0..s {
                    let x = (cx * s + bx).min(map.width() - 1);
                    for (f, v) in feature.iter_mut().zip(map.pixel(y, x)) {
                        *f += v;
                    }
                }
            }
            let count = (s * s) as f64;
            for f in &mut feature {
                *f /= count;
            }
            let center = NormalizedPoint::new(
                (cx * s) as f64 / padded_w + s as f64 / (2.0 * padded_w),
                (cy * s) as f64 / padded_h + s as f64 / (2.0 * padded_h),
            )?;
            cells.push(GridCell {
                id: cy * geom.cells_x + cx,
                feature,
                center,
            });
        }
    }
    Ok((geom, cells))
}

/// Clustering knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Trade-off between feature distance (weight `lambda`) and position
    /// distance (weight `1 - lambda`).
    pub lambda: f64,
    /// Join threshold used while fewer than three clusters exist.
    pub tau_join: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            lambda: 0.5,
            tau_join: 0.5,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::validation(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !self.tau_join.is_finite() || !(0.0..1.0).contains(&self.tau_join) {
            return Err(Error::validation(format!(
                "tau_join must lie in [0, 1), got {}",
                self.tau_join
            )));
        }
        Ok(())
    }
}

/// A cluster of grid cells: members plus running feature/position centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    member_ids: Vec<usize>,
    mu_f: Vec<f64>,
    mu_p: (f64, f64),
}

impl Cluster {
    pub fn member_ids(&self) -> &[usize] {
        &self.member_ids
    }

    pub fn mu_f(&self) -> &[f64] {
        &self.mu_f
    }

    pub fn mu_p(&self) -> (f64, f64) {
        self.mu_p
    }

    fn seeded(cell: &GridCell) -> Cluster {
        Cluster {
            member_ids: vec![cell.id],
            mu_f: cell.feature.clone(),
            mu_p: (cell.center.x(), cell.center.y()),
        }
    }

    fn absorb(&mut self, cell: &GridCell) {
        let n = self.member_ids.len() as f64;
        for (m, v) in self.mu_f.iter_mut().zip(&cell.feature) {
            *m = (*m * n + v) / (n + 1.0);
        }
        self.mu_p = (
            (self.mu_p.0 * n + cell.center.x()) / (n + 1.0),
            (self.mu_p.1 * n + cell.center.y()) / (n + 1.0),
        );
        self.member_ids.push(cell.id);
    }
}

/// Result of clustering a target frame: the clusters and, for every cell id,
/// the cluster it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    clusters: Vec<Cluster>,
    assignment: Vec<usize>,
    params: ClusterParams,
}

impl ClusterModel {
    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Cluster index of each target cell, indexed by cell id.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn params(&self) -> ClusterParams {
        self.params
    }
}

/// Blended feature/position similarity between a cell and a cluster:
/// `S = 1 / (1 + lambda * ||f - mu_f|| + (1 - lambda) * ||p - mu_p||)`.
/// Always in `(0, 1]`, hitting 1 exactly when both distances vanish.
pub fn grid_cluster_similarity(cell: &GridCell, cluster: &Cluster, lambda: f64) -> f64 {
    debug_assert_eq!(cell.feature.len(), cluster.mu_f.len());
    let feat_dist: f64 = cell
        .feature
        .iter()
        .zip(&cluster.mu_f)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let dx = cell.center.x() - cluster.mu_p.0;
    let dy = cell.center.y() - cluster.mu_p.1;
    let pos_dist = (dx * dx + dy * dy).sqrt();
    1.0 / (1.0 + lambda * feat_dist + (1.0 - lambda) * pos_dist)
}

/// The join/spawn decision shared by target and reference clustering: with
/// fewer than three clusters the statistic `mean + 2 * std` cannot be
/// exceeded, so the `tau_join` threshold decides instead.
fn stands_out(similarities: &[f64], tau_join: f64) -> (usize, bool) {
    let mut best = 0usize;
    for (i, &s) in similarities.iter().enumerate() {
        if s > similarities[best] {
            best = i;
        }
    }
    let s_max = similarities[best];
    let joins = if similarities.len() < 3 {
        s_max > tau_join
    } else {
        let n = similarities.len() as f64;
        let mean = similarities.iter().sum::<f64>() / n;
        let var = similarities.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        s_max > mean + 2.0 * var.sqrt()
    };
    (best, joins)
}

fn check_cells(cells: &[GridCell]) -> Result<usize> {
    let first = cells
        .first()
        .ok_or_else(|| Error::validation("clustering needs at least one cell".to_string()))?;
    let dim = first.feature.len();
    if cells.iter().any(|c| c.feature.len() != dim) {
        return Err(Error::validation(
            "cells disagree on feature dimension".to_string(),
        ));
    }
    Ok(dim)
}

/// Incrementally clusters target-frame cells in id order. The first cell
/// founds the first cluster; each later cell either joins its argmax-similar
/// cluster (ties to the lowest index) or founds a new one.
pub fn cluster_target(cells: &[GridCell], params: ClusterParams) -> Result<ClusterModel> {
    params.validate()?;
    check_cells(cells)?;

    let mut clusters: Vec<Cluster> = vec![Cluster::seeded(&cells[0])];
    let mut assignment = vec![0usize; cells.len()];
    for (pos, cell) in cells.iter().enumerate().skip(1) {
        let sims: Vec<f64> = clusters
            .iter()
            .map(|cl| grid_cluster_similarity(cell, cl, params.lambda))
            .collect();
        let (best, joins) = stands_out(&sims, params.tau_join);
        if joins {
            clusters[best].absorb(cell);
            assignment[pos] = best;
        } else {
            clusters.push(Cluster::seeded(cell));
            assignment[pos] = clusters.len() - 1;
        }
    }
    Ok(ClusterModel {
        clusters,
        assignment,
        params,
    })
}

/// Reference-frame assignment: which target cluster each reference cell maps
/// to (`None` when the cell stood out from no cluster and was discarded).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAssignment {
    assigned: Vec<Option<usize>>,
    discarded: Vec<usize>,
}

impl ReferenceAssignment {
    /// Per-cell cluster index, indexed by cell id; `None` = discarded.
    pub fn assigned(&self) -> &[Option<usize>] {
        &self.assigned
    }

    pub fn discarded(&self) -> &[usize] {
        &self.discarded
    }
}

/// Matches reference-frame cells against a frozen target model: same
/// join rule as [`cluster_target`], but failing cells are discarded and the
/// model's centroids never move.
pub fn cluster_reference(cells: &[GridCell], model: &ClusterModel) -> Result<ReferenceAssignment> {
    let dim = check_cells(cells)?;
    if model.clusters.is_empty() || model.clusters[0].mu_f.len() != dim {
        return Err(Error::validation(
            "reference cells do not match the target model's feature dimension".to_string(),
        ));
    }

    let mut assigned = Vec::with_capacity(cells.len());
    let mut discarded = Vec::new();
    for cell in cells {
        let sims: Vec<f64> = model
            .clusters
            .iter()
            .map(|cl| grid_cluster_similarity(cell, cl, model.params.lambda))
            .collect();
        let (best, joins) = stands_out(&sims, model.params.tau_join);
        if joins {
            assigned.push(Some(best));
        } else {
            assigned.push(None);
            discarded.push(cell.id);
        }
    }
    Ok(ReferenceAssignment { assigned, discarded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(h: usize, w: usize, c: usize, data: Vec<f64>) -> FeatureMap {
        FeatureMap::new(h, w, c, data).unwrap()
    }

    fn cell(id: usize, feature: Vec<f64>, x: f64, y: f64) -> GridCell {
        GridCell {
            id,
            feature,
            center: NormalizedPoint::new(x, y).unwrap(),
        }
    }

    #[test]
    fn partition_4x4_s2_hand_geometry() {
        // Channel value = flat pixel index, so block means are easy to state.
        let data: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let m = map(4, 4, 1, data);
        let (geom, cells) = partition_grids(&m, 2).unwrap();
        assert_eq!(geom.cell_count(), 4);
        assert_eq!(cells.len(), 4);

        let centers: Vec<(f64, f64)> = cells.iter().map(|c| (c.center.x(), c.center.y())).collect();
        assert_eq!(
            centers,
            vec![(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
        );

        // Block means: {0,1,4,5} -> 2.5, {2,3,6,7} -> 4.5, etc.
        assert_eq!(cells[0].feature(), &[2.5]);
        assert_eq!(cells[1].feature(), &[4.5]);
        assert_eq!(cells[2].feature(), &[10.5]);
        assert_eq!(cells[3].feature(), &[12.5]);
    }

    #[test]
    fn partition_pads_by_edge_replication() {
        // 3x3 map, s = 2 -> 2x2 cells over a padded 4x4 extent.
        let data: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let m = map(3, 3, 1, data);
        let (geom, cells) = partition_grids(&m, 2).unwrap();
        assert_eq!((geom.cells_x(), geom.cells_y()), (2, 2));
        // Bottom-right cell covers pixel 8 replicated over the whole block.
        assert_eq!(cells[3].feature(), &[8.0]);
        // Top-right cell: pixels 2, 2 (replicated), 5, 5 -> 3.5.
        assert_eq!(cells[1].feature(), &[3.5]);
        // Centers normalize against the padded 4x4 extent.
        assert_eq!((cells[0].center.x(), cells[0].center.y()), (0.25, 0.25));
    }

    #[test]
    fn partition_validates_grid_size() {
        let m = map(4, 4, 1, vec![0.0; 16]);
        assert!(partition_grids(&m, 0).is_err());
        assert!(partition_grids(&m, 5).is_err());
        assert!(partition_grids(&m, 4).is_ok());
    }

    #[test]
    fn pixel_to_cell_roundtrip() {
        let m = map(5, 7, 1, vec![0.0; 35]);
        let (geom, _) = partition_grids(&m, 3).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                let id = geom.cell_of_pixel(y, x);
                let (rows, cols) = geom.cell_pixel_bounds(id);
                assert!(rows.contains(&y) && cols.contains(&x));
            }
        }
    }

    #[test]
    fn similarity_hand_values() {
        let a = cell(0, vec![1.0, 0.0], 0.5, 0.5);
        let cl = Cluster::seeded(&a);
        assert_eq!(grid_cluster_similarity(&a, &cl, 0.5), 1.0);

        // Feature distance 2, position distance 0, lambda 0.5 -> 1/(1+1).
        let b = cell(1, vec![3.0, 0.0], 0.5, 0.5);
        assert!((grid_cluster_similarity(&b, &cl, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn similarity_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let f1: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let f2: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let a = cell(0, f1, rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let b = cell(1, f2, rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let cl = Cluster::seeded(&b);
            let s = grid_cluster_similarity(&a, &cl, rng.gen_range(0.0..1.0));
            assert!(s > 0.0 && s <= 1.0);
        }
    }

    #[test]
    fn two_separated_groups_make_two_clusters() {
        // First half near feature 0, second half near feature 40; positions
        // interleaved so geometry cannot carry the split.
        let mut cells = Vec::new();
        for i in 0..8usize {
            let base = if i < 4 { 0.0 } else { 40.0 };
            let x = (i % 4) as f64 / 4.0 + 0.125;
            cells.push(cell(i, vec![base + i as f64 * 0.01], x, 0.5));
        }
        let model = cluster_target(&cells, ClusterParams::default()).unwrap();
        assert_eq!(model.cluster_count(), 2);
        assert_eq!(&model.assignment()[..4], &[0, 0, 0, 0]);
        assert_eq!(&model.assignment()[4..], &[1, 1, 1, 1]);
    }

    #[test]
    fn identical_cells_stay_in_one_cluster() {
        let cells: Vec<GridCell> = (0..9)
            .map(|i| {
                cell(
                    i,
                    vec![1.0, -2.0],
                    (i % 3) as f64 / 3.0 + 1.0 / 6.0,
                    (i / 3) as f64 / 3.0 + 1.0 / 6.0,
                )
            })
            .collect();
        let model = cluster_target(&cells, ClusterParams::default()).unwrap();
        assert_eq!(model.cluster_count(), 1);
        assert_eq!(model.clusters()[0].member_ids().len(), 9);
    }

    /// Independent oracle: replays the documented rule from scratch each
    /// step (no incremental centroids; means recomputed from members).
    fn replay_oracle(cells: &[GridCell], params: ClusterParams) -> (Vec<usize>, usize) {
        let mut members: Vec<Vec<usize>> = vec![vec![0]];
        let mut assignment = vec![0usize; cells.len()];
        for pos in 1..cells.len() {
            let sims: Vec<f64> = members
                .iter()
                .map(|m| {
                    let n = m.len() as f64;
                    let dim = cells[0].feature.len();
                    let mut mu_f = vec![0.0; dim];
                    let (mut mx, mut my) = (0.0, 0.0);
                    for &id in m {
                        for (a, b) in mu_f.iter_mut().zip(&cells[id].feature) {
                            *a += b;
                        }
                        mx += cells[id].center.x();
                        my += cells[id].center.y();
                    }
                    for a in &mut mu_f {
                        *a /= n;
                    }
                    let fd: f64 = cells[pos]
                        .feature
                        .iter()
                        .zip(&mu_f)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    let dx = cells[pos].center.x() - mx / n;
                    let dy = cells[pos].center.y() - my / n;
                    1.0 / (1.0
                        + params.lambda * fd
                        + (1.0 - params.lambda) * (dx * dx + dy * dy).sqrt())
                })
                .collect();
            let mut best = 0;
            for (i, &s) in sims.iter().enumerate() {
                if s > sims[best] {
                    best = i;
                }
            }
            let joins = if sims.len() < 3 {
                sims[best] > params.tau_join
            } else {
                let mean = sims.iter().sum::<f64>() / sims.len() as f64;
                let var =
                    sims.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / sims.len() as f64;
                sims[best] > mean + 2.0 * var.sqrt()
            };
            if joins {
                members[best].push(pos);
                assignment[pos] = best;
            } else {
                members.push(vec![pos]);
                assignment[pos] = members.len() - 1;
            }
        }
        (assignment, members.len())
    }

    #[test]
    fn target_clustering_matches_replay_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..25 {
            let n = rng.gen_range(1..20);
            let cells: Vec<GridCell> = (0..n)
                .map(|i| {
                    let f: Vec<f64> = (0..2).map(|_| rng.gen_range(-4.0..4.0)).collect();
                    cell(i, f, rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
                })
                .collect();
            let params = ClusterParams::default();
            let model = cluster_target(&cells, params).unwrap();
            let (oracle_assign, oracle_count) = replay_oracle(&cells, params);
            assert_eq!(model.cluster_count(), oracle_count);
            assert_eq!(model.assignment(), oracle_assign.as_slice());
        }
    }

    #[test]
    fn centroids_are_member_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cells: Vec<GridCell> = (0..30)
            .map(|i| {
                let f: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                cell(i, f, rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
            })
            .collect();
        let model = cluster_target(&cells, ClusterParams::default()).unwrap();

        let mut seen = vec![false; cells.len()];
        for cl in model.clusters() {
            assert!(!cl.member_ids().is_empty());
            let n = cl.member_ids().len() as f64;
            let dim = cl.mu_f().len();
            let mut mu = vec![0.0; dim];
            for &id in cl.member_ids() {
                assert!(!seen[id], "cell {id} assigned twice");
                seen[id] = true;
                for (a, b) in mu.iter_mut().zip(cells[id].feature()) {
                    *a += b;
                }
            }
            for (a, want) in mu.iter().zip(cl.mu_f()) {
                assert!((a / n - want).abs() < 1e-9);
            }
        }
        assert!(seen.iter().all(|&s| s), "every cell belongs to a cluster");
    }

    #[test]
    fn reference_match_needs_enough_clusters_to_stand_out() {
        // Among m similarities the largest can exceed the mean by at most
        // sqrt(m - 1) population standard deviations, so the strict
        // two-sigma stand-out is unachievable until six clusters exist.
        // A probe sitting exactly on one of three centroids is therefore
        // still discarded.
        let seeds = [
            cell(0, vec![0.0, 0.0], 0.1, 0.1),
            cell(1, vec![10.0, 0.0], 0.5, 0.5),
            cell(2, vec![0.0, 10.0], 0.9, 0.9),
        ];
        let model = cluster_target(&seeds, ClusterParams::default()).unwrap();
        assert_eq!(model.cluster_count(), 3);

        let probe = cell(0, vec![10.0, 0.0], 0.5, 0.5);
        let out = cluster_reference(&[probe], &model).unwrap();
        assert_eq!(out.assigned(), &[None]);
        assert_eq!(out.discarded(), &[0]);
    }

    #[test]
    fn reference_cell_on_a_centroid_is_assigned_in_a_wide_field() {
        // Six mutually distant clusters: the probe's perfect similarity to
        // one of them now clears mean + 2 * std over the six values.
        let seeds: Vec<GridCell> = (0..6)
            .map(|i| {
                let mut f = vec![0.0; 6];
                f[i] = 10.0;
                cell(i, f, 0.15 * i as f64 + 0.1, 0.5)
            })
            .collect();
        let model = cluster_target(&seeds, ClusterParams::default()).unwrap();
        assert_eq!(model.cluster_count(), 6);

        let mut probe_f = vec![0.0; 6];
        probe_f[2] = 10.0;
        let probe = cell(0, probe_f, 0.4, 0.5);
        let out = cluster_reference(&[probe], &model).unwrap();
        assert_eq!(out.assigned(), &[Some(2)]);
        assert!(out.discarded().is_empty());
    }

    #[test]
    fn equidistant_far_reference_cell_is_discarded() {
        let seeds = [
            cell(0, vec![10.0, 0.0, 0.0], 0.5, 0.5),
            cell(1, vec![0.0, 10.0, 0.0], 0.5, 0.5),
            cell(2, vec![0.0, 0.0, 10.0], 0.5, 0.5),
        ];
        let model = cluster_target(&seeds, ClusterParams::default()).unwrap();
        assert_eq!(model.cluster_count(), 3);

        // Equidistant from all three centroids: S_max equals the mean, so
        // the strict stand-out test fails.
        let probe = cell(0, vec![100.0, 100.0, 100.0], 0.5, 0.5);
        let out = cluster_reference(&[probe], &model).unwrap();
        assert_eq!(out.assigned(), &[None]);
        assert_eq!(out.discarded(), &[0]);
    }

    #[test]
    fn reference_matching_small_models_uses_threshold() {
        // Single-cluster model: near cells join, far cells are discarded.
        let seeds = [cell(0, vec![1.0], 0.5, 0.5), cell(1, vec![1.1], 0.55, 0.5)];
        let model = cluster_target(&seeds, ClusterParams::default()).unwrap();
        assert_eq!(model.cluster_count(), 1);

        let near = cell(0, vec![1.05], 0.5, 0.5);
        let far = cell(1, vec![50.0], 0.5, 0.5);
        let out = cluster_reference(&[near, far], &model).unwrap();
        assert_eq!(out.assigned()[0], Some(0));
        assert_eq!(out.assigned()[1], None);
    }

    #[test]
    fn reference_clustering_never_mutates_the_model() {
        let seeds = [
            cell(0, vec![0.0], 0.2, 0.2),
            cell(1, vec![5.0], 0.8, 0.8),
        ];
        let model = cluster_target(&seeds, ClusterParams::default()).unwrap();
        let snapshot = model.clone();
        let probes: Vec<GridCell> = (0..6)
            .map(|i| cell(i, vec![i as f64], 0.5, 0.5))
            .collect();
        let _ = cluster_reference(&probes, &model).unwrap();
        assert_eq!(model, snapshot);
    }
}
