//! Dual memory banks: short-term and long-term reference storage.
//!
//! The short-term bank admits a recent frame when the feature-activity peak
//! has not jumped — the normalized peak distance between the candidate and
//! the current query must stay strictly below `beta`. The long-term bank
//! admits a far-away frame when reconstructing the query from that frame
//! alone still agrees with the short-term reconstruction (mask IoU strictly
//! above `gamma`), and it always keeps frame 0 once seeded. Overflow is
//! resolved either first-in-first-out or by evicting the record whose
//! feature distribution is farthest from the current frame under a
//! Frechet-style distance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::feature::{normalized_distance, FeatureMap, NormalizedPoint};
use crate::label::{LabelField, LabelKind};

/// How a full bank chooses its victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruningPolicy {
    /// Evict the record admitted earliest.
    Fifo,
    /// Evict the record with the largest feature-distribution distance from
    /// the current frame.
    Fid,
}

/// Which bank an operation addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankKind {
    ShortTerm,
    LongTerm,
}

/// Memory behaviour knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryConfig {
    /// Strict upper bound on the peak jump for short-term admission.
    pub beta: f64,
    /// Strict lower bound on reconstruction agreement for long-term
    /// admission.
    pub gamma: f64,
    pub short_capacity: usize,
    pub long_capacity: usize,
    /// Minimum frame-index gap before a frame may be considered long-term.
    pub long_min_gap: usize,
    pub short_pruning: PruningPolicy,
    pub long_pruning: PruningPolicy,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            beta: 0.15,
            gamma: 0.85,
            short_capacity: 5,
            long_capacity: 3,
            long_min_gap: 15,
            short_pruning: PruningPolicy::Fifo,
            long_pruning: PruningPolicy::Fid,
        }
    }
}

impl MemoryConfig {
    /// Validates ranges: `beta > 0`, `gamma` in `(0, 1]`, positive
    /// capacities and gap.
    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::validation(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(Error::validation(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.short_capacity == 0 || self.long_capacity == 0 {
            return Err(Error::validation(
                "bank capacities must be at least 1".to_string(),
            ));
        }
        if self.long_min_gap == 0 {
            return Err(Error::validation(
                "long_min_gap must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One remembered frame: its features, the labels it will lend to future
/// queries, the observed color channel used for branch-loss scoring, and the
/// feature-activity peak recorded when the frame was processed.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    frame_index: usize,
    features: FeatureMap,
    labels: LabelField,
    color: LabelField,
    peak: NormalizedPoint,
    /// Monotonic insertion counter, assigned by the bank on admission.
    admitted_at: usize,
}

impl FrameRecord {
    pub fn new(
        frame_index: usize,
        features: FeatureMap,
        labels: LabelField,
        color: LabelField,
        peak: NormalizedPoint,
    ) -> Result<Self> {
        if labels.height() != features.height() || labels.width() != features.width() {
            return Err(Error::validation(format!(
                "labels {}x{} do not match features {}x{}",
                labels.height(),
                labels.width(),
                features.height(),
                features.width()
            )));
        }
        if color.kind() != LabelKind::ColorAChannel
            || color.height() != features.height()
            || color.width() != features.width()
        {
            return Err(Error::validation(
                "record color field must be a color a-channel at feature resolution".to_string(),
            ));
        }
        Ok(FrameRecord {
            frame_index,
            features,
            labels,
            color,
            peak,
            admitted_at: 0,
        })
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn labels(&self) -> &LabelField {
        &self.labels
    }

    pub fn color(&self) -> &LabelField {
        &self.color
    }

    pub fn peak(&self) -> NormalizedPoint {
        self.peak
    }

    pub fn admitted_at(&self) -> usize {
        self.admitted_at
    }

    /// Replaces the stored labels (used when a later, better reconstruction
    /// of the same frame should be remembered instead).
    pub fn set_labels(&mut self, labels: LabelField) -> Result<()> {
        if labels.height() != self.features.height() || labels.width() != self.features.width() {
            return Err(Error::validation(
                "replacement labels do not match feature resolution".to_string(),
            ));
        }
        self.labels = labels;
        Ok(())
    }
}

/// Outcome of an admission attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdmissionOutcome {
    pub admitted: bool,
    /// Frame index evicted to make room, if any.
    pub evicted: Option<usize>,
}

/// The two banks plus their shared insertion counter.
#[derive(Debug, Clone)]
pub struct MemoryBanks {
    short: Vec<FrameRecord>,
    long: Vec<FrameRecord>,
    config: MemoryConfig,
    next_admission: usize,
    initial_seeded: bool,
}

impl MemoryBanks {
    pub fn new(config: MemoryConfig) -> Result<Self> {
        config.validate()?;
        Ok(MemoryBanks {
            short: Vec::new(),
            long: Vec::new(),
            config,
            next_admission: 0,
            initial_seeded: false,
        })
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn short_term(&self) -> &[FrameRecord] {
        &self.short
    }

    pub fn long_term(&self) -> &[FrameRecord] {
        &self.long
    }

    /// Mutable access for in-place label refreshes; bank structure
    /// (membership, order) must not be changed through these.
    pub fn short_term_mut(&mut self) -> &mut [FrameRecord] {
        &mut self.short
    }

    pub fn long_term_mut(&mut self) -> &mut [FrameRecord] {
        &mut self.long
    }

    fn bank(&self, kind: BankKind) -> &Vec<FrameRecord> {
        match kind {
            BankKind::ShortTerm => &self.short,
            BankKind::LongTerm => &self.long,
        }
    }

    fn bank_mut(&mut self, kind: BankKind) -> &mut Vec<FrameRecord> {
        match kind {
            BankKind::ShortTerm => &mut self.short,
            BankKind::LongTerm => &mut self.long,
        }
    }

    /// Configured record limit of one bank.
    pub fn capacity(&self, kind: BankKind) -> usize {
        match kind {
            BankKind::ShortTerm => self.config.short_capacity,
            BankKind::LongTerm => self.config.long_capacity,
        }
    }

    fn policy(&self, kind: BankKind) -> PruningPolicy {
        match kind {
            BankKind::ShortTerm => self.config.short_pruning,
            BankKind::LongTerm => self.config.long_pruning,
        }
    }

    fn insert(&mut self, kind: BankKind, mut record: FrameRecord) {
        record.admitted_at = self.next_admission;
        self.next_admission += 1;
        self.bank_mut(kind).push(record);
    }

    /// Seeds the sequence's first frame into both banks unconditionally.
    /// In the long-term bank this record is pinned and never evicted.
    pub fn seed_initial(&mut self, record: FrameRecord) -> Result<()> {
        if self.initial_seeded {
            return Err(Error::DuplicateFrame(record.frame_index));
        }
        if !self.short.is_empty() || !self.long.is_empty() {
            return Err(Error::validation(
                "banks must be empty when seeding the initial frame".to_string(),
            ));
        }
        self.insert(BankKind::ShortTerm, record.clone());
        self.insert(BankKind::LongTerm, record);
        self.initial_seeded = true;
        Ok(())
    }

    /// True when `frame_index` is the pinned initial record of the long
    /// bank.
    pub fn is_pinned(&self, kind: BankKind, frame_index: usize) -> bool {
        kind == BankKind::LongTerm
            && self.initial_seeded
            && self
                .long
                .first()
                .map(|r| r.frame_index == frame_index && frame_index == self.pinned_index())
                .unwrap_or(false)
    }

    fn pinned_index(&self) -> usize {
        // The seed is inserted first, so the pinned frame is whatever index
        // was seeded (frame 0 in normal operation).
        self.long.first().map(|r| r.frame_index).unwrap_or(0)
    }

    /// Evicts one record from the given bank according to its pruning
    /// policy. Returns the evicted frame index, or `None` if the bank was
    /// empty or only pinned records remained (callers may log a warning).
    pub fn prune(&mut self, kind: BankKind, query: &FeatureMap) -> Result<Option<usize>> {
        let policy = self.policy(kind);
        let pinned: Option<usize> = match kind {
            BankKind::LongTerm if self.initial_seeded => Some(self.pinned_index()),
            _ => None,
        };
        let bank = self.bank(kind);
        if bank.is_empty() {
            return Ok(None);
        }

        let mut victim: Option<(usize, f64, usize)> = None; // (position, score, admitted_at)
        for (pos, rec) in bank.iter().enumerate() {
            if pinned == Some(rec.frame_index) {
                continue;
            }
            let score = match policy {
                // FIFO: smaller admitted_at must win, so negate it into a
                // "bigger is worse" score shared with the FID path.
                PruningPolicy::Fifo => -(rec.admitted_at as f64),
                PruningPolicy::Fid => fid_distance(query, &rec.features)?,
            };
            let better = match victim {
                None => true,
                Some((_, best_score, best_adm)) => {
                    score > best_score
                        || (score == best_score && rec.admitted_at < best_adm)
                }
            };
            if better {
                victim = Some((pos, score, rec.admitted_at));
            }
        }

        match victim {
            None => Ok(None),
            Some((pos, _, _)) => {
                let evicted = self.bank_mut(kind).remove(pos);
                Ok(Some(evicted.frame_index))
            }
        }
    }

    /// Offers `candidate` (a frame older than the current query) to the
    /// short-term bank. Admission requires the candidate's recorded peak to
    /// lie strictly within `beta` of the current query's peak.
    pub fn try_admit_short_term(
        &mut self,
        candidate: FrameRecord,
        query_peak: NormalizedPoint,
        query_index: usize,
    ) -> Result<AdmissionOutcome> {
        if candidate.frame_index >= query_index {
            return Err(Error::validation(format!(
                "short-term candidate frame {} is not older than query frame {query_index}",
                candidate.frame_index
            )));
        }
        if self.short.iter().any(|r| r.frame_index == candidate.frame_index) {
            return Err(Error::DuplicateFrame(candidate.frame_index));
        }

        if !(normalized_distance(query_peak, candidate.peak) < self.config.beta) {
            return Ok(AdmissionOutcome {
                admitted: false,
                evicted: None,
            });
        }

        let mut evicted = None;
        if self.short.len() >= self.config.short_capacity {
            // The candidate is the freshest view of the scene available
            // here, so FID pruning measures staleness against it.
            evicted = self.prune(BankKind::ShortTerm, &candidate.features)?;
            if evicted.is_none() {
                return Ok(AdmissionOutcome {
                    admitted: false,
                    evicted: None,
                });
            }
        }
        self.insert(BankKind::ShortTerm, candidate);
        Ok(AdmissionOutcome {
            admitted: true,
            evicted,
        })
    }

    /// Offers a far-away frame to the long-term bank. `recon_long` must be
    /// the query reconstruction from the candidate alone and `recon_short`
    /// the reconstruction from the short-term bank; agreement strictly above
    /// `gamma` admits the candidate. Mask mode only.
    pub fn try_admit_long_term(
        &mut self,
        candidate: FrameRecord,
        query_index: usize,
        recon_short: &LabelField,
        recon_long: &LabelField,
    ) -> Result<AdmissionOutcome> {
        if candidate.labels.kind() != LabelKind::MaskOnehot {
            return Err(Error::Mode(
                "long-term admission is defined on mask labels only".to_string(),
            ));
        }
        if query_index < candidate.frame_index
            || query_index - candidate.frame_index < self.config.long_min_gap
        {
            return Err(Error::validation(format!(
                "long-term candidate frame {} is too recent for query frame {query_index} (min gap {})",
                candidate.frame_index, self.config.long_min_gap
            )));
        }
        if self.long.iter().any(|r| r.frame_index == candidate.frame_index) {
            return Err(Error::DuplicateFrame(candidate.frame_index));
        }

        let agreement = mask_iou(recon_long, recon_short)?;
        if !(agreement > self.config.gamma) {
            return Ok(AdmissionOutcome {
                admitted: false,
                evicted: None,
            });
        }

        let mut evicted = None;
        if self.long.len() >= self.config.long_capacity {
            evicted = self.prune(BankKind::LongTerm, &candidate.features)?;
            if evicted.is_none() {
                // Nothing evictable (capacity 1, pinned seed): reject.
                return Ok(AdmissionOutcome {
                    admitted: false,
                    evicted: None,
                });
            }
        }
        self.insert(BankKind::LongTerm, candidate);
        Ok(AdmissionOutcome {
            admitted: true,
            evicted,
        })
    }

    /// Checks every structural invariant; the pipeline asserts this at frame
    /// boundaries in debug builds.
    pub fn check_invariants(&self) -> Result<()> {
        for (kind, bank, cap) in [
            (BankKind::ShortTerm, &self.short, self.config.short_capacity),
            (BankKind::LongTerm, &self.long, self.config.long_capacity),
        ] {
            if bank.len() > cap {
                return Err(Error::validation(format!(
                    "{kind:?} holds {} records, capacity {cap}",
                    bank.len()
                )));
            }
            for (i, a) in bank.iter().enumerate() {
                for b in &bank[i + 1..] {
                    if a.frame_index == b.frame_index {
                        return Err(Error::validation(format!(
                            "{kind:?} stores frame {} twice",
                            a.frame_index
                        )));
                    }
                }
            }
        }
        if self.initial_seeded
            && !self.long.iter().any(|r| r.frame_index == self.pinned_index())
        {
            return Err(Error::validation(
                "long-term bank lost its pinned initial frame".to_string(),
            ));
        }
        Ok(())
    }

    /// Line-oriented snapshot of both banks for diagnostics. When `query`
    /// is given, each record also reports its distribution distance from it.
    pub fn dump_report(&self, query: Option<&FeatureMap>) -> Result<String> {
        let mut out = String::new();
        for (name, bank, cap) in [
            ("short_term", &self.short, self.config.short_capacity),
            ("long_term", &self.long, self.config.long_capacity),
        ] {
            out.push_str(&format!("{name} count={} capacity={cap}\n", bank.len()));
            for rec in bank {
                out.push_str(&format!(
                    "  frame={} admitted_at={} peak=({:.6},{:.6})",
                    rec.frame_index,
                    rec.admitted_at,
                    rec.peak.x(),
                    rec.peak.y()
                ));
                if let Some(q) = query {
                    out.push_str(&format!(" fid={:.6}", fid_distance(q, &rec.features)?));
                }
                out.push('\n');
            }
        }
        Ok(out)
    }
}

/// Foreground IoU of two mask fields: pixels binarize to their argmax class,
/// foreground being any non-background class. An empty union counts as
/// perfect agreement.
pub fn mask_iou(a: &LabelField, b: &LabelField) -> Result<f64> {
    if a.kind() != LabelKind::MaskOnehot || b.kind() != LabelKind::MaskOnehot {
        return Err(Error::Mode(
            "mask IoU requires mask label fields".to_string(),
        ));
    }
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::validation(format!(
            "mask shapes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let fg_a = a.argmax_classes();
    let fg_b = b.argmax_classes();
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (ca, cb) in fg_a.iter().zip(&fg_b) {
        let (fa, fb) = (*ca > 0, *cb > 0);
        if fa && fb {
            intersection += 1;
        }
        if fa || fb {
            union += 1;
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(intersection as f64 / union as f64)
    }
}

/// Regularization added to both covariance diagonals before the matrix
/// square root.
const FID_EPSILON: f64 = 1e-6;

/// Mean vector and sample covariance of a map's per-pixel feature vectors.
fn distribution_stats(map: &FeatureMap) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = map.pixels();
    let c = map.channels();
    if n < 2 {
        return Err(Error::validation(
            "distribution distance needs at least 2 spatial positions".to_string(),
        ));
    }
    let mut mean = vec![0.0f64; c];
    for p in 0..n {
        for (m, v) in mean.iter_mut().zip(map.pixel_flat(p)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(c, c);
    for p in 0..n {
        let px = map.pixel_flat(p);
        for i in 0..c {
            let di = px[i] - mean[i];
            for j in i..c {
                let dj = px[j] - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..c {
        for j in i..c {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(
            "non-finite covariance in distribution distance".to_string(),
        ));
    }
    Ok((mean, cov))
}

/// Principal square root of a symmetric PSD matrix via eigendecomposition,
/// clamping tiny negative eigenvalues to zero.
fn sqrt_symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors
        * DMatrix::from_diagonal(&sqrt_vals)
        * eig.eigenvectors.transpose()
}

/// Frechet-style distance between the per-pixel feature distributions of
/// two maps:
///
/// ```text
/// ||mu_t - mu_r||^2 + tr(S_t + S_r - 2 (S_t S_r)^(1/2))
/// ```
///
/// Both covariances are regularized with `1e-6 * I`, and the matrix square
/// root is computed symmetrically as `sqrt(sqrt(S_t) S_r sqrt(S_t))`. The
/// result is clamped to be non-negative.
pub fn fid_distance(current: &FeatureMap, reference: &FeatureMap) -> Result<f64> {
    if current.channels() != reference.channels() {
        return Err(Error::validation(format!(
            "distribution distance needs equal channel counts, got {} vs {}",
            current.channels(),
            reference.channels()
        )));
    }
    let (mu_t, mut sig_t) = distribution_stats(current)?;
    let (mu_r, mut sig_r) = distribution_stats(reference)?;
    let c = current.channels();
    for i in 0..c {
        sig_t[(i, i)] += FID_EPSILON;
        sig_r[(i, i)] += FID_EPSILON;
    }

    let mean_term: f64 = mu_t
        .iter()
        .zip(&mu_r)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let st_half = sqrt_symmetric(&sig_t);
    let inner = &st_half * &sig_r * &st_half;
    // Symmetrize before the eigensolve to shed accumulation asymmetry.
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = inner
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();

    let fid = mean_term + sig_t.trace() + sig_r.trace() - 2.0 * tr_sqrt;
    if !fid.is_finite() {
        return Err(Error::validation(
            "distribution distance is non-finite".to_string(),
        ));
    }
    debug_assert!(fid > -1e-6, "distribution distance {fid} below tolerance");
    Ok(fid.max(0.0))
}
