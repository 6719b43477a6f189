//! Simulated grasp cycle: one oriented rectangular object per scene, an
//! 84×84 grayscale crop around its bounding box as the state, and a binary
//! reward decided by whether the detector still finds the object after the
//! grasp. Also generates synthetic image/robot position datasets.

use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::gdqn::action_angles;
use crate::geometry::{
    angular_distance, wrap_180, BoundingBox, EEPosition, ImagePoint, WorkspaceConfig,
};
use crate::mapping::{assemble_observations, MappingMatrix, ObservationSet};
use crate::nn::Tensor;

pub const STATE_SIDE: usize = 84;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("step called before reset")]
    StepBeforeReset,
    #[error("invalid environment config: {0}")]
    InvalidConfig(&'static str),
    #[error("unsupported action count {0}")]
    UnsupportedActions(usize),
}

/// What a grasp environment must provide to the learning loop.
pub trait GraspEnvironment {
    /// Spawns a new scene and returns its state.
    fn reset(&mut self) -> Tensor;
    /// Attempts a grasp at `orientation` degrees for the current scene.
    fn step(&mut self, orientation: f64) -> Result<StepResult, EnvError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Tensor,
    pub reward: u8,
    pub done: bool,
    /// Index into the angle table closest to the required grasp angle.
    pub optimal_action: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimObject {
    pub center: ImagePoint,
    /// Long-axis direction in degrees, `[0, 180)`, counter-clockwise from
    /// the image x-axis as seen on screen.
    pub orientation: f64,
    pub length: f64,
    pub width: f64,
}

impl SimObject {
    /// Extents of the axis-aligned bounding box.
    pub fn extents(&self) -> (f64, f64) {
        let t = self.orientation.to_radians();
        let (c, s) = (libm::fabs(libm::cos(t)), libm::fabs(libm::sin(t)));
        (
            self.length * c + self.width * s,
            self.length * s + self.width * c,
        )
    }

    /// Gripper angle that closes the jaws across the long axis.
    pub fn required_angle(&self) -> f64 {
        wrap_180(self.orientation + 90.0)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        bbox_around(self.center.ix, self.center.iy, self.extents())
    }
}

fn bbox_around(cx: f64, cy: f64, (bw, bh): (f64, f64)) -> BoundingBox {
    let x1 = libm::floor(cx - bw / 2.0) as i64;
    let y1 = libm::floor(cy - bh / 2.0) as i64;
    let x2 = (libm::ceil(cx + bw / 2.0) as i64).max(x1 + 1);
    let y2 = (libm::ceil(cy + bh / 2.0) as i64).max(y1 + 1);
    BoundingBox::new(x1, y1, x2, y2).expect("non-empty box")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub angles: Vec<f64>,
    pub tolerance: f64,
    pub workspace: WorkspaceConfig,
    /// Gaussian pixel noise, grayscale units.
    pub noise_sigma: f64,
    pub object_length: Range<f64>,
    /// Width as a fraction of length.
    pub aspect: Range<f64>,
    /// Crop side relative to the larger bounding-box extent.
    pub crop_margin: f64,
    pub detector_jitter: f64,
    pub seed: u64,
}

impl EnvConfig {
    /// Angle table for `n_actions` with tolerance half the table step.
    pub fn for_actions(n_actions: usize, seed: u64) -> Result<Self, EnvError> {
        let angles =
            action_angles(n_actions).map_err(|_| EnvError::UnsupportedActions(n_actions))?;
        let tolerance = smallest_gap(&angles) / 2.0;
        Ok(Self {
            angles,
            tolerance,
            workspace: WorkspaceConfig::default(),
            noise_sigma: 0.02,
            object_length: 60.0..160.0,
            aspect: 0.3..0.5,
            crop_margin: 1.25,
            detector_jitter: 0.0,
            seed,
        })
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.angles.is_empty() {
            return Err(EnvError::InvalidConfig("angle table is empty"));
        }
        if !(self.tolerance > 0.0) {
            return Err(EnvError::InvalidConfig("tolerance must be positive"));
        }
        if self.angles.len() > 1 && self.tolerance > smallest_gap(&self.angles) / 2.0 + 1e-12 {
            return Err(EnvError::InvalidConfig(
                "tolerance exceeds half the smallest angle gap",
            ));
        }
        if !(self.noise_sigma >= 0.0) || !(self.detector_jitter >= 0.0) {
            return Err(EnvError::InvalidConfig("noise must be non-negative"));
        }
        if !(self.object_length.start > 0.0 && self.object_length.start < self.object_length.end) {
            return Err(EnvError::InvalidConfig(
                "object_length must be a positive interval",
            ));
        }
        if !(self.aspect.start > 0.0
            && self.aspect.start < self.aspect.end
            && self.aspect.end < 1.0)
        {
            return Err(EnvError::InvalidConfig("aspect must lie in (0, 1)"));
        }
        if !(self.crop_margin >= 1.0) {
            return Err(EnvError::InvalidConfig("crop_margin must be >= 1"));
        }
        let diag = self.object_length.end * libm::sqrt(1.0 + self.aspect.end * self.aspect.end);
        if diag >= self.workspace.image_width_px as f64
            || diag >= self.workspace.image_height_px as f64
        {
            return Err(EnvError::InvalidConfig("objects do not fit in the image"));
        }
        self.workspace
            .validate()
            .map_err(|_| EnvError::InvalidConfig("workspace dimensions"))
    }

    /// Whether some action in the table succeeds for this required angle.
    pub fn is_reachable(&self, required: f64) -> bool {
        self.angles
            .iter()
            .any(|a| angular_distance(*a, required) <= self.tolerance)
    }

    pub fn succeeds(&self, orientation: f64, required: f64) -> bool {
        angular_distance(orientation, required) <= self.tolerance
    }

    pub fn closest_action(&self, required: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.angles.iter().enumerate() {
            let d = angular_distance(*a, required);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Smallest gap between consecutive table angles on the mod-180 circle.
pub fn smallest_gap(angles: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = angles.iter().map(|a| wrap_180(*a)).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted.len() < 2 {
        return 180.0;
    }
    let mut gap = 180.0 - sorted[sorted.len() - 1] + sorted[0];
    for w in sorted.windows(2) {
        gap = gap.min(w[1] - w[0]);
    }
    gap
}

#[derive(Debug, Clone)]
pub struct SimEnv {
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    object: Option<SimObject>,
    awaiting_step: bool,
}

impl SimEnv {
    /// Training environment: stream 2 of the seed, so scenes are
    /// independent of network initialization under the same seed.
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        Self::with_stream(cfg, 2)
    }

    /// Held-out scenes for evaluation under the same seed.
    pub fn evaluation(cfg: EnvConfig) -> Result<Self, EnvError> {
        Self::with_stream(cfg, 3)
    }

    pub fn with_stream(cfg: EnvConfig, stream: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        Ok(Self {
            cfg,
            rng,
            object: None,
            awaiting_step: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn object(&self) -> Option<&SimObject> {
        self.object.as_ref()
    }

    /// Samples an object whose required grasp angle is reachable by the
    /// angle table: the required angle is uniform over the union of the
    /// tolerance windows.
    fn spawn(&mut self) -> SimObject {
        let required = loop {
            let r: f64 = self.rng.random_range(0.0..180.0);
            if self.cfg.is_reachable(r) {
                break r;
            }
        };
        let length = self.rng.random_range(self.cfg.object_length.clone());
        let width = length * self.rng.random_range(self.cfg.aspect.clone());
        let mut obj = SimObject {
            center: ImagePoint::new(0.0, 0.0),
            orientation: wrap_180(required - 90.0),
            length,
            width,
        };
        let (bw, bh) = obj.extents();
        let ws = &self.cfg.workspace;
        let cx = self
            .rng
            .random_range(bw / 2.0 + 1.0..ws.image_width_px as f64 - bw / 2.0 - 1.0);
        let cy = self
            .rng
            .random_range(bh / 2.0 + 1.0..ws.image_height_px as f64 - bh / 2.0 - 1.0);
        obj.center = ImagePoint::new(cx, cy);
        obj
    }

    /// Places a specific object, for tests and scripted scenes.
    pub fn place(&mut self, obj: SimObject) -> Tensor {
        self.object = Some(obj);
        self.awaiting_step = true;
        self.render(&obj)
    }

    /// 84×84 crop of a square window centered on the bounding box.
    pub fn render(&mut self, obj: &SimObject) -> Tensor {
        let mut img = render_clean(obj, self.cfg.crop_margin);
        if self.cfg.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.cfg.noise_sigma).expect("finite sigma");
            for v in img.iter_mut() {
                *v = (*v + normal.sample(&mut self.rng)).clamp(0.0, 1.0);
            }
        }
        Tensor::new(alloc::vec![STATE_SIDE, STATE_SIDE, 1], img).expect("84x84x1")
    }

    pub fn required_angle(&self) -> Option<f64> {
        self.object.map(|o| o.required_angle())
    }

    /// Closes the gripper at `orientation`; a successful grasp removes the
    /// object from the scene.
    pub fn attempt_grasp(&mut self, orientation: f64) -> Result<bool, EnvError> {
        if !self.awaiting_step {
            return Err(EnvError::StepBeforeReset);
        }
        self.awaiting_step = false;
        let obj = self.object.ok_or(EnvError::StepBeforeReset)?;
        let ok = self.cfg.succeeds(orientation, obj.required_angle());
        if ok {
            self.object = None;
        }
        Ok(ok)
    }

    /// Bounding box of the object still in the scene, if any, with optional
    /// Gaussian jitter on its center.
    pub fn detector_oracle(&mut self) -> Option<BoundingBox> {
        let obj = self.object?;
        let (mut cx, mut cy) = (obj.center.ix, obj.center.iy);
        if self.cfg.detector_jitter > 0.0 {
            let normal = Normal::new(0.0, self.cfg.detector_jitter).expect("finite sigma");
            cx += normal.sample(&mut self.rng);
            cy += normal.sample(&mut self.rng);
        }
        Some(bbox_around(cx, cy, obj.extents()))
    }
}

impl GraspEnvironment for SimEnv {
    fn reset(&mut self) -> Tensor {
        let obj = self.spawn();
        self.place(obj)
    }

    fn step(&mut self, orientation: f64) -> Result<StepResult, EnvError> {
        let required = self
            .required_angle()
            .filter(|_| self.awaiting_step)
            .ok_or(EnvError::StepBeforeReset)?;
        let optimal_action = self.cfg.closest_action(required);
        self.attempt_grasp(orientation)?;
        // Lift verified by the post-grasp detector.
        let reward = if self.detector_oracle().is_none() {
            1
        } else {
            0
        };
        let next_state = self.reset();
        Ok(StepResult {
            next_state,
            reward,
            done: true,
            optimal_action,
        })
    }
}

/// Success rate of the uniform random policy, by enumerating required
/// angles over a `step`-degree grid of `[0, 180)` and keeping those the
/// environment can spawn.
pub fn random_policy_success_rate(cfg: &EnvConfig, step: f64) -> f64 {
    let n = libm::round(180.0 / step) as usize;
    let (mut hits, mut total) = (0usize, 0usize);
    for i in 0..n {
        let required = i as f64 * step;
        if !cfg.is_reachable(required) {
            continue;
        }
        total += cfg.angles.len();
        hits += cfg
            .angles
            .iter()
            .filter(|a| cfg.succeeds(**a, required))
            .count();
    }
    hits as f64 / total as f64
}

/// Noise-free rendering: 1.0 inside the rectangle, 0.0 elsewhere, sampled at
/// pixel centers.
pub fn render_clean(obj: &SimObject, crop_margin: f64) -> Vec<f64> {
    let (bw, bh) = obj.extents();
    let side = crop_margin * bw.max(bh);
    let scale = STATE_SIDE as f64 / side;
    let t = obj.orientation.to_radians();
    let (c, s) = (libm::cos(t), libm::sin(t));
    let (half_l, half_w) = (obj.length / 2.0, obj.width / 2.0);
    let mid = STATE_SIDE as f64 / 2.0;
    let mut img = alloc::vec![0.0; STATE_SIDE * STATE_SIDE];
    for v in 0..STATE_SIDE {
        let dy = (v as f64 + 0.5 - mid) / scale;
        for u in 0..STATE_SIDE {
            let dx = (u as f64 + 0.5 - mid) / scale;
            // Long axis is (cos t, -sin t) in y-down image coordinates.
            let along = dx * c - dy * s;
            let across = dx * s + dy * c;
            if libm::fabs(along) <= half_l && libm::fabs(across) <= half_w {
                img[v * STATE_SIDE + u] = 1.0;
            }
        }
    }
    img
}

/// Area the rectangle should cover in the 84×84 crop, in pixels.
pub fn expected_bright_area(obj: &SimObject, crop_margin: f64) -> f64 {
    let (bw, bh) = obj.extents();
    let scale = STATE_SIDE as f64 / (crop_margin * bw.max(bh));
    obj.length * obj.width * scale * scale
}

/// Generator of the synthetic image/robot datasets. Rows `x, y` of `M*`
/// act on normalized image coordinates (fractions of the frame).
pub const DEFAULT_MSTAR: [f64; 9] = [0.63, 0.04, 0.30, -0.05, 0.86, -0.43, 0.01, -0.02, -0.06];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub observations: ObservationSet,
    pub mstar: MappingMatrix,
}

/// `n` image points uniform over the normalized frame (third coordinate 1),
/// with `R = M*·I` plus i.i.d. Gaussian noise `sigma_r` per coordinate.
pub fn gen_position_dataset<R: Rng + ?Sized>(
    n: usize,
    mstar: &MappingMatrix,
    sigma_r: f64,
    rng: &mut R,
) -> Result<SyntheticDataset, crate::mapping::MappingError> {
    if n == 0 {
        return Err(crate::mapping::MappingError::Empty);
    }
    if !(sigma_r >= 0.0) || !sigma_r.is_finite() {
        return Err(crate::mapping::MappingError::NonFinite("sigma_r"));
    }
    let noise = Normal::new(0.0, sigma_r)
        .map_err(|_| crate::mapping::MappingError::NonFinite("sigma_r"))?;
    let mut points = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let p = ImagePoint::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let r = mstar.apply(&p);
        let mut jitter = || {
            if sigma_r > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            }
        };
        positions.push(EEPosition::new(
            r.rx + jitter(),
            r.ry + jitter(),
            r.rz + jitter(),
        ));
        points.push(p);
    }
    Ok(SyntheticDataset {
        observations: assemble_observations(&points, &positions)?,
        mstar: *mstar,
    })
}
