//! Estimation of the 3×3 map `M` with `R = M·I` between image points and
//! end-effector positions: genetic search over eight residual objectives,
//! per-axis linear regression, and the closed-form pseudo-inverse.

use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{EEPosition, ImagePoint};
use crate::linalg::{LinalgError, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no observations")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("rank deficient {what}: rank {rank}, need {needed}")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        needed: usize,
    },
    #[error("degenerate {0} axis: image coordinates are all identical")]
    DegenerateAxis(Axis),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("invalid GA config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn map_linalg(what: &'static str, needed_default: usize) -> impl Fn(LinalgError) -> MappingError {
    move |e| match e {
        LinalgError::Singular => MappingError::Singular(what),
        LinalgError::RankDeficient { rank, needed } => {
            MappingError::RankDeficient { what, rank, needed }
        }
        LinalgError::DimensionMismatch { .. } => MappingError::RankDeficient {
            what,
            rank: 0,
            needed: needed_default,
        },
    }
}

/// Paired image points `I` (3×n) and end-effector positions `R` (3×n),
/// one observation per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    image: Matrix,
    robot: Matrix,
}

impl ObservationSet {
    pub fn new(image: Matrix, robot: Matrix) -> Result<Self, MappingError> {
        if image.rows() != 3 || robot.rows() != 3 {
            return Err(MappingError::LengthMismatch {
                left: image.rows(),
                right: 3,
            });
        }
        if image.cols() != robot.cols() {
            return Err(MappingError::LengthMismatch {
                left: image.cols(),
                right: robot.cols(),
            });
        }
        if image.cols() == 0 {
            return Err(MappingError::Empty);
        }
        if !image.is_finite() {
            return Err(MappingError::NonFinite("image matrix"));
        }
        if !robot.is_finite() {
            return Err(MappingError::NonFinite("robot matrix"));
        }
        Ok(Self { image, robot })
    }

    pub fn len(&self) -> usize {
        self.image.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self) -> &Matrix {
        &self.image
    }

    pub fn robot(&self) -> &Matrix {
        &self.robot
    }

    pub fn image_point(&self, j: usize) -> ImagePoint {
        ImagePoint::with_depth(self.image[(0, j)], self.image[(1, j)], self.image[(2, j)])
    }

    pub fn position(&self, j: usize) -> EEPosition {
        EEPosition::new(self.robot[(0, j)], self.robot[(1, j)], self.robot[(2, j)])
    }

    pub fn image_points(&self) -> Vec<ImagePoint> {
        (0..self.len()).map(|j| self.image_point(j)).collect()
    }

    pub fn positions(&self) -> Vec<EEPosition> {
        (0..self.len()).map(|j| self.position(j)).collect()
    }

    /// Observations in the given column order (repeats allowed).
    pub fn select(&self, columns: &[usize]) -> Result<Self, MappingError> {
        let points: Vec<_> = columns.iter().map(|&j| self.image_point(j)).collect();
        let positions: Vec<_> = columns.iter().map(|&j| self.position(j)).collect();
        assemble_observations(&points, &positions)
    }
}

/// Packs points and positions column-wise into an [`ObservationSet`].
pub fn assemble_observations(
    points: &[ImagePoint],
    positions: &[EEPosition],
) -> Result<ObservationSet, MappingError> {
    if points.len() != positions.len() {
        return Err(MappingError::LengthMismatch {
            left: points.len(),
            right: positions.len(),
        });
    }
    if points.is_empty() {
        return Err(MappingError::Empty);
    }
    let n = points.len();
    let image = Matrix::from_fn(3, n, |r, c| {
        let p = &points[c];
        [p.ix, p.iy, p.iz][r]
    });
    let robot = Matrix::from_fn(3, n, |r, c| {
        let p = &positions[c];
        [p.rx, p.ry, p.rz][r]
    });
    ObservationSet::new(image, robot)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingMatrix {
    m: [f64; 9],
}

impl MappingMatrix {
    pub fn from_row_major(m: [f64; 9]) -> Result<Self, MappingError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(MappingError::NonFinite("mapping matrix"));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn row_major(&self) -> [f64; 9] {
        self.m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.m[r * 3 + c]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_row_major(3, 3, self.m.to_vec())
    }

    fn from_matrix(m: &Matrix) -> Result<Self, MappingError> {
        let mut a = [0.0; 9];
        a.copy_from_slice(m.as_slice());
        Self::from_row_major(a)
    }

    pub fn apply(&self, p: &ImagePoint) -> EEPosition {
        let v = [p.ix, p.iy, p.iz];
        let row = |r: usize| (0..3).map(|c| self.m[r * 3 + c] * v[c]).sum::<f64>();
        EEPosition::new(row(0), row(1), row(2))
    }

    /// Relative Frobenius distance `‖self − other‖ / ‖other‖`.
    pub fn relative_error(&self, other: &MappingMatrix) -> f64 {
        let num: f64 = self
            .m
            .iter()
            .zip(&other.m)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = other.m.iter().map(|b| b * b).sum();
        libm::sqrt(num / den)
    }

    pub fn frobenius_distance(&self, other: &MappingMatrix) -> f64 {
        libm::sqrt(
            self.m
                .iter()
                .zip(&other.m)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        )
    }
}

/// Row-major flattening of a candidate `M`, nine genes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chromosome {
    pub genes: [f64; 9],
}

impl Chromosome {
    pub fn from_mapping(m: &MappingMatrix) -> Self {
        Self {
            genes: m.row_major(),
        }
    }

    fn to_matrix(&self) -> Matrix {
        Matrix::from_row_major(3, 3, self.genes.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitnessKind {
    /// `R − M·I`
    F1,
    /// `M·I − R`
    F2,
    /// `R·I⁺ − M`
    F3,
    /// `M − R·I⁺`
    F4,
    /// `R⁺·M − I⁺`
    F5,
    /// `I⁺ − R⁺·M`
    F6,
    /// `M⁻¹·R − I`
    F7,
    /// `I − M⁻¹·R`
    F8,
}

impl FitnessKind {
    pub const ALL: [FitnessKind; 8] = [
        FitnessKind::F1,
        FitnessKind::F2,
        FitnessKind::F3,
        FitnessKind::F4,
        FitnessKind::F5,
        FitnessKind::F6,
        FitnessKind::F7,
        FitnessKind::F8,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FitnessKind::F1 => "F1",
            FitnessKind::F2 => "F2",
            FitnessKind::F3 => "F3",
            FitnessKind::F4 => "F4",
            FitnessKind::F5 => "F5",
            FitnessKind::F6 => "F6",
            FitnessKind::F7 => "F7",
            FitnessKind::F8 => "F8",
        }
    }

    pub fn expression(self) -> &'static str {
        match self {
            FitnessKind::F1 => "R - M*I",
            FitnessKind::F2 => "M*I - R",
            FitnessKind::F3 => "R*pinv(I) - M",
            FitnessKind::F4 => "M - R*pinv(I)",
            FitnessKind::F5 => "pinv(R)*M - pinv(I)",
            FitnessKind::F6 => "pinv(I) - pinv(R)*M",
            FitnessKind::F7 => "inv(M)*R - I",
            FitnessKind::F8 => "I - inv(M)*R",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for FitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Fitness evaluator with the data-only terms (`I⁺`, `R⁺`, `R·I⁺`)
/// computed once per dataset.
#[derive(Debug, Clone)]
pub struct FitnessEvaluator {
    kind: FitnessKind,
    image: Matrix,
    robot: Matrix,
    image_pinv: Option<Matrix>,
    robot_pinv: Option<Matrix>,
    closed_form: Option<Matrix>,
}

impl FitnessEvaluator {
    pub fn new(kind: FitnessKind, obs: &ObservationSet) -> Result<Self, MappingError> {
        use FitnessKind::*;
        let needs_image_pinv = matches!(kind, F3 | F4 | F5 | F6);
        let image_pinv = if needs_image_pinv {
            Some(
                obs.image
                    .pseudo_inverse()
                    .map_err(map_linalg("image matrix", 3))?,
            )
        } else {
            None
        };
        let robot_pinv = if matches!(kind, F5 | F6) {
            Some(
                obs.robot
                    .pseudo_inverse()
                    .map_err(map_linalg("robot matrix", 3))?,
            )
        } else {
            None
        };
        let closed_form = match (&image_pinv, kind) {
            (Some(ip), F3 | F4) => Some(obs.robot.matmul(ip).map_err(map_linalg("R*pinv(I)", 3))?),
            _ => None,
        };
        Ok(Self {
            kind,
            image: obs.image.clone(),
            robot: obs.robot.clone(),
            image_pinv,
            robot_pinv,
            closed_form,
        })
    }

    pub fn kind(&self) -> FitnessKind {
        self.kind
    }

    /// Sum of squared entries of the residual matrix for this chromosome.
    pub fn evaluate(&self, c: &Chromosome) -> Result<f64, MappingError> {
        use FitnessKind::*;
        let m = c.to_matrix();
        let dim = |e: LinalgError| map_linalg("residual", 3)(e);
        let residual = match self.kind {
            F1 | F2 => self
                .robot
                .sub(&m.matmul(&self.image).map_err(dim)?)
                .map_err(dim)?,
            F3 | F4 => self
                .closed_form
                .as_ref()
                .expect("closed form")
                .sub(&m)
                .map_err(dim)?,
            F5 | F6 => {
                let rp = self.robot_pinv.as_ref().expect("robot pinv");
                let ip = self.image_pinv.as_ref().expect("image pinv");
                rp.matmul(&m).map_err(dim)?.sub(ip).map_err(dim)?
            }
            F7 | F8 => {
                let inv = m
                    .inverse()
                    .map_err(|_| MappingError::Singular("chromosome M"))?;
                inv.matmul(&self.robot)
                    .map_err(dim)?
                    .sub(&self.image)
                    .map_err(dim)?
            }
        };
        // Paired kinds differ only in the residual's sign.
        Ok(residual.frobenius_sq())
    }
}

/// One-shot fitness; see [`FitnessEvaluator`] for repeated evaluation.
pub fn fitness(
    kind: FitnessKind,
    c: &Chromosome,
    obs: &ObservationSet,
) -> Result<f64, MappingError> {
    FitnessEvaluator::new(kind, obs)?.evaluate(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub solutions_per_population: usize,
    pub num_parents: usize,
    pub generations: usize,
    pub gene_init_range: Range<f64>,
    pub mutation_scale: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            solutions_per_population: 8,
            num_parents: 4,
            generations: 5000,
            gene_init_range: -4.0..4.0,
            mutation_scale: 1.0,
            seed: 0,
        }
    }
}

/// Crossover point: genes `[0, 4)` come from the first parent.
pub const CROSSOVER_POINT: usize = 4;

impl GaConfig {
    pub fn validate(&self) -> Result<(), MappingError> {
        if self.num_parents < 1 || self.num_parents >= self.solutions_per_population {
            return Err(MappingError::InvalidConfig(
                "need 1 <= num_parents < solutions_per_population",
            ));
        }
        if self.generations < 1 {
            return Err(MappingError::InvalidConfig("generations must be >= 1"));
        }
        if !(self.mutation_scale > 0.0) || !self.mutation_scale.is_finite() {
            return Err(MappingError::InvalidConfig("mutation_scale must be > 0"));
        }
        if !(self.gene_init_range.start < self.gene_init_range.end)
            || !self.gene_init_range.start.is_finite()
            || !self.gene_init_range.end.is_finite()
        {
            return Err(MappingError::InvalidConfig(
                "gene_init_range must be a finite, nonempty interval",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub mapping: MappingMatrix,
    pub best_fitness: f64,
    /// Best fitness seen after each generation; non-increasing.
    pub history: Vec<f64>,
}

/// Elitist GA: truncation selection, midpoint crossover between consecutive
/// parents, one-gene uniform mutation per offspring.
pub fn ga_fit(
    obs: &ObservationSet,
    cfg: &GaConfig,
    kind: FitnessKind,
) -> Result<GaResult, MappingError> {
    cfg.validate()?;
    let eval = FitnessEvaluator::new(kind, obs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut population: Vec<Chromosome> = (0..cfg.solutions_per_population)
        .map(|_| {
            let mut genes = [0.0; 9];
            for g in genes.iter_mut() {
                *g = rng.random_range(cfg.gene_init_range.clone());
            }
            Chromosome { genes }
        })
        .collect();
    let mut scores = population
        .iter()
        .map(|c| eval.evaluate(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut best = population[0];
    let mut best_fit = f64::INFINITY;
    let track = |pop: &[Chromosome], fit: &[f64], best: &mut Chromosome, best_fit: &mut f64| {
        for (c, f) in pop.iter().zip(fit) {
            if *f < *best_fit {
                *best_fit = *f;
                *best = *c;
            }
        }
    };
    track(&population, &scores, &mut best, &mut best_fit);

    let n_offspring = cfg.solutions_per_population - cfg.num_parents;
    let mut history = Vec::with_capacity(cfg.generations);
    let mut order: Vec<usize> = Vec::with_capacity(population.len());
    for _ in 0..cfg.generations {
        order.clear();
        order.extend(0..population.len());
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let parents: Vec<Chromosome> = order[..cfg.num_parents]
            .iter()
            .map(|&i| population[i])
            .collect();
        let parent_scores: Vec<f64> = order[..cfg.num_parents]
            .iter()
            .map(|&i| scores[i])
            .collect();

        let mut next = parents.clone();
        let mut next_scores = parent_scores;
        for k in 0..n_offspring {
            let a = &parents[k % parents.len()];
            let b = &parents[(k + 1) % parents.len()];
            let mut genes = b.genes;
            genes[..CROSSOVER_POINT].copy_from_slice(&a.genes[..CROSSOVER_POINT]);
            let idx = rng.random_range(0..9);
            genes[idx] += rng.random_range(-cfg.mutation_scale..=cfg.mutation_scale);
            let child = Chromosome { genes };
            next_scores.push(eval.evaluate(&child)?);
            next.push(child);
        }
        population = next;
        scores = next_scores;
        track(&population, &scores, &mut best, &mut best_fit);
        history.push(best_fit);
    }

    Ok(GaResult {
        mapping: MappingMatrix::from_row_major(best.genes)?,
        best_fitness: best_fit,
        history,
    })
}

/// Regression line `robot = intercept + slope · image` for one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisLine {
    pub slope: f64,
    pub intercept: f64,
}

impl AxisLine {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Behaviour of [`lr_fit_with`] when an axis has identical image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegenerateAxisPolicy {
    /// Report [`MappingError::DegenerateAxis`].
    #[default]
    Error,
    /// Fit a constant: slope 0, intercept the mean robot coordinate.
    ConstantFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineModel {
    pub lines: [AxisLine; 3],
    /// Axes fitted as constants under [`DegenerateAxisPolicy::ConstantFit`].
    pub constant_axes: [bool; 3],
}

impl LineModel {
    pub fn line(&self, axis: Axis) -> AxisLine {
        self.lines[axis.index()]
    }
}

/// Per-axis normal equations: image-x → robot-x, image-y → robot-y,
/// image-z → robot-z.
pub fn lr_fit(obs: &ObservationSet) -> Result<[AxisLine; 3], MappingError> {
    lr_fit_with(obs, DegenerateAxisPolicy::Error).map(|m| m.lines)
}

pub fn lr_fit_with(
    obs: &ObservationSet,
    policy: DegenerateAxisPolicy,
) -> Result<LineModel, MappingError> {
    let n = obs.len();
    if n < 2 {
        return Err(MappingError::TooFewObservations { needed: 2, got: n });
    }
    let nf = n as f64;
    let mut lines = [AxisLine {
        slope: 0.0,
        intercept: 0.0,
    }; 3];
    let mut constant_axes = [false; 3];
    for axis in Axis::ALL {
        let a = axis.index();
        let xs = obs.image.row(a);
        let ys = obs.robot.row(a);
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let denom = nf * sxx - sx * sx;
        // Identical coordinates give a denominator that is zero up to rounding.
        let first = xs[0];
        let all_same = xs.iter().all(|x| *x == first);
        if all_same || denom == 0.0 {
            match policy {
                DegenerateAxisPolicy::Error => return Err(MappingError::DegenerateAxis(axis)),
                DegenerateAxisPolicy::ConstantFit => {
                    lines[a] = AxisLine {
                        slope: 0.0,
                        intercept: sy / nf,
                    };
                    constant_axes[a] = true;
                    continue;
                }
            }
        }
        lines[a] = AxisLine {
            slope: (nf * sxy - sx * sy) / denom,
            intercept: (sxx * sy - sx * sxy) / denom,
        };
    }
    Ok(LineModel {
        lines,
        constant_axes,
    })
}

/// `M = R Iᵀ (I Iᵀ)⁻¹`, via a 3×3 solve rather than an explicit inverse.
pub fn pi_fit(obs: &ObservationSet) -> Result<MappingMatrix, MappingError> {
    let rank = obs.image.rank();
    if rank < 3 {
        return Err(MappingError::RankDeficient {
            what: "image matrix",
            rank,
            needed: 3,
        });
    }
    let it = obs.image.transpose();
    let gram = obs.image.matmul(&it).map_err(map_linalg("I*I^T", 3))?;
    let cross = obs.robot.matmul(&it).map_err(map_linalg("R*I^T", 3))?;
    // M·G = C  ⇔  G·Mᵀ = Cᵀ (G symmetric).
    let mt = gram.solve(&cross.transpose()).map_err(|e| match e {
        LinalgError::Singular => MappingError::RankDeficient {
            what: "I*I^T",
            rank: gram.rank(),
            needed: 3,
        },
        other => map_linalg("I*I^T", 3)(other),
    })?;
    MappingMatrix::from_matrix(&mt.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PositionModel {
    Matrix(MappingMatrix),
    Lines([AxisLine; 3]),
}

impl PositionModel {
    pub fn predict(&self, p: &ImagePoint) -> EEPosition {
        predict_position(self, p)
    }
}

pub fn predict_position(model: &PositionModel, p: &ImagePoint) -> EEPosition {
    match model {
        PositionModel::Matrix(m) => m.apply(p),
        PositionModel::Lines([x, y, z]) => {
            EEPosition::new(x.predict(p.ix), y.predict(p.iy), z.predict(p.iz))
        }
    }
}

/// `sqrt(Σ squared coordinate errors / 3n)`.
pub fn rmse(predicted: &[EEPosition], actual: &[EEPosition]) -> Result<f64, MappingError> {
    if predicted.len() != actual.len() {
        return Err(MappingError::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MappingError::Empty);
    }
    let sum: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| {
            let (dx, dy, dz) = (p.rx - a.rx, p.ry - a.ry, p.rz - a.rz);
            dx * dx + dy * dy + dz * dz
        })
        .sum();
    Ok(libm::sqrt(sum / (3.0 * predicted.len() as f64)))
}

/// RMSE of a model over every column of an observation set.
pub fn model_rmse(model: &PositionModel, obs: &ObservationSet) -> Result<f64, MappingError> {
    let predicted: Vec<_> = obs
        .image_points()
        .iter()
        .map(|p| model.predict(p))
        .collect();
    rmse(&predicted, &obs.positions())
}
