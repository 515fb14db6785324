/*
Copyright 2026 The linksdf Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Learned replacement for the rotation of canonical points.
//!
//! [`TinyMlp`] maps the nine entries of a rotation matrix (row-major) through
//! one hidden ReLU layer to the `3 * V` coordinates of `Rᵀ P`. It depends only
//! on the window size, never on the robot, so one trained model serves every
//! link with the same `W`.

use std::time::Instant;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::placement::{inverse_shift, CanonicalPoints, GridTransform, TransformProvider};

pub const DEFAULT_HIDDEN: usize = 32;

/// Output rows handled by one training task. A multiple of 3 so a point's
/// coordinates never straddle two tasks.
const TRAIN_CHUNK: usize = 1536;

/// Rotations per task when evaluating.
const EVAL_CHUNK: usize = 128;

/// Uniform random rotation from a normalised Gaussian quaternion.
pub fn sample_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let mut q = [0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
            break;
        }
    }
    let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    UnitQuaternion::from_quaternion(quat)
        .to_rotation_matrix()
        .into_inner()
}

fn rotation_input(r: &Matrix3<f64>, dst: &mut [f32]) {
    for i in 0..3 {
        for j in 0..3 {
            dst[3 * i + j] = r[(i, j)] as f32;
        }
    }
}

fn inputs(rotations: &[Matrix3<f64>]) -> Array2<f32> {
    let mut x = Array2::zeros((rotations.len(), 9));
    for (r, mut row) in rotations.iter().zip(x.rows_mut()) {
        rotation_input(r, row.as_slice_mut().expect("contiguous"));
    }
    x
}

/// Two fully connected layers with a ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    hidden: usize,
    num_points: usize,
    /// 9 x H, row-major.
    w1: Vec<f32>,
    b1: Vec<f32>,
    /// Second layer stored transposed (3V x H) so each output row is contiguous.
    w2t: Vec<f32>,
    b2: Vec<f32>,
}

impl TinyMlp {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new_random<R: Rng + ?Sized>(hidden: usize, num_points: usize, rng: &mut R) -> Self {
        let outputs = 3 * num_points;
        let a1 = 1.0 / 3.0f32;
        let a2 = 1.0 / (hidden as f32).sqrt();
        let mut uniform = |n: usize, a: f32| -> Vec<f32> {
            (0..n).map(|_| rng.random_range(-a..a)).collect()
        };
        let w1 = uniform(9 * hidden, a1);
        let b1 = uniform(hidden, a1);
        let w2t = uniform(outputs * hidden, a2);
        let b2 = uniform(outputs, a2);
        Self {
            hidden,
            num_points,
            w1,
            b1,
            w2t,
            b2,
        }
    }

    /// Builds a model from parameters in declared order; `w2` is `H x 3V`
    /// row-major.
    pub fn from_parts(
        hidden: usize,
        num_points: usize,
        w1: Vec<f32>,
        b1: Vec<f32>,
        w2: &[f32],
        b2: Vec<f32>,
    ) -> Result<Self> {
        let outputs = 3 * num_points;
        let bad = |what: &str| Err(Error::InvalidModel(what.to_string()));
        if hidden == 0 || num_points == 0 {
            return bad("hidden width and point count must be positive");
        }
        if w1.len() != 9 * hidden
            || b1.len() != hidden
            || w2.len() != hidden * outputs
            || b2.len() != outputs
        {
            return bad("parameter lengths do not match the declared shape");
        }
        if !w1.iter().chain(&b1).chain(w2).chain(&b2).all(|v| v.is_finite()) {
            return bad("non-finite weight");
        }
        let mut w2t = vec![0f32; w2.len()];
        for h in 0..hidden {
            for o in 0..outputs {
                w2t[o * hidden + h] = w2[h * outputs + o];
            }
        }
        Ok(Self {
            hidden,
            num_points,
            w1,
            b1,
            w2t,
            b2,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn outputs(&self) -> usize {
        3 * self.num_points
    }

    pub fn w1(&self) -> &[f32] {
        &self.w1
    }

    pub fn b1(&self) -> &[f32] {
        &self.b1
    }

    /// Second-layer weights as `H x 3V` row-major.
    pub fn w2(&self) -> Vec<f32> {
        let (h_n, o_n) = (self.hidden, self.outputs());
        let mut w2 = vec![0f32; self.w2t.len()];
        for o in 0..o_n {
            for h in 0..h_n {
                w2[h * o_n + o] = self.w2t[o * h_n + h];
            }
        }
        w2
    }

    pub fn b2(&self) -> &[f32] {
        &self.b2
    }

    fn w1_view(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((9, self.hidden), &self.w1).expect("shape")
    }

    fn w2t_view(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.outputs(), self.hidden), &self.w2t).expect("shape")
    }

    /// Hidden pre-activations for a batch of inputs.
    fn hidden_pre(&self, x: &Array2<f32>) -> Array2<f32> {
        let mut h = Array2::zeros((x.nrows(), self.hidden));
        for mut row in h.rows_mut() {
            row.as_slice_mut().expect("contiguous").copy_from_slice(&self.b1);
        }
        general_mat_mul(1.0, x, &self.w1_view(), 1.0, &mut h);
        h
    }

    /// `f(R)` for every rotation, `3V` floats each, written to `out`.
    pub fn forward_batch(&self, rotations: &[Matrix3<f64>], out: &mut [f32]) {
        let b = rotations.len();
        assert_eq!(out.len(), b * self.outputs(), "output buffer size");
        if b == 0 {
            return;
        }
        let mut h = self.hidden_pre(&inputs(rotations));
        h.mapv_inplace(|v| v.max(0.0));
        let mut y = ArrayViewMut2::from_shape((b, self.outputs()), out).expect("shape");
        for mut row in y.rows_mut() {
            row.as_slice_mut().expect("contiguous").copy_from_slice(&self.b2);
        }
        general_mat_mul(1.0, &h, &self.w2t_view().t(), 1.0, &mut y);
    }

    fn check_points(&self, points: &CanonicalPoints) -> Result<()> {
        if points.len() != self.num_points {
            return Err(Error::DimensionMismatch(format!(
                "model was trained for {} points, window has {}",
                self.num_points,
                points.len()
            )));
        }
        Ok(())
    }

    /// `G = f(R) - Rᵀ shift / e_r` for each `(rotation, shift)` pair.
    pub fn infer_grid_transform(
        &self,
        points: &CanonicalPoints,
        rotations: &[Matrix3<f64>],
        shifts: &[Vector3<f64>],
        extent_r: f64,
    ) -> Result<Vec<GridTransform>> {
        self.check_points(points)?;
        if rotations.len() != shifts.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rotations but {} shifts",
                rotations.len(),
                shifts.len()
            )));
        }
        let stride = self.outputs();
        let mut out = vec![0f32; stride * rotations.len()];
        self.forward_batch(rotations, &mut out);
        Ok(rotations
            .iter()
            .zip(shifts)
            .zip(out.chunks_exact(stride))
            .map(|((r, s), f)| {
                let inv = inverse_shift(r, s, extent_r).cast::<f32>();
                GridTransform {
                    points: f
                        .chunks_exact(3)
                        .map(|g| Vector3::new(g[0], g[1], g[2]) + inv)
                        .collect(),
                }
            })
            .collect())
    }
}

impl TransformProvider for TinyMlp {
    fn num_points(&self) -> usize {
        self.num_points
    }

    fn rotate_batch(&self, rotations: &[Matrix3<f64>], out: &mut [f32]) {
        self.forward_batch(rotations, out);
    }
}

/// Componentwise error of a provider against the exact product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxError {
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
}

fn errors_on(
    provider: &dyn TransformProvider,
    points: &CanonicalPoints,
    rotations: &[Matrix3<f64>],
    exec: Exec,
) -> ApproxError {
    let stride = 3 * points.len();
    let chunks = rotations.len().div_ceil(EVAL_CHUNK);
    let partial = par::map_range(exec, chunks, |c| {
        let rs = &rotations[c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(rotations.len())];
        let mut out = vec![0f32; stride * rs.len()];
        provider.rotate_batch(rs, &mut out);
        let (mut max, mut sum) = (0f64, 0f64);
        for (r, o) in rs.iter().zip(out.chunks_exact(stride)) {
            let rt = r.transpose();
            for (p, g) in points.points().iter().zip(o.chunks_exact(3)) {
                let exact = rt * p;
                for a in 0..3 {
                    let e = (g[a] as f64 - exact[a]).abs();
                    max = max.max(e);
                    sum += e;
                }
            }
        }
        (max, sum)
    });
    let (max, sum) = partial
        .into_iter()
        .fold((0f64, 0f64), |(m, s), (pm, ps)| (m.max(pm), s + ps));
    let n = (rotations.len() * stride).max(1) as f64;
    ApproxError {
        max_abs_error: max,
        mean_abs_error: sum / n,
    }
}

/// Error of `provider` against `Rᵀ P` over `n` uniform rotations.
pub fn evaluate_approximator<R: Rng + ?Sized>(
    provider: &dyn TransformProvider,
    points: &CanonicalPoints,
    n: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<ApproxError> {
    if provider.num_points() != points.len() {
        return Err(Error::DimensionMismatch(format!(
            "provider maps {} points, window has {}",
            provider.num_points(),
            points.len()
        )));
    }
    let rotations: Vec<_> = (0..n).map(|_| sample_rotation(rng)).collect();
    Ok(errors_on(provider, points, &rotations, exec))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f32,
    pub steps: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Size of the fixed validation set.
    pub validation_samples: usize,
    /// Steps between validation checkpoints.
    pub eval_interval: usize,
    /// Training stops early once validation max error is at or below this.
    pub stop_max_error: f64,
    /// Validation max error a finished model must meet.
    pub accept_max_error: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            steps: 200_000,
            batch_size: 64,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
            validation_samples: 10_000,
            eval_interval: 500,
            stop_max_error: 0.0008,
            accept_max_error: 0.0013,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.batch_size > 0
            && self.hidden > 0
            && self.eval_interval > 0
            && self.validation_samples > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("invalid training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    /// Mean L1 training loss since the previous checkpoint.
    pub train_loss: Option<f64>,
    pub validation: ApproxError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Validation error before the first step, then every `eval_interval` steps.
    pub checkpoints: Vec<Checkpoint>,
    pub steps: usize,
    pub final_error: ApproxError,
    pub converged: bool,
}

struct Adam {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
}

impl Adam {
    const DEFAULT_BETAS: (f32, f32) = (0.9, 0.999);

    fn new(lr: f32) -> Self {
        Self {
            lr,
            beta1: Self::DEFAULT_BETAS.0,
            beta2: Self::DEFAULT_BETAS.1,
            eps: 1e-8,
        }
    }

    fn update(&self, t: i32, p: &mut [f32], g: &[f32], m: &mut [f32], v: &mut [f32]) {
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = (1.0 - self.beta2.powi(t)).sqrt();
        for i in 0..p.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
            p[i] -= self.lr * (m[i] / c1) / (v[i].sqrt() / c2 + self.eps);
        }
    }
}

struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One task's slice of the output layer.
struct OutputChunk<'a> {
    start: usize,
    w: &'a mut [f32],
    b: &'a mut [f32],
    mw: &'a mut [f32],
    vw: &'a mut [f32],
    mb: &'a mut [f32],
    vb: &'a mut [f32],
}

struct Trainer {
    model: TinyMlp,
    points: Vec<[f64; 3]>,
    adam: Adam,
    w1: Moments,
    b1: Moments,
    w2: Moments,
    b2: Moments,
    t: i32,
}

impl Trainer {
    /// One Adam step on an L1 loss; returns the batch loss.
    fn step(&mut self, rotations: &[Matrix3<f64>], exec: Exec) -> f64 {
        self.t += 1;
        let t = self.t;
        let b_n = rotations.len();
        let h_n = self.model.hidden;
        let o_n = self.model.outputs();
        let x = inputs(rotations);
        let pre = self.model.hidden_pre(&x);
        let h = pre.mapv(|v| v.max(0.0));
        let scale = 1.0 / (b_n * o_n) as f32;
        let rt: Vec<Matrix3<f64>> = rotations.iter().map(|r| r.transpose()).collect();

        let m = &mut self.model;
        let chunks: Vec<OutputChunk<'_>> = m
            .w2t
            .chunks_mut(TRAIN_CHUNK * h_n)
            .zip(m.b2.chunks_mut(TRAIN_CHUNK))
            .zip(self.w2.m.chunks_mut(TRAIN_CHUNK * h_n))
            .zip(self.w2.v.chunks_mut(TRAIN_CHUNK * h_n))
            .zip(self.b2.m.chunks_mut(TRAIN_CHUNK))
            .zip(self.b2.v.chunks_mut(TRAIN_CHUNK))
            .enumerate()
            .map(|(i, (((((w, b), mw), vw), mb), vb))| OutputChunk {
                start: i * TRAIN_CHUNK,
                w,
                b,
                mw,
                vw,
                mb,
                vb,
            })
            .collect();
        let points = &self.points;
        let adam = &self.adam;
        let h_ref = &h;
        let rt_ref = &rt;
        let partials = par::map_vec(exec, chunks, move |_, c| {
            let len = c.b.len();
            let mut y = Array2::<f32>::zeros((b_n, len));
            for mut row in y.rows_mut() {
                row.as_slice_mut().expect("contiguous").copy_from_slice(c.b);
            }
            let w = ArrayView2::from_shape((len, h_n), &*c.w).expect("shape");
            general_mat_mul(1.0, h_ref, &w.t(), 1.0, &mut y);
            let mut loss = 0f64;
            for (bi, mut row) in y.rows_mut().into_iter().enumerate() {
                let r = &rt_ref[bi];
                for (k, yv) in row.iter_mut().enumerate() {
                    let o = c.start + k;
                    let p = points[o / 3];
                    let a = o % 3;
                    let target = (r[(a, 0)] * p[0] + r[(a, 1)] * p[1] + r[(a, 2)] * p[2]) as f32;
                    let d = *yv - target;
                    loss += d.abs() as f64;
                    *yv = if d > 0.0 {
                        scale
                    } else if d < 0.0 {
                        -scale
                    } else {
                        0.0
                    };
                }
            }
            let d = y;
            let mut dh = Array2::<f32>::zeros((b_n, h_n));
            general_mat_mul(1.0, &d, &w, 0.0, &mut dh);
            let mut gw = Array2::<f32>::zeros((len, h_n));
            general_mat_mul(1.0, &d.t(), h_ref, 0.0, &mut gw);
            let gb = d.sum_axis(Axis(0));
            adam.update(t, c.w, gw.as_slice().expect("contiguous"), c.mw, c.vw);
            adam.update(t, c.b, gb.as_slice().expect("contiguous"), c.mb, c.vb);
            (dh, loss)
        });

        let mut dh = Array2::<f32>::zeros((b_n, h_n));
        let mut loss = 0f64;
        for (p, l) in &partials {
            dh += p;
            loss += l;
        }
        dh.zip_mut_with(&pre, |g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        let mut gw1 = Array2::<f32>::zeros((9, h_n));
        general_mat_mul(1.0, &x.t(), &dh, 0.0, &mut gw1);
        let gb1 = dh.sum_axis(Axis(0));
        let m = &mut self.model;
        self.adam.update(
            t,
            &mut m.w1,
            gw1.as_slice().expect("contiguous"),
            &mut self.w1.m,
            &mut self.w1.v,
        );
        self.adam.update(
            t,
            &mut m.b1,
            gb1.as_slice().expect("contiguous"),
            &mut self.b1.m,
            &mut self.b1.v,
        );
        loss / (b_n * o_n) as f64
    }
}

/// Trains a model for `points` and reports the training curve. Never fails
/// on accuracy; see [`train_approximator`] for the checked variant.
pub fn train_approximator_with_report(
    points: &CanonicalPoints,
    config: &TrainingConfig,
    exec: Exec,
) -> Result<(TinyMlp, TrainingReport)> {
    config.validate()?;
    if points.is_empty() {
        return Err(Error::DimensionMismatch("no canonical points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vrng = ChaCha8Rng::seed_from_u64(config.seed);
    vrng.set_stream(1);
    let validation: Vec<_> = (0..config.validation_samples)
        .map(|_| sample_rotation(&mut vrng))
        .collect();

    let model = TinyMlp::new_random(config.hidden, points.len(), &mut rng);
    let (h_n, o_n) = (config.hidden, model.outputs());
    let mut trainer = Trainer {
        model,
        points: points.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
        adam: Adam::new(config.learning_rate),
        w1: Moments::zeros(9 * h_n),
        b1: Moments::zeros(h_n),
        w2: Moments::zeros(o_n * h_n),
        b2: Moments::zeros(o_n),
        t: 0,
    };

    let start = Instant::now();
    let mut checkpoints = vec![Checkpoint {
        step: 0,
        train_loss: None,
        validation: errors_on(&trainer.model, points, &validation, exec),
    }];
    let mut loss_sum = 0f64;
    let mut since = 0usize;
    let mut step = 0;
    while step < config.steps {
        let batch: Vec<_> = (0..config.batch_size)
            .map(|_| sample_rotation(&mut rng))
            .collect();
        loss_sum += trainer.step(&batch, exec);
        since += 1;
        step += 1;
        if step % config.eval_interval == 0 || step == config.steps {
            let validation = errors_on(&trainer.model, points, &validation, exec);
            checkpoints.push(Checkpoint {
                step,
                train_loss: Some(loss_sum / since as f64),
                validation,
            });
            log::info!(
                "step {step}: loss {:.3e}, validation mean {:.3e} max {:.3e} ({:.1?})",
                loss_sum / since as f64,
                validation.mean_abs_error,
                validation.max_abs_error,
                start.elapsed()
            );
            loss_sum = 0.0;
            since = 0;
            if validation.max_abs_error <= config.stop_max_error {
                break;
            }
        }
    }
    let final_error = checkpoints.last().expect("non-empty").validation;
    let report = TrainingReport {
        converged: final_error.max_abs_error <= config.accept_max_error,
        checkpoints,
        steps: step,
        final_error,
    };
    Ok((trainer.model, report))
}

/// Trains a model and fails with [`Error::NotConverged`] when the validation
/// max error stays above `accept_max_error`.
pub fn train_approximator(points: &CanonicalPoints, config: &TrainingConfig, exec: Exec) -> Result<TinyMlp> {
    let (model, report) = train_approximator_with_report(points, config, exec)?;
    if !report.converged {
        return Err(Error::NotConverged {
            achieved: report.final_error.max_abs_error,
            target: config.accept_max_error,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::{grid_transform_exact, ExactProvider};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rotations_are_orthonormal() {
        let mut r = rng(1);
        for _ in 0..1000 {
            let m = sample_rotation(&mut r);
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-6);
            assert!((m.determinant() - 1.0).abs() < 1e-6);
            for c in m.column_iter() {
                assert!((c.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rotations_are_uniform() {
        // Haar measure: E[R] = 0 and E[R_ij^2] = 1/3.
        let mut r = rng(2);
        let n = 100_000;
        let mut mean = Matrix3::zeros();
        let mut sq = Matrix3::zeros();
        for _ in 0..n {
            let m = sample_rotation(&mut r);
            mean += m;
            sq += m.component_mul(&m);
        }
        mean /= n as f64;
        sq /= n as f64;
        assert!(mean.amax() < 0.02, "{mean}");
        assert!((sq - Matrix3::repeat(1.0 / 3.0)).amax() < 0.01, "{sq}");
    }

    fn naive_forward(m: &TinyMlp, r: &Matrix3<f64>) -> Vec<f32> {
        let mut x = [0f32; 9];
        rotation_input(r, &mut x);
        let h: Vec<f32> = (0..m.hidden)
            .map(|j| {
                let z = m.b1[j] + (0..9).map(|i| x[i] * m.w1[i * m.hidden + j]).sum::<f32>();
                z.max(0.0)
            })
            .collect();
        let w2 = m.w2();
        (0..m.outputs())
            .map(|o| m.b2[o] + (0..m.hidden).map(|j| h[j] * w2[j * m.outputs() + o]).sum::<f32>())
            .collect()
    }

    #[test]
    fn forward_matches_naive() {
        let mut r = rng(3);
        let m = TinyMlp::new_random(7, 11, &mut r);
        let rots: Vec<_> = (0..5).map(|_| sample_rotation(&mut r)).collect();
        let mut out = vec![0f32; 5 * m.outputs()];
        m.forward_batch(&rots, &mut out);
        for (rot, o) in rots.iter().zip(out.chunks_exact(m.outputs())) {
            for (a, b) in o.iter().zip(naive_forward(&m, rot)) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn init_ranges() {
        let m = TinyMlp::new_random(32, 100, &mut rng(4));
        assert!(m.w1.iter().all(|v| v.abs() <= 1.0 / 3.0));
        let a2 = 1.0 / 32f32.sqrt();
        assert!(m.w2t.iter().chain(&m.b2).all(|v| v.abs() <= a2));
    }

    #[test]
    fn parts_round_trip_and_validation() {
        let m = TinyMlp::new_random(4, 6, &mut rng(5));
        let back =
            TinyMlp::from_parts(4, 6, m.w1.clone(), m.b1.clone(), &m.w2(), m.b2.clone()).unwrap();
        assert_eq!(back, m);
        assert!(TinyMlp::from_parts(4, 6, m.w1.clone(), m.b1.clone(), &m.w2()[1..], m.b2.clone())
            .is_err());
        let mut w1 = m.w1.clone();
        w1[0] = f32::NAN;
        assert!(TinyMlp::from_parts(4, 6, w1, m.b1.clone(), &m.w2(), m.b2.clone()).is_err());
    }

    #[test]
    fn grid_transform_shift() {
        let points = CanonicalPoints::new([4, 4, 4], false);
        let m = TinyMlp::new_random(8, points.len(), &mut rng(6));
        let r = sample_rotation(&mut rng(7));
        let g = m
            .infer_grid_transform(&points, &[r], &[Vector3::zeros()], 0.2)
            .unwrap();
        let mut f = vec![0f32; m.outputs()];
        m.forward_batch(&[r], &mut f);
        for (p, q) in g[0].points.iter().zip(f.chunks_exact(3)) {
            assert_eq!([p.x, p.y, p.z], [q[0], q[1], q[2]]);
        }
        let other = CanonicalPoints::new([6, 6, 6], false);
        assert!(matches!(
            m.infer_grid_transform(&other, &[r], &[Vector3::zeros()], 0.3),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn exact_provider_has_zero_error() {
        let points = CanonicalPoints::new([6, 6, 6], true);
        let e = evaluate_approximator(&ExactProvider::new(&points), &points, 500, &mut rng(8), Exec::default())
            .unwrap();
        assert!(e.max_abs_error < 1e-6);
        assert!(e.mean_abs_error <= e.max_abs_error);
    }

    fn small_config(steps: usize) -> TrainingConfig {
        TrainingConfig {
            learning_rate: 1e-3,
            steps,
            batch_size: 64,
            hidden: 32,
            seed: 11,
            validation_samples: 500,
            eval_interval: 500,
            stop_max_error: 0.0,
            accept_max_error: 0.05,
        }
    }

    #[test]
    fn training_reduces_error() {
        let points = CanonicalPoints::new([4, 4, 4], false);
        let (model, report) =
            train_approximator_with_report(&points, &small_config(5000), Exec::default()).unwrap();
        let first = report.checkpoints[0].validation.mean_abs_error;
        let last = report.final_error.mean_abs_error;
        assert!(first >= 10.0 * last, "{first} vs {last}");
        for w in report.checkpoints.windows(2) {
            assert!(
                w[1].validation.mean_abs_error <= 1.05 * w[0].validation.mean_abs_error,
                "{:?}",
                report.checkpoints
            );
        }
        // identity rotation reproduces P
        let g = model
            .infer_grid_transform(&points, &[Matrix3::identity()], &[Vector3::zeros()], 0.2)
            .unwrap();
        let exact = grid_transform_exact(&Matrix3::identity(), &Vector3::zeros(), 0.2, &points);
        let err = g[0]
            .points
            .iter()
            .zip(&exact.points)
            .map(|(a, b)| (a - b).amax())
            .fold(0f32, f32::max);
        assert!((err as f64) < 4.0 * report.final_error.max_abs_error.max(1e-3));
    }

    #[test]
    fn training_is_deterministic() {
        let points = CanonicalPoints::new([4, 4, 4], false);
        let cfg = small_config(60);
        let a = train_approximator_with_report(&points, &cfg, Exec::Sequential).unwrap();
        let b = train_approximator_with_report(&points, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn unmet_threshold_is_reported() {
        let points = CanonicalPoints::new([4, 4, 4], false);
        let cfg = TrainingConfig {
            accept_max_error: 1e-9,
            ..small_config(10)
        };
        assert!(matches!(
            train_approximator(&points, &cfg, Exec::default()),
            Err(Error::NotConverged { .. })
        ));
    }
}
