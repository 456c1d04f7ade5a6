//! Learned exploration cost: a shared feed-forward network maps the policy
//! observation to bounded per-horizon-step quadratic cost parameters over
//! the control variables, with a hand-written reverse pass for training
//! through the controller.

mod checkpoint;
mod mlp;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use mlp::{clip_global_norm, sigmoid, sigmoid_derivative, Adam, Mlp, MlpCache};

use crate::error::{Error, Result};
use crate::geometry::PanoDepthMap;
use crate::scalar::{wrap_pi, Real};
use nalgebra::{DVector, Vector2, Vector3};

/// How the angle deviation in the quadratic is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleMode {
    /// Deviation wrapped to [-π, π) around the emitted reference angle, so
    /// the quadratic expresses "pull toward this direction" on the circle.
    Wrapped,
    /// Plain difference, the printed quadratic form.
    Raw,
}

/// Whether the shared network is conditioned per horizon step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonConditioning {
    /// Normalized step index appended to the input features.
    PerStepIndex,
    /// One evaluation reused for every step.
    Constant,
}

/// Output bounds applied by the sigmoid-scaled head.
#[derive(Debug, Clone, Copy)]
pub struct HeadBounds<T: Real> {
    pub q_min: T,
    pub q_max: T,
    pub lin_bound: T,
}

impl<T: Real> Default for HeadBounds<T> {
    fn default() -> Self {
        Self {
            q_min: T::of(0.1),
            q_max: T::of(1e5),
            lin_bound: T::of(10.0),
        }
    }
}

/// Per-step quadratic cost over `(θ, ω)`: diagonal PSD quadratic term,
/// bounded linear term, and the reference angle the quadratic is centered
/// on.
#[derive(Debug, Clone, Copy)]
pub struct QuadCostParams<T: Real> {
    pub q_theta: T,
    pub q_omega: T,
    pub linear: Vector2<T>,
    pub theta_ref: T,
    pub angle_mode: AngleMode,
}

impl<T: Real> QuadCostParams<T> {
    /// All-zero placeholder: no learned cost contribution.
    pub fn zero() -> Self {
        Self {
            q_theta: T::zero(),
            q_omega: T::zero(),
            linear: Vector2::zeros(),
            theta_ref: T::zero(),
            angle_mode: AngleMode::Wrapped,
        }
    }

    #[inline]
    pub fn angle_deviation(&self, theta: T) -> T {
        match self.angle_mode {
            AngleMode::Wrapped => wrap_pi(theta - self.theta_ref),
            AngleMode::Raw => theta - self.theta_ref,
        }
    }
}

/// Quadratic cost value and its analytic gradients in `(θ, ω)`.
pub fn eval_cost<T: Real>(p: &QuadCostParams<T>, theta: T, omega: T) -> (T, T, T) {
    let d = p.angle_deviation(theta);
    let half = T::of(0.5);
    let cost = half * (p.q_theta * d * d + p.q_omega * omega * omega)
        + p.linear[0] * d
        + p.linear[1] * omega;
    let dtheta = p.q_theta * d + p.linear[0];
    let domega = p.q_omega * omega + p.linear[1];
    (cost, dtheta, domega)
}

/// Observation features for the policy: body velocity, positional
/// covariance diagonal, rotor angle encoding, and the normalized panoramic
/// depth image (sentinel bins read 1.0).
#[derive(Debug, Clone)]
pub struct PolicyObservation<T: Real> {
    pub velocity: Vector3<T>,
    pub cov_diag: Vector3<T>,
    pub rotor_sin: T,
    pub rotor_cos: T,
    pub pano: Vec<T>,
    pub pano_width: usize,
    pub pano_height: usize,
}

impl<T: Real> PolicyObservation<T> {
    pub fn new(
        velocity: Vector3<T>,
        cov_diag: Vector3<T>,
        rotor_angle: T,
        pano: &PanoDepthMap<T>,
    ) -> Result<Self> {
        let mut grid = Vec::with_capacity(pano.width() * pano.height());
        for v in 0..pano.height() {
            for u in 0..pano.width() {
                let r = pano.range(u, v);
                let norm = if r < T::no_return() {
                    (r / pano.max_range()).clamp(T::zero(), T::one())
                } else {
                    T::one()
                };
                grid.push(norm);
            }
        }
        let obs = Self {
            velocity,
            cov_diag,
            rotor_sin: rotor_angle.sin(),
            rotor_cos: rotor_angle.cos(),
            pano: grid,
            pano_width: pano.width(),
            pano_height: pano.height(),
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.velocity.iter().all(|v| v.is_finite())
            && self.cov_diag.iter().all(|v| v.is_finite())
            && self.rotor_sin.is_finite()
            && self.rotor_cos.is_finite()
            && self.pano.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("policy observation".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        8 + self.pano.len()
    }

    pub fn features(&self) -> DVector<T> {
        let mut f = Vec::with_capacity(self.feature_dim());
        f.extend(self.velocity.iter().copied());
        f.extend(self.cov_diag.iter().copied());
        f.push(self.rotor_sin);
        f.push(self.rotor_cos);
        f.extend(self.pano.iter().copied());
        DVector::from_vec(f)
    }
}

/// Number of raw head outputs per horizon step.
const HEAD_OUTPUTS: usize = 5;

/// Upstream gradients with respect to one step's bounded outputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadUpstream<T: Real> {
    pub d_q_theta: T,
    pub d_q_omega: T,
    pub d_linear: [T; 2],
    pub d_theta_ref: T,
}

/// The cost-map network: a shared MLP evaluated once per horizon step,
/// whose raw outputs are squashed into [`QuadCostParams`].
#[derive(Debug, Clone)]
pub struct CostNet<T: Real> {
    pub mlp: Mlp<T>,
    pub bounds: HeadBounds<T>,
    pub angle_mode: AngleMode,
    pub conditioning: HorizonConditioning,
    pub seed: u64,
}

/// Cached activations for every evaluated horizon step.
pub struct CostNetCache<T: Real> {
    kind: CacheKind<T>,
    horizon: usize,
}

enum CacheKind<T: Real> {
    /// one full evaluation reused for every step
    Single(DVector<T>, MlpCache<T>),
    /// shared first-layer trunk: the features enter layer 0 once and only
    /// the index column varies per step
    SharedTrunk {
        features: DVector<T>,
        steps: Vec<TrunkStep<T>>,
    },
}

struct TrunkStep<T: Real> {
    index_feature: T,
    /// first-layer pre-activation (or the raw output when there are no
    /// hidden layers)
    z0: DVector<T>,
    raw: DVector<T>,
    tail: Option<MlpCache<T>>,
}

impl<T: Real> CostNet<T> {
    /// Production policy network: two hidden layers of width 256 feeding a
    /// sigmoid-bounded head.
    pub fn policy(feature_dim: usize, seed: u64) -> Self {
        Self::with_architecture(
            feature_dim,
            &[256, 256],
            seed,
            HeadBounds::default(),
            AngleMode::Wrapped,
            HorizonConditioning::PerStepIndex,
        )
    }

    /// Re-initializes the quadratic-coefficient head biases. The default
    /// (-10, q about 4.6) starts the learned cost near-neutral so the
    /// analytic terms lead early behavior, while keeping enough quadratic
    /// stiffness that horizon minimizers sit off the surrogate knots where
    /// the solve is smooth and gradients can flow.
    pub fn set_q_bias(&mut self, bias: T) {
        let last = self.mlp.layers.last_mut().unwrap();
        last.bias[0] = bias;
        last.bias[1] = bias;
        self.mlp.quantize_to_f32();
    }

    pub fn with_architecture(
        feature_dim: usize,
        hidden: &[usize],
        seed: u64,
        bounds: HeadBounds<T>,
        angle_mode: AngleMode,
        conditioning: HorizonConditioning,
    ) -> Self {
        let input = feature_dim
            + match conditioning {
                HorizonConditioning::PerStepIndex => 1,
                HorizonConditioning::Constant => 0,
            };
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(HEAD_OUTPUTS);
        let mut mlp = Mlp::new(&sizes, seed);
        let q_bias = T::of(-10.0);
        let last = mlp.layers.last_mut().unwrap();
        last.bias[0] = q_bias;
        last.bias[1] = q_bias;
        mlp.quantize_to_f32();
        Self {
            mlp,
            bounds,
            angle_mode,
            conditioning,
            seed,
        }
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn params(&self) -> Vec<T> {
        self.mlp.flat_params()
    }

    pub fn set_params(&mut self, p: &[T]) {
        self.mlp.set_flat_params(p);
    }

    fn step_input(&self, features: &DVector<T>, k: usize, horizon: usize) -> DVector<T> {
        match self.conditioning {
            HorizonConditioning::Constant => features.clone(),
            HorizonConditioning::PerStepIndex => {
                let mut v = Vec::with_capacity(features.len() + 1);
                v.extend(features.iter().copied());
                v.push(T::of(k as f64) / T::of(horizon.max(1) as f64));
                DVector::from_vec(v)
            }
        }
    }

    fn squash(&self, raw: &DVector<T>) -> QuadCostParams<T> {
        let b = &self.bounds;
        let span = b.q_max - b.q_min;
        let two = T::of(2.0);
        QuadCostParams {
            q_theta: b.q_min + span * sigmoid(raw[0]),
            q_omega: b.q_min + span * sigmoid(raw[1]),
            linear: Vector2::new(
                b.lin_bound * (two * sigmoid(raw[2]) - T::one()),
                b.lin_bound * (two * sigmoid(raw[3]) - T::one()),
            ),
            theta_ref: raw[4],
            angle_mode: self.angle_mode,
        }
    }

    /// Cost parameters for horizon steps `0..=horizon`.
    pub fn forward(&self, obs: &PolicyObservation<T>, horizon: usize) -> Result<Vec<QuadCostParams<T>>> {
        Ok(self.forward_cached(obs, horizon)?.0)
    }

    pub fn forward_cached(
        &self,
        obs: &PolicyObservation<T>,
        horizon: usize,
    ) -> Result<(Vec<QuadCostParams<T>>, CostNetCache<T>)> {
        obs.validate()?;
        let features = obs.features();
        let kind = match self.conditioning {
            HorizonConditioning::Constant => {
                let (raw, cache) = self.mlp.forward_cached(&features);
                CacheKind::Single(raw, cache)
            }
            HorizonConditioning::PerStepIndex => {
                // layer 0 splits into the feature block and the index
                // column; the feature product is shared by all steps
                let layer0 = &self.mlp.layers[0];
                let f = features.len();
                let base = layer0.weights.columns(0, f) * &features + &layer0.bias;
                let index_col = layer0.weights.column(f);
                let single_layer = self.mlp.layers.len() == 1;
                let steps = (0..=horizon)
                    .map(|k| {
                        let idx = T::of(k as f64) / T::of(horizon.max(1) as f64);
                        let z0 = &base + index_col * idx;
                        if single_layer {
                            TrunkStep {
                                index_feature: idx,
                                raw: z0.clone(),
                                z0,
                                tail: None,
                            }
                        } else {
                            let a0 = z0.map(|v| if v > T::zero() { v } else { T::zero() });
                            let (raw, tail) = self.mlp.forward_cached_tail(1, a0);
                            TrunkStep {
                                index_feature: idx,
                                z0,
                                raw,
                                tail: Some(tail),
                            }
                        }
                    })
                    .collect();
                CacheKind::SharedTrunk { features, steps }
            }
        };
        let params = match &kind {
            CacheKind::Single(raw, _) => vec![self.squash(raw); horizon + 1],
            CacheKind::SharedTrunk { steps, .. } => {
                steps.iter().map(|s| self.squash(&s.raw)).collect()
            }
        };
        Ok((params, CostNetCache { kind, horizon }))
    }

    /// Derivative of the bounded outputs with respect to the raw head.
    fn head_gradient(&self, raw: &DVector<T>, up: &QuadUpstream<T>) -> DVector<T> {
        let b = &self.bounds;
        let span = b.q_max - b.q_min;
        let two = T::of(2.0);
        DVector::from_vec(vec![
            up.d_q_theta * span * sigmoid_derivative(raw[0]),
            up.d_q_omega * span * sigmoid_derivative(raw[1]),
            up.d_linear[0] * b.lin_bound * two * sigmoid_derivative(raw[2]),
            up.d_linear[1] * b.lin_bound * two * sigmoid_derivative(raw[3]),
            up.d_theta_ref,
        ])
    }

    /// Reverse pass: folds per-step upstream gradients (with respect to the
    /// bounded outputs) back through the head and the shared network,
    /// returning the gradient with respect to the flat parameter vector.
    pub fn backward(&self, cache: &CostNetCache<T>, upstream: &[QuadUpstream<T>]) -> Vec<T> {
        assert_eq!(upstream.len(), cache.horizon + 1);
        let mut grad = vec![T::zero(); self.param_count()];

        match &cache.kind {
            CacheKind::Single(raw, mlp_cache) => {
                // the single evaluation feeds every step
                let mut total = QuadUpstream::default();
                for up in upstream {
                    total.d_q_theta += up.d_q_theta;
                    total.d_q_omega += up.d_q_omega;
                    total.d_linear[0] += up.d_linear[0];
                    total.d_linear[1] += up.d_linear[1];
                    total.d_theta_ref += up.d_theta_ref;
                }
                let d_raw = self.head_gradient(raw, &total);
                self.mlp.backward(mlp_cache, &d_raw, &mut grad);
            }
            CacheKind::SharedTrunk { features, steps } => {
                let layer0 = &self.mlp.layers[0];
                let rows = layer0.weights.nrows();
                let f = features.len();
                let single_layer = self.mlp.layers.len() == 1;
                // per-step deltas at the first-layer pre-activation,
                // accumulated so the big feature outer product happens once
                let mut sum_delta = DVector::<T>::zeros(rows);
                let mut sum_delta_idx = DVector::<T>::zeros(rows);
                for (step, up) in steps.iter().zip(upstream) {
                    let d_raw = self.head_gradient(&step.raw, up);
                    let mut delta0 = if single_layer {
                        d_raw
                    } else {
                        let tail = step.tail.as_ref().expect("tail cache for hidden layers");
                        let mut d = self.mlp.backward_tail(1, tail, &d_raw, &mut grad);
                        for i in 0..rows {
                            if step.z0[i] <= T::zero() {
                                d[i] = T::zero();
                            }
                        }
                        d
                    };
                    sum_delta_idx.axpy(step.index_feature, &delta0, T::one());
                    sum_delta += &delta0;
                    let _ = &mut delta0;
                }
                // layer-0 gradients: rows are [feature block | index column]
                let base = self.mlp.layer_offset(0);
                let cols = f + 1;
                for r in 0..rows {
                    let d = sum_delta[r];
                    if d != T::zero() {
                        let row_base = base + r * cols;
                        for c in 0..f {
                            grad[row_base + c] += d * features[c];
                        }
                    }
                    grad[base + r * cols + f] += sum_delta_idx[r];
                    grad[base + rows * cols + r] += d;
                }
            }
        }
        grad
    }
}
