//! Differentiable MPC over the rotor angle: minimizes the horizon cost
//! (analytic uncertainty surrogate + learned quadratics + smoothness
//! penalty) by a damped fixed-point iteration on the first-order optimality
//! condition, and differentiates the applied command with respect to the
//! network parameters through that condition.

use crate::costnet::{eval_cost, CostNet, PolicyObservation, QuadCostParams, QuadUpstream};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::uncertainty::{surrogate_cost, UncertaintySamples};
use nalgebra::{DMatrix, DVector};

/// Inner-solver knobs.
#[derive(Debug, Clone)]
pub struct SolveSettings<T: Real> {
    pub max_iterations: usize,
    /// loop exit on the infinity norm of the applied update
    pub tolerance: T,
    /// damping of the fixed-point step; the first trial each iteration
    pub alpha: T,
    /// halve the step while the objective would increase; plain damped
    /// iteration when false
    pub backtracking: bool,
    /// stationarity threshold for declaring convergence
    pub stationarity_tol: T,
}

impl<T: Real> Default for SolveSettings<T> {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: T::of(1e-8),
            alpha: T::of(0.5),
            backtracking: true,
            stationarity_tol: T::of(1e-6),
        }
    }
}

/// Fixed controller parameters shared by every per-tick problem.
#[derive(Debug, Clone)]
pub struct MpcConfig<T: Real> {
    pub horizon: usize,
    pub dt: T,
    pub rho: T,
    pub omega_max: T,
    pub settings: SolveSettings<T>,
}

impl<T: Real> Default for MpcConfig<T> {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: T::of(0.1),
            rho: T::of(0.05),
            omega_max: T::of(8.0),
            settings: SolveSettings::default(),
        }
    }
}

impl<T: Real> MpcConfig<T> {
    pub fn problem(
        &self,
        theta0: T,
        surrogate: Option<UncertaintySamples<T>>,
        cost_params: Vec<QuadCostParams<T>>,
    ) -> MpcProblem<T> {
        MpcProblem {
            horizon: self.horizon,
            dt: self.dt,
            rho: self.rho,
            theta0,
            omega_max: self.omega_max,
            surrogate,
            cost_params,
            settings: self.settings.clone(),
        }
    }
}

/// One horizon problem: state anchor, bounds, and the two cost sources.
#[derive(Debug, Clone)]
pub struct MpcProblem<T: Real> {
    pub horizon: usize,
    pub dt: T,
    /// smoothness weight; must be strictly positive
    pub rho: T,
    pub theta0: T,
    pub omega_max: T,
    pub surrogate: Option<UncertaintySamples<T>>,
    /// length `horizon + 1`
    pub cost_params: Vec<QuadCostParams<T>>,
    pub settings: SolveSettings<T>,
}

impl<T: Real> MpcProblem<T> {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.dt <= T::zero() {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.rho <= T::zero() {
            return Err(Error::Config("rho must be strictly positive".into()));
        }
        if self.cost_params.len() != self.horizon + 1 {
            return Err(Error::Config(format!(
                "cost_params length {} != horizon+1 = {}",
                self.cost_params.len(),
                self.horizon + 1
            )));
        }
        Ok(())
    }
}

/// Solver output; `omega[0]` is the applied command.
#[derive(Debug, Clone)]
pub struct MpcSolution<T: Real> {
    pub omega: DVector<T>,
    pub theta: DVector<T>,
    pub objective: T,
    /// infinity norm of the objective gradient over unclamped coordinates
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    pub clamped: Vec<bool>,
    pub objective_history: Vec<T>,
}

/// Lower-triangular integration matrix mapping the command sequence to the
/// predicted angles: `A[i][j] = dt` for `j <= i`.
pub fn integration_matrix<T: Real>(horizon: usize, dt: T) -> DMatrix<T> {
    assert!(horizon >= 1);
    let n = horizon + 1;
    DMatrix::from_fn(n, n, |i, j| if j <= i { dt } else { T::zero() })
}

fn predicted_angles<T: Real>(problem: &MpcProblem<T>, a: &DMatrix<T>, omega: &DVector<T>) -> DVector<T> {
    let n = problem.horizon + 1;
    DVector::from_fn(n, |i, _| {
        let mut acc = problem.theta0;
        for j in 0..=i {
            acc += a[(i, j)] * omega[j];
        }
        acc
    })
}

fn objective<T: Real>(problem: &MpcProblem<T>, a: &DMatrix<T>, omega: &DVector<T>) -> T {
    let theta = predicted_angles(problem, a, omega);
    let mut j = T::zero();
    for k in 0..=problem.horizon {
        if let Some(s) = &problem.surrogate {
            j += surrogate_cost(s, theta[k]).0;
        }
        j += eval_cost(&problem.cost_params[k], theta[k], omega[k]).0;
        j += problem.rho * omega[k] * omega[k];
    }
    j
}

/// Objective gradient with respect to the command sequence.
fn gradient<T: Real>(problem: &MpcProblem<T>, a: &DMatrix<T>, omega: &DVector<T>) -> DVector<T> {
    let n = problem.horizon + 1;
    let theta = predicted_angles(problem, a, omega);
    let mut dc_dtheta = DVector::zeros(n);
    let mut g = DVector::zeros(n);
    for k in 0..n {
        let (_, dth, dom) = eval_cost(&problem.cost_params[k], theta[k], omega[k]);
        dc_dtheta[k] = dth;
        if let Some(s) = &problem.surrogate {
            dc_dtheta[k] += surrogate_cost(s, theta[k]).1;
        }
        g[k] = dom + T::of(2.0) * problem.rho * omega[k];
    }
    g + a.transpose() * dc_dtheta
}

fn clamp_vec<T: Real>(v: &mut DVector<T>, bound: T) {
    for x in v.iter_mut() {
        *x = x.clamp(-bound, bound);
    }
}

/// Minimizes the horizon objective by the damped, clamped fixed-point
/// iteration on the stationarity condition. Non-convergence within the
/// iteration budget returns the best iterate, flagged.
pub fn solve<T: Real>(problem: &MpcProblem<T>) -> Result<MpcSolution<T>> {
    solve_from(problem, None)
}

/// [`solve`] with an optional warm start, used when differentiating through
/// the solver numerically.
pub fn solve_from<T: Real>(
    problem: &MpcProblem<T>,
    start: Option<&DVector<T>>,
) -> Result<MpcSolution<T>> {
    problem.validate()?;
    let n = problem.horizon + 1;
    let a = integration_matrix(problem.horizon, problem.dt);
    let s = &problem.settings;
    let two_rho = T::of(2.0) * problem.rho;
    let alpha_min = T::of(1e-4);

    let mut omega: DVector<T> = match start {
        Some(w) => {
            let mut w = w.clone();
            clamp_vec(&mut w, problem.omega_max);
            w
        }
        None => DVector::zeros(n),
    };
    let mut obj = objective(problem, &a, &omega);
    let mut history = Vec::with_capacity(s.max_iterations + 1);
    history.push(obj);
    let mut best = (omega.clone(), obj);
    let mut alpha_prev = s.alpha;
    let mut iterations = 0;

    for _ in 0..s.max_iterations {
        iterations += 1;
        let g = gradient(problem, &a, &omega);
        // fixed-point target of the stationarity condition
        let target = &omega - &g / two_rho;

        let mut alpha = if s.backtracking {
            (alpha_prev * T::of(2.0)).min(s.alpha)
        } else {
            s.alpha
        };
        let mut next;
        let mut next_obj;
        loop {
            next = &omega + (&target - &omega) * alpha;
            clamp_vec(&mut next, problem.omega_max);
            next_obj = objective(problem, &a, &next);
            if !s.backtracking || next_obj <= obj || alpha < alpha_min {
                break;
            }
            alpha /= T::of(2.0);
        }
        if s.backtracking && next_obj > obj {
            // no step length makes progress: stationary or kinked point
            break;
        }
        let delta = (&next - &omega).amax();
        omega = next;
        obj = next_obj;
        history.push(obj);
        alpha_prev = alpha.max(alpha_min);
        if obj < best.1 {
            best = (omega.clone(), obj);
        }
        if delta < s.tolerance {
            break;
        }
    }

    if best.1 < obj {
        omega = best.0;
    }

    // tail polish: the objective comparison above bottoms out at floating-
    // point resolution, so finish with plain damped steps accepted on a
    // strict gradient-norm decrease
    {
        let mut alpha_t = alpha_prev.min(s.alpha);
        let mut g = gradient(problem, &a, &omega);
        let mut g_norm = g.amax();
        for _ in 0..s.max_iterations {
            if g_norm <= T::zero() || alpha_t < T::of(1e-6) {
                break;
            }
            let mut next = &omega - &g * (alpha_t / two_rho);
            clamp_vec(&mut next, problem.omega_max);
            let g_next = gradient(problem, &a, &next);
            let g_next_norm = g_next.amax();
            if g_next_norm < g_norm {
                omega = next;
                g = g_next;
                g_norm = g_next_norm;
                iterations += 1;
            } else {
                alpha_t /= T::of(2.0);
            }
        }
        obj = objective(problem, &a, &omega);
        if obj <= *history.last().unwrap() {
            history.push(obj);
        }
    }

    let theta = predicted_angles(problem, &a, &omega);
    let g = gradient(problem, &a, &omega);
    let eps = problem.omega_max * T::of(1e-12) + T::of(1e-12);
    let clamped: Vec<bool> = omega.iter().map(|w| (w.abs() - problem.omega_max).abs() <= eps).collect();

    let mut residual = T::zero();
    let mut kkt_ok = true;
    for k in 0..n {
        if clamped[k] {
            // at a bound the gradient must push outward
            let outward = if omega[k] > T::zero() { -g[k] } else { g[k] };
            if outward < -s.stationarity_tol {
                kkt_ok = false;
            }
        } else {
            let ga = g[k].abs();
            if ga > residual {
                residual = ga;
            }
        }
    }
    let converged = kkt_ok && residual < s.stationarity_tol;

    Ok(MpcSolution {
        omega,
        theta,
        objective: obj,
        residual,
        iterations,
        converged,
        clamped,
        objective_history: history,
    })
}

/// Gradient of a scalar loss `L = Q(o, ω*_0)` with respect to the network
/// parameters, obtained by differentiating the stationarity condition.
#[derive(Debug, Clone)]
pub struct PolicyGradient<T: Real> {
    pub grad: Vec<T>,
    /// true when active clamps forced a subgradient choice (zero on the
    /// clamped coordinates)
    pub clamp_projected: bool,
}

/// Implicit-function-theorem policy gradient through the converged
/// solution: `dQ/dω* · e1ᵀ · (-(∇²ωωJ)⁻¹ ∇²φωJ)`, with the φ block routed
/// through the network's reverse pass. Clamped coordinates are removed from
/// the system (their sensitivity is zero); a clamped first command yields a
/// zero gradient.
pub fn policy_gradient<T: Real>(
    problem: &MpcProblem<T>,
    solution: &MpcSolution<T>,
    dq_domega: T,
    net: &CostNet<T>,
    obs: &PolicyObservation<T>,
) -> Result<PolicyGradient<T>> {
    problem.validate()?;
    let n = problem.horizon + 1;
    let a = integration_matrix(problem.horizon, problem.dt);
    let clamp_projected = solution.clamped.iter().any(|c| *c);
    if solution.clamped[0] {
        return Ok(PolicyGradient {
            grad: vec![T::zero(); net.param_count()],
            clamp_projected: true,
        });
    }

    let free: Vec<usize> = (0..n).filter(|k| !solution.clamped[*k]).collect();
    let m = free.len();

    // Hessian of J in ω on the free set: 2ρI + Aᵀ diag(qθ) A + diag(qω);
    // the surrogate's second derivative is zero between knots.
    let mut h = DMatrix::<T>::zeros(m, m);
    let two_rho = T::of(2.0) * problem.rho;
    for (ri, &i) in free.iter().enumerate() {
        for (ci, &j) in free.iter().enumerate() {
            let mut v = T::zero();
            for k in 0..n {
                v += a[(k, i)] * problem.cost_params[k].q_theta * a[(k, j)];
            }
            if i == j {
                v += two_rho + problem.cost_params[i].q_omega;
            }
            h[(ri, ci)] = v;
        }
    }

    let mut e1 = DVector::<T>::zeros(m);
    let pos0 = free.iter().position(|&k| k == 0).expect("first command is free");
    e1[pos0] = T::one();
    let w_free = nalgebra::Cholesky::new(h.clone())
        .map(|c| c.solve(&e1))
        .or_else(|| h.lu().solve(&e1))
        .ok_or_else(|| Error::Singular("MPC Hessian singular".into()))?;

    let mut w = DVector::<T>::zeros(n);
    for (ri, &k) in free.iter().enumerate() {
        w[k] = w_free[ri];
    }
    let aw = &a * &w;

    // ∂(∇ωJ)/∂(outputs) contracted with w, per horizon step
    let upstream: Vec<QuadUpstream<T>> = (0..n)
        .map(|j| {
            let p = &problem.cost_params[j];
            let d = p.angle_deviation(solution.theta[j]);
            QuadUpstream {
                d_q_theta: aw[j] * d,
                d_q_omega: w[j] * solution.omega[j],
                d_linear: [aw[j], w[j]],
                d_theta_ref: -aw[j] * p.q_theta,
            }
        })
        .collect();

    let (_, cache) = net.forward_cached(obs, problem.horizon)?;
    let mut grad = net.backward(&cache, &upstream);
    for g in grad.iter_mut() {
        *g *= -dq_domega;
    }
    Ok(PolicyGradient {
        grad,
        clamp_projected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costnet::{AngleMode, HeadBounds, HorizonConditioning};
    use nalgebra::{Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn quad(q_theta: f64, q_omega: f64, l1: f64, l2: f64, theta_ref: f64) -> QuadCostParams<f64> {
        QuadCostParams {
            q_theta,
            q_omega,
            linear: Vector2::new(l1, l2),
            theta_ref,
            angle_mode: AngleMode::Raw,
        }
    }

    fn base_problem(horizon: usize, params: Vec<QuadCostParams<f64>>) -> MpcProblem<f64> {
        MpcProblem {
            horizon,
            dt: 0.1,
            rho: 0.05,
            theta0: 0.3,
            omega_max: 8.0,
            surrogate: None,
            cost_params: params,
            settings: SolveSettings::default(),
        }
    }

    #[test]
    fn integration_matrix_t1() {
        let a = integration_matrix::<f64>(1, 0.1);
        assert_eq!(a.nrows(), 2);
        assert!((a[(0, 0)] - 0.1).abs() < 1e-15);
        assert!(a[(0, 1)].abs() < 1e-15);
        assert!((a[(1, 0)] - 0.1).abs() < 1e-15);
        assert!((a[(1, 1)] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn integration_matrix_row_sums() {
        let a = integration_matrix::<f64>(7, 0.25);
        for i in 0..8 {
            let sum: f64 = a.row(i).iter().sum();
            assert!((sum - 0.25 * (i as f64 + 1.0)).abs() < 1e-12);
        }
    }

    /// Recurrence-vs-matrix equivalence: constant ω through the matrix
    /// matches the per-step integrator.
    #[test]
    fn matrix_matches_recurrence() {
        let (horizon, dt, c, theta0) = (10usize, 0.1, 0.7, 1.2);
        let p = MpcProblem {
            theta0,
            ..base_problem(horizon, vec![quad(0.0, 0.0, 0.0, 0.0, 0.0); 11])
        };
        let a = integration_matrix::<f64>(horizon, dt);
        let omega = DVector::from_element(horizon + 1, c);
        let theta = predicted_angles(&p, &a, &omega);
        let mut expect = theta0;
        for k in 0..=horizon {
            expect += c * dt;
            assert!((theta[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_surrogate_gives_zero_command() {
        let mut p = base_problem(10, vec![QuadCostParams::zero(); 11]);
        p.surrogate = Some(UncertaintySamples::new(0.0, PI / 18.0, vec![5.0; 36]));
        let s = solve(&p).unwrap();
        assert!(s.converged);
        assert!(s.omega.amax() == 0.0);
    }

    #[test]
    fn pure_omega_penalty_gives_zero_command() {
        let p = base_problem(10, vec![quad(0.0, 3.0, 0.0, 0.0, 0.0); 11]);
        let s = solve(&p).unwrap();
        assert!(s.converged);
        assert!(s.omega.amax() == 0.0);
    }

    #[test]
    fn theta_identity_holds_exactly() {
        let p = base_problem(6, vec![quad(1.0, 0.2, 0.5, -0.1, 1.0); 7]);
        let s = solve(&p).unwrap();
        let a = integration_matrix::<f64>(6, 0.1);
        let theta = predicted_angles(&p, &a, &s.omega);
        for k in 0..7 {
            assert_eq!(theta[k].to_bits(), s.theta[k].to_bits());
        }
    }

    /// Dense QP oracle: with purely quadratic costs the minimizer solves
    /// `H ω = -∇J(0)` directly.
    fn qp_oracle(p: &MpcProblem<f64>) -> DVector<f64> {
        let n = p.horizon + 1;
        let a = integration_matrix::<f64>(p.horizon, p.dt);
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += a[(k, i)] * p.cost_params[k].q_theta * a[(k, j)];
                }
                if i == j {
                    v += 2.0 * p.rho + p.cost_params[i].q_omega;
                }
                h[(i, j)] = v;
            }
        }
        let g0 = gradient(p, &a, &DVector::zeros(n));
        h.lu().solve(&(-g0)).unwrap()
    }

    #[test]
    fn solution_matches_dense_qp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let params: Vec<QuadCostParams<f64>> = (0..11)
                .map(|_| {
                    quad(
                        rng.gen_range(0.1..5.0),
                        rng.gen_range(0.1..5.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let mut p = base_problem(10, params);
            p.omega_max = 200.0; // keep the instances interior
            p.settings.max_iterations = 5000;
            p.settings.tolerance = 1e-12;
            let s = solve(&p).unwrap();
            assert!(s.converged, "residual {}", s.residual);
            assert!(!s.clamped.iter().any(|c| *c));
            let oracle = qp_oracle(&p);
            assert!(
                (&s.omega - &oracle).amax() < 1e-6,
                "diff {}",
                (&s.omega - &oracle).amax()
            );
            // stationarity of the true gradient
            let a = integration_matrix::<f64>(10, 0.1);
            assert!(gradient(&p, &a, &s.omega).amax() < 1e-6);
        }
    }

    #[test]
    fn objective_descends_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let params: Vec<QuadCostParams<f64>> = (0..11)
                .map(|_| {
                    quad(
                        rng.gen_range(0.1..50.0),
                        rng.gen_range(0.1..10.0),
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-2.0..2.0),
                    )
                })
                .collect();
            let p = base_problem(10, params);
            let s = solve(&p).unwrap();
            for w in s.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_bitwise() {
        let params: Vec<QuadCostParams<f64>> =
            (0..11).map(|k| quad(2.0, 0.3, 0.1 * k as f64, -0.2, 0.5)).collect();
        let mut p = base_problem(10, params);
        p.surrogate = Some(UncertaintySamples::new(
            0.1,
            PI / 18.0,
            (0..36).map(|i| 10.0 + (i as f64 * 0.77).sin().abs() * 5.0).collect(),
        ));
        let s1 = solve(&p).unwrap();
        let s2 = solve(&p).unwrap();
        for k in 0..11 {
            assert_eq!(s1.omega[k].to_bits(), s2.omega[k].to_bits());
        }
        assert_eq!(s1.objective.to_bits(), s2.objective.to_bits());
    }

    #[test]
    fn strong_pull_saturates_at_bound() {
        // a distant reference with a stiff quadratic demands more than
        // omega_max
        let params = vec![quad(5e3, 0.0, 0.0, 0.0, 50.0); 11];
        let mut p = base_problem(10, params);
        p.omega_max = 2.0;
        p.settings.max_iterations = 2000;
        let s = solve(&p).unwrap();
        assert!(s.clamped.iter().any(|c| *c));
        for k in 0..11 {
            assert!(s.omega[k].abs() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let params = vec![quad(9e4, 0.0, 0.0, 0.0, 2.0); 11];
        let mut p = base_problem(10, params);
        p.settings.max_iterations = 5;
        let s = solve(&p).unwrap();
        assert!(!s.converged);
        assert!(s.objective.is_finite());
    }

    // -- policy gradient ---------------------------------------------------

    fn tiny_net(seed: u64, hidden: &[usize]) -> CostNet<f64> {
        // matches the 8 features of an empty-pano observation; the
        // quadratic-coefficient biases are lifted off the conservative
        // init so the instances are stiff enough for interior minimizers
        let mut net = CostNet::with_architecture(
            8,
            hidden,
            seed,
            HeadBounds {
                q_min: 0.1,
                q_max: 20.0,
                lin_bound: 2.0,
            },
            AngleMode::Raw,
            HorizonConditioning::Constant,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(800));
        let last = net.mlp.layers.last_mut().unwrap();
        last.bias[0] = rng.gen_range(-1.0..2.0);
        last.bias[1] = rng.gen_range(-1.0..2.0);
        net.mlp.quantize_to_f32();
        net
    }

    fn tiny_obs(seed: u64) -> PolicyObservation<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyObservation {
            velocity: Vector3::new(rng.gen(), rng.gen(), rng.gen()),
            cov_diag: Vector3::zeros(),
            rotor_sin: 0.0,
            rotor_cos: 1.0,
            pano: vec![],
            pano_width: 0,
            pano_height: 0,
        }
    }

    fn problem_from_net(
        net: &CostNet<f64>,
        obs: &PolicyObservation<f64>,
        horizon: usize,
        surrogate: Option<UncertaintySamples<f64>>,
    ) -> MpcProblem<f64> {
        let params = net.forward(obs, horizon).unwrap();
        MpcProblem {
            horizon,
            dt: 0.1,
            rho: 0.05,
            theta0: 0.4,
            omega_max: 50.0,
            surrogate,
            cost_params: params,
            settings: SolveSettings {
                max_iterations: 50_000,
                tolerance: 1e-13,
                ..Default::default()
            },
        }
    }

    #[test]
    fn zero_upstream_scalar_gives_zero_gradient() {
        let net = tiny_net(1, &[4]);
        let obs = tiny_obs(2);
        let p = problem_from_net(&net, &obs, 5, None);
        let s = solve(&p).unwrap();
        let g = policy_gradient(&p, &s, 0.0, &net, &obs).unwrap();
        assert!(g.grad.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn gradient_scales_linearly_with_upstream() {
        let net = tiny_net(3, &[4]);
        let obs = tiny_obs(4);
        let p = problem_from_net(&net, &obs, 5, None);
        let s = solve(&p).unwrap();
        let g1 = policy_gradient(&p, &s, 1.0, &net, &obs).unwrap();
        let g3 = policy_gradient(&p, &s, 3.0, &net, &obs).unwrap();
        for (a, b) in g1.grad.iter().zip(&g3.grad) {
            assert!((3.0 * a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    /// FD-through-solver oracle on small networks, with and without the
    /// piecewise-linear surrogate in the objective.
    #[test]
    fn ift_gradient_matches_fd_through_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for trial in 0..6 {
            let hidden: &[usize] = if trial % 2 == 0 { &[] } else { &[2] };
            let net = tiny_net(100 + trial, hidden);
            let obs = tiny_obs(200 + trial);
            // a small baseline keeps the objective magnitude down, which
            // keeps the solver's floating-point stopping floor low
            let surrogate = (trial % 3 == 0).then(|| {
                UncertaintySamples::new(
                    0.0,
                    PI / 18.0,
                    (0..36).map(|i| 2.0 + ((i as f64) * 0.9).sin()).collect(),
                )
            });
            let p = problem_from_net(&net, &obs, 4, surrogate.clone());
            let s = solve(&p).unwrap();
            assert!(s.converged);
            let dq = rng.gen_range(0.5..2.0);
            let g = policy_gradient(&p, &s, dq, &net, &obs).unwrap();

            let base = net.params();
            // step size balances FD truncation against the solver's
            // stopping error, which enters the quotient as eps/(2h)
            let h = 1e-3;
            let mut skipped = 0usize;
            for i in 0..base.len() {
                // warm-started perturbed solves: the solver's stopping
                // bias is correlated between the two sides and cancels
                let solve_omega0 = |params: &[f64]| -> f64 {
                    let mut n2 = net.clone();
                    n2.set_params(params);
                    let p2 = problem_from_net(&n2, &obs, 4, surrogate.clone());
                    solve_from(&p2, Some(&s.omega)).unwrap().omega[0]
                };
                let eval = |delta: f64| {
                    let mut pp = base.clone();
                    pp[i] += delta;
                    solve_omega0(&pp)
                };
                // fourth-order stencil: the head's sigmoid curvature makes
                // the plain central difference truncation-limited at this h
                let stencil = |h: f64| {
                    (8.0 * (eval(h) - eval(-h)) - (eval(2.0 * h) - eval(-2.0 * h))) / (12.0 * h)
                };
                // a ReLU boundary inside or near the stencil makes the
                // quotient scale-dependent or the one-sided slopes
                // disagree; no derivative exists there to compare against
                let fd1 = stencil(h);
                let fd2 = stencil(h / 2.0);
                let fwd = (eval(h) - s.omega[0]) / h;
                let bwd = (s.omega[0] - eval(-h)) / h;
                let kinked = (fd1 - fd2).abs() > 0.05 * fd1.abs().max(fd2.abs()).max(1e-8)
                    || (fwd - bwd).abs() > 0.05 * fwd.abs().max(bwd.abs()).max(1e-8);
                if kinked {
                    skipped += 1;
                    continue;
                }
                let fd = dq * fd2;
                let rel = (g.grad[i] - fd).abs() / fd.abs().max(1e-6);
                assert!(
                    rel < 1e-4,
                    "trial {trial} param {i}: ift {} fd {}",
                    g.grad[i],
                    fd
                );
            }
            assert!(
                skipped * 5 <= base.len(),
                "too many kink-contaminated params: {skipped}/{}",
                base.len()
            );
        }
    }

    #[test]
    fn clamped_first_command_zeroes_gradient() {
        let net = tiny_net(7, &[4]);
        let obs = tiny_obs(8);
        let mut p = problem_from_net(&net, &obs, 5, None);
        // make the learned pull exceed a tiny bound
        for cp in p.cost_params.iter_mut() {
            cp.q_theta = 50.0;
            cp.theta_ref = 30.0;
        }
        p.omega_max = 0.5;
        p.settings.max_iterations = 5000;
        let s = solve(&p).unwrap();
        assert!(s.clamped[0], "expected saturated first command");
        let g = policy_gradient(&p, &s, 1.0, &net, &obs).unwrap();
        assert!(g.clamp_projected);
        assert!(g.grad.iter().all(|x| *x == 0.0));
    }
}
