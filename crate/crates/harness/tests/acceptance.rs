//! Acceptance suite: every release criterion as one test, each printing a
//! PASS line with the measured values. Thresholds are pinned here, not
//! configurable. Run with `cargo test -p scanctl-harness --test acceptance`
//! (add `-- --nocapture` to see the PASS lines).

use nalgebra::{Matrix6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scanctl::costnet::{
    eval_cost, AngleMode, CostNet, HeadBounds, HorizonConditioning, PolicyObservation,
    QuadCostParams,
};
use scanctl::geometry::{pano_bin_direction, PanoDepthMap, Pose};
use scanctl::mpc::{integration_matrix, policy_gradient, solve, solve_from, MpcConfig, MpcProblem, SolveSettings};
use scanctl::rl::{Critic, Scene, Trainer};
use scanctl::scansim::{box_room_points, raycast_scan, SensorModel, WorldMap};
use scanctl::uncertainty::{
    a_optimal_u, residual_jacobian, surrogate_cost, OrientedPoints, UncertaintySamples,
};
use scanctl_harness::{run_benchmark, run_episode, Config, Controller, ControllerKind};
use std::f64::consts::PI;
use std::time::Instant;

fn pass(criterion: u32, detail: String) {
    println!("criterion {criterion:02}: PASS - {detail}");
}

/// Shared desk-scale configuration for the closed-loop criteria: the full
/// ray grid (the registration quality driver) with a lighter analysis pano
/// and a compact policy network to keep the training criteria affordable.
fn desk_config() -> Config {
    let mut cfg = Config::default();
    cfg.analysis_width = 180;
    cfg.analysis_height = 90;
    cfg.dtheta_deg = 20.0;
    cfg.odom_max_scan_points = 800;
    cfg.hidden = vec![64, 64];
    cfg.per_step_conditioning = false;
    cfg.episode_len = 30.0;
    cfg.eval_every = 1_000_000;
    cfg.checkpoint_every = 1_000_000;
    cfg.epochs = 2;
    cfg.minibatch = 64;
    cfg.scene.tunnel_length = 160.0;
    cfg.scene.room_loops = 8.0;
    cfg.episode_steps = 300;
    cfg
}

/// Criterion 1 - surrogate gradient matches central finite differences at
/// 100 random non-knot angles within 1e-6 relative, in under a second.
#[test]
fn criterion_01_surrogate_gradient() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let dtheta = PI / 18.0;
    let samples = UncertaintySamples::new(
        rng.gen_range(0.0..2.0 * PI),
        dtheta,
        (0..36).map(|_| rng.gen_range(1.0..500.0)).collect(),
    );
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let frac = rng.gen_range(0.05..0.95);
        let theta = samples.theta0 + (rng.gen_range(0..36) as f64 + frac) * dtheta;
        let (_, grad) = surrogate_cost(&samples, theta);
        let (cp, _) = surrogate_cost(&samples, theta + h);
        let (cm, _) = surrogate_cost(&samples, theta - h);
        let fd = (cp - cm) / (2.0 * h);
        let rel = (grad - fd).abs() / fd.abs().max(1e-12);
        worst = worst.max(rel);
        assert!(rel < 1e-6, "theta {theta}: analytic {grad} fd {fd}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(1, format!("100 angles, worst rel err {worst:.2e}, {elapsed:?}"));
}

/// Criterion 2 - converged unclamped solutions on 50 random strictly
/// convex instances (T = 10) are stationary below 1e-6 and match a dense
/// QP oracle within 1e-6, in under 5 seconds.
#[test]
fn criterion_02_mpc_stationarity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let horizon = 10usize;
    let mut worst_diff: f64 = 0.0;
    for trial in 0..50 {
        let cost_params: Vec<QuadCostParams<f64>> = (0..=horizon)
            .map(|_| QuadCostParams {
                q_theta: rng.gen_range(0.1..5.0),
                q_omega: rng.gen_range(0.1..5.0),
                linear: nalgebra::Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                theta_ref: rng.gen_range(-1.0..1.0),
                angle_mode: AngleMode::Raw,
            })
            .collect();
        let problem = MpcProblem {
            horizon,
            dt: 0.1,
            rho: 0.05,
            theta0: rng.gen_range(0.0..2.0 * PI),
            omega_max: 200.0,
            surrogate: None,
            cost_params,
            settings: SolveSettings {
                max_iterations: 5000,
                tolerance: 1e-12,
                ..Default::default()
            },
        };
        let sol = solve(&problem).unwrap();
        assert!(sol.converged, "trial {trial} residual {}", sol.residual);
        assert!(!sol.clamped.iter().any(|c| *c), "trial {trial} clamped");
        assert!(sol.residual < 1e-6, "trial {trial} residual {}", sol.residual);

        // dense QP oracle: H omega = -grad(0)
        let a = integration_matrix::<f64>(horizon, problem.dt);
        let n = horizon + 1;
        let mut h = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += a[(k, i)] * problem.cost_params[k].q_theta * a[(k, j)];
                }
                if i == j {
                    v += 2.0 * problem.rho + problem.cost_params[i].q_omega;
                }
                h[(i, j)] = v;
            }
        }
        let mut g0 = nalgebra::DVector::<f64>::zeros(n);
        for k in 0..n {
            let p = &problem.cost_params[k];
            let (_, dth, dom) = eval_cost(p, problem.theta0, 0.0);
            g0[k] += dom;
            for j in 0..n {
                g0[j] += a[(k, j)] * dth;
            }
        }
        let oracle = h.lu().solve(&(-g0)).unwrap();
        let diff = (&sol.omega - &oracle).amax();
        worst_diff = worst_diff.max(diff);
        assert!(diff < 1e-6, "trial {trial} oracle diff {diff}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(2, format!("50 instances, worst oracle diff {worst_diff:.2e}, {elapsed:?}"));
}

fn toy_obs(seed: u64) -> PolicyObservation<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PolicyObservation {
        velocity: Vector3::new(rng.gen(), rng.gen(), rng.gen()),
        cov_diag: Vector3::new(rng.gen::<f64>() * 0.1, rng.gen::<f64>() * 0.1, 0.0),
        rotor_sin: 0.0,
        rotor_cos: 1.0,
        pano: vec![],
        pano_width: 0,
        pano_height: 0,
    }
}

/// Criterion 3 - the implicit-function-theorem policy gradient matches
/// finite differences through the full solver within 1e-4 relative on 20
/// random toy instances, checking 2-8 parameters each, in under 30 s.
#[test]
fn criterion_03_ift_policy_gradient() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut checked_total = 0usize;
    for trial in 0..20u64 {
        let hidden: &[usize] = if trial % 2 == 0 { &[] } else { &[2] };
        let mut net = CostNet::<f64>::with_architecture(
            8,
            hidden,
            3000 + trial,
            HeadBounds {
                q_min: 0.1,
                q_max: 20.0,
                lin_bound: 2.0,
            },
            AngleMode::Raw,
            HorizonConditioning::Constant,
        );
        {
            let mut brng = ChaCha8Rng::seed_from_u64(4000 + trial);
            let last = net.mlp.layers.last_mut().unwrap();
            last.bias[0] = brng.gen_range(-1.0..2.0);
            last.bias[1] = brng.gen_range(-1.0..2.0);
            net.mlp.quantize_to_f32();
        }
        let obs = toy_obs(5000 + trial);
        let surrogate = (trial % 3 == 0).then(|| {
            UncertaintySamples::new(
                0.0,
                PI / 18.0,
                (0..36).map(|i| 2.0 + ((i as f64) * 0.9).sin()).collect(),
            )
        });
        let make_problem = |n: &CostNet<f64>| MpcProblem {
            horizon: 4,
            dt: 0.1,
            rho: 0.05,
            theta0: 0.4,
            omega_max: 50.0,
            surrogate: surrogate.clone(),
            cost_params: n.forward(&obs, 4).unwrap(),
            settings: SolveSettings {
                max_iterations: 50_000,
                tolerance: 1e-13,
                ..Default::default()
            },
        };
        let problem = make_problem(&net);
        let sol = solve(&problem).unwrap();
        assert!(sol.converged, "trial {trial}");
        let dq = rng.gen_range(0.5..2.0);
        let pg = policy_gradient(&problem, &sol, dq, &net, &obs).unwrap();

        let base = net.params();
        let n_check = rng.gen_range(2..=8usize).min(base.len());
        let h = 1e-3;
        let mut checked = 0usize;
        let mut tried = 0usize;
        while checked < n_check && tried < 4 * n_check {
            tried += 1;
            let i = rng.gen_range(0..base.len());
            let eval = |delta: f64| {
                let mut n2 = net.clone();
                let mut p = base.clone();
                p[i] += delta;
                n2.set_params(&p);
                solve_from(&make_problem(&n2), Some(&sol.omega)).unwrap().omega[0]
            };
            let stencil = |h: f64| {
                (8.0 * (eval(h) - eval(-h)) - (eval(2.0 * h) - eval(-2.0 * h))) / (12.0 * h)
            };
            let fd1 = stencil(h);
            let fd2 = stencil(h / 2.0);
            let fwd = (eval(h) - sol.omega[0]) / h;
            let bwd = (sol.omega[0] - eval(-h)) / h;
            // skip parameters whose stencil straddles a non-smooth point
            let kinked = (fd1 - fd2).abs() > 0.05 * fd1.abs().max(fd2.abs()).max(1e-8)
                || (fwd - bwd).abs() > 0.05 * fwd.abs().max(bwd.abs()).max(1e-8);
            if kinked {
                continue;
            }
            let fd = dq * fd2;
            let rel = (pg.grad[i] - fd).abs() / fd.abs().max(1e-6);
            assert!(
                rel < 1e-4,
                "trial {trial} param {i}: ift {} fd {fd}",
                pg.grad[i]
            );
            checked += 1;
        }
        assert!(checked >= 2, "trial {trial}: too few smooth parameters");
        checked_total += checked;
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(3, format!("20 instances, {checked_total} parameters matched, {elapsed:?}"));
}

fn random_oriented(rng: &mut ChaCha8Rng, n: usize) -> OrientedPoints<f64> {
    let mut pts = OrientedPoints::default();
    for _ in 0..n {
        pts.points.push(Vector3::new(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ));
        pts.normals.push(
            Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            )
            .normalize(),
        );
    }
    pts
}

/// Criterion 4 - information-matrix properties: PSD on 1000 random sets,
/// trace of the inverse non-increasing under point addition on 200 sets,
/// and the three-orthogonal-planes case matching a dense inverse to 1e-9.
#[test]
fn criterion_04_fisher_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let pose = Pose::identity();
    for _ in 0..1000 {
        let n = rng.gen_range(0..25);
        let pts = random_oriented(&mut rng, n);
        let r = a_optimal_u(&pts, 0.0, &pose, 1e-3);
        let sym = (r.info - r.info.transpose()).norm();
        assert!(sym < 1e-12);
        let eig = nalgebra::SymmetricEigen::new(r.info);
        let max_ev = eig.eigenvalues.amax();
        for ev in eig.eigenvalues.iter() {
            assert!(*ev >= -1e-9 * max_ev.max(1.0), "eigenvalue {ev}");
        }
    }
    for _ in 0..200 {
        let n = rng.gen_range(1..30);
        let mut pts = random_oriented(&mut rng, n);
        let before = a_optimal_u(&pts, 0.0, &pose, 1e-3).u_value;
        let extra = random_oriented(&mut rng, 1);
        pts.points.push(extra.points[0]);
        pts.normals.push(extra.normals[0]);
        let after = a_optimal_u(&pts, 0.0, &pose, 1e-3).u_value;
        assert!(after <= before + 1e-12, "{before} -> {after}");
    }
    // three orthogonal unit-distance planes against a dense inverse
    let mut pts = OrientedPoints::default();
    for axis in 0..3 {
        for _ in 0..50 {
            let a = rng.gen_range(-0.5..0.5);
            let b = rng.gen_range(-0.5..0.5);
            let (p, n) = match axis {
                0 => (Vector3::new(1.0, a, b), Vector3::x()),
                1 => (Vector3::new(a, 1.0, b), Vector3::y()),
                _ => (Vector3::new(a, b, 1.0), Vector3::z()),
            };
            pts.points.push(p);
            pts.normals.push(n);
        }
    }
    let damping = 1e-9;
    let r = a_optimal_u(&pts, 0.0, &pose, damping);
    let mut dense = Matrix6::<f64>::zeros();
    for (p, n) in pts.points.iter().zip(&pts.normals) {
        let j = residual_jacobian(p, n, &pose);
        dense += j * j.transpose();
    }
    for i in 0..6 {
        dense[(i, i)] += damping;
    }
    let oracle = dense.try_inverse().unwrap().trace();
    let rel = (r.u_value - oracle).abs() / oracle;
    assert!(rel < 1e-9, "dense-inverse oracle rel {rel}");
    pass(4, format!(
        "1000 PSD sets, 200 monotone updates, dense-oracle rel {rel:.2e}"
    ));
}

/// Criterion 5 - box-room raycast against the analytic ray-plane oracle
/// for 64 rays, with and without range noise.
#[test]
fn criterion_05_raycast_oracle() {
    let pitch = 0.05;
    let (w, d, h) = (10.0, 10.0, 3.0);
    let (pts, ns) = box_room_points(w, d, h, pitch);
    let map = WorldMap::with_normals(pts, ns, 0.5, pitch / 2.0).unwrap();
    let origin = Vector3::new(0.0, 0.0, 1.5);
    let pose = Pose::from_translation(origin);

    // analytic nearest intersection with the six box planes
    let analytic = |dir: &Vector3<f64>| -> f64 {
        let mut best = f64::INFINITY;
        let planes = [
            (Vector3::x(), w / 2.0),
            (-Vector3::x(), w / 2.0),
            (Vector3::y(), d / 2.0),
            (-Vector3::y(), d / 2.0),
            (Vector3::z(), h - origin.z),
            (-Vector3::z(), origin.z),
        ];
        for (n, dist) in planes {
            let denom = dir.dot(&n);
            if denom > 1e-12 {
                best = best.min(dist / denom);
            }
        }
        best
    };

    for sigma in [0.0, 0.01] {
        let sensor = SensorModel::new(1.6, 1.0, 8, 8, 30.0, sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(1084);
        let scan = raycast_scan(&map, &sensor, &pose, &mut rng);
        assert_eq!(scan.len(), 64, "every ray hits inside a closed room");
        let tol = map.hit_radius.max(3.0 * sigma);
        let mut worst: f64 = 0.0;
        for (ray, p) in sensor.ray_directions().iter().zip(&scan.points) {
            let got = p.norm();
            let expect = analytic(ray);
            worst = worst.max((got - expect).abs());
            assert!(
                (got - expect).abs() <= tol,
                "sigma {sigma}: got {got}, analytic {expect}"
            );
        }
        if sigma == 0.0 {
            pass(5, format!("64 rays, noise-free worst err {worst:.4} <= hit radius {:.4}", map.hit_radius));
        }
    }
}

/// Criterion 6 - every bin of the 360x180 and 80x40 panos recovers its own
/// pixel from the bin-center direction, with angular error within the bin
/// diagonal.
#[test]
fn criterion_06_pano_round_trip() {
    for (w, h) in [(360usize, 180usize), (80, 40)] {
        let map = PanoDepthMap::<f64>::empty(w, h, 50.0);
        let bin_diag = ((2.0 * PI / w as f64).powi(2) + (PI / h as f64).powi(2)).sqrt();
        for v in 0..h {
            for u in 0..w {
                let dir = pano_bin_direction::<f64>(u, v, w, h);
                for r in [0.1, 12.3, 49.0] {
                    assert_eq!(map.bin_of(&(dir * r)).unwrap(), (u, v), "{w}x{h} bin ({u},{v})");
                }
                let ang = dir.dot(&pano_bin_direction::<f64>(u, v, w, h)).clamp(-1.0, 1.0).acos();
                assert!(ang <= bin_diag);
            }
        }
        println!("  pano {w}x{h}: all {} bins recovered", w * h);
    }
    pass(6, "360x180 and 80x40 exact round trips".into());
}

/// Criterion 7 - emitted quadratic coefficients stay inside [0.1, 1e5] for
/// 1000 random (parameters, observation) pairs at the production pano
/// resolution, and the cost satisfies midpoint convexity.
#[test]
fn criterion_07_convexity_and_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let feature_dim = 8 + 80 * 40;
    let mut checked = 0usize;
    for net_idx in 0..50u64 {
        let mut net = CostNet::<f64>::with_architecture(
            feature_dim,
            &[256, 256],
            7000 + net_idx,
            HeadBounds::default(),
            AngleMode::Raw,
            HorizonConditioning::Constant,
        );
        // spread the head away from its init so the sigmoid range is
        // exercised
        let mut params = net.params();
        let n_params = params.len();
        for _ in 0..64 {
            let i = rng.gen_range(0..n_params);
            params[i] += rng.gen_range(-20.0f64..20.0);
        }
        net.set_params(&params);
        for _ in 0..20 {
            let pano = PanoDepthMap::<f64>::empty(80, 40, 30.0);
            let mut obs = PolicyObservation::new(
                Vector3::new(rng.gen(), rng.gen(), rng.gen()),
                Vector3::new(rng.gen(), rng.gen(), rng.gen()),
                rng.gen_range(0.0..2.0 * PI),
                &pano,
            )
            .unwrap();
            for p in obs.pano.iter_mut() {
                *p = rng.gen();
            }
            let qp = net.forward(&obs, 1).unwrap();
            for p in &qp {
                assert!(p.q_theta >= 0.1 && p.q_theta <= 1e5, "q_theta {}", p.q_theta);
                assert!(p.q_omega >= 0.1 && p.q_omega <= 1e5, "q_omega {}", p.q_omega);
                assert!(p.linear[0].abs() <= 10.0 && p.linear[1].abs() <= 10.0);
                // midpoint convexity on random pairs
                let (t1, w1) = (rng.gen_range(-6.0..6.0), rng.gen_range(-8.0..8.0));
                let (t2, w2) = (rng.gen_range(-6.0..6.0), rng.gen_range(-8.0..8.0));
                let mid = eval_cost(p, (t1 + t2) / 2.0, (w1 + w2) / 2.0).0;
                let avg = (eval_cost(p, t1, w1).0 + eval_cost(p, t2, w2).0) / 2.0;
                assert!(mid <= avg + 1e-9 * avg.abs().max(1.0));
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);
    pass(7, "1000 (params, obs) pairs: bounds exact, midpoint convexity holds".into());
}

/// Criterion 8 - observability premise in the estimator: a single-plane
/// scan leaves in-plane translation at least 100x less certain than the
/// normal direction, and three orthogonal planes cut the covariance trace
/// by at least 10x versus one plane at equal point count.
#[test]
fn criterion_08_odometry_observability() {
    use scanctl::geometry::{Frame, FrameChain, PointCloud};
    use scanctl::odometry::{OdomConfig, OdomState};

    let mut cfg = OdomConfig::<f64>::default();
    cfg.max_scan_points = 100_000;
    cfg.max_points_per_cell = 8;
    cfg.init_sigma_rot = 1.0;
    cfg.init_sigma_trans = 1.0;
    let chain = FrameChain::identity();

    let plane = |axis: usize, offset: f64, extent: f64, pitch: f64| -> Vec<Vector3<f64>> {
        let n = (2.0 * extent / pitch) as usize;
        let mut pts = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                let a = -extent + i as f64 * pitch;
                let b = -extent + j as f64 * pitch;
                pts.push(match axis {
                    0 => Vector3::new(offset, a, b),
                    1 => Vector3::new(a, offset, b),
                    _ => Vector3::new(a, b, offset),
                });
            }
        }
        pts
    };

    let run = |pts: &[Vector3<f64>], origin: Vector3<f64>| -> Matrix6<f64> {
        let truth = Pose::from_translation(origin);
        let body: Vec<Vector3<f64>> = pts.iter().map(|p| truth.inverse().transform(p)).collect();
        let scan = PointCloud::from_points(Frame::Lidar, body);
        let mut odom = OdomState::new(&cfg);
        odom.register_scan(&scan, &chain, &truth, 0.0, &cfg).unwrap();
        odom.register_scan(&scan, &chain, &truth, 0.1, &cfg).unwrap();
        odom.covariance
    };

    // single plane below the body
    let one = plane(2, 0.0, 2.0, 0.08);
    let count = one.len();
    let cov_one = run(&one, Vector3::new(0.0, 0.0, 2.0));
    let t_block = cov_one.fixed_view::<3, 3>(3, 3).into_owned();
    let eig = nalgebra::SymmetricEigen::new(t_block);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ratio = ev[1] / ev[0];
    assert!(ratio >= 100.0, "in-plane/normal ratio {ratio}");

    // three orthogonal planes at the same total point count
    let mut three = plane(0, 2.0, 1.7, 0.1);
    three.extend(plane(1, 2.0, 1.7, 0.1));
    three.extend(plane(2, 2.0, 1.7, 0.1));
    three.truncate(count);
    let cov_three = run(&three, Vector3::zeros());
    let shrink = cov_one.trace() / cov_three.trace();
    assert!(shrink >= 10.0, "trace shrink {shrink}");
    pass(8, format!(
        "in-plane/normal eigenvalue ratio {ratio:.0}, three-plane trace shrink {shrink:.0}x"
    ));
}

fn train_hybrid(cfg: &Config, scene_name: &str, seed: u64, steps: usize) -> Trainer<f64> {
    let scene = scanctl_harness::resolve_scene(scene_name, cfg).unwrap();
    let scenes = vec![Scene {
        name: scene_name.into(),
        map: scene.map,
        traj: scene.traj,
    }];
    let train_cfg = {
        let mut t = cfg.train_config(seed).unwrap();
        t.total_steps = steps;
        t
    };
    let net = cfg.new_costnet();
    let critic = Critic::new(cfg.feature_dim(), &cfg.hidden, seed.wrapping_add(101));
    let mut trainer = Trainer::new(net, critic, train_cfg);
    trainer
        .run(&scenes, &cfg.env_config(), &cfg.mpc_config(), steps, None)
        .unwrap();
    trainer
}

/// Criterion 9 - relative ordering on the synthetic tunnel over 3 seeds:
/// the analytic MPC beats the slow fixed rate and the random policy, and
/// after 20k PPO steps the hybrid is at least as good as the analytic MPC
/// (each on at least 2 of 3 seeds).
#[test]
fn criterion_09_relative_ordering() {
    let cfg = desk_config();
    let seeds = [1u64, 2, 3];
    let scene = scanctl_harness::resolve_scene("tunnel", &cfg).unwrap();
    let env_cfg = cfg.env_config();

    let ape_of = |ctrl: &Controller, seed: u64| -> f64 {
        run_episode(&scene, ctrl, seed, &env_cfg, cfg.episode_steps)
            .unwrap()
            .ape
            .expect("episode long enough for APE")
    };

    let mpc = Controller::new(ControllerKind::MpcOnly, &cfg).unwrap();
    let slow = Controller::new(ControllerKind::FixedRate(cfg.fixed_slow), &cfg).unwrap();
    let random = Controller::new(ControllerKind::Random, &cfg).unwrap();

    let mut beat_slow = 0;
    let mut beat_random = 0;
    let mut mpc_apes = Vec::new();
    for &seed in &seeds {
        let m = ape_of(&mpc, seed);
        let s = ape_of(&slow, seed);
        let r = ape_of(&random, seed);
        println!("  seed {seed}: mpc {m:.3} fixed-slow {s:.3} random {r:.3}");
        if m < s {
            beat_slow += 1;
        }
        if m < r {
            beat_random += 1;
        }
        mpc_apes.push(m);
    }
    assert!(beat_slow >= 2, "mpc < fixed-slow on {beat_slow}/3 seeds");
    assert!(beat_random >= 2, "mpc < random on {beat_random}/3 seeds");

    // hybrid after 20k PPO steps; the tunnel criterion scores absolute
    // pose error, so training weights the localization reward up
    let mut hybrid_wins = 0;
    for (i, &seed) in seeds.iter().enumerate() {
        let mut train_cfg = cfg.clone();
        train_cfg.costnet_seed = seed;
        train_cfg.lambda_exp = 0.1;
        let trainer = train_hybrid(&train_cfg, "tunnel", seed, 20_000);
        let hybrid = Controller::hybrid_from_net(trainer.net, &cfg, true);
        let h = ape_of(&hybrid, seed);
        println!("  seed {seed}: hybrid {h:.3} vs mpc {:.3}", mpc_apes[i]);
        if h <= mpc_apes[i] {
            hybrid_wins += 1;
        }
    }
    assert!(hybrid_wins >= 2, "hybrid <= mpc on {hybrid_wins}/3 seeds");
    pass(9, format!(
        "mpc < slow {beat_slow}/3, mpc < random {beat_random}/3, hybrid <= mpc {hybrid_wins}/3"
    ));
}

/// Criterion 10 - learning progress on the room scene over 3 seeds: the
/// smoothed mean return of the last 10 updates beats the first 10 on at
/// least 2 of 3 seeds after 20k steps.
#[test]
fn criterion_10_learning_progress() {
    // learning progress does not hinge on registration quality, so the
    // room runs use the lighter ray grid to stay inside the budget
    let mut cfg = desk_config();
    cfg.rays_azimuth = 24;
    cfg.rays_elevation = 12;
    cfg.odom_max_scan_points = 500;
    let mut improved = 0;
    for seed in [1u64, 2, 3] {
        let mut train_cfg = cfg.clone();
        train_cfg.costnet_seed = seed;
        let trainer = train_hybrid(&train_cfg, "room", seed, 20_000);
        let returns: Vec<f64> = trainer.curve.iter().map(|p| p.mean_return).collect();
        assert!(returns.len() >= 20, "need at least 20 updates, got {}", returns.len());
        let first: f64 = returns[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = returns[returns.len() - 10..].iter().sum::<f64>() / 10.0;
        println!("  seed {seed}: first-10 mean return {first:.1}, last-10 {last:.1}");
        if last >= first {
            improved += 1;
        }
    }
    assert!(improved >= 2, "return improved on {improved}/3 seeds");
    pass(10, format!("smoothed return improved on {improved}/3 seeds"));
}

/// Criterion 11 - per-step decision latency (cost network forward plus MPC
/// solve) at the production architecture: p95 under 5 ms across a 600-step
/// episode's worth of decisions on one core.
#[test]
fn criterion_11_decision_latency() {
    let mut rng = ChaCha8Rng::seed_from_u64(1011);
    let feature_dim = 8 + 80 * 40;
    let net = {
        let mut n = CostNet::<f64>::with_architecture(
            feature_dim,
            &[256, 256],
            11,
            HeadBounds::default(),
            AngleMode::Wrapped,
            HorizonConditioning::PerStepIndex,
        );
        n.set_q_bias(-10.0);
        n
    };
    let mpc = MpcConfig::<f64>::default();
    let pano = PanoDepthMap::<f64>::empty(80, 40, 30.0);
    let mut latencies = Vec::with_capacity(600);
    for step in 0..600 {
        let mut obs = PolicyObservation::new(
            Vector3::new(rng.gen(), rng.gen(), rng.gen()),
            Vector3::new(rng.gen::<f64>() * 0.01, rng.gen::<f64>() * 0.01, 0.001),
            rng.gen_range(0.0..2.0 * PI),
            &pano,
        )
        .unwrap();
        for p in obs.pano.iter_mut() {
            *p = rng.gen();
        }
        let samples = UncertaintySamples::new(
            rng.gen_range(0.0..2.0 * PI),
            PI / 18.0,
            (0..36).map(|_| rng.gen_range(1.0..2000.0)).collect(),
        );
        let t0 = Instant::now();
        let params = net.forward(&obs, mpc.horizon).unwrap();
        let sol = solve(&mpc.problem(obs.rotor_sin.atan2(obs.rotor_cos), Some(samples), params))
            .unwrap();
        latencies.push(t0.elapsed().as_secs_f64() * 1000.0);
        assert!(sol.omega[0].is_finite(), "step {step}");
    }
    latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = latencies[(0.95 * 600.0) as usize];
    let p50 = latencies[300];
    assert!(p95 < 5.0, "p95 latency {p95:.3} ms");
    pass(11, format!("600 decisions, p50 {p50:.3} ms, p95 {p95:.3} ms"));
}

/// Criterion 12 - a fixed-seed benchmark rerun produces byte-identical
/// deterministic CSV outputs (episode logs, benchmark table, markdown).
#[test]
fn criterion_12_benchmark_determinism() {
    let mut cfg = desk_config();
    cfg.episode_steps = 40;
    cfg.scene.room_loops = 3.0;
    let base = std::env::temp_dir().join("scanctl_acceptance_determinism");
    let _ = std::fs::remove_dir_all(&base);
    let scenes = vec!["room".to_string()];
    let controllers = vec!["fixed-slow".to_string(), "mpc".to_string(), "random".to_string()];
    let seeds = vec![1u64, 2];
    for run in ["a", "b"] {
        run_benchmark(&scenes, &controllers, &seeds, &cfg, &base.join(run)).unwrap();
    }
    let mut compared = 0;
    for file in [
        "benchmark.csv",
        "benchmark.md",
        "episodes/room_fixed-slow_1.csv",
        "episodes/room_mpc_1.csv",
        "episodes/room_mpc_2.csv",
        "episodes/room_random_2.csv",
    ] {
        let a = std::fs::read(base.join("a").join(file)).unwrap();
        let b = std::fs::read(base.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
        compared += 1;
    }
    pass(12, format!("{compared} artifacts byte-identical across reruns"));
}
