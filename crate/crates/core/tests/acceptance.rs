//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::time::{Duration, Instant};

use hycontrol::camera::{interaction_row, project, CameraIntrinsics};
use hycontrol::fusion::{blind_spot_mask, BlindSpotParams, DepthImage};
use hycontrol::geometry::RigidTransform;
use hycontrol::harness::record::log_to_csv_string;
use hycontrol::harness::{simulate, IterationFixture, LogRecord, Mode, ScenarioConfig};
use hycontrol::hybrid::{placement_step, smooth, PlacementStage, PlacementState, SwitchThresholds, TaskKind};
use hycontrol::kinematic_ctrl::{robot_velocity_kin, KinematicGains};
use hycontrol::perception::{object_depth, shrink_bbox, BoundingBox};
use hycontrol::vehicle::{integrate, VehicleCommand, VehicleParams, VehicleState};
use hycontrol::visual_servo::{current_features, robot_velocity_vs, RobotJacobianMode, ServoGains, ServoGeometry};
use hycontrol::{velocity_adjoint, Error, PixelPoint, TargetMemory, Twist2};
use nalgebra::{Matrix3, Rotation3, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 1

fn hybrid_full_task() -> Outcome {
    let started = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for seed in 1..=20u64 {
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let run = simulate(&cfg, None).map_err(|e| format!("seed {seed}: {e}"))?;
        let m = run.metrics().map_err(|e| e.to_string())?;
        worst.0 = worst.0.max(m.final_err_x.abs());
        worst.1 = worst.1.max(m.final_err_y.abs());
        if !m.converged || m.final_err_x.abs() > 0.10 || m.final_err_y.abs() > 0.10 {
            failures.push(format!(
                "seed {seed}: converged={} err=({:.4},{:.4})",
                m.converged, m.final_err_x, m.final_err_y
            ));
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "20 seeds, worst |err| = ({:.4}, {:.4}) m, runtime {:.1} s{}",
        worst.0,
        worst.1,
        elapsed.as_secs_f64(),
        if failures.is_empty() {
            String::new()
        } else {
            format!("; failures: {}", failures.join(", "))
        }
    );
    check(failures.is_empty() && elapsed < Duration::from_secs(60), detail)
}

// ---------------------------------------------------------------- criterion 2

fn zero_speed_after_first_detection(log: &[LogRecord]) -> usize {
    let first = log.iter().position(|r| r.c).unwrap_or(log.len());
    log[first..]
        .iter()
        .filter(|r| r.nu_cmd.abs() < 1e-9 && r.state_id != PlacementStage::Done.id())
        .count()
}

fn vs_only_degradation() -> Outcome {
    let window = [3.0, 4.0];
    let mut cfg = ScenarioConfig {
        seed: 5,
        ..ScenarioConfig::default()
    };
    cfg.detector.occlusion_intervals = vec![window];
    cfg.mode = Mode::VsOnly;
    let vs = simulate(&cfg, None).map_err(|e| e.to_string())?;
    let stopped_in_window = vs
        .log
        .iter()
        .filter(|r| r.t >= window[0] && r.t <= window[1] && !r.c && r.nu_cmd == 0.0)
        .count();
    cfg.mode = Mode::Viki;
    let viki = simulate(&cfg, Some(&vs.trace)).map_err(|e| e.to_string())?;
    let viki_zero = zero_speed_after_first_detection(&viki.log);
    let viki_missed = viki.log.iter().filter(|r| !r.c && r.state_id != 4).count();
    check(
        stopped_in_window >= 10 && viki_zero == 0,
        format!(
            "vs-only: {stopped_in_window} zero-speed ticks in the 1 s occlusion ({} overall); \
             viki on the same trace: {viki_zero} zero-speed ticks across {viki_missed} undetected ticks",
            zero_speed_after_first_detection(&vs.log)
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

/// Smallest camera-twist norm over the final quarter of the run, relative to
/// the run's peak.
fn tail_twist_ratio(log: &[LogRecord]) -> Option<f64> {
    let peak = log.iter().filter_map(|r| r.cam_twist_norm).fold(0.0, f64::max);
    let tail_start = log.len() - log.len() / 4;
    let min = log[tail_start..]
        .iter()
        .filter_map(|r| r.cam_twist_norm)
        .fold(f64::INFINITY, f64::min);
    (peak > 0.0 && min.is_finite()).then_some(min / peak)
}

fn mgbm_comparison() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for seed in 1..=3u64 {
        let mut ratios = Vec::new();
        for mode in [Mode::MgbmStatic, Mode::Viki] {
            let cfg = ScenarioConfig {
                seed,
                mode,
                task: TaskKind::Forward,
                ..ScenarioConfig::default()
            };
            let run = simulate(&cfg, None).map_err(|e| e.to_string())?;
            ratios.push(tail_twist_ratio(&run.log).ok_or("no camera twist logged")?);
        }
        let (mgbm, viki) = (ratios[0], ratios[1]);
        ok &= mgbm >= 0.02 && viki < 0.02;
        details.push(format!("seed {seed}: mgbm {:.2}% viki {:.3}%", 100.0 * mgbm, 100.0 * viki));
    }
    check(ok, format!("tail min / peak camera twist: {}", details.join("; ")))
}

// ---------------------------------------------------------------- criterion 4

fn interaction_matrix_fd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = CameraIntrinsics {
        fu: 640.0,
        fv: 640.0,
        cu: 640.0,
        cv: 360.0,
        width: 1280,
        height: 720,
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let z = rng.gen_range(0.5..10.0);
        let p = Vector3::new(rng.gen_range(-0.6..0.6) * z, rng.gen_range(-0.4..0.4) * z, z);
        let xi = Vector6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let (v, w) = (xi.fixed_rows::<3>(0).into_owned(), xi.fixed_rows::<3>(3).into_owned());
        // the point seen from the camera after moving it along the twist for time s
        let moved = |s: f64| {
            let r = Rotation3::new(w * s);
            let q = r.inverse() * (p - v * s);
            project(&q, &k).unwrap()
        };
        let (a, b) = (moved(h), moved(-h));
        let fd = Vector2::new((a.u - b.u) / (2.0 * h), (a.v - b.v) / (2.0 * h));
        let f = project(&p, &k).unwrap();
        let l = interaction_row(f.u - k.cu, f.v - k.cv, z, k.fu).map_err(|e| e.to_string())?;
        let analytic = l * xi;
        let rel = (fd - analytic).norm() / analytic.norm().max(1e-9);
        worst = worst.max(rel);
    }
    check(worst <= 1e-2, format!("1000 samples, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- criterion 5

/// Nearest integer with ties to even, computed exactly for `num / den`.
fn round_ratio_ties_even(num: i64, den: i64) -> i64 {
    let lo = num.div_euclid(den);
    let twice_rem = 2 * num.rem_euclid(den);
    match twice_rem.cmp(&den) {
        std::cmp::Ordering::Less => lo,
        std::cmp::Ordering::Greater => lo + 1,
        std::cmp::Ordering::Equal => {
            if lo % 2 == 0 {
                lo
            } else {
                lo + 1
            }
        }
    }
}

fn shrink_oracle(eighths: [i64; 4]) -> Option<BoundingBox> {
    let [u0, v0, u2, v2] = eighths;
    // inset by 0.4 * 0.5 * span, i.e. (4a + b) / 5, in units of 1/40 px
    let u_min = round_ratio_ties_even(4 * u0 + u2, 40);
    let u_max = round_ratio_ties_even(4 * u2 + u0, 40);
    let v_min = round_ratio_ties_even(4 * v0 + v2, 40);
    let v_max = round_ratio_ties_even(4 * v2 + v0, 40);
    (u_min < u_max && v_min < v_max)
        .then(|| BoundingBox::new(u_min as f64, v_min as f64, u_max as f64, v_max as f64))
}

fn depth_oracle(bb: &BoundingBox, img: &DepthImage) -> Option<f64> {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for v in 0..img.height() {
        for u in 0..img.width() {
            let inside = u as f64 >= bb.u0 && u as f64 <= bb.u2 && v as f64 >= bb.v0 && v as f64 <= bb.v2;
            let d = img.get(u, v);
            if inside && d != 0.0 {
                sum += f64::from(d);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn mask_oracle(k: &CameraIntrinsics, cam_from_lidar: &RigidTransform, p: &BlindSpotParams) -> Vec<bool> {
    let mut out = vec![false; k.width * k.height];
    let n = (2.0 * p.extent / p.step).round() as i64;
    for i in 0..=n {
        for j in 0..=n {
            let x = -p.extent + i as f64 * p.step;
            let y = -p.extent + j as f64 * p.step;
            if x * x + y * y > p.radius * p.radius {
                continue;
            }
            let q = cam_from_lidar.transform_point(&Vector3::new(x, y, p.ground_z));
            if q.z <= 0.0 {
                continue;
            }
            let u = (k.cu + k.fu * q.x / q.z).round();
            let v = (k.cv + k.fv * q.y / q.z).round();
            if u > 0.0 && v > 0.0 && u < k.width as f64 && v < k.height as f64 {
                out[v as usize * k.width + u as usize] = true;
            }
        }
    }
    out
}

/// Camera looking along LiDAR +x, pitched down, with a small offset.
fn cam_from_lidar(pitch: f64, yaw: f64, offset: Vector3<f64>) -> RigidTransform {
    let optical = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let r = Rotation3::from_euler_angles(0.0, pitch, yaw).into_inner() * optical;
    let lidar_from_cam = RigidTransform::new(r, offset).unwrap();
    lidar_from_cam.inverse()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = Vec::new();

    let mut empty_boxes = 0;
    for _ in 0..1000 {
        let a: [i64; 2] = [rng.gen_range(0..10_000), rng.gen_range(0..5_000)];
        let b: [i64; 2] = [a[0] + rng.gen_range(0..400), a[1] + rng.gen_range(0..400)];
        let eighths = [a[0], a[1], b[0], b[1]];
        let bb = BoundingBox::new(
            a[0] as f64 / 8.0,
            a[1] as f64 / 8.0,
            b[0] as f64 / 8.0,
            b[1] as f64 / 8.0,
        );
        let got = shrink_bbox(&bb);
        match (got, shrink_oracle(eighths)) {
            (Ok(g), Some(o)) if g == o => {}
            (Err(Error::EmptyBox), None) => empty_boxes += 1,
            (g, o) => {
                mismatches.push(format!("shrink {bb:?}: {g:?} vs {o:?}"));
                break;
            }
        }
    }

    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(1..40usize), rng.gen_range(1..40usize));
        let data: Vec<f32> = (0..w * h)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1f32..10.0) })
            .collect();
        let img = DepthImage::from_vec(w, h, data).unwrap();
        let (u0, v0) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let (u2, v2) = (rng.gen_range(u0..w), rng.gen_range(v0..h));
        let bb = BoundingBox::new(u0 as f64, v0 as f64, u2 as f64, v2 as f64);
        let got = object_depth(&bb, &img).ok();
        if got != depth_oracle(&bb, &img) {
            mismatches.push(format!("object_depth {bb:?}"));
            break;
        }
    }

    for _ in 0..1000 {
        let vn = Twist2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
        let vp = Twist2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
        let expected = Twist2::new((1.0 - (vn.v - vp.v)) * vn.v, (1.0 - (vn.omega - vp.omega)) * vn.omega);
        if smooth(vn, vp) != expected {
            mismatches.push(format!("smooth {vn:?} {vp:?}"));
            break;
        }
    }

    let mut nonempty = 0;
    for _ in 0..1000 {
        let f = rng.gen_range(30.0..100.0);
        let (w, h) = (rng.gen_range(40..120usize), rng.gen_range(30..90usize));
        let k = CameraIntrinsics {
            fu: f,
            fv: f,
            cu: w as f64 / 2.0 + rng.gen_range(-3.0..3.0),
            cv: h as f64 / 2.0 + rng.gen_range(-3.0..3.0),
            width: w,
            height: h,
        };
        let t = cam_from_lidar(
            rng.gen_range(0.0..0.8),
            rng.gen_range(-0.2..0.2),
            Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.2..0.2), rng.gen_range(-0.5..0.0)),
        );
        let radius = rng.gen_range(0.0..3.0);
        let params = BlindSpotParams {
            radius,
            ground_z: rng.gen_range(-1.5..-0.6),
            extent: radius + 0.01,
            step: rng.gen_range(0.01..0.05),
        };
        let mask = blind_spot_mask(&k, &t, &params);
        let oracle = mask_oracle(&k, &t, &params);
        if mask.data() != oracle.as_slice() {
            mismatches.push(format!("mask {k:?} {params:?}"));
            break;
        }
        nonempty += usize::from(mask.count() > 0);
    }
    // default resolution and parameters, front-camera extrinsics of the default scene
    let cfg = ScenarioConfig::default();
    let cam = hycontrol::harness::sensors::CameraSensor::new(&cfg.front_camera);
    let lidar = hycontrol::harness::sensors::LidarSensor::new(&cfg.lidar);
    let t = lidar.camera_from_lidar(&cam);
    let full = blind_spot_mask(&cam.intrinsics, &t, &cfg.blind_spot);
    if full.data() != mask_oracle(&cam.intrinsics, &t, &cfg.blind_spot).as_slice() {
        mismatches.push("mask at default parameters".into());
    }

    check(
        mismatches.is_empty(),
        format!(
            "shrink_bbox/object_depth/smooth/mask x1000 each ({empty_boxes} empty boxes, {nonempty} non-empty masks) \
             + default-resolution mask ({} px set){}",
            full.count(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; mismatch: {}", mismatches.join("; "))
            }
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn state_machine_thresholds() -> Outcome {
    let th = SwitchThresholds::default();
    let mut failures = Vec::new();
    let below = [1.999_999, -1.999_999, 0.0];
    let at_or_above = [2.0, -2.0, 2.000_001, -2.5];
    for task in [TaskKind::Full, TaskKind::Forward, TaskKind::Backward] {
        for &stage in task.stages() {
            if stage == PlacementStage::Done {
                continue;
            }
            let ps = PlacementState { stage, entered_at: 0 };
            let successor = task.successor(stage);
            for (slot, values, should_fire) in [(0usize, &below[..], true), (0, &at_or_above[..], false)]
                .into_iter()
                .flat_map(|(_, vals, fire)| (0..8).map(move |slot| (slot, vals, fire)))
            {
                for &x in values {
                    let next = if stage == PlacementStage::Rotate {
                        let tol = th.position_tol;
                        let scaled = x * tol / th.feature_tol;
                        let mut e = Vector2::new(0.5 * tol, -0.5 * tol);
                        e[slot % 2] = scaled;
                        placement_step(ps, task, None, Some(&e), &th, 7)
                    } else {
                        let mut e = [1.5, -1.5, 0.3, -0.3, 1.9, -1.9, 0.0, 1.0];
                        e[slot] = x;
                        placement_step(ps, task, Some(&e), None, &th, 7)
                    };
                    let fired = next.stage == successor && next.entered_at == 7;
                    let stayed = next == ps;
                    if (should_fire && !fired) || (!should_fire && !stayed) {
                        failures.push(format!("{task:?}/{stage:?} slot {slot} value {x}"));
                    }
                }
            }
            // no signal at all never advances
            if placement_step(ps, task, None, None, &th, 7) != ps {
                failures.push(format!("{task:?}/{stage:?} advanced without an error signal"));
            }
        }
    }
    check(
        failures.is_empty(),
        format!(
            "|e| < 2 px (8 features) and |e| < 0.01 m (2 axes), strict bounds{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; wrong: {}", failures.join(", "))
            }
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn determinism() -> Outcome {
    let mut noisy = ScenarioConfig {
        seed: 11,
        ..ScenarioConfig::default()
    };
    noisy.odometry.sigma_xy = 0.002;
    noisy.odometry.sigma_theta = 0.001;
    let vs_only = ScenarioConfig {
        seed: 12,
        mode: Mode::VsOnly,
        ..ScenarioConfig::default()
    };
    let mut bytes = 0;
    for cfg in [ScenarioConfig::default(), noisy, vs_only] {
        let a = log_to_csv_string(&simulate(&cfg, None).map_err(|e| e.to_string())?.log);
        let b = log_to_csv_string(&simulate(&cfg, None).map_err(|e| e.to_string())?.log);
        if a != b {
            return Err(format!("logs differ for mode {} seed {}", cfg.mode, cfg.seed));
        }
        bytes += a.len();
    }
    Ok(format!("3 configurations, {bytes} log bytes identical across reruns"))
}

// ---------------------------------------------------------------- criterion 8

fn performance() -> Outcome {
    let cfg = ScenarioConfig::default();
    let mut worst_mean = Duration::ZERO;
    let mut parts = Vec::new();
    for x in [0.0, 2.0, 4.0] {
        let fixture = IterationFixture::new(&cfg, VehicleState::new(x, 0.0, 0.0)).map_err(|e| e.to_string())?;
        let mut prev = Twist2::ZERO;
        for _ in 0..3 {
            prev = fixture.run(&mut TargetMemory::new(), prev).map_err(|e| e.to_string())?.twist;
        }
        let n = 50;
        let started = Instant::now();
        for _ in 0..n {
            prev = fixture.run(&mut TargetMemory::new(), prev).map_err(|e| e.to_string())?.twist;
        }
        let mean = started.elapsed() / n;
        worst_mean = worst_mean.max(mean);
        parts.push(format!("x={x}: {:.2} ms", mean.as_secs_f64() * 1e3));
    }
    let k = &cfg.front_camera.intrinsics;
    check(
        worst_mean < Duration::from_millis(10),
        format!("mean iteration at {}x{}: {}", k.width, k.height, parts.join(", ")),
    )
}

// ---------------------------------------------------------------- criterion 9

fn mount(pitch: f64, height: f64) -> RigidTransform {
    let optical = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let r = Rotation3::from_euler_angles(0.0, pitch, 0.0).into_inner() * optical;
    RigidTransform::new(r, Vector3::new(0.8, 0.0, height)).unwrap()
}

/// Exact unicycle motion of the rear axle for one tick.
fn unicycle(s: &VehicleState, tw: &Twist2, dt: f64) -> VehicleState {
    if tw.omega.abs() < 1e-12 {
        return VehicleState::new(s.x + tw.v * dt * s.theta.cos(), s.y + tw.v * dt * s.theta.sin(), s.theta);
    }
    let r = tw.v / tw.omega;
    let th = s.theta + tw.omega * dt;
    VehicleState::new(
        s.x + r * (th.sin() - s.theta.sin()),
        s.y - r * (th.cos() - s.theta.cos()),
        th,
    )
}

fn vs_descent(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let k = CameraIntrinsics {
        fu: 640.0,
        fv: 640.0,
        cu: 640.0,
        cv: 360.0,
        width: 1280,
        height: 720,
    };
    let gains = ServoGains(vec![0.85, 0.3, 1.0, 1.0, 1.0]);
    let d = 0.7;
    let dt = 1e-3;
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < 500 {
        attempts += 1;
        if attempts > 20_000 {
            return Err(format!("only {accepted} well-conditioned visual-servo samples"));
        }
        let cam_mount = mount(rng.gen_range(0.0..0.35), rng.gen_range(0.4..1.0));
        let adj = velocity_adjoint(&cam_mount.inverse());
        let robot = VehicleState::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.1..3.1));
        // object: vertical rectangle facing the robot, ahead of the camera
        let range = rng.gen_range(1.5..5.0);
        let lateral = rng.gen_range(-0.4..0.4) * range;
        let (half_w, half_h) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
        let zc = rng.gen_range(0.1..0.6);
        let local: Vec<Vector3<f64>> = [(-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (1.0, -1.0)]
            .iter()
            .map(|(a, b)| Vector3::new(0.8 + range, lateral + a * half_w, zc + b * half_h))
            .collect();
        let robot_pose = RigidTransform::planar(robot.x, robot.y, robot.theta);
        let world: Vec<Vector3<f64>> = local.iter().map(|p| robot_pose.transform_point(p)).collect();
        let observe = |s: &VehicleState| -> Option<(hycontrol::FeatureSet, f64)> {
            let cam = RigidTransform::planar(s.x, s.y, s.theta).compose(&cam_mount).inverse();
            let pts: Vec<Vector3<f64>> = world.iter().map(|p| cam.transform_point(p)).collect();
            let px: Vec<PixelPoint> = pts.iter().map(|p| project(p, &k).ok()).collect::<Option<_>>()?;
            let bb = BoundingBox::new(
                px.iter().map(|p| p.u).fold(f64::INFINITY, f64::min),
                px.iter().map(|p| p.v).fold(f64::INFINITY, f64::min),
                px.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max),
                px.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max),
            );
            bb.is_valid(&k).then(|| (current_features(&bb), pts.iter().map(|p| p.z).sum::<f64>() / 4.0))
        };
        // desired view: the same object from a nearby pose
        let goal = VehicleState::new(
            robot.x + rng.gen_range(0.2..1.0) * robot.theta.cos(),
            robot.y + rng.gen_range(0.2..1.0) * robot.theta.sin(),
            robot.theta + rng.gen_range(-0.1..0.1),
        );
        let (Some((f, z_o)), Some((fd, _))) = (observe(&robot), observe(&goal)) else {
            continue;
        };
        if f.error(&fd).norm() < 1.0 {
            continue;
        }
        let geom = ServoGeometry {
            intrinsics: &k,
            camera_from_robot: &adj,
            heading: robot.theta,
            wheelbase: d,
            jacobian_mode: RobotJacobianMode::Body,
        };
        let Ok(tw) = robot_velocity_vs(&f, &fd, z_o, &gains, &geom) else {
            continue;
        };
        let Some((f1, _)) = observe(&unicycle(&robot, &tw, dt)) else {
            continue;
        };
        accepted += 1;
        let (before, after) = (f.error(&fd).norm(), f1.error(&fd).norm());
        if !(after < before) {
            return Err(format!("visual servo error grew {before:.6} -> {after:.6} at {robot:?}"));
        }
    }
    Ok(accepted)
}

fn kin_descent(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let gains = KinematicGains([2.0, 1.0]);
    let d = 0.7;
    let dt = 0.01;
    let params = VehicleParams {
        max_speed: 100.0,
        max_steering: 1.55,
        ..VehicleParams::default()
    };
    for i in 0..500 {
        let theta = -std::f64::consts::PI + (i % 16) as f64 * std::f64::consts::PI / 8.0;
        let s = VehicleState::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), theta);
        let h = s.control_point(d);
        // target ahead of or behind the control point, off-axis by up to 45 degrees
        let dist = rng.gen_range(0.05..5.0);
        let side = if rng.gen_bool(0.5) { 0.0 } else { std::f64::consts::PI };
        let bearing = theta + side + rng.gen_range(-0.785..0.785);
        let goal = h + dist * Vector2::new(bearing.cos(), bearing.sin());
        let tw = robot_velocity_kin(&(goal - h), theta, d, &gains);
        let next = unicycle(&s, &tw, dt);
        let before = (goal - h).norm();
        let after = (goal - next.control_point(d)).norm();
        if !(after < before) {
            return Err(format!("kinematic error grew {before:.6} -> {after:.6} (theta {theta:.3})"));
        }
        // the bicycle plant with the steering equivalent must agree to first order
        if tw.v.abs() > 1e-3 {
            let psi = (d * tw.omega / tw.v).atan();
            let bike = integrate(&s, &VehicleCommand::new(tw.v, psi), dt, &params);
            if (bike.control_point(d) - next.control_point(d)).norm() > 1e-3 {
                return Err("bicycle and unicycle steps disagree".into());
            }
        }
    }
    Ok(500)
}

fn descent_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vs = vs_descent(&mut rng)?;
    let kin = kin_descent(&mut rng)?;
    Ok(format!("one-step decrease on {vs} visual-servo and {kin} kinematic configurations"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("hybrid full-task convergence", hybrid_full_task),
        ("vs-only degradation under occlusion", vs_only_degradation),
        ("static desired box does not converge", mgbm_comparison),
        ("interaction matrix finite differences", interaction_matrix_fd),
        ("oracle equivalence", oracle_equivalence),
        ("state-machine thresholds", state_machine_thresholds),
        ("determinism", determinism),
        ("control iteration under 10 ms", performance),
        ("descent invariants", descent_invariants),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail}) [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({detail}) [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
