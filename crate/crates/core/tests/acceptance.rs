//! One line per headline criterion. Run with
//! `cargo test --test acceptance -- --nocapture` to see the report.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{bare, link, load};
use motion_stack::bus::{DeliveryRecord, LinkCondition};
use motion_stack::ctrl::StrategyKind;
use motion_stack::kin::{forward_kinematics, inverse_kinematics, jacobian, IkOptions, JointVector, KinError};
use motion_stack::model::{motor_count, presets, Level, RoleEntry, JOINT_V_MAX};
use motion_stack::ops::{
    assembly_scenario, fig13_suite, run_scenario, run_with, AssemblyOptions, CrashSpec, OpsError, RunRecord,
    Scenario, WorldOptions,
};
use motion_stack::plant::REFLECTOR_WIDTH;
use motion_stack::stack::{EventKind, ScriptEvent, ScriptOp, StackParams, Waypoint};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TICK: f64 = 0.02;
const TIMEOUT: f64 = 0.3;
const DELTA_E: f64 = 0.05;
const DELTA_OFFSET: f64 = 0.3;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let took = start.elapsed();
    check(took < budget, format!("took {took:.1?}, budget {budget:?}"))
}

fn fig13() -> Outcome {
    let start = Instant::now();
    let suite = fig13_suite().map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(5))?;
    let row = |k| suite.run(k);
    let speed = row(StrategyKind::Speed);
    check(speed.row.moved_during_loss, "speed: joint held still during the outage")?;

    let integral = row(StrategyKind::Integral);
    check(
        integral.row.reconnect_jump > DELTA_E,
        format!("integral: jump {:.4} not above {DELTA_E}", integral.row.reconnect_jump),
    )?;
    let loss_end = suite.config.loss.1;
    let onset = integral.jump_onset.ok_or("integral: no catch-up after reconnection")?;
    check(
        onset - loss_end <= 2.0 * TICK + 1e-9,
        format!("integral: jump starts at {onset:.2}, loss ends {loss_end}"),
    )?;

    let offset = row(StrategyKind::Offset);
    for (i, d) in offset.press_displacements.iter().enumerate() {
        check(
            (d - DELTA_OFFSET).abs() <= 1e-6,
            format!("offset: press {i} moved {d:.9}"),
        )?;
    }

    let clamped = row(StrategyKind::ClampedIntegral);
    check(
        clamped.max_command_gap <= DELTA_E + 1e-12,
        format!("clamped: |u - y| reached {:.6}", clamped.max_command_gap),
    )?;
    check(
        clamped.row.reconnect_jump <= DELTA_E,
        format!("clamped: jump {:.4}", clamped.row.reconnect_jump),
    )?;
    let best = suite.runs.iter().map(|r| r.row.final_error).fold(f64::MAX, f64::min);
    check(clamped.row.final_error <= best, "clamped: final error not the smallest")?;
    Ok(format!(
        "speed moved during loss; integral jump {:.3} at {:.2} s; offset presses {:?}; clamped max|u-y| {:.3}, jump {:.3}; {:.2?}",
        integral.row.reconnect_jump,
        onset,
        offset.press_displacements.iter().map(|d| format!("{d:.6}")).collect::<Vec<_>>(),
        clamped.max_command_gap,
        clamped.row.reconnect_jump,
        start.elapsed()
    ))
}

fn proportionality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bound = DELTA_E + JOINT_V_MAX * TICK;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let mut s = bare(&presets::minimal(), 1.0);
        let mut k: i64 = rng.random_range(5..30);
        let mut expected = 0.0;
        for _ in 0..rng.random_range(0..=5) {
            let len: i64 = rng.random_range(1..=50);
            let speed = rng.random_range(0.01..JOINT_V_MAX) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            s.operator_script
                .push(ScriptEvent::new(k as f64 * TICK, "operator-A", ScriptOp::Down, "limb1/j1", speed));
            s.operator_script
                .push(ScriptEvent::new((k + len) as f64 * TICK, "operator-A", ScriptOp::Up, "limb1/j1", 0.0));
            expected += speed * len as f64 * TICK;
            k += len + rng.random_range(1..40);
        }
        s.duration = k as f64 * TICK + 1.0;
        s.seed = case;
        let record = run_scenario(&s).map_err(|e| e.to_string())?;
        let trace = record.joint_trace("limb1/j1");
        let moved = trace.last().unwrap().angle - trace.first().unwrap().angle;
        let err = (moved - expected).abs();
        worst = worst.max(err);
        check(err <= bound, format!("case {case}: moved {moved:.5}, requested {expected:.5}"))?;
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("100 scripts, worst error {worst:.5} (bound {bound:.4}); {:.2?}", start.elapsed()))
}

/// Delivered command times per `module/joint`.
fn deliveries(log: &[DeliveryRecord]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for d in log {
        if let (Some(t), Some(key)) = (d.t_deliver, d.topic.strip_prefix("cmd/")) {
            out.entry(key.to_string()).or_default().push(t);
        }
    }
    for v in out.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    out
}

/// Moving samples that are too long after the last delivered command.
fn silence_violations(record: &RunRecord) -> Vec<String> {
    let delivered = deliveries(&record.delivery_log);
    let limit = TIMEOUT + 2.0 * TICK + 1e-9;
    record
        .truth
        .iter()
        .filter(|s| s.velocity != 0.0)
        .filter_map(|s| {
            let last = delivered
                .get(&s.joint)
                .and_then(|v| v.iter().rev().find(|&&d| d <= s.t).copied());
            match last {
                Some(d) if s.t - d <= limit => None,
                _ => Some(format!("{} moving at {:.2} (last command {last:?})", s.joint, s.t)),
            }
        })
        .collect()
}

fn random_condition(rng: &mut ChaCha8Rng, duration: f64) -> LinkCondition {
    let mut gaps = Vec::new();
    let mut t = rng.random_range(0.2..duration);
    for _ in 0..rng.random_range(0..=2) {
        let len = rng.random_range(0.05..1.5);
        gaps.push((t, t + len));
        t += len + rng.random_range(0.1..1.5);
    }
    let cond = if gaps.is_empty() {
        LinkCondition::default()
    } else {
        LinkCondition::with_gaps(&gaps)
    };
    let mut cond = cond.latency(rng.random_range(0.0..0.04));
    cond.jitter = rng.random_range(0.0..0.02);
    cond.jitter_seed = rng.random();
    cond.drop_rate = rng.random_range(0.0..0.4);
    cond
}

fn random_q(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..7).map(|_| rng.random_range(-0.8..0.8)).collect()
}

/// Dragon with random strategy, script, link faults and crashes.
pub fn fuzz_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = 5.0;
    let mut s = bare(&presets::dragon(), duration);
    s.seed = seed;
    s.strategy = StrategyKind::ALL[rng.random_range(0..4)];
    s.role_table.insert("mover-pc".into(), RoleEntry::new(&[Level::Mover], None));
    let split = rng.random_bool(0.5);
    if split {
        s.role_table.insert("limb2-pc".into(), RoleEntry::new(&[Level::Joint], Some("limb2")));
        s.role_table
            .insert("planner2".into(), RoleEntry::new(&[Level::Ik, Level::Limb], Some("limb2")));
    }
    let mut pairs = vec![
        ("operator-A", "limb1-pc"),
        ("operator-A", "limb2-pc"),
        ("mover-pc", "limb1-pc"),
        ("mover-pc", "limb2-pc"),
    ];
    if split {
        pairs.extend([("planner2", "limb2-pc"), ("operator-A", "planner2"), ("mover-pc", "planner2")]);
    }
    for (a, b) in pairs {
        if rng.random_bool(0.7) {
            s.links.push(link(a, b, random_condition(&mut rng, duration)));
        }
    }
    for _ in 0..rng.random_range(1..=6) {
        let limb = if rng.random_bool(0.5) { "limb1" } else { "limb2" };
        let t = rng.random_range(0.0..3.5);
        match rng.random_range(0..4) {
            0 | 1 => {
                let target = format!("{limb}/j{}", rng.random_range(1..=7));
                let speed = rng.random_range(0.05..0.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                s.operator_script
                    .push(ScriptEvent::new(t, "operator-A", ScriptOp::Down, &target, speed));
                let up = t + rng.random_range(0.1..2.0);
                s.operator_script.push(ScriptEvent::new(up, "operator-A", ScriptOp::Up, &target, 0.0));
            }
            2 => {
                let mut ev = ScriptEvent::new(t, "operator-A", ScriptOp::Trajectory, limb, 0.0);
                ev.waypoints = Some(vec![Waypoint {
                    q: JointVector(random_q(&mut rng)),
                    t: rng.random_range(1.0..3.0),
                }]);
                s.operator_script.push(ev);
            }
            _ => {
                let mut ev = ScriptEvent::new(t, "operator-A", ScriptOp::Plan, "mover", 0.0);
                ev.targets = Some(
                    ["limb1", "limb2"]
                        .into_iter()
                        .map(|l| (l.to_string(), JointVector(random_q(&mut rng))))
                        .collect(),
                );
                s.operator_script.push(ev);
            }
        }
    }
    if rng.random_bool(0.6) {
        let nodes: Vec<String> = s.role_table.keys().cloned().collect();
        let node = nodes[rng.random_range(0..nodes.len())].clone();
        s.crashes.push(CrashSpec {
            node,
            t: rng.random_range(0.5..duration - 0.5),
        });
    }
    s
}

fn silence_fuzz() -> Outcome {
    let start = Instant::now();
    let mut crashes = 0;
    let mut moving = 0;
    for seed in 0..500 {
        let s = fuzz_scenario(seed);
        crashes += s.crashes.len();
        let record = run_with(&s, WorldOptions::default()).map_err(|e| format!("seed {seed}: {e}"))?;
        moving += record.truth.iter().filter(|t| t.velocity != 0.0).count();
        let bad = silence_violations(&record);
        check(bad.is_empty(), format!("seed {seed}: {}", bad.join("; ")))?;
        check(
            record.violations.is_empty(),
            format!("seed {seed}: runtime monitor flagged {:?}", record.violations.first()),
        )?;
    }
    within(start, Duration::from_secs(120))?;
    check(moving > 0, "fuzz never moved a joint")?;
    Ok(format!(
        "500 dragon runs ({crashes} with a crash), {moving} moving samples, 0 violations; {:.2?}",
        start.elapsed()
    ))
}

struct Homing {
    joint: String,
    start: f64,
    offset: f64,
    speed: f64,
}

impl Homing {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let above = rng.random_bool(0.5);
        let span = rng.random_range(0.05..0.25);
        Self {
            joint: format!("limb1/j{}", rng.random_range(1..=7)),
            start: if above { span } else { -span },
            offset: rng.random_range(-0.5..0.5),
            speed: if above { -0.05 } else { 0.05 },
        }
    }

    /// Encoder reading at the reflector edge met from this side.
    fn edge(&self) -> f64 {
        let bound = if self.speed < 0.0 { REFLECTOR_WIDTH / 2.0 } else { -REFLECTOR_WIDTH / 2.0 };
        bound + self.offset
    }

    fn eta(&self) -> f64 {
        0.2 + (self.start.abs() - REFLECTOR_WIDTH / 2.0) / self.speed.abs()
    }

    fn scenario(&self, cut: Option<f64>) -> Scenario {
        let mut s = bare(&presets::minimal(), 1.0);
        s.role_table.insert("limb1-pc".into(), RoleEntry::new(&[Level::Joint], Some("limb1")));
        s.role_table
            .insert("calib-pc".into(), RoleEntry::new(&[Level::Calibrator], Some("limb1")));
        s.plant.initial_angles.insert(self.joint.clone(), self.start);
        s.plant.zero_offsets.insert(self.joint.clone(), self.offset);
        s.operator_script.push(ScriptEvent::new(
            0.2,
            "operator-A",
            ScriptOp::Calibrate,
            &self.joint,
            self.speed,
        ));
        match cut {
            Some(t) => {
                s.links.push(link("calib-pc", "limb1-pc", LinkCondition::with_gaps(&[(t, 1e9)])));
                s.duration = ((t + 1.5) / TICK).round() * TICK;
            }
            None => s.duration = ((self.eta() + 1.0) / TICK).round() * TICK,
        }
        s
    }
}

fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for i in 0..50 {
        let h = Homing::random(&mut rng);
        let cut = rng.random_range(0.3..h.eta() - 0.1);
        let record = run_scenario(&h.scenario(Some(cut))).map_err(|e| e.to_string())?;
        check(
            !record.events.iter().any(|e| e.kind == EventKind::CalibrationDone),
            format!("cut {i}: finished despite the cut"),
        )?;
        let trace = record.joint_trace(&h.joint);
        check(
            trace.iter().any(|s| s.t <= cut && s.velocity != 0.0),
            format!("cut {i}: joint never moved before the cut at {cut:.2}"),
        )?;
        let stop_by = cut + TIMEOUT + TICK;
        if let Some(s) = trace.iter().find(|s| s.t - TICK >= stop_by - 1e-9 && s.velocity != 0.0) {
            return Err(format!("cut {i} at {cut:.2}: {} still moving at {:.2}", h.joint, s.t));
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let h = Homing::random(&mut rng);
        let record = run_scenario(&h.scenario(None)).map_err(|e| e.to_string())?;
        let done = record
            .events
            .iter()
            .find(|e| e.kind == EventKind::CalibrationDone)
            .ok_or(format!("nominal {i}: no edge found"))?;
        let found: f64 = done.detail.split_whitespace().nth(1).and_then(|v| v.parse().ok()).unwrap();
        let err = (found - h.edge()).abs();
        worst = worst.max(err);
        check(err <= 0.002, format!("nominal {i}: edge at {found:.5}, true {:.5}", h.edge()))?;
    }
    Ok(format!(
        "50 cuts stationary within timeout + 1 tick; 20 nominal runs, worst edge error {worst:.5} rad"
    ))
}

fn kinematics() -> Outcome {
    let chain = presets::minimal().chains[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let random_q = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        chain.joints.iter().map(|j| rng.random_range(j.limits[0]..j.limits[1])).collect()
    };
    let h = 1e-5;
    let mut worst_jac: f64 = 0.0;
    for _ in 0..100 {
        let q = random_q(&mut rng);
        let jac = jacobian(&chain, &q).unwrap();
        for i in 0..7 {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[i] += h;
            qm[i] -= h;
            let (p, m) = (forward_kinematics(&chain, &qp).unwrap(), forward_kinematics(&chain, &qm).unwrap());
            let lin = (p.position - m.position) / (2.0 * h);
            let ang = (p.orientation * m.orientation.inverse()).scaled_axis() / (2.0 * h);
            for r in 0..3 {
                worst_jac = worst_jac.max((jac[(r, i)] - lin[r]).abs());
                worst_jac = worst_jac.max((jac[(r + 3, i)] - ang[r]).abs());
            }
        }
    }
    check(worst_jac < 1e-6, format!("jacobian deviates by {worst_jac:e}"))?;

    let tight = IkOptions {
        pos_tol: 1e-6,
        rot_tol: 1e-6,
        ..IkOptions::default()
    };
    let mut worst_ik: f64 = 0.0;
    for _ in 0..100 {
        let q = random_q(&mut rng);
        let target = forward_kinematics(&chain, &q).unwrap();
        let seed: Vec<f64> = q.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
        let sol = inverse_kinematics(&chain, &target, &seed, &tight).map_err(|e| e.to_string())?;
        let reached = forward_kinematics(&chain, &sol.q.0).unwrap();
        worst_ik = worst_ik.max((reached.position - target.position).norm());
    }
    check(worst_ik < 1e-4, format!("IK round trip off by {worst_ik:e} m"))?;

    let reach = chain.reach();
    check((reach - 1.55).abs() < 1e-12, format!("reach {reach}"))?;
    let stretched = forward_kinematics(&chain, &[0.0; 7]).unwrap().position.norm();
    check((stretched - 1.55).abs() < 1e-12, format!("straight limb spans {stretched}"))?;
    for _ in 0..1000 {
        let p = forward_kinematics(&chain, &random_q(&mut rng)).unwrap().position.norm();
        check(p <= reach + 1e-12, format!("tip at {p} beyond reach"))?;
    }
    let outside = motion_stack::kin::Pose::new(Vector3::new(1.56, 0.0, 0.0), Default::default());
    match inverse_kinematics(&chain, &outside, &[0.1; 7], &IkOptions::default()) {
        Err(KinError::Unreachable { .. }) => {}
        other => return Err(format!("target at 1.56 m gave {other:?}")),
    }
    Ok(format!(
        "jacobian max dev {worst_jac:.1e}; IK max pos err {worst_ik:.1e} m; reach 1.55 m enforced"
    ))
}

fn motors() -> Outcome {
    let (m, t) = (motor_count(&presets::minimal()), motor_count(&presets::tricycle()));
    check(m == 11 && t == 33, format!("minimal {m}, tricycle {t}"))?;
    Ok(format!("minimal {m}, tricycle {t}"))
}

fn determinism() -> Outcome {
    let mut scenarios: Vec<(String, Scenario)> = [
        "minimal_teleop",
        "fig13_lossy",
        "dragon_crash",
        "calibration",
        "two_operators",
        "tricycle_mover",
    ]
    .iter()
    .map(|n| (n.to_string(), load(n)))
    .collect();
    scenarios.extend((1000..1005).map(|seed| (format!("fuzz {seed}"), fuzz_scenario(seed))));
    for (name, s) in &scenarios {
        let a = run_scenario(s).map_err(|e| e.to_string())?;
        let b = run_scenario(s).map_err(|e| e.to_string())?;
        check(a.final_state_hash == b.final_state_hash, format!("{name}: hash differs"))?;
        check(a.delivery_log_jsonl() == b.delivery_log_jsonl(), format!("{name}: log differs"))?;
    }
    Ok(format!("{} scenarios re-run with identical hash and delivery log", scenarios.len()))
}

fn assembly() -> Outcome {
    let report = assembly_scenario(&AssemblyOptions::default()).map_err(|e| e.to_string())?;
    check(report.motor_count == 11, format!("{} motors", report.motor_count))?;
    check(report.matches_minimal, "rebuilt description differs from the minimal assembly")?;
    check(
        report.wheel_neighbours == ["limb1"],
        format!("wheel telemetry neighbours {:?}", report.wheel_neighbours),
    )?;
    check(
        report.limb_neighbours == ["wheel1"],
        format!("limb telemetry neighbours {:?}", report.limb_neighbours),
    )?;
    let again = assembly_scenario(&AssemblyOptions::default()).map_err(|e| e.to_string())?;
    check(again.record.ir_events == report.record.ir_events, "IR timeline differs on re-run")?;
    let shifted = AssemblyOptions {
        fixture_shift: Vector3::new(0.1, 0.0, 0.0),
        ..AssemblyOptions::default()
    };
    let miss = match assembly_scenario(&shifted) {
        Err(OpsError::GraspMiss(msg)) => msg,
        other => return Err(format!("shifted fixture gave {:?}", other.map(|r| r.t_attached))),
    };
    Ok(format!(
        "attached at {:.2} s, released palette at {:.2} s, 11 motors, wheel sees {:?}; shifted: {miss}",
        report.t_attached, report.t_released, report.wheel_neighbours
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("fig13 strategies", fig13),
        ("requirement-2 proportionality", proportionality),
        ("silence safety fuzz", silence_fuzz),
        ("calibration fail-stop", calibration),
        ("kinematics oracles", kinematics),
        ("motor inventory", motors),
        ("determinism", determinism),
        ("assembly", assembly),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}

#[test]
fn params_match_the_constants_used_here() {
    let p = StackParams::default();
    assert_eq!((p.tick, p.timeout, p.delta_e, p.delta_offset), (TICK, Some(TIMEOUT), DELTA_E, DELTA_OFFSET));
}

#[test]
fn silence_oracle_flags_a_run_without_watchdog() {
    let mut s = bare(&presets::minimal(), 3.0);
    s.strategy = StrategyKind::Speed;
    s.parameters.timeout = None;
    s.operator_script.push(ScriptEvent::new(0.1, "operator-A", ScriptOp::Down, "limb1/j1", 0.3));
    s.links.push(link("operator-A", "limb1-pc", LinkCondition::with_gaps(&[(1.0, 3.0)])));
    let record = run_scenario(&s).unwrap();
    assert!(!silence_violations(&record).is_empty());
}
