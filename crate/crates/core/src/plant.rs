//! Simulated hardware: velocity-limited joints with photo-reflectors,
//! grippers with infrared attachment detection, differential-drive wheels
//! and batteries.
//!
//! The plant is the ground truth that every safety property is checked
//! against. It is purely kinematic, so runs are deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctrl::{local_joint_step, CommandOut, CtrlError, LocalJoint};
use crate::kin::{forward_kinematics, Pose};
use crate::model::{KinematicChain, ModuleKind, RobotDescription};

pub const GRIPPER_MAX_OPENING: f64 = 0.080;
pub const GRIPPER_SPEED: f64 = 0.009;
/// Jaw opening at which a closing gripper seats on a grapple fixture.
pub const FIXTURE_WIDTH: f64 = 0.040;
pub const GRASP_POSITION_TOL: f64 = 0.02;
pub const GRASP_ANGLE_TOL: f64 = 0.1;
pub const WHEEL_RADIUS: f64 = 0.24;
pub const WHEEL_TRACK: f64 = 0.638;
pub const REFLECTOR_WIDTH: f64 = 0.02;

/// `module/joint`, the key used for joints and grippers alike.
pub fn joint_key(module: &str, joint: &str) -> String {
    format!("{module}/{joint}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub window: [f64; 2],
}

impl Reflector {
    pub fn around_zero() -> Self {
        Self {
            window: [-REFLECTOR_WIDTH / 2.0, REFLECTOR_WIDTH / 2.0],
        }
    }

    pub fn state(&self, angle: f64) -> bool {
        self.window[0] <= angle && angle < self.window[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPlant {
    pub joint: LocalJoint,
    /// Encoder reading minus true angle. Unknown to controllers until calibrated.
    pub zero_offset: f64,
    pub reflector: Reflector,
    pub setpoint: Option<CommandOut>,
}

impl JointPlant {
    pub fn sensed(&self) -> f64 {
        self.joint.angle + self.zero_offset
    }

    pub fn reflector_state(&self) -> bool {
        self.reflector.state(self.joint.angle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperPlant {
    pub opening: f64,
    pub speed: f64,
    pub setpoint: Option<CommandOut>,
    /// `module.fixture` currently held.
    pub grasped_fixture: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePlant {
    pub pose: Pose,
    /// `module.gripper` currently holding this fixture.
    pub attached_gripper: Option<String>,
    /// Module id last received over the infrared link.
    pub ir_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelPlant {
    pub left_speed: f64,
    pub right_speed: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub wheel_radius: f64,
    pub track: f64,
}

impl Default for WheelPlant {
    fn default() -> Self {
        Self {
            left_speed: 0.0,
            right_speed: 0.0,
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            wheel_radius: WHEEL_RADIUS,
            track: WHEEL_TRACK,
        }
    }
}

/// Differential drive: `v = r(ωl+ωr)/2`, `ω = r(ωr−ωl)/track`, midpoint heading.
pub fn wheel_step(wheel: WheelPlant, left: f64, right: f64, dt: f64) -> WheelPlant {
    let r = wheel.wheel_radius;
    let v = r * (left + right) / 2.0;
    let omega = r * (right - left) / wheel.track;
    let mid = wheel.heading + omega * dt / 2.0;
    WheelPlant {
        left_speed: left,
        right_speed: right,
        x: wheel.x + v * dt * mid.cos(),
        y: wheel.y + v * dt * mid.sin(),
        heading: wheel.heading + omega * dt,
        ..wheel
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Battery {
    pub level: f64,
    /// Percent per second at rest.
    pub drain_rate: f64,
    /// Additional percent per second while any joint of the module moves.
    pub load_drain: f64,
}

impl Default for Battery {
    fn default() -> Self {
        Self {
            level: 100.0,
            drain_rate: 0.005,
            load_drain: 0.02,
        }
    }
}

impl Battery {
    pub fn is_empty(&self) -> bool {
        self.level <= 0.0
    }

    fn drain(&mut self, loaded: bool, dt: f64) {
        let rate = self.drain_rate + if loaded { self.load_drain } else { 0.0 };
        self.level = (self.level - rate * dt).max(0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimbGeometry {
    pub chain: KinematicChain,
    /// World pose of the chain's root frame.
    pub base: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub joint: String,
    pub angle: f64,
    pub reflector: bool,
}

/// Infrared attach and detach notifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IrEvent {
    Attached { gripper: String, fixture: String },
    Released { gripper: String, fixture: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub joint: String,
    pub angle: f64,
    pub velocity: f64,
}

pub fn write_truth<W: Write>(samples: &[TruthSample], mut out: W) -> io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Plant {
    pub joints: BTreeMap<String, JointPlant>,
    pub grippers: BTreeMap<String, GripperPlant>,
    pub fixtures: BTreeMap<String, FixturePlant>,
    pub wheels: BTreeMap<String, WheelPlant>,
    pub batteries: BTreeMap<String, Battery>,
    pub limbs: BTreeMap<String, LimbGeometry>,
    /// Uniform sensor noise amplitude, radians.
    pub sensor_noise: f64,
    #[serde(skip, default = "default_rng")]
    rng: ChaCha8Rng,
}

fn default_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl Plant {
    /// Plant for every module of the given assemblies, joints at zero,
    /// existing attachments closed on their fixtures.
    pub fn new(descriptions: &[RobotDescription], seed: u64) -> Self {
        let mut plant = Plant {
            joints: BTreeMap::new(),
            grippers: BTreeMap::new(),
            fixtures: BTreeMap::new(),
            wheels: BTreeMap::new(),
            batteries: BTreeMap::new(),
            limbs: BTreeMap::new(),
            sensor_noise: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        for desc in descriptions {
            for module in &desc.modules {
                for joint in &module.joints {
                    plant.joints.insert(
                        joint_key(&module.id, &joint.name),
                        JointPlant {
                            joint: LocalJoint::new(0.0, joint.v_max, joint.limits),
                            zero_offset: 0.0,
                            reflector: Reflector::around_zero(),
                            setpoint: None,
                        },
                    );
                }
                for gripper in module.kind.grippers() {
                    plant.grippers.insert(
                        joint_key(&module.id, gripper),
                        GripperPlant {
                            opening: GRIPPER_MAX_OPENING,
                            speed: GRIPPER_SPEED,
                            setpoint: None,
                            grasped_fixture: None,
                        },
                    );
                }
                for fixture in &module.fixtures {
                    plant.fixtures.insert(
                        format!("{}.{}", module.id, fixture),
                        FixturePlant {
                            pose: Pose::identity(),
                            attached_gripper: None,
                            ir_id: None,
                        },
                    );
                }
                if module.kind == ModuleKind::Wheel {
                    plant.wheels.insert(module.id.clone(), WheelPlant::default());
                }
                if module.kind != ModuleKind::Body {
                    plant.batteries.insert(module.id.clone(), Battery::default());
                }
            }
            for chain in &desc.chains {
                plant.limbs.insert(
                    chain.module.clone(),
                    LimbGeometry {
                        chain: chain.clone(),
                        base: Pose::identity(),
                    },
                );
            }
            for [a, b] in &desc.attachments {
                let (gripper, fixture) = if plant.fixtures.contains_key(b) { (a, b) } else { (b, a) };
                plant.attach(gripper, fixture);
            }
        }
        plant
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn attach(&mut self, gripper: &str, fixture: &str) {
        let key = gripper.replacen('.', "/", 1);
        if let Some(g) = self.grippers.get_mut(&key) {
            g.opening = FIXTURE_WIDTH;
            g.grasped_fixture = Some(fixture.to_string());
        }
        if let Some(f) = self.fixtures.get_mut(fixture) {
            f.attached_gripper = Some(gripper.to_string());
            f.ir_id = gripper.split_once('.').map(|(m, _)| m.to_string());
        }
    }

    /// Latch a new setpoint for a joint or gripper. Unknown keys are ignored.
    pub fn command(&mut self, key: &str, command: CommandOut) {
        if let Some(j) = self.joints.get_mut(key) {
            j.setpoint = Some(match command {
                CommandOut::Position(p) => CommandOut::Position(p - j.zero_offset),
                v => v,
            });
        } else if let Some(g) = self.grippers.get_mut(key) {
            g.setpoint = Some(command);
        }
    }

    /// Drop every setpoint of a module so its joints stop where they are.
    pub fn brake(&mut self, module: &str) {
        let prefix = format!("{module}/");
        for (_, j) in self.joints.iter_mut().filter(|(k, _)| k.starts_with(&prefix)) {
            j.setpoint = None;
        }
        for (_, g) in self.grippers.iter_mut().filter(|(k, _)| k.starts_with(&prefix)) {
            g.setpoint = None;
        }
    }

    pub fn set_wheel_speeds(&mut self, module: &str, left: f64, right: f64) {
        if let Some(w) = self.wheels.get_mut(module) {
            w.left_speed = left;
            w.right_speed = right;
        }
    }

    fn module_powered(&self, key: &str) -> bool {
        let module = key.split(['/', '.']).next().unwrap_or(key);
        self.batteries.get(module).is_none_or(|b| !b.is_empty())
    }

    /// World pose of a gripper: the chain tip or the chain root.
    pub fn gripper_pose(&self, key: &str) -> Option<Pose> {
        let (module, gripper) = key.split_once('/')?;
        let limb = self.limbs.get(module)?;
        let frame = format!("{module}.{gripper}");
        if limb.chain.root_frame == frame {
            return Some(limb.base);
        }
        let q: Vec<f64> = limb
            .chain
            .joints
            .iter()
            .map(|j| self.joints[&joint_key(module, &j.name)].joint.angle)
            .collect();
        let tip = forward_kinematics(&limb.chain, &q).ok()?;
        Some(Pose::from_isometry(&(limb.base.to_isometry() * tip.to_isometry())))
    }

    /// Apply new commands, advance every actuator by `dt` and return the
    /// readings of powered modules.
    pub fn step(
        &mut self,
        commands: &BTreeMap<String, CommandOut>,
        dt: f64,
    ) -> Result<(Vec<SensorReading>, Vec<IrEvent>), CtrlError> {
        if !(dt > 0.0) {
            return Err(CtrlError::InvalidStep(dt));
        }
        for (key, cmd) in commands {
            self.command(key, *cmd);
        }
        let mut moving = BTreeSet::new();
        for (key, j) in self.joints.iter_mut() {
            let powered = self
                .batteries
                .get(key.split('/').next().unwrap_or_default())
                .is_none_or(|b| !b.is_empty());
            let setpoint = if powered { j.setpoint } else { None };
            j.joint = local_joint_step(j.joint, setpoint, dt)?;
            if j.joint.velocity != 0.0 {
                moving.insert(key.split('/').next().unwrap_or_default().to_string());
            }
        }
        for (module, wheel) in self.wheels.iter_mut() {
            let (l, r) = match self.batteries.get(module) {
                Some(b) if b.is_empty() => (0.0, 0.0),
                _ => (wheel.left_speed, wheel.right_speed),
            };
            if l != 0.0 || r != 0.0 {
                moving.insert(module.clone());
            }
            *wheel = wheel_step(*wheel, l, r, dt);
        }
        let events = self.step_grippers(dt);
        for (module, battery) in self.batteries.iter_mut() {
            battery.drain(moving.contains(module), dt);
        }
        Ok((self.sensors(), events))
    }

    fn step_grippers(&mut self, dt: f64) -> Vec<IrEvent> {
        let mut events = Vec::new();
        let keys: Vec<String> = self.grippers.keys().cloned().collect();
        for key in keys {
            if !self.module_powered(&key) {
                continue;
            }
            let g = &self.grippers[&key];
            let Some(setpoint) = g.setpoint else { continue };
            let max = g.speed * dt;
            let target = match setpoint {
                CommandOut::Position(p) => p.clamp(0.0, GRIPPER_MAX_OPENING),
                CommandOut::Velocity(v) => {
                    (g.opening + v.clamp(-g.speed, g.speed) * dt).clamp(0.0, GRIPPER_MAX_OPENING)
                }
            };
            let mut next = g.opening + (target - g.opening).clamp(-max, max);
            let gripper_ref = key.replacen('/', ".", 1);

            if let Some(fixture) = g.grasped_fixture.clone() {
                if next > g.opening {
                    self.detach(&key, &fixture);
                    events.push(IrEvent::Released {
                        gripper: gripper_ref,
                        fixture,
                    });
                } else {
                    next = g.opening;
                }
            } else if next < g.opening && next <= FIXTURE_WIDTH && g.opening > FIXTURE_WIDTH - max {
                if let Some(fixture) = self.grasp_candidate(&key) {
                    self.attach(&gripper_ref, &fixture);
                    events.push(IrEvent::Attached {
                        gripper: gripper_ref,
                        fixture,
                    });
                    continue;
                }
            }
            self.grippers.get_mut(&key).expect("known").opening = next;
        }
        events
    }

    fn detach(&mut self, gripper_key: &str, fixture: &str) {
        if let Some(g) = self.grippers.get_mut(gripper_key) {
            g.grasped_fixture = None;
        }
        if let Some(f) = self.fixtures.get_mut(fixture) {
            f.attached_gripper = None;
            f.ir_id = None;
        }
    }

    /// Nearest free fixture aligned with the gripper within tolerance.
    pub fn grasp_candidate(&self, gripper_key: &str) -> Option<String> {
        let pose = self.gripper_pose(gripper_key)?;
        let own_module = gripper_key.split('/').next()?;
        grasp_detect(&pose, self.fixtures.iter().filter(|(id, f)| {
            f.attached_gripper.is_none() && !id.starts_with(&format!("{own_module}."))
        }))
    }

    /// Module ids attached to `module` through its fixtures or grippers.
    pub fn neighbours(&self, module: &str) -> Vec<String> {
        let prefix = format!("{module}.");
        let mut out: BTreeSet<String> = self
            .fixtures
            .iter()
            .filter(|(id, _)| id.starts_with(&prefix))
            .filter_map(|(_, f)| f.ir_id.clone())
            .collect();
        let gprefix = format!("{module}/");
        for (key, g) in &self.grippers {
            if key.starts_with(&gprefix) {
                if let Some(f) = &g.grasped_fixture {
                    out.extend(f.split_once('.').map(|(m, _)| m.to_string()));
                }
            }
        }
        out.into_iter().collect()
    }

    /// Current gripper-fixture pairs, as description attachments.
    pub fn attachments(&self) -> Vec<[String; 2]> {
        self.grippers
            .iter()
            .filter_map(|(key, g)| {
                g.grasped_fixture
                    .as_ref()
                    .map(|f| [key.replacen('/', ".", 1), f.clone()])
            })
            .collect()
    }

    pub fn sensors(&mut self) -> Vec<SensorReading> {
        let noise = self.sensor_noise;
        let mut out = Vec::with_capacity(self.joints.len() + self.grippers.len());
        let empty: BTreeSet<&String> = self
            .batteries
            .iter()
            .filter(|(_, b)| b.is_empty())
            .map(|(m, _)| m)
            .collect();
        let dead = |key: &str| empty.iter().any(|m| key.starts_with(&format!("{m}/")));
        for (key, j) in &self.joints {
            if dead(key) {
                continue;
            }
            let n = if noise > 0.0 {
                self.rng.random_range(-noise..noise)
            } else {
                0.0
            };
            out.push(SensorReading {
                joint: key.clone(),
                angle: j.sensed() + n,
                reflector: j.reflector_state(),
            });
        }
        for (key, g) in &self.grippers {
            if !dead(key) {
                out.push(SensorReading {
                    joint: key.clone(),
                    angle: g.opening,
                    reflector: false,
                });
            }
        }
        out
    }

    pub fn truth(&self, t: f64) -> Vec<TruthSample> {
        self.joints
            .iter()
            .map(|(key, j)| TruthSample {
                t,
                joint: key.clone(),
                angle: j.joint.angle,
                velocity: j.joint.velocity,
            })
            .collect()
    }
}

/// First fixture within position and angle tolerance of the gripper pose.
pub fn grasp_detect<'a>(
    gripper: &Pose,
    fixtures: impl Iterator<Item = (&'a String, &'a FixturePlant)>,
) -> Option<String> {
    fixtures
        .filter_map(|(id, f)| {
            let (dp, dr) = gripper.distance(&f.pose);
            (dp <= GRASP_POSITION_TOL && dr <= GRASP_ANGLE_TOL).then(|| (dp, id.clone()))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, id)| id)
}
