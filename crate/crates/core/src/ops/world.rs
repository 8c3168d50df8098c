//! Lockstep simulation: hosts, bus and plant advanced one tick at a time.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::{merge_descriptions, CrashSpec, Scenario};
use super::telemetry::{telemetry_aggregate, telemetry_csv, LinkQuality, NodeTelemetry, CPU_LOAD_STUB};
use super::OpsError;
use crate::bus::{write_log, Bus, DeliveryRecord, Envelope};
use crate::ctrl::{CommandOut, StrategyKind};
use crate::model::{Level, RobotDescription};
use crate::plant::{write_truth, IrEvent, Plant, TruthSample};
use crate::stack::{
    encode, topic, CommandSample, EventKind, JointTelemetry, Launcher, LevelNode, Outbox, ScriptEvent, StackEvent,
    StackParams,
};

#[derive(Debug, Clone, Copy)]
pub struct WorldOptions {
    pub record_log: bool,
    pub record_truth: bool,
}

impl Default for WorldOptions {
    fn default() -> Self {
        Self {
            record_log: true,
            record_truth: true,
        }
    }
}

/// A joint moving longer after its last delivered command than the watchdog allows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub joint: String,
    pub velocity: f64,
    pub last_command: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrRecord {
    pub t: f64,
    pub event: IrEvent,
}

/// One computer: a node id running some set of levels.
#[derive(Debug)]
pub struct Host {
    pub node_id: String,
    pub module: Option<String>,
    pub levels: Vec<LevelNode>,
    subscriptions: Vec<Vec<String>>,
    quality: LinkQuality,
    last_rx: Option<f64>,
    pending_events: Vec<StackEvent>,
    pub online: bool,
}

impl Host {
    pub fn runs(&self, level: Level) -> bool {
        self.levels.iter().any(|l| l.level() == level)
    }

    pub fn link_quality(&self) -> f64 {
        self.quality.value()
    }
}

pub struct World {
    pub bus: Bus,
    pub plant: Plant,
    pub hosts: BTreeMap<String, Host>,
    pub desc: RobotDescription,
    pub params: StackParams,
    pub strategy: StrategyKind,
    script: Vec<ScriptEvent>,
    script_pos: usize,
    injected: Vec<ScriptEvent>,
    crashes: Vec<CrashSpec>,
    steps: u64,
    telemetry_every: u64,
    opts: WorldOptions,
    plant_cmds: BTreeMap<String, CommandOut>,
    pub truth: Vec<TruthSample>,
    pub commands: Vec<CommandSample>,
    pub telemetry: Vec<NodeTelemetry>,
    pub events: Vec<StackEvent>,
    pub ir_events: Vec<IrRecord>,
    pub violations: Vec<Violation>,
}

impl World {
    pub fn new(scenario: &Scenario, opts: WorldOptions) -> Result<Self, OpsError> {
        scenario.validate()?;
        let descs = scenario.descriptions()?;
        let desc = merge_descriptions(&descs);
        let params = scenario.parameters;

        let mut plant = Plant::new(&descs, scenario.seed);
        let setup = &scenario.plant;
        for (key, angle) in &setup.initial_angles {
            let j = plant.joints.get_mut(key).expect("validated");
            j.joint.angle = angle.clamp(j.joint.limits[0], j.joint.limits[1]);
        }
        for (key, offset) in &setup.zero_offsets {
            plant.joints.get_mut(key).expect("validated").zero_offset = *offset;
        }
        plant.sensor_noise = setup.sensor_noise;
        for (module, battery) in &setup.batteries {
            plant.batteries.insert(module.clone(), *battery);
        }
        for (limb, pose) in &setup.limb_bases {
            plant.limbs.get_mut(limb).expect("validated").base = *pose;
        }
        for (fixture, pose) in &setup.fixture_poses {
            plant.fixtures.get_mut(fixture).expect("validated").pose = *pose;
        }

        let mut bus = Bus::simulated();
        bus.set_logging(opts.record_log);
        let mut launcher = Launcher::new();
        let mut hosts = BTreeMap::new();
        for (node_id, entry) in &scenario.role_table {
            let levels = launcher.launch(node_id, &desc, &scenario.role_table, params, scenario.strategy)?;
            let subscriptions: Vec<Vec<String>> = levels.iter().map(LevelNode::subscriptions).collect();
            for prefix in subscriptions.iter().flatten() {
                bus.subscribe(node_id, prefix);
            }
            hosts.insert(
                node_id.clone(),
                Host {
                    node_id: node_id.clone(),
                    module: entry.module.clone().or_else(|| entry.chain.clone()),
                    levels,
                    subscriptions,
                    quality: LinkQuality::default(),
                    last_rx: None,
                    pending_events: Vec::new(),
                    online: true,
                },
            );
        }
        for link in &scenario.links {
            let mut cond = link.condition.clone();
            cond.jitter_seed = cond.jitter_seed.wrapping_add(scenario.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            if link.directed {
                bus.set_link_directed(&link.a, &link.b, cond);
            } else {
                bus.set_link(&link.a, &link.b, cond);
            }
        }
        let mut script = scenario.operator_script.clone();
        script.sort_by(|a, b| a.t.total_cmp(&b.t));
        let telemetry_every = ((1.0 / params.tick).round() as u64).max(1);

        Ok(Self {
            bus,
            plant,
            hosts,
            desc,
            params,
            strategy: scenario.strategy,
            script,
            script_pos: 0,
            injected: Vec::new(),
            crashes: scenario.crashes.clone(),
            steps: 0,
            telemetry_every,
            opts,
            plant_cmds: BTreeMap::new(),
            truth: Vec::new(),
            commands: Vec::new(),
            telemetry: Vec::new(),
            events: Vec::new(),
            ir_events: Vec::new(),
            violations: Vec::new(),
        })
    }

    pub fn now(&self) -> f64 {
        self.bus.now()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Queue a live input for the next tick.
    pub fn inject(&mut self, mut event: ScriptEvent) {
        event.t = self.now();
        self.injected.push(event);
    }

    pub fn operators(&self) -> Vec<String> {
        self.hosts
            .values()
            .filter(|h| h.runs(Level::Operator))
            .map(|h| h.node_id.clone())
            .collect()
    }

    pub fn operator(&self, node: &str) -> Option<&crate::stack::OperatorNode> {
        self.hosts.get(node)?.levels.iter().find_map(|l| match l {
            LevelNode::Operator(o) => Some(o),
            _ => None,
        })
    }

    pub fn joint_node(&self, module: &str) -> Option<&crate::stack::JointNode> {
        self.hosts.values().flat_map(|h| &h.levels).find_map(|l| match l {
            LevelNode::Joint(j) if j.module() == module => Some(j),
            _ => None,
        })
    }

    /// Latest sensed angle and target for every stack-driven joint.
    pub fn joint_states(&self) -> Vec<JointTelemetry> {
        self.hosts
            .values()
            .flat_map(|h| &h.levels)
            .filter_map(|l| match l {
                LevelNode::Joint(j) => Some(j.telemetry()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Frames as received by mission control, or every published frame when
    /// no node runs mission control.
    pub fn mission_frames(&self) -> &[NodeTelemetry] {
        self.hosts
            .values()
            .flat_map(|h| &h.levels)
            .find_map(|l| match l {
                LevelNode::MissionControl(m) => Some(m.frames.as_slice()),
                _ => None,
            })
            .unwrap_or(&self.telemetry)
    }

    fn flush(&mut self, node: &str, out: Outbox) {
        for (topic, payload) in out.messages {
            self.bus.publish(&topic, payload, node);
        }
        if !out.events.is_empty() {
            if let Some(h) = self.hosts.get_mut(node) {
                h.pending_events.extend(out.events.iter().cloned());
            }
            self.events.extend(out.events);
        }
        self.commands.extend(out.trace);
        for (key, command) in out.plant {
            self.plant_cmds.insert(key, command);
        }
        for (module, left, right) in out.wheels {
            self.plant.set_wheel_speeds(&module, left, right);
        }
    }

    fn dispatch(&mut self, envelopes: Vec<Envelope>, now: f64) {
        for env in envelopes {
            let Some(host) = self.hosts.get_mut(&env.dst) else { continue };
            if !host.online {
                continue;
            }
            if env.src != env.dst {
                host.quality.observe(&env.src, env.link_seq);
                host.last_rx = Some(now);
            }
            let mut out = Outbox::default();
            for (level, subs) in host.levels.iter_mut().zip(&host.subscriptions) {
                if subs.iter().any(|p| env.topic.starts_with(p.as_str())) {
                    level.on_message(&env, now, &mut out);
                }
            }
            if !out.is_empty() {
                let id = env.dst.clone();
                self.flush(&id, out);
            }
        }
    }

    fn deliver_now(&mut self, now: f64) {
        for _ in 0..16 {
            let due = self.bus.deliver_due();
            if due.is_empty() {
                return;
            }
            self.dispatch(due, now);
        }
    }

    fn for_each_online(&mut self, now: f64, mut f: impl FnMut(&mut LevelNode, &mut Outbox)) {
        let ids: Vec<String> = self.hosts.keys().cloned().collect();
        for id in ids {
            let host = self.hosts.get_mut(&id).expect("present");
            if !host.online {
                continue;
            }
            let mut out = Outbox::default();
            for level in host.levels.iter_mut() {
                f(level, &mut out);
            }
            if !out.is_empty() {
                self.flush(&id, out);
            }
        }
        self.deliver_now(now);
    }

    fn take_offline(&mut self, id: &str, now: f64, reason: &str) {
        let Some(host) = self.hosts.get_mut(id) else { return };
        if !host.online {
            return;
        }
        host.online = false;
        let brake = host.runs(Level::Joint).then(|| host.module.clone()).flatten();
        self.bus.set_online(id, false);
        self.events.push(StackEvent {
            t: now,
            node: id.to_string(),
            kind: EventKind::Offline,
            detail: reason.to_string(),
        });
        if let Some(module) = brake {
            self.plant.brake(&module);
        }
    }

    fn apply_failures(&mut self, now: f64) {
        let due: Vec<String> = self
            .crashes
            .iter()
            .filter(|c| c.t <= now + 1e-9)
            .map(|c| c.node.clone())
            .collect();
        for id in due {
            self.take_offline(&id, now, "crash");
        }
        let drained: Vec<String> = self
            .hosts
            .values()
            .filter(|h| h.online)
            .filter(|h| {
                h.module
                    .as_ref()
                    .and_then(|m| self.plant.batteries.get(m))
                    .is_some_and(|b| b.is_empty())
            })
            .map(|h| h.node_id.clone())
            .collect();
        for id in drained {
            self.take_offline(&id, now, "battery");
        }
    }

    fn feed_inputs(&mut self, now: f64) {
        let mut due = Vec::new();
        while self.script_pos < self.script.len() && self.script[self.script_pos].t <= now + 1e-9 {
            due.push(self.script[self.script_pos].clone());
            self.script_pos += 1;
        }
        due.append(&mut self.injected);
        for ev in due {
            let Some(host) = self.hosts.get_mut(&ev.operator) else { continue };
            if !host.online {
                continue;
            }
            let mut out = Outbox::default();
            for level in host.levels.iter_mut() {
                if let LevelNode::Operator(op) = level {
                    op.input(&ev, now, &mut out);
                }
            }
            let id = ev.operator.clone();
            self.flush(&id, out);
        }
    }

    fn publish_telemetry(&mut self, now: f64) {
        let ids: Vec<String> = self.hosts.keys().cloned().collect();
        for id in ids {
            let host = self.hosts.get_mut(&id).expect("present");
            if !host.online {
                continue;
            }
            let joints = host
                .levels
                .iter()
                .filter_map(|l| match l {
                    LevelNode::Joint(j) => Some(j.telemetry()),
                    _ => None,
                })
                .flatten()
                .collect();
            let module = host.module.clone();
            let frame = NodeTelemetry {
                t: now,
                node: id.clone(),
                ping_ok: host.last_rx.is_some_and(|t| now - t <= 1.0),
                link_quality: host.quality.value(),
                cpu_load: CPU_LOAD_STUB,
                battery: module.as_ref().and_then(|m| self.plant.batteries.get(m)).map(|b| b.level),
                address: id.clone(),
                joints,
                neighbours: module.map(|m| self.plant.neighbours(&m)).unwrap_or_default(),
                events: std::mem::take(&mut host.pending_events),
            };
            self.bus.publish(&topic::telemetry(&id), encode(&frame), &id);
            self.telemetry.push(frame);
        }
    }

    fn check_safety(&mut self, t: f64) {
        let Some(timeout) = self.params.timeout else { return };
        let deadline = timeout + 2.0 * self.params.tick + 1e-9;
        for host in self.hosts.values() {
            for level in &host.levels {
                let LevelNode::Joint(node) = level else { continue };
                for j in &node.chain.joints {
                    let key = format!("{}/{}", node.module(), j.name);
                    let v = self.plant.joints[&key].joint.velocity;
                    if v == 0.0 {
                        continue;
                    }
                    let last = node.last_receive(&j.name);
                    if last.is_none_or(|l| t - l > deadline) {
                        self.violations.push(Violation {
                            t,
                            joint: key,
                            velocity: v,
                            last_command: last,
                        });
                    }
                }
            }
        }
    }

    /// Advance one tick.
    pub fn step(&mut self) -> Result<(), OpsError> {
        let now = self.bus.now();
        let dt = self.params.tick;
        self.apply_failures(now);

        let readings = self.plant.sensors();
        self.for_each_online(now, |level, out| {
            if let LevelNode::Joint(j) = level {
                j.sense(&readings, now, out);
            }
        });
        self.feed_inputs(now);
        self.deliver_now(now);
        for phase in [Level::Operator, Level::Limb, Level::Ik, Level::Calibrator, Level::WheelDirect] {
            self.for_each_online(now, |level, out| {
                if level.level() == phase {
                    level.tick(now, out);
                }
            });
        }
        self.for_each_online(now, |level, out| {
            if let LevelNode::Joint(j) = level {
                j.actuate(now, out);
            }
        });

        let commands = std::mem::take(&mut self.plant_cmds);
        let (_, ir) = self.plant.step(&commands, dt)?;
        for event in ir {
            let (kind, detail) = match &event {
                IrEvent::Attached { gripper, fixture } => (EventKind::Attached, format!("{gripper} {fixture}")),
                IrEvent::Released { gripper, fixture } => (EventKind::Released, format!("{gripper} {fixture}")),
            };
            self.events.push(StackEvent {
                t: now,
                node: "plant".into(),
                kind,
                detail,
            });
            self.ir_events.push(IrRecord { t: now, event });
        }
        if self.steps % self.telemetry_every == 0 {
            self.publish_telemetry(now);
        }
        self.steps += 1;

        let delivered = self.bus.advance(dt)?;
        let t = self.bus.now();
        self.dispatch(delivered, t);
        self.deliver_now(t);
        if self.opts.record_truth {
            self.truth.extend(self.plant.truth(t));
        }
        self.check_safety(t);
        Ok(())
    }

    /// Step until `duration` seconds have been simulated.
    pub fn run_for(&mut self, duration: f64) -> Result<(), OpsError> {
        let target = self.steps + (duration / self.params.tick).round() as u64;
        while self.steps < target {
            self.step()?;
        }
        Ok(())
    }

    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.plant).expect("plant serializes");
        let mut h = Sha256::new();
        h.update(self.bus.now().to_bits().to_le_bytes());
        h.update(&bytes);
        hex::encode(h.finalize())
    }

    pub fn finish(mut self) -> RunRecord {
        RunRecord {
            final_state_hash: self.state_hash(),
            duration: self.now(),
            delivery_log: self.bus.take_log(),
            truth: self.truth,
            commands: self.commands,
            telemetry: self.telemetry,
            events: self.events,
            ir_events: self.ir_events,
            violations: self.violations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub delivery_log: Vec<DeliveryRecord>,
    pub truth: Vec<TruthSample>,
    pub commands: Vec<CommandSample>,
    pub telemetry: Vec<NodeTelemetry>,
    pub events: Vec<StackEvent>,
    pub ir_events: Vec<IrRecord>,
    pub violations: Vec<Violation>,
    pub final_state_hash: String,
    pub duration: f64,
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

impl RunRecord {
    pub fn delivery_log_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_log(&self.delivery_log, &mut buf).expect("in-memory write");
        buf
    }

    /// Truth samples of one joint, in time order.
    pub fn joint_trace(&self, joint: &str) -> Vec<&TruthSample> {
        self.truth.iter().filter(|s| s.joint == joint).collect()
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("delivery.jsonl"), self.delivery_log_jsonl())?;
        let mut truth = BufWriter::new(fs::File::create(dir.join("truth.jsonl"))?);
        write_truth(&self.truth, &mut truth)?;
        truth.flush()?;
        write_jsonl(&dir.join("commands.jsonl"), &self.commands)?;
        write_jsonl(&dir.join("telemetry.jsonl"), &self.telemetry)?;
        write_jsonl(&dir.join("events.jsonl"), &self.events)?;
        fs::write(
            dir.join("telemetry.csv"),
            telemetry_csv(&telemetry_aggregate(&self.telemetry, self.duration)),
        )?;
        let summary = serde_json::json!({
            "duration": self.duration,
            "final_state_hash": self.final_state_hash,
            "violations": self.violations,
            "deliveries": self.delivery_log.len(),
        });
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

/// Validate and simulate a scenario to its duration.
pub fn run_scenario(scenario: &Scenario) -> Result<RunRecord, OpsError> {
    run_with(scenario, WorldOptions::default())
}

pub fn run_with(scenario: &Scenario, opts: WorldOptions) -> Result<RunRecord, OpsError> {
    let mut world = World::new(scenario, opts)?;
    world.run_for(scenario.duration)?;
    Ok(world.finish())
}
