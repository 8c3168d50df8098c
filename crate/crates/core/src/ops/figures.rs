//! Strategy comparison under a link outage and the fine-placement task.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::{DescriptionSource, LinkSpec, Scenario};
use super::world::{run_scenario, RunRecord};
use super::OpsError;
use crate::bus::LinkCondition;
use crate::ctrl::StrategyKind;
use crate::model::{presets, Level, RobotDescription, RoleEntry, RoleTable, JOINT_V_MAX};
use crate::stack::{ScriptEvent, ScriptOp, StackParams};

pub const OPERATOR: &str = "operator-A";
pub const LIMB_PC: &str = "limb1-pc";
pub const FIG_JOINT: &str = "limb1/j1";
pub const LINK_LATENCY: f64 = 0.01;

pub fn inline(desc: &RobotDescription) -> DescriptionSource {
    match serde_json::to_value(desc).expect("description serializes") {
        serde_json::Value::Object(map) => DescriptionSource::Inline(map),
        _ => unreachable!("descriptions serialize to objects"),
    }
}

/// One limb computer and one operator.
pub fn single_limb_roles() -> RoleTable {
    let mut roles = RoleTable::new();
    roles.insert(
        LIMB_PC.into(),
        RoleEntry::new(&[Level::Joint, Level::Ik, Level::Limb], Some("limb1")),
    );
    roles.insert(OPERATOR.into(), RoleEntry::new(&[Level::Operator], None));
    roles
}

/// `(start, end, speed)` presses on one target as down/up events.
pub fn presses(target: &str, list: &[(f64, f64, f64)]) -> Vec<ScriptEvent> {
    list.iter()
        .flat_map(|&(a, b, speed)| {
            [
                ScriptEvent::new(a, OPERATOR, ScriptOp::Down, target, speed),
                ScriptEvent::new(b, OPERATOR, ScriptOp::Up, target, 0.0),
            ]
        })
        .collect()
}

/// Operator rate in effect at `t` for `target`, per the script.
pub fn rate_at(script: &[ScriptEvent], target: &str, t: f64) -> f64 {
    script
        .iter()
        .filter(|e| e.target == target && e.t <= t + 1e-9)
        .filter(|e| matches!(e.op, ScriptOp::Down | ScriptOp::Up))
        .max_by(|a, b| a.t.total_cmp(&b.t))
        .map_or(0.0, |e| if e.op == ScriptOp::Down { e.speed } else { 0.0 })
}

/// Requested displacement over ticks in `[a, b)`: what the operator integrates.
pub fn requested(script: &[ScriptEvent], target: &str, a: f64, b: f64, tick: f64) -> f64 {
    let first = (a / tick - 1e-9).ceil() as i64;
    let last = (b / tick - 1e-9).ceil() as i64;
    (first..last).map(|k| rate_at(script, target, k as f64 * tick) * tick).sum()
}

fn position_at(record: &RunRecord, joint: &str, t: f64) -> f64 {
    record
        .truth
        .iter()
        .filter(|s| s.joint == joint && s.t <= t + 1e-9)
        .last()
        .map_or(0.0, |s| s.angle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig13Row {
    pub strategy: StrategyKind,
    pub moved_during_loss: bool,
    pub reconnect_jump: f64,
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig13Config {
    pub presses: Vec<(f64, f64, f64)>,
    pub loss: (f64, f64),
    pub duration: f64,
    pub params: StackParams,
}

impl Default for Fig13Config {
    fn default() -> Self {
        Self {
            presses: vec![(0.5, 1.6, 0.4), (2.0, 2.04, 0.4), (2.6, 3.4, 0.4)],
            loss: (1.0, 1.3),
            duration: 4.5,
            params: StackParams {
                timeout: None,
                ..StackParams::default()
            },
        }
    }
}

impl Fig13Config {
    pub fn scenario(&self, strategy: StrategyKind) -> Scenario {
        Scenario {
            description: inline(&presets::minimal()),
            role_table: single_limb_roles(),
            links: vec![LinkSpec {
                a: OPERATOR.into(),
                b: LIMB_PC.into(),
                condition: LinkCondition::with_gaps(&[self.loss]).latency(LINK_LATENCY),
                directed: false,
            }],
            operator_script: presses(FIG_JOINT, &self.presses),
            duration: self.duration,
            seed: 13,
            strategy,
            parameters: self.params,
            crashes: vec![],
            plant: Default::default(),
            base_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fig13Run {
    pub strategy: StrategyKind,
    pub record: RunRecord,
    pub row: Fig13Row,
    /// Displacement attributed to each press: until the next press starts.
    pub press_displacements: Vec<f64>,
    /// Largest `|u − y|` the operator produced.
    pub max_command_gap: f64,
    /// First sample after reconnection where the joint outruns the operator.
    pub jump_onset: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Fig13Suite {
    pub config: Fig13Config,
    pub runs: Vec<Fig13Run>,
}

/// Run all four strategies on one script and outage.
pub fn fig13_suite() -> Result<Fig13Suite, OpsError> {
    fig13_with(Fig13Config::default())
}

pub fn fig13_with(config: Fig13Config) -> Result<Fig13Suite, OpsError> {
    let mut runs = Vec::new();
    for kind in StrategyKind::ALL {
        let scenario = config.scenario(kind);
        let record = run_scenario(&scenario)?;
        runs.push(analyse(&config, &scenario, kind, record));
    }
    Ok(Fig13Suite { config, runs })
}

fn analyse(config: &Fig13Config, scenario: &Scenario, kind: StrategyKind, record: RunRecord) -> Fig13Run {
    let tick = config.params.tick;
    let script = &scenario.operator_script;
    let (loss_start, loss_end) = config.loss;
    let p0 = position_at(&record, FIG_JOINT, 0.0);
    let p_ls = position_at(&record, FIG_JOINT, loss_start);
    let p_r = position_at(&record, FIG_JOINT, loss_end);

    let mut jump: f64 = 0.0;
    let mut onset = None;
    for s in record.truth.iter().filter(|s| s.joint == FIG_JOINT && s.t > loss_end + 1e-9) {
        let excess = s.angle - p_r - requested(script, FIG_JOINT, loss_end, s.t, tick);
        jump = jump.max(excess);
        let rate = rate_at(script, FIG_JOINT, s.t - tick);
        if onset.is_none() && s.velocity > rate + 1e-6 {
            onset = Some(s.t);
        }
    }
    let connected = requested(script, FIG_JOINT, 0.0, loss_start, tick)
        + requested(script, FIG_JOINT, loss_end, config.duration, tick);
    let p_end = position_at(&record, FIG_JOINT, config.duration);

    let starts: Vec<f64> = config.presses.iter().map(|p| p.0).collect();
    let press_displacements = starts
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let b = starts.get(i + 1).copied().unwrap_or(config.duration);
            position_at(&record, FIG_JOINT, b) - position_at(&record, FIG_JOINT, a)
        })
        .collect();
    let max_command_gap = record
        .commands
        .iter()
        .filter(|c| c.joint == FIG_JOINT)
        .map(|c| (c.u - c.y).abs())
        .fold(0.0, f64::max);
    let gap = if kind == StrategyKind::Speed { 0.0 } else { max_command_gap };

    Fig13Run {
        strategy: kind,
        row: Fig13Row {
            strategy: kind,
            moved_during_loss: (p_r - p_ls).abs() > config.params.delta_e,
            reconnect_jump: jump,
            final_error: (p_end - p0 - connected).abs(),
        },
        record,
        press_displacements,
        max_command_gap: gap,
        jump_onset: onset,
    }
}

impl Fig13Suite {
    pub fn run(&self, kind: StrategyKind) -> &Fig13Run {
        self.runs.iter().find(|r| r.strategy == kind).expect("all strategies run")
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("strategy,moved_during_loss,reconnect_jump,final_error\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6}",
                r.strategy.name(),
                r.row.moved_during_loss,
                r.row.reconnect_jump,
                r.row.final_error
            );
        }
        out
    }

    /// Position trace with the operator's command and reading, one row per tick.
    pub fn trace_csv(&self, kind: StrategyKind) -> String {
        let run = self.run(kind);
        let (a, b) = self.config.loss;
        let mut out = String::from("t,position,velocity,command,reading,r_dot,connected\n");
        let mut commands = run.record.commands.iter().filter(|c| c.joint == FIG_JOINT).peekable();
        let mut last = None;
        for s in run.record.truth.iter().filter(|s| s.joint == FIG_JOINT) {
            while let Some(c) = commands.peek() {
                if c.t > s.t + 1e-9 {
                    break;
                }
                last = commands.next();
            }
            let (u, y, r) = last.map_or((f64::NAN, f64::NAN, 0.0), |c| (c.u, c.y, c.r_dot));
            let connected = !(s.t >= a && s.t < b);
            let _ = writeln!(
                out,
                "{:.2},{:.6},{:.6},{:.6},{:.6},{:.3},{}",
                s.t, s.angle, s.velocity, u, y, r, connected as u8
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("fig13_summary.csv"), self.summary_csv())?;
        for kind in StrategyKind::ALL {
            fs::write(dir.join(format!("fig13_{}.csv", kind.name())), self.trace_csv(kind))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig14Script {
    pub goal: f64,
    /// Start, duration and rate of the coarse move.
    pub long_press: (f64, f64, f64),
    pub presses: usize,
    pub press_duration: f64,
    pub press_speed: f64,
    pub gap: f64,
}

impl Default for Fig14Script {
    fn default() -> Self {
        Self {
            goal: 1.0,
            long_press: (0.5, 1.6, JOINT_V_MAX),
            presses: 9,
            press_duration: 0.1,
            press_speed: 0.1,
            gap: 0.4,
        }
    }
}

impl Fig14Script {
    pub fn press_list(&self) -> Vec<(f64, f64, f64)> {
        let (s, d, v) = self.long_press;
        let mut list = vec![(s, s + d, v)];
        let mut t = s + d + 2.0 * self.gap;
        for _ in 0..self.presses {
            list.push((t, t + self.press_duration, self.press_speed));
            t += self.press_duration + self.gap;
        }
        list
    }

    pub fn scenario(&self) -> Scenario {
        let list = self.press_list();
        let end = list.last().map_or(0.0, |p| p.1) + 1.0;
        let mut s = Fig13Config::default().scenario(StrategyKind::ClampedIntegral);
        s.links[0].condition = LinkCondition::default().latency(LINK_LATENCY);
        s.operator_script = presses(FIG_JOINT, &list);
        s.parameters = StackParams::default();
        s.duration = (end / s.parameters.tick).round() * s.parameters.tick;
        s.seed = 14;
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fig14Report {
    pub goal: f64,
    pub final_position: f64,
    pub final_error: f64,
    pub coarse_displacement: f64,
    pub press_displacements: Vec<f64>,
    pub expected_per_press: f64,
    /// Every brief press moved `speed·duration` within one tick's travel.
    pub proportional: bool,
    /// Distance to goal never grew.
    pub monotone: bool,
    #[serde(skip)]
    pub record: Option<RunRecord>,
}

/// Coarse move at full speed, then brief presses to fine-tune.
pub fn fig14_task(script: &Fig14Script) -> Result<Fig14Report, OpsError> {
    let scenario = script.scenario();
    let tick = scenario.parameters.tick;
    let record = run_scenario(&scenario)?;
    let list = script.press_list();
    let p0 = position_at(&record, FIG_JOINT, 0.0);
    let mut displacements: Vec<f64> = list
        .iter()
        .enumerate()
        .map(|(i, &(a, _, _))| {
            let b = list.get(i + 1).map_or(scenario.duration, |p| p.0);
            position_at(&record, FIG_JOINT, b) - position_at(&record, FIG_JOINT, a)
        })
        .collect();
    let coarse = displacements.remove(0);
    let expected = script.press_speed * script.press_duration;
    let proportional = displacements
        .iter()
        .all(|d| (d - expected).abs() <= script.press_speed * tick + 1e-9);
    let trace = record.joint_trace(FIG_JOINT);
    let monotone = trace
        .windows(2)
        .all(|w| (script.goal - w[1].angle).abs() <= (script.goal - w[0].angle).abs() + 1e-12);
    let final_position = trace.last().map_or(p0, |s| s.angle);
    Ok(Fig14Report {
        goal: script.goal,
        final_position,
        final_error: (script.goal - final_position).abs(),
        coarse_displacement: coarse,
        press_displacements: displacements,
        expected_per_press: expected,
        proportional,
        monotone,
        record: Some(record),
    })
}

impl Fig14Report {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,position,velocity\n");
        if let Some(r) = &self.record {
            for s in r.joint_trace(FIG_JOINT) {
                let _ = writeln!(out, "{:.2},{:.6},{:.6}", s.t, s.angle, s.velocity);
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("fig14_trace.csv"), self.trace_csv())?;
        fs::write(dir.join("fig14_report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requested_counts_ticks_in_window() {
        let s = presses("x", &[(0.5, 0.6, 0.1)]);
        assert!((requested(&s, "x", 0.0, 2.0, 0.02) - 0.01).abs() < 1e-15);
        assert_eq!(requested(&s, "x", 0.6, 2.0, 0.02), 0.0);
        assert_eq!(rate_at(&s, "x", 0.55), 0.1);
        assert_eq!(rate_at(&s, "x", 0.6), 0.0);
    }

    #[test]
    fn fig14_press_schedule() {
        let s = Fig14Script::default();
        let list = s.press_list();
        assert_eq!(list.len(), 10);
        assert!((list[1].0 - 2.9).abs() < 1e-12);
    }
}
