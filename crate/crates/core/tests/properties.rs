use std::collections::BTreeMap;

use motion_stack::bus::{Bus, LinkCondition};
use motion_stack::ctrl::CommandOut;
use motion_stack::kin::forward_kinematics;
use motion_stack::model::{motor_count, parse_description, presets, ModelError, ModuleKind, RobotDescription};
use motion_stack::plant::Plant;
use proptest::prelude::*;

/// Grow a tree: each new module hangs off a free gripper or fixture of a
/// module already placed. Modules with nowhere to go are skipped.
fn grow(kinds: &[(u8, usize)]) -> (RobotDescription, u32, u32) {
    let mut modules = Vec::new();
    let mut free_grippers: Vec<String> = Vec::new();
    let mut free_fixtures: Vec<String> = Vec::new();
    let mut attachments = Vec::new();
    let (mut limbs, mut wheels) = (0, 0);
    for (i, &(kind, pick)) in kinds.iter().enumerate() {
        let m = match kind {
            0 => presets::limb(&format!("limb{i}")),
            1 => presets::wheel(&format!("wheel{i}")),
            _ => presets::body(&format!("body{i}")),
        };
        let grippers: Vec<String> = m.kind.grippers().iter().map(|g| format!("{}.{g}", m.id)).collect();
        let fixtures: Vec<String> = m.fixtures.iter().map(|f| format!("{}.{f}", m.id)).collect();
        if !modules.is_empty() {
            let mut options: Vec<[String; 2]> = Vec::new();
            for g in &grippers {
                options.extend(free_fixtures.iter().map(|f| [g.clone(), f.clone()]));
            }
            for f in &fixtures {
                options.extend(free_grippers.iter().map(|g| [g.clone(), f.clone()]));
            }
            if options.is_empty() {
                continue;
            }
            let pair = options[pick % options.len()].clone();
            free_grippers.retain(|g| *g != pair[0]);
            free_fixtures.retain(|f| *f != pair[1]);
            attachments.push(pair);
        }
        free_grippers.extend(grippers.into_iter().filter(|g| !attachments.iter().any(|[a, _]| a == g)));
        free_fixtures.extend(fixtures.into_iter().filter(|f| !attachments.iter().any(|[_, b]| b == f)));
        match m.kind {
            ModuleKind::Limb => limbs += 1,
            ModuleKind::Wheel => wheels += 1,
            _ => {}
        }
        modules.push(m);
    }
    let desc = RobotDescription::build("random".into(), modules, attachments).expect("tree is valid");
    (desc, limbs, wheels)
}

fn tree_kinds() -> impl Strategy<Value = Vec<(u8, usize)>> {
    prop::collection::vec((0u8..3, 0usize..64), 1..12)
}

fn condition() -> impl Strategy<Value = LinkCondition> {
    (
        prop::collection::vec((0.0..2.0f64, 0.01..0.5f64), 0..3),
        0.0..0.05f64,
        0.0..0.03f64,
        0.0..0.6f64,
        any::<u64>(),
    )
        .prop_map(|(raw, latency, jitter, drop, seed)| {
            let mut gaps = Vec::new();
            let mut t = 0.0;
            for (gap, len) in raw {
                t += gap;
                gaps.push((t, t + len));
                t += len + 0.01;
            }
            let mut c = if gaps.is_empty() {
                LinkCondition::default()
            } else {
                LinkCondition::with_gaps(&gaps)
            };
            c = c.latency(latency).drop_rate(drop, seed);
            c.jitter = jitter;
            c.jitter_seed = seed.rotate_left(7);
            c
        })
}

fn run_bus(cond: &LinkCondition, steps: usize) -> (Bus, Vec<(f64, f64, String)>) {
    let mut bus = Bus::simulated();
    bus.subscribe("joint", "cmd/");
    bus.subscribe("op", "sensor/");
    bus.set_link("op", "joint", cond.clone());
    let mut order = Vec::new();
    for k in 0..steps {
        bus.publish("cmd/limb1/j1", k.to_le_bytes().to_vec(), "op");
        bus.publish("sensor/limb1/j1", k.to_le_bytes().to_vec(), "joint");
        for e in bus.advance(0.02).unwrap() {
            order.push((e.send_time, e.deliver_time.unwrap(), e.topic.clone()));
        }
    }
    (bus, order)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn motor_count_is_nine_per_limb_two_per_wheel(kinds in tree_kinds()) {
        let (desc, limbs, wheels) = grow(&kinds);
        prop_assert_eq!(motor_count(&desc), 9 * limbs + 2 * wheels);
    }

    #[test]
    fn any_extra_attachment_closes_a_cycle(kinds in tree_kinds(), pick in any::<usize>()) {
        let (desc, _, _) = grow(&kinds);
        let used = |end: &String| desc.attachments.iter().any(|p| p.contains(end));
        let grippers: Vec<String> = desc
            .modules
            .iter()
            .flat_map(|m| m.kind.grippers().iter().map(move |g| format!("{}.{g}", m.id)))
            .filter(|g| !used(g))
            .collect();
        let fixtures: Vec<String> = desc
            .modules
            .iter()
            .flat_map(|m| m.fixtures.iter().map(move |f| format!("{}.{f}", m.id)))
            .filter(|f| !used(f))
            .collect();
        let owner = |end: &str| end.split('.').next().unwrap().to_string();
        let options: Vec<[String; 2]> = grippers
            .iter()
            .flat_map(|g| fixtures.iter().map(move |f| [g.clone(), f.clone()]))
            .filter(|[g, f]| owner(g) != owner(f))
            .collect();
        prop_assume!(!options.is_empty());
        let mut attachments = desc.attachments.clone();
        attachments.push(options[pick % options.len()].clone());
        let err = RobotDescription::build("loop".into(), desc.modules.clone(), attachments).unwrap_err();
        prop_assert!(matches!(err, ModelError::CyclicAssembly(_)), "{err}");
    }

    #[test]
    fn description_json_round_trips(kinds in tree_kinds()) {
        let (desc, _, _) = grow(&kinds);
        let back = parse_description(&desc.to_json()).unwrap();
        prop_assert_eq!(back, desc);
    }

    #[test]
    fn nothing_sent_in_a_gap_arrives(cond in condition()) {
        let (bus, _) = run_bus(&cond, 150);
        for r in bus.log() {
            if !cond.connected_at(r.t_send) {
                prop_assert!(r.dropped && r.t_deliver.is_none(), "{r:?}");
            }
        }
    }

    #[test]
    fn delivery_is_causal_and_ordered(cond in condition()) {
        let (_, order) = run_bus(&cond, 150);
        let mut last_per_topic: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        let mut prev = f64::NEG_INFINITY;
        for (sent, delivered, topic) in order {
            prop_assert!(delivered >= sent);
            prop_assert!(delivered >= prev, "delivered out of time order");
            prev = delivered;
            if let Some((s, d)) = last_per_topic.insert(topic, (sent, delivered)) {
                prop_assert!(sent > s && delivered >= d, "stream reordered");
            }
        }
    }

    #[test]
    fn bus_is_deterministic(cond in condition()) {
        let (a, oa) = run_bus(&cond, 100);
        let (b, ob) = run_bus(&cond, 100);
        prop_assert_eq!(a.log(), b.log());
        prop_assert_eq!(oa, ob);
    }

    #[test]
    fn plant_joints_never_teleport(
        commands in prop::collection::vec((0usize..14, -4.0..4.0f64, any::<bool>()), 1..60),
        dt in 0.005..0.05f64,
    ) {
        let mut plant = Plant::new(&[presets::dragon()], 1);
        let keys: Vec<String> = plant.joints.keys().cloned().collect();
        for (i, value, velocity) in commands {
            let before: Vec<f64> = keys.iter().map(|k| plant.joints[k].joint.angle).collect();
            let cmd = if velocity { CommandOut::Velocity(value) } else { CommandOut::Position(value) };
            plant.step(&BTreeMap::from([(keys[i].clone(), cmd)]), dt).unwrap();
            for (k, b) in keys.iter().zip(before) {
                let j = &plant.joints[k].joint;
                prop_assert!((j.angle - b).abs() <= j.v_max * dt + 1e-12, "{k} jumped");
            }
        }
    }

    #[test]
    fn reflector_follows_true_angle(
        start in -0.2..0.2f64,
        offset in -1.0..1.0f64,
        speeds in prop::collection::vec(-0.6..0.6f64, 1..80),
    ) {
        let mut plant = Plant::new(&[presets::minimal()], 2);
        let key = "limb1/j1".to_string();
        {
            let j = plant.joints.get_mut(&key).unwrap();
            j.joint.angle = start;
            j.zero_offset = offset;
        }
        for v in speeds {
            let (readings, _) = plant.step(&BTreeMap::from([(key.clone(), CommandOut::Velocity(v))]), 0.02).unwrap();
            let r = readings.iter().find(|r| r.joint == key).unwrap();
            let truth = plant.joints[&key].joint.angle;
            prop_assert_eq!(r.angle, truth + offset);
            prop_assert_eq!(r.reflector, (-0.01..0.01).contains(&truth));
        }
    }

    #[test]
    fn attachments_stay_symmetric(
        actions in prop::collection::vec((0usize..6, prop_oneof![Just(-1.0), Just(1.0)]), 0..20),
    ) {
        let desc = presets::tricycle();
        let modules: Vec<String> = desc.modules.iter().map(|m| m.id.clone()).collect();
        let mut plant = Plant::new(&[desc], 3);
        let grippers: Vec<String> = plant.grippers.keys().cloned().collect();
        for (i, speed) in actions {
            plant.step(&BTreeMap::from([(grippers[i].clone(), CommandOut::Velocity(speed))]), 0.5).unwrap();
            for (key, g) in &plant.grippers {
                if let Some(f) = &g.grasped_fixture {
                    let expect = key.replacen('/', ".", 1);
                    prop_assert_eq!(plant.fixtures[f].attached_gripper.as_ref(), Some(&expect));
                }
            }
            for (id, f) in &plant.fixtures {
                if let Some(g) = &f.attached_gripper {
                    let key = g.replacen('.', "/", 1);
                    prop_assert_eq!(plant.grippers[&key].grasped_fixture.as_ref(), Some(id));
                }
            }
            for a in modules.iter() {
                for b in plant.neighbours(a) {
                    prop_assert!(plant.neighbours(&b).contains(a), "{a} sees {b} but not back");
                }
            }
        }
    }

    #[test]
    fn fk_composes_at_any_split(
        q in prop::collection::vec(-2.0..2.0f64, 7),
        split in 1usize..7,
    ) {
        let chain = presets::minimal().chains[0].clone();
        let mut head = chain.clone();
        head.joints.truncate(split);
        let mut tail = chain.clone();
        tail.joints = chain.joints[split..].to_vec();
        tail.base_offset = 0.0;
        let whole = forward_kinematics(&chain, &q).unwrap().to_isometry();
        let composed = forward_kinematics(&head, &q[..split]).unwrap().to_isometry()
            * forward_kinematics(&tail, &q[split..]).unwrap().to_isometry();
        prop_assert!((whole.translation.vector - composed.translation.vector).norm() < 1e-12);
        prop_assert!(whole.rotation.angle_to(&composed.rotation) < 1e-9);
    }
}
