//! Simulated bus with latency, jitter, random drops and a scheduled
//! outage. Prints what arrived and when.

use motion_stack::bus::{Bus, LinkCondition};

fn main() -> anyhow::Result<()> {
    let mut bus = Bus::simulated();
    bus.subscribe("limb1-pc", "cmd/");
    let mut cond = LinkCondition::with_gaps(&[(1.0, 1.3)])
        .latency(0.03)
        .drop_rate(0.2, 42);
    cond.jitter = 0.01;
    cond.jitter_seed = 7;
    bus.set_link("operator-A", "limb1-pc", cond);

    let mut arrivals = Vec::new();
    for k in 0..100 {
        bus.publish("cmd/limb1/j1", format!("{k}").into_bytes(), "operator-A");
        arrivals.extend(bus.advance(0.02)?);
    }
    let log = bus.log();
    let dropped = log.iter().filter(|r| r.dropped).count();
    println!("{} sent, {} delivered, {dropped} dropped", log.len(), arrivals.len());
    for e in arrivals.iter().step_by(10) {
        println!(
            "  #{:<3} sent {:.2} s, delivered {:.3} s",
            e.link_seq,
            e.send_time,
            e.deliver_time.unwrap()
        );
    }
    let silent: Vec<_> = log.iter().filter(|r| (1.0..1.3).contains(&r.t_send)).collect();
    println!("sent during the outage: {}, delivered: {}", silent.len(), silent.iter().filter(|r| !r.dropped).count());
    Ok(())
}
