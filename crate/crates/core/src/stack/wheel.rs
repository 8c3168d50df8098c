//! Direct wheel drive. Bypasses the stack and has no watchdog, so a wheel
//! keeps its last speed when the link drops.

use super::{decode, Outbox, WheelSpeed};
use crate::bus::Envelope;

#[derive(Debug, Clone)]
pub struct WheelNode {
    pub module: String,
    pending: Option<WheelSpeed>,
    pub last: Option<WheelSpeed>,
}

impl WheelNode {
    pub fn new(module: &str) -> Self {
        Self {
            module: module.to_string(),
            pending: None,
            last: None,
        }
    }

    pub fn on_message(&mut self, env: &Envelope) {
        if let Some(speed) = decode::<WheelSpeed>(&env.payload) {
            self.pending = Some(speed);
        }
    }

    pub fn tick(&mut self, out: &mut Outbox) {
        if let Some(s) = self.pending.take() {
            out.wheels.push((self.module.clone(), s.left, s.right));
            self.last = Some(s);
        }
    }
}
