//! Wall-clock session: client notes in, control steps on each tick, events out.

use std::time::Instant;

use super::config::SessionConfig;
use super::performer::{DecisionSource, Performance, Performer, StrokeBank};
use super::protocol::{Body, FaultKind, Message};
use crate::metrics::information::percentile;

pub struct LiveSession {
    performer: Performer,
    budget: f64,
    cycle_times: Vec<f64>,
    clients: usize,
}

impl LiveSession {
    pub fn new(cfg: SessionConfig, source: DecisionSource, bank: StrokeBank) -> Self {
        LiveSession {
            budget: cfg.budget,
            performer: Performer::new(cfg, source, bank, true),
            cycle_times: Vec::new(),
            clients: 0,
        }
    }

    /// Session clock: the start of the next control step.
    pub fn now(&self) -> f64 {
        self.performer.now()
    }

    pub fn set_clients(&mut self, n: usize) {
        self.clients = n;
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    /// Apply one client message. Only input messages are expected here.
    pub fn handle(&mut self, msg: &Message) {
        match msg.body {
            Body::NoteOn { pitch, velocity } => self.performer.note_on(msg.t, pitch, velocity),
            Body::NoteOff { pitch } => self.performer.note_off(msg.t, pitch),
            Body::Hello { .. } => {}
            _ => self.performer.record_fault(
                FaultKind::Protocol,
                format!("unexpected `{}` from a client", msg.kind()),
            ),
        }
    }

    /// Record a client fault detected by the transport.
    pub fn client_fault(&mut self, detail: String) {
        self.performer.record_fault(FaultKind::Protocol, detail);
    }

    /// Run every control step due by `now` and return the new messages.
    pub fn tick(&mut self, now: f64) -> Vec<Message> {
        while self.performer.now() <= now {
            let started = Instant::now();
            self.performer.step();
            let took = started.elapsed().as_secs_f64();
            self.cycle_times.push(took);
            if took > self.budget {
                self.performer.record_fault(
                    FaultKind::BudgetOverrun,
                    format!(
                        "control step took {:.2} ms, budget {:.2} ms",
                        took * 1e3,
                        self.budget * 1e3
                    ),
                );
            }
        }
        self.performer.drain().to_vec()
    }

    pub fn cycle_times(&self) -> &[f64] {
        &self.cycle_times
    }

    /// 95th-percentile control-step compute time (s).
    pub fn cycle_p95(&self) -> Option<f64> {
        (!self.cycle_times.is_empty()).then(|| percentile(&self.cycle_times, 0.95))
    }

    pub fn performance(&self) -> &Performance {
        self.performer.performance()
    }

    pub fn finish(self, t: f64) -> Performance {
        self.performer.finish(t)
    }
}
