//! Two-axis task-space plant: commanded horizontal speed, commanded height.

use serde::{Deserialize, Serialize};

use super::KeyboardGeometry;

/// Key-bed crossing speed (mm/s) that maps to full MIDI velocity.
pub const FULL_VELOCITY_SPEED: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Depth-axis position, fixed in this plant.
    pub x: f64,
    /// Position along the keyboard (mm).
    pub y: f64,
    /// Height above the key surface (mm).
    pub z: f64,
    /// Last applied horizontal speed (mm/s, signed).
    pub vy: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyEventKind {
    Press,
    Release,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyEvent {
    pub kind: KeyEventKind,
    pub t: f64,
    pub pitches: [u8; 3],
    pub velocity: u8,
}

/// MIDI velocity for a downward threshold crossing at `speed` mm/s.
pub fn crossing_velocity(speed: f64) -> u8 {
    (127.0 * speed / FULL_VELOCITY_SPEED)
        .round()
        .clamp(1.0, 127.0) as u8
}

#[derive(Clone, Debug)]
pub struct Plant {
    pub state: PlantState,
    pub geometry: KeyboardGeometry,
    pub v_max: f64,
    held: Option<[u8; 3]>,
}

impl Plant {
    pub fn new(y: f64, geometry: KeyboardGeometry, v_max: f64) -> Self {
        Plant {
            state: PlantState {
                x: 0.0,
                y,
                z: geometry.stroke.rest_height,
                vy: 0.0,
                t: 0.0,
            },
            geometry,
            v_max,
            held: None,
        }
    }

    pub fn at(mut self, t: f64) -> Self {
        self.state.t = t;
        self
    }

    /// Advance by `dt` with signed horizontal speed `vy` and commanded height
    /// `z_cmd`. `pitches` is the voicing under the hand; a downward crossing
    /// of the press threshold presses it, an upward crossing releases it.
    pub fn step(&mut self, vy: f64, z_cmd: f64, pitches: [u8; 3], dt: f64) -> Vec<KeyEvent> {
        let s = self.state;
        let (lo, hi) = self.geometry.bounds();
        let vy = vy.clamp(-self.v_max, self.v_max);
        let y = (s.y + vy * dt).clamp(lo, hi);
        let stroke = self.geometry.stroke;
        let z = z_cmd.clamp(stroke.bottom_height, stroke.rest_height);
        let th = stroke.press_height;
        let t = s.t + dt;
        let mut out = Vec::new();
        let crossing_time = || s.t + dt * (s.z - th) / (s.z - z);
        if s.z > th && z <= th && self.held.is_none() {
            let speed = (s.z - z) / dt;
            out.push(KeyEvent {
                kind: KeyEventKind::Press,
                t: crossing_time(),
                pitches,
                velocity: crossing_velocity(speed),
            });
            self.held = Some(pitches);
        } else if s.z <= th && z > th {
            if let Some(p) = self.held.take() {
                out.push(KeyEvent {
                    kind: KeyEventKind::Release,
                    t: crossing_time(),
                    pitches: p,
                    velocity: 0,
                });
            }
        }
        self.state = PlantState {
            x: s.x,
            y,
            z,
            vy: (y - s.y) / dt,
            t,
        };
        out
    }

    pub fn holding(&self) -> Option<[u8; 3]> {
        self.held
    }
}
