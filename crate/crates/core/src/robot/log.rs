//! Per-step trajectory records as whitespace-separated columns.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
    pub zeta: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<TrajectoryRecord>,
}

pub const TRAJECTORY_HEADER: &str = "# t O_y O_z v zeta J";

impl TrajectoryLog {
    pub fn push(&mut self, r: TrajectoryRecord) {
        self.records.push(r);
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 64);
        writeln!(s, "{TRAJECTORY_HEADER}").unwrap();
        for r in &self.records {
            writeln!(
                s,
                "{:.4} {:.4} {:.4} {:.4} {} {:.6e}",
                r.t, r.y, r.z, r.v, r.zeta, r.cost
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            if v.len() != 6 {
                return Err(format!(
                    "line {}: expected 6 columns, found {}",
                    i + 1,
                    v.len()
                ));
            }
            records.push(TrajectoryRecord {
                t: v[0],
                y: v[1],
                z: v[2],
                v: v[3],
                zeta: v[4],
                cost: v[5],
            });
        }
        Ok(TrajectoryLog { records })
    }
}
