//! The control loop shared by replay and live sessions: melody ingestion,
//! bar closing, chord decisions, horizontal moves and keystrokes, stepped
//! every control period on a simulated plant.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::config::SessionConfig;
use super::protocol::{Agent, Body, FaultKind, Message};
use crate::accompaniment::{d_of_tau, decide_next, AccompanimentPlan, Decision};
use crate::chord::{ChordLabel, ChordVoicing, DEFAULT_OCTAVE_BASE};
use crate::cpg::{CpgError, KeystrokeWaveform, DEFAULT_DT};
use crate::metrics::{deviation_entropy, mae_sae, phases, sync_index};
use crate::midi::NoteEvent;
use crate::model::ChordClassifier;
use crate::robot::{
    mpc_step, plan_trajectory, select_zeta, track_step, KeyEventKind, MovePlan, Plant,
    TrajectoryLog, TrajectoryRecord,
};
use crate::tokenizer::{pitch_variation, tokenize_bar, BarTokens, TOKENS_PER_BAR};

/// Deviation histogram bin for running metrics (s).
const METRIC_BIN: f64 = 0.02;

/// Where chord decisions come from.
#[derive(Clone, Debug)]
pub enum DecisionSource {
    Model(Box<ChordClassifier>),
    /// Fixed `(chord, strikes)` per bar, indexed by the bar being planned;
    /// the last entry repeats.
    Script(Vec<(ChordLabel, u8)>),
    /// Fixed chord per bar; the strike count still follows the melody.
    Chart(Vec<ChordLabel>),
}

impl DecisionSource {
    fn decide(&self, next_bar: u32, bar: &BarTokens, cfg: &SessionConfig) -> Decision {
        match self {
            DecisionSource::Model(m) => decide_next(m, bar, &cfg.thresholds),
            DecisionSource::Script(s) => {
                let (chord, ck) = s
                    .get(next_bar as usize)
                    .or(s.last())
                    .copied()
                    .unwrap_or((ChordLabel::C, 1));
                Decision { chord, ck, tau: 0 }
            }
            DecisionSource::Chart(c) => {
                let tau = pitch_variation(bar);
                Decision {
                    chord: c
                        .get(next_bar as usize)
                        .or(c.last())
                        .copied()
                        .unwrap_or(ChordLabel::C),
                    ck: d_of_tau(tau, &cfg.thresholds),
                    tau,
                }
            }
        }
    }
}

/// Keystroke waveforms for each strike rate at one tempo.
#[derive(Clone, Debug)]
pub struct StrokeBank {
    t_bar: f64,
    waves: BTreeMap<u8, Stroke>,
}

#[derive(Clone, Debug)]
struct Stroke {
    wave: KeystrokeWaveform,
    /// Time from cycle start until the hand is back at rest.
    pulse: f64,
}

impl StrokeBank {
    pub fn tune(cfg: &SessionConfig) -> Result<Self, CpgError> {
        let t_bar = cfg.t_bar();
        let mut waves = BTreeMap::new();
        for ck in [1u8, 2, 4] {
            let wave = KeystrokeWaveform::tuned(
                &cfg.oscillator,
                t_bar / f64::from(ck),
                DEFAULT_DT,
                cfg.geometry.stroke,
            )?;
            let rest = wave.geometry.rest_height;
            let last_down = wave
                .heights
                .iter()
                .rposition(|&z| z < rest - 1e-9)
                .unwrap_or(0);
            let pulse = (last_down + 1) as f64 * wave.dt;
            waves.insert(ck, Stroke { wave, pulse });
        }
        Ok(StrokeBank { t_bar, waves })
    }

    pub fn waveform(&self, ck: u8) -> Option<&KeystrokeWaveform> {
        self.waves.get(&ck).map(|s| &s.wave)
    }

    fn stroke(&self, ck: u8) -> &Stroke {
        self.waves
            .get(&ck)
            .or_else(|| self.waves.range(..=ck).next_back().map(|(_, s)| s))
            .unwrap_or_else(|| self.waves.values().next().expect("bank holds waveforms"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub t: f64,
    pub kind: FaultKind,
    pub detail: String,
}

#[derive(Clone, Copy, Debug)]
struct ScheduledStrike {
    bar: u32,
    index: usize,
    time: f64,
    ck: u8,
    chord: ChordLabel,
    pitches: [u8; 3],
}

#[derive(Clone, Copy, Debug)]
struct ActiveStroke {
    strike: ScheduledStrike,
    /// Instant the threshold crossing is aimed at.
    aim: f64,
    start: f64,
    pressed: bool,
}

#[derive(Clone, Debug)]
struct Move {
    plan: MovePlan,
    zeta: f64,
}

/// Everything a finished performance leaves behind.
#[derive(Clone, Debug, Default)]
pub struct Performance {
    pub log: Vec<Message>,
    pub trajectory: TrajectoryLog,
    pub melody: Vec<NoteEvent>,
    pub accompaniment: Vec<NoteEvent>,
    pub plans: Vec<AccompanimentPlan>,
    pub faults: Vec<Fault>,
    pub human_beats: BTreeMap<u32, f64>,
    pub robot_beats: BTreeMap<u32, f64>,
    pub bars_closed: u32,
    pub late_notes: usize,
}

impl Performance {
    /// Heavy beats of bars where both players have one, in bar order.
    pub fn matched_beats(&self) -> (Vec<u32>, Vec<f64>, Vec<f64>) {
        matched(&self.human_beats, &self.robot_beats)
    }

    pub fn chords(&self) -> Vec<(u32, ChordLabel)> {
        self.plans.iter().map(|p| (p.bar, p.chord)).collect()
    }
}

fn matched(h: &BTreeMap<u32, f64>, r: &BTreeMap<u32, f64>) -> (Vec<u32>, Vec<f64>, Vec<f64>) {
    let mut bars = Vec::new();
    let mut hs = Vec::new();
    let mut rs = Vec::new();
    for (p, &t) in r {
        if let Some(&th) = h.get(p) {
            bars.push(*p);
            hs.push(th);
            rs.push(t);
        }
    }
    (bars, hs, rs)
}

/// The press closest to the downbeat at `downbeat`, within half a beat.
pub fn heavy_beat<'a, I: IntoIterator<Item = &'a f64>>(
    presses: I,
    downbeat: f64,
    half_window: f64,
) -> Option<f64> {
    presses
        .into_iter()
        .copied()
        .filter(|t| (t - downbeat).abs() <= half_window)
        .min_by(|a, b| {
            (a - downbeat)
                .abs()
                .total_cmp(&(b - downbeat).abs())
                .then(a.total_cmp(b))
        })
}

pub struct Performer {
    cfg: SessionConfig,
    source: DecisionSource,
    bank: StrokeBank,
    t_bar: f64,
    dt: f64,
    decision_delay: f64,
    step: u64,
    /// Notes still relevant to upcoming bars, closed and open.
    notes: Vec<NoteEvent>,
    open: BTreeMap<u8, (f64, u8)>,
    end_bar: Option<u32>,
    chord_now: ChordLabel,
    ck_now: u8,
    mv: Option<Move>,
    cost: f64,
    strikes: VecDeque<ScheduledStrike>,
    active: Option<ActiveStroke>,
    /// Next bar whose downbeat stroke has not been committed.
    next_downbeat: u32,
    plant: Plant,
    robot_open: Option<(f64, [u8; 3], u8)>,
    out: Performance,
    emitted: usize,
}

impl Performer {
    /// `live` selects the straggler grace instead of the modelled latency as
    /// the delay between a bar's last token instant and its decision.
    pub fn new(cfg: SessionConfig, source: DecisionSource, bank: StrokeBank, live: bool) -> Self {
        let t_bar = cfg.t_bar();
        assert!(
            (bank.t_bar - t_bar).abs() < 1e-12,
            "stroke bank tuned for another tempo"
        );
        let chord_now = ChordLabel::C;
        let plant = Plant::new(cfg.geometry.anchor(chord_now), cfg.geometry, cfg.mpc.v_max);
        Performer {
            dt: cfg.mpc.dt,
            decision_delay: if live { cfg.grace } else { cfg.latency },
            t_bar,
            source,
            bank,
            step: 0,
            notes: Vec::new(),
            open: BTreeMap::new(),
            end_bar: None,
            chord_now,
            ck_now: 1,
            mv: None,
            cost: 0.0,
            strikes: VecDeque::new(),
            active: None,
            next_downbeat: 1,
            plant,
            robot_open: None,
            out: Performance::default(),
            emitted: 0,
            cfg,
        }
    }

    pub fn now(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn t_bar(&self) -> f64 {
        self.t_bar
    }

    /// Bars at or after `bar` are not accompanied.
    pub fn set_end_bar(&mut self, bar: u32) {
        self.end_bar = Some(bar);
    }

    /// Last token instant of bar `p`; everything the decision for bar
    /// `p + 1` may use is known by then.
    pub fn token_cutoff(&self, p: u32) -> f64 {
        f64::from(p) * self.t_bar + (TOKENS_PER_BAR - 1) as f64 / TOKENS_PER_BAR as f64 * self.t_bar
    }

    pub fn decision_time(&self, p: u32) -> f64 {
        self.token_cutoff(p) + self.decision_delay
    }

    pub fn bars_closed(&self) -> u32 {
        self.out.bars_closed
    }

    /// True when a note pressed at `t_press` could still affect an undecided bar.
    pub fn accepts_press(&self, t_press: f64) -> bool {
        self.out.bars_closed == 0 || t_press > self.token_cutoff(self.out.bars_closed - 1)
    }

    fn log(&mut self, t: f64, body: Body) {
        self.out.log.push(Message::new(t, body));
    }

    fn fault(&mut self, t: f64, kind: FaultKind, detail: String) {
        self.out.faults.push(Fault {
            t,
            kind,
            detail: detail.clone(),
        });
        self.log(t, Body::Fault { kind, detail });
    }

    /// Record an input fault raised outside the control loop.
    pub fn record_fault(&mut self, kind: FaultKind, detail: String) {
        let t = self.now();
        self.fault(t, kind, detail);
    }

    pub fn note_on(&mut self, t: f64, pitch: u8, velocity: u8) {
        if !self.accepts_press(t) {
            self.out.late_notes += 1;
            let now = self.now();
            self.fault(
                now,
                FaultKind::LateNote,
                format!("pitch {pitch} pressed at {t:.4} s arrived after its bar was decided"),
            );
            return;
        }
        if self.open.contains_key(&pitch) {
            self.note_off(t, pitch);
        }
        self.open.insert(pitch, (t, velocity));
        let now = self.now();
        self.log(now.max(t), Body::NoteOn { pitch, velocity });
    }

    pub fn note_off(&mut self, t: f64, pitch: u8) {
        let Some((press, velocity)) = self.open.remove(&pitch) else {
            return;
        };
        let release = if t > press { t } else { press + 1e-3 };
        let ev = NoteEvent {
            pitch,
            velocity,
            t_press: press,
            t_release: release,
            channel: 0,
            track: 0,
        };
        self.notes.push(ev.clone());
        self.out.melody.push(ev);
        let now = self.now();
        self.log(now.max(t), Body::NoteOff { pitch });
    }

    /// Notes as known at `cutoff`: later releases are unknown, so those notes
    /// still sound.
    fn censored_notes(&self, cutoff: f64) -> Vec<NoteEvent> {
        let mut v: Vec<NoteEvent> = self
            .notes
            .iter()
            .filter(|e| e.t_press <= cutoff)
            .map(|e| {
                let mut e = e.clone();
                if e.t_release > cutoff {
                    e.t_release = f64::INFINITY;
                }
                e
            })
            .collect();
        v.extend(self.open.iter().filter(|(_, (t, _))| *t <= cutoff).map(
            |(&pitch, &(t, velocity))| NoteEvent {
                pitch,
                velocity,
                t_press: t,
                t_release: f64::INFINITY,
                channel: 0,
                track: 0,
            },
        ));
        crate::midi::sort_events(&mut v);
        v
    }

    fn close_bar(&mut self, now: f64) {
        let p = self.out.bars_closed;
        let bar_start = f64::from(p) * self.t_bar;
        let cutoff = self.token_cutoff(p);
        let notes = self.censored_notes(cutoff);
        let tokens = tokenize_bar(&notes, bar_start, self.t_bar, self.cfg.delta_melody);
        self.log(
            now,
            Body::BarClosed {
                p,
                tokens: tokens.tokens,
            },
        );
        let half_beat = self.t_bar / (2.0 * f64::from(self.cfg.signature.beats));
        if let Some(at) = heavy_beat(notes.iter().map(|e| &e.t_press), bar_start, half_beat) {
            self.out.human_beats.insert(p, at);
            self.log(
                now,
                Body::Beat {
                    agent: Agent::Human,
                    p,
                    at,
                },
            );
        }
        self.out.bars_closed += 1;

        let next = p + 1;
        if self.end_bar.is_none_or(|end| next < end) {
            let d = self.source.decide(next, &tokens, &self.cfg);
            let downbeat = f64::from(next) * self.t_bar;
            let plan = AccompanimentPlan::new(next, d, downbeat, self.t_bar, &self.cfg.dynamics);
            self.log(
                now,
                Body::Chord {
                    p: next,
                    label: plan.chord,
                    ck: plan.ck,
                    strike_times: plan.strike_times.clone(),
                    velocities: plan.velocities.clone(),
                },
            );
            self.plan_move(now, &plan, downbeat);
            self.retune_downbeat(now, &plan);
            for (index, &time) in plan.strike_times.iter().enumerate().skip(1) {
                self.strikes.push_back(ScheduledStrike {
                    bar: next,
                    index,
                    time,
                    ck: plan.ck,
                    chord: plan.chord,
                    pitches: plan.pitches,
                });
            }
            self.out.plans.push(plan);
        }
        self.emit_metrics(now);
        let keep_from = bar_start + self.t_bar;
        let delta = self.cfg.delta_melody;
        self.notes.retain(|e| e.t_release + delta > keep_from);
    }

    fn plan_move(&mut self, now: f64, plan: &AccompanimentPlan, downbeat: f64) {
        let g = self.cfg.geometry;
        let h = g.key_distance(self.chord_now, plan.chord);
        let slot = self.t_bar / f64::from(self.ck_now.max(1));
        let zeta =
            select_zeta(h, slot, self.cfg.mpc.v_max, &self.cfg.mpc, g.key_width).unwrap_or(1.0);
        let mv = plan_trajectory(
            self.chord_now,
            plan.chord,
            plan.ck,
            &g,
            self.t_bar,
            slot,
            zeta,
            downbeat,
        )
        .not_before(now);
        let y = self.plant.state.y;
        let reference = mv.reference(now, self.cfg.mpc.horizon, self.dt);
        let zeta = match mpc_step(y, &reference, &self.cfg.mpc, &g, h, slot) {
            Ok(d) => {
                self.cost = d.cost;
                d.zeta
            }
            Err(e) => {
                self.fault(now, FaultKind::InfeasibleMove, e.to_string());
                1.0
            }
        };
        let window = mv.move_end - now;
        let need = (mv.to_y - y).abs();
        if need > 0.0 && need > self.cfg.mpc.v_max * window {
            self.fault(
                now,
                FaultKind::InfeasibleMove,
                format!(
                    "{:.1} mm to {} in {:.4} s exceeds {} mm/s; bar {} starts late",
                    need, plan.chord, window, self.cfg.mpc.v_max, plan.bar
                ),
            );
        }
        self.chord_now = plan.chord;
        self.ck_now = plan.ck;
        self.mv = Some(Move { plan: mv, zeta });
    }

    fn emit_metrics(&mut self, now: f64) {
        let (bars, h, r) = matched(&self.out.human_beats, &self.out.robot_beats);
        let Some(&last) = bars.last() else {
            return;
        };
        let grid: Vec<f64> = (0..=last + 1).map(|p| f64::from(p) * self.t_bar).collect();
        let (Ok(ph), Ok(pr), Ok((mae, _))) =
            (phases(&h, &grid), phases(&r, &grid), mae_sae(&h, &r))
        else {
            return;
        };
        let gaps: Vec<f64> = h.iter().zip(&r).map(|(a, b)| a - b).collect();
        let si = sync_index(&ph, &pr).unwrap_or(0.0);
        let entropy = deviation_entropy(&gaps, METRIC_BIN).unwrap_or(0.0);
        self.log(
            now,
            Body::Metrics {
                tg: *gaps.last().expect("nonempty"),
                si,
                mae,
                entropy,
            },
        );
    }

    fn remaining_distance(&self) -> f64 {
        self.mv
            .as_ref()
            .map_or(0.0, |m| (m.plan.to_y - self.plant.state.y).abs())
    }

    fn bar_ck(&self, bar: u32) -> u8 {
        self.out
            .plans
            .iter()
            .rev()
            .find(|p| p.bar == bar)
            .map_or(1, |p| p.ck)
    }

    /// Every accompanied bar opens with a downbeat strike, so its stroke can
    /// begin before the chord is known, shaped by the previous bar's rate.
    fn commit_downbeat(&mut self, t_next: f64) {
        let q = self.next_downbeat;
        if self.end_bar.is_some_and(|e| q >= e) || q > self.out.bars_closed + 1 {
            return;
        }
        let ck = self.bar_ck(q - 1);
        let downbeat = f64::from(q) * self.t_bar;
        if t_next < downbeat - self.bank.stroke(ck).wave.press_offset {
            return;
        }
        self.next_downbeat += 1;
        self.strikes.push_back(ScheduledStrike {
            bar: q,
            index: 0,
            time: downbeat,
            ck,
            chord: self.chord_now,
            pitches: ChordVoicing::new(self.chord_now, DEFAULT_OCTAVE_BASE).pitches(),
        });
    }

    /// Give the downbeat stroke of a freshly planned bar its chord, and its
    /// strike rate when the stroke can still start in time.
    fn retune_downbeat(&mut self, now: f64, plan: &AccompanimentPlan) {
        let downbeat = plan.strike_times[0];
        let fits = self.bank.stroke(plan.ck).wave.press_offset <= downbeat - now;
        let fresh = ScheduledStrike {
            bar: plan.bar,
            index: 0,
            time: downbeat,
            ck: plan.ck,
            chord: plan.chord,
            pitches: plan.pitches,
        };
        if self.next_downbeat <= plan.bar {
            self.next_downbeat = plan.bar + 1;
            let ck = if fits {
                plan.ck
            } else {
                self.bar_ck(plan.bar - 1)
            };
            self.strikes.push_back(ScheduledStrike { ck, ..fresh });
            return;
        }
        if let Some(s) = self
            .strikes
            .iter_mut()
            .find(|s| s.bar == plan.bar && s.index == 0)
        {
            *s = ScheduledStrike {
                ck: if fits { plan.ck } else { s.ck },
                ..fresh
            };
            return;
        }
        if let Some(a) = self
            .active
            .as_mut()
            .filter(|a| a.strike.bar == plan.bar && a.strike.index == 0)
        {
            if fits && a.strike.ck != plan.ck && !a.pressed {
                self.active = None;
                self.strikes.push_front(fresh);
            } else {
                a.strike = ScheduledStrike {
                    ck: a.strike.ck,
                    ..fresh
                };
            }
        }
    }

    fn maybe_start_stroke(&mut self, t: f64, t_next: f64) {
        if let Some(a) = &self.active {
            let s = self.bank.stroke(a.strike.ck);
            if t < a.start + s.pulse {
                return;
            }
        }
        let Some(&next) = self.strikes.front() else {
            return;
        };
        let s = self.bank.stroke(next.ck);
        let off = s.wave.press_offset;
        if t_next < next.time - off {
            return;
        }
        let remaining = self.remaining_distance();
        let reachable = remaining <= 1e-6 || remaining / self.cfg.mpc.v_max <= next.time - t;
        if !reachable {
            return;
        }
        self.strikes.pop_front();
        if let Some(prev) = self.active.take() {
            if !prev.pressed {
                self.fault(
                    t,
                    FaultKind::LateStrike,
                    format!(
                        "bar {} strike {} never pressed",
                        prev.strike.bar, prev.strike.index
                    ),
                );
            }
        }
        let aim = next.time.max(t + off);
        self.active = Some(ActiveStroke {
            strike: next,
            aim,
            start: aim - off,
            pressed: false,
        });
    }

    fn height_command(&mut self, t: f64, t_next: f64) -> f64 {
        let rest = self.cfg.geometry.stroke.rest_height;
        let Some(a) = self.active else {
            return rest;
        };
        let s = self.bank.stroke(a.strike.ck);
        let u = t_next - a.start;
        if u >= s.wave.period {
            if !a.pressed {
                self.fault(
                    t,
                    FaultKind::LateStrike,
                    format!(
                        "bar {} strike {} never pressed",
                        a.strike.bar, a.strike.index
                    ),
                );
            }
            self.active = None;
            return rest;
        }
        if u <= 0.0 {
            return rest;
        }
        s.wave.height_after_strike(t_next - a.aim)
    }

    /// Advance one control period.
    pub fn step(&mut self) {
        let t = self.now();
        let t_next = (self.step + 1) as f64 * self.dt;
        while self.end_bar.is_none_or(|e| self.out.bars_closed < e)
            && self.decision_time(self.out.bars_closed) <= t + 1e-12
        {
            self.close_bar(t);
        }
        self.commit_downbeat(t_next);
        self.maybe_start_stroke(t, t_next);
        let z_cmd = self.height_command(t, t_next);

        let g = self.cfg.geometry;
        let y = self.plant.state.y;
        let mut v = 0.0;
        let mut zeta = 0.0;
        if let Some(m) = &self.mv {
            zeta = m.zeta;
            let target = m.plan.to_y;
            if (target - y).abs() <= 1e-9 {
                self.mv = None;
            } else if self.plant.holding().is_none() && t >= m.plan.move_start - 1e-12 {
                let reference = m.plan.reference(t, self.cfg.mpc.horizon, self.dt);
                let d = track_step(
                    y,
                    target,
                    &reference,
                    &self.cfg.mpc,
                    &g,
                    m.zeta,
                    m.plan.move_end - t,
                );
                v = d.v * (target - y).signum();
                self.cost = d.cost;
            }
        }
        let pitches = self
            .active
            .map(|a| a.strike.pitches)
            .unwrap_or_else(|| ChordVoicing::new(self.chord_now, DEFAULT_OCTAVE_BASE).pitches());
        let events = self.plant.step(v, z_cmd, pitches, self.dt);
        for ev in events {
            match ev.kind {
                KeyEventKind::Press => self.on_press(ev.t, ev.pitches, ev.velocity),
                KeyEventKind::Release => self.on_release(ev.t),
            }
        }
        let st = self.plant.state;
        self.out.trajectory.push(TrajectoryRecord {
            t: t_next,
            y: st.y,
            z: st.z,
            v: st.vy,
            zeta,
            cost: self.cost,
        });
        self.step += 1;
    }

    fn on_press(&mut self, t: f64, pitches: [u8; 3], velocity: u8) {
        self.robot_open = Some((t, pitches, velocity));
        self.log(
            t,
            Body::Strike {
                t,
                pitches,
                velocity,
            },
        );
        let Some(a) = self.active.as_mut() else {
            return;
        };
        a.pressed = true;
        let s = a.strike;
        if t - s.time > self.dt {
            self.fault(
                t,
                FaultKind::LateStrike,
                format!(
                    "bar {} strike {} late by {:.4} s",
                    s.bar,
                    s.index,
                    t - s.time
                ),
            );
        }
        let g = self.cfg.geometry;
        let off = (self.plant.state.y - g.anchor(s.chord)).abs();
        if off > g.key_width / 2.0 {
            self.fault(
                t,
                FaultKind::OffTarget,
                format!(
                    "bar {} strike {} {:.1} mm from {}",
                    s.bar, s.index, off, s.chord
                ),
            );
        }
        if s.index == 0 {
            self.out.robot_beats.insert(s.bar, t);
            self.log(
                t,
                Body::Beat {
                    agent: Agent::Robot,
                    p: s.bar,
                    at: t,
                },
            );
        }
    }

    fn on_release(&mut self, t: f64) {
        let Some((press, pitches, velocity)) = self.robot_open.take() else {
            return;
        };
        for pitch in pitches {
            self.out.accompaniment.push(NoteEvent {
                pitch,
                velocity,
                t_press: press,
                t_release: t.max(press + 1e-3),
                channel: 1,
                track: 1,
            });
        }
    }

    /// Run control steps that start strictly before `t`.
    pub fn advance_to(&mut self, t: f64) {
        while self.now() < t - 1e-12 {
            self.step();
        }
    }

    /// True once nothing is scheduled, moving or pressed.
    pub fn idle(&self) -> bool {
        self.strikes.is_empty() && self.active.is_none() && self.robot_open.is_none()
    }

    /// Messages logged since the last call.
    pub fn drain(&mut self) -> &[Message] {
        let from = self.emitted;
        self.emitted = self.out.log.len();
        &self.out.log[from..]
    }

    /// Close open melody notes at `t`, run until the robot is idle and return
    /// everything recorded.
    pub fn finish(mut self, t: f64) -> Performance {
        let open: Vec<u8> = self.open.keys().copied().collect();
        for p in open {
            self.note_off(t, p);
        }
        let limit = t + 2.0 * self.t_bar;
        self.advance_to(t);
        while !self.idle() && self.now() < limit {
            self.step();
        }
        crate::midi::sort_events(&mut self.out.melody);
        crate::midi::sort_events(&mut self.out.accompaniment);
        self.out
    }

    pub fn performance(&self) -> &Performance {
        &self.out
    }
}
