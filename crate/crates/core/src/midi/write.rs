use super::{MidiError, MidiTrack, TempoMap};

fn push_vlq(out: &mut Vec<u8>, mut v: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

/// Largest delta a 4-byte VLQ can hold.
const MAX_DELTA: u64 = 0x0fff_ffff;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Tempo,
    Off,
    On,
}

struct Timed {
    tick: u64,
    kind: Kind,
    bytes: Vec<u8>,
}

fn not_representable(detail: String, duration_ticks: f64, tpq: u16) -> MidiError {
    let factor = if duration_ticks > 0.0 {
        (1.0 / duration_ticks).ceil() * 2.0
    } else {
        2.0
    };
    let suggested = (f64::from(tpq) * factor).min(f64::from(0x7fffu16)) as u16;
    MidiError::NotRepresentable {
        detail,
        tpq,
        suggested_tpq: suggested,
    }
}

/// Serialize notes and tempo map to SMF bytes.
///
/// Notes all on track 0 produce a type-0 file; otherwise a type-1 file with
/// one chunk per track index. Track names are written when present.
pub fn write_smf(track: &MidiTrack) -> Result<Vec<u8>, MidiError> {
    let tpq = track.ticks_per_quarter;
    if tpq == 0 || tpq & 0x8000 != 0 {
        return Err(MidiError::MalformedHeader(format!(
            "ticks per quarter {tpq}"
        )));
    }
    let map = TempoMap::new(tpq, &track.tempo_map);
    let ntracks = track
        .events
        .iter()
        .map(|e| e.track as usize + 1)
        .chain(std::iter::once(track.track_names.len()))
        .max()
        .unwrap_or(1)
        .max(1);
    if ntracks > u16::MAX as usize {
        return Err(MidiError::InvalidNote("too many tracks".into()));
    }

    let mut per_track: Vec<Vec<Timed>> = (0..ntracks).map(|_| Vec::new()).collect();
    for c in map.changes() {
        let us = c.us_per_quarter;
        if us == 0 || us > 0x00ff_ffff {
            return Err(MidiError::InvalidNote(format!("tempo {us} us per quarter")));
        }
        let b = us.to_be_bytes();
        per_track[0].push(Timed {
            tick: c.tick,
            kind: Kind::Tempo,
            bytes: vec![0xff, 0x51, 0x03, b[1], b[2], b[3]],
        });
    }

    for ev in &track.events {
        ev.validate()?;
        if ev.velocity == 0 {
            return Err(MidiError::InvalidNote(format!(
                "pitch {} at {} s has velocity 0",
                ev.pitch, ev.t_press
            )));
        }
        if ev.channel > 15 {
            return Err(MidiError::InvalidNote(format!("channel {}", ev.channel)));
        }
        let on = map.seconds_to_tick(ev.t_press).ok_or_else(|| {
            MidiError::InvalidNote(format!("press time {} cannot be encoded", ev.t_press))
        })?;
        let off = map.seconds_to_tick(ev.t_release).ok_or_else(|| {
            MidiError::InvalidNote(format!("release time {} cannot be encoded", ev.t_release))
        })?;
        if off <= on {
            let bpm = map.bpm_at(ev.t_press);
            let exact = ev.duration() * f64::from(tpq) * bpm / 60.0;
            return Err(not_representable(
                format!("note {} of {:.6} s", ev.pitch, ev.duration()),
                exact,
                tpq,
            ));
        }
        let t = &mut per_track[ev.track as usize];
        t.push(Timed {
            tick: on,
            kind: Kind::On,
            bytes: vec![0x90 | ev.channel, ev.pitch, ev.velocity],
        });
        t.push(Timed {
            tick: off,
            kind: Kind::Off,
            bytes: vec![0x80 | ev.channel, ev.pitch, 0],
        });
    }

    let format: u16 = if ntracks == 1 { 0 } else { 1 };
    let mut out = b"MThd".to_vec();
    out.extend(6u32.to_be_bytes());
    out.extend(format.to_be_bytes());
    out.extend((ntracks as u16).to_be_bytes());
    out.extend(tpq.to_be_bytes());

    for (i, mut events) in per_track.into_iter().enumerate() {
        events.sort_by(|a, b| (a.tick, a.kind, &a.bytes).cmp(&(b.tick, b.kind, &b.bytes)));
        let mut body = Vec::new();
        if let Some(Some(name)) = track.track_names.get(i) {
            body.push(0x00);
            body.extend([0xff, 0x03]);
            push_vlq(&mut body, name.len() as u32);
            body.extend(name.as_bytes());
        }
        let mut last = 0u64;
        for e in events {
            let delta = e.tick - last;
            if delta > MAX_DELTA {
                return Err(MidiError::InvalidNote(format!(
                    "gap of {delta} ticks exceeds SMF delta range"
                )));
            }
            push_vlq(&mut body, delta as u32);
            body.extend(e.bytes);
            last = e.tick;
        }
        body.extend([0x00, 0xff, 0x2f, 0x00]);
        out.extend(b"MTrk");
        out.extend((body.len() as u32).to_be_bytes());
        out.extend(body);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{parse_smf, NoteEvent};

    #[test]
    fn vlq_encoding() {
        let enc = |v| {
            let mut o = Vec::new();
            push_vlq(&mut o, v);
            o
        };
        assert_eq!(enc(0), vec![0x00]);
        assert_eq!(enc(0x7f), vec![0x7f]);
        assert_eq!(enc(0x80), vec![0x81, 0x00]);
        assert_eq!(enc(0x3fff), vec![0xff, 0x7f]);
        assert_eq!(enc(0x0fff_ffff), vec![0xff, 0xff, 0xff, 0x7f]);
    }

    #[test]
    fn round_trip_preserves_notes() {
        let evs = vec![
            NoteEvent::new(60, 100, 0.0, 0.5).unwrap(),
            NoteEvent::new(64, 90, 0.25, 1.0).unwrap().with_channel(1),
        ];
        let t = MidiTrack::with_bpm(evs, 480, 90.0);
        let back = parse_smf(&write_smf(&t).unwrap()).unwrap();
        assert_eq!(back.events.len(), 2);
        for (a, b) in t.events.iter().zip(&back.events) {
            assert_eq!(
                (a.pitch, a.velocity, a.channel),
                (b.pitch, b.velocity, b.channel)
            );
            assert!((a.t_press - b.t_press).abs() < 1e-3);
            assert!((a.t_release - b.t_release).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_velocity_zero_and_subtick_notes() {
        let t = MidiTrack::with_bpm(vec![NoteEvent::new(60, 0, 0.0, 0.5).unwrap()], 480, 90.0);
        assert!(matches!(write_smf(&t), Err(MidiError::InvalidNote(_))));
        let t = MidiTrack::with_bpm(vec![NoteEvent::new(60, 10, 0.0, 0.0001).unwrap()], 24, 90.0);
        match write_smf(&t) {
            Err(MidiError::NotRepresentable { suggested_tpq, .. }) => assert!(suggested_tpq > 24),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn named_tracks_become_type_one() {
        let mut m = NoteEvent::new(72, 80, 0.0, 0.5).unwrap();
        m.track = 1;
        let mut t = MidiTrack::with_bpm(
            vec![NoteEvent::new(48, 80, 0.0, 0.5).unwrap(), m],
            480,
            120.0,
        );
        t.track_names = vec![Some("CHORD".into()), Some("MELODY".into())];
        let bytes = write_smf(&t).unwrap();
        assert_eq!(u16::from_be_bytes([bytes[8], bytes[9]]), 1);
        let back = parse_smf(&bytes).unwrap();
        assert_eq!(back.track_names, t.track_names);
        assert_eq!(back.events.iter().find(|e| e.pitch == 72).unwrap().track, 1);
    }
}
