use std::collections::HashMap;

use super::{
    MidiError, MidiTrack, NoteEvent, TempoChange, TempoMap, HIGHEST_PIANO_KEY, LOWEST_PIANO_KEY,
};

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    /// Absolute offset of `data[0]` within the file, for error messages.
    base: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8], base: usize) -> Self {
        Reader { data, pos: 0, base }
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn at_end(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn truncated(&self, what: &str) -> MidiError {
        MidiError::Truncated {
            offset: self.offset(),
            detail: format!("expected {what}"),
        }
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| self.truncated("byte"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MidiError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| self.truncated(what))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32_be(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4, "u32")?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let start = self.offset();
        let mut v: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(MidiError::MalformedEvent {
            offset: start,
            detail: "variable-length quantity longer than 4 bytes".into(),
        })
    }
}

struct RawNote {
    pitch: u8,
    velocity: u8,
    on: u64,
    off: u64,
    channel: u8,
    track: u16,
}

#[derive(Default)]
struct TrackScan {
    notes: Vec<RawNote>,
    tempos: Vec<TempoChange>,
    name: Option<String>,
}

fn scan_track(data: &[u8], base: usize, track: u16) -> Result<TrackScan, MidiError> {
    let mut r = Reader::new(data, base);
    let mut out = TrackScan::default();
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), (u64, u8)> = HashMap::new();

    while !r.at_end() {
        tick += u64::from(r.vlq()?);
        let ev_offset = r.offset();
        let first = r.u8()?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            match running {
                Some(s) => (s, Some(first)),
                None => {
                    return Err(MidiError::MalformedEvent {
                        offset: ev_offset,
                        detail: format!("data byte 0x{first:02x} without running status"),
                    })
                }
            }
        };

        match status {
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let body = r.take(len, "meta event body")?;
                match kind {
                    0x2f => break,
                    0x51 => {
                        if len != 3 {
                            return Err(MidiError::MalformedEvent {
                                offset: ev_offset,
                                detail: format!("tempo event of length {len}"),
                            });
                        }
                        let us = u32::from_be_bytes([0, body[0], body[1], body[2]]);
                        if us == 0 {
                            return Err(MidiError::MalformedEvent {
                                offset: ev_offset,
                                detail: "zero tempo".into(),
                            });
                        }
                        out.tempos.push(TempoChange {
                            tick,
                            us_per_quarter: us,
                        });
                    }
                    0x03 if out.name.is_none() => {
                        out.name = Some(String::from_utf8_lossy(body).trim().to_string());
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len, "sysex body")?;
            }
            0x80..=0xef => {
                running = Some(status);
                let d1 = match first_data {
                    Some(d) => d,
                    None => r.u8()?,
                };
                let kind = status & 0xf0;
                let channel = status & 0x0f;
                if kind == 0xc0 || kind == 0xd0 {
                    continue;
                }
                let d2 = r.u8()?;
                if d1 > 127 || d2 > 127 {
                    return Err(MidiError::MalformedEvent {
                        offset: ev_offset,
                        detail: "data byte with high bit set".into(),
                    });
                }
                let is_on = kind == 0x90 && d2 > 0;
                let is_off = kind == 0x80 || (kind == 0x90 && d2 == 0);
                if is_on {
                    if let Some((on, vel)) = open.insert((channel, d1), (tick, d2)) {
                        if tick > on {
                            out.notes.push(RawNote {
                                pitch: d1,
                                velocity: vel,
                                on,
                                off: tick,
                                channel,
                                track,
                            });
                        }
                    }
                } else if is_off {
                    if let Some((on, vel)) = open.remove(&(channel, d1)) {
                        if tick > on {
                            out.notes.push(RawNote {
                                pitch: d1,
                                velocity: vel,
                                on,
                                off: tick,
                                channel,
                                track,
                            });
                        }
                    }
                }
            }
            _ => {
                return Err(MidiError::MalformedEvent {
                    offset: ev_offset,
                    detail: format!("unsupported status byte 0x{status:02x}"),
                })
            }
        }
    }

    if let Some((&(channel, pitch), &(on, _))) = open.iter().min_by_key(|(k, v)| (v.0, **k)) {
        return Err(MidiError::UnmatchedNoteOn {
            pitch,
            tick: on,
            track,
            channel,
        });
    }
    Ok(out)
}

/// Parse a type-0 or type-1 Standard MIDI File into a flat list of notes.
///
/// A note-on with velocity 0 counts as a note-off. A second note-on for a key
/// that is already down ends the earlier note at that instant. Pitches
/// outside the 88-key range are skipped and counted in `dropped_out_of_range`.
pub fn parse_smf(bytes: &[u8]) -> Result<MidiTrack, MidiError> {
    let mut r = Reader::new(bytes, 0);
    let magic = r
        .take(4, "MThd")
        .map_err(|_| MidiError::MalformedHeader("file shorter than header".into()))?;
    if magic != b"MThd" {
        return Err(MidiError::MalformedHeader("missing MThd chunk".into()));
    }
    let len = r.u32_be()? as usize;
    if len < 6 {
        return Err(MidiError::MalformedHeader(format!("header length {len}")));
    }
    let header = r.take(len, "header body")?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 1 {
        return Err(MidiError::UnsupportedFormat(format));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedTiming);
    }
    if division == 0 {
        return Err(MidiError::MalformedHeader("zero ticks per quarter".into()));
    }

    let mut scans = Vec::new();
    while scans.len() < ntracks as usize {
        if r.at_end() {
            return Err(r.truncated(&format!("{} track chunks, found {}", ntracks, scans.len())));
        }
        let id = r.take(4, "chunk id")?;
        let clen = r.u32_be()? as usize;
        let base = r.offset();
        let body = r.take(clen, "chunk body")?;
        if id == b"MTrk" {
            scans.push(scan_track(body, base, scans.len() as u16)?);
        }
    }

    let tempos: Vec<TempoChange> = scans
        .iter()
        .flat_map(|s| s.tempos.iter().copied())
        .collect();
    let map = TempoMap::new(division, &tempos);
    let mut dropped = 0;
    let mut events = Vec::new();
    for n in scans.iter().flat_map(|s| s.notes.iter()) {
        if !(LOWEST_PIANO_KEY..=HIGHEST_PIANO_KEY).contains(&n.pitch) {
            dropped += 1;
            continue;
        }
        events.push(NoteEvent {
            pitch: n.pitch,
            velocity: n.velocity,
            t_press: map.tick_to_seconds(n.on),
            t_release: map.tick_to_seconds(n.off),
            channel: n.channel,
            track: n.track,
        });
    }
    let mut track = MidiTrack::new(events, division, map.changes());
    track.track_names = scans.into_iter().map(|s| s.name).collect();
    track.dropped_out_of_range = dropped;
    Ok(track)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smf(format: u16, division: u16, tracks: &[&[u8]]) -> Vec<u8> {
        let mut v = b"MThd".to_vec();
        v.extend(6u32.to_be_bytes());
        v.extend(format.to_be_bytes());
        v.extend((tracks.len() as u16).to_be_bytes());
        v.extend(division.to_be_bytes());
        for t in tracks {
            v.extend(b"MTrk");
            v.extend((t.len() as u32).to_be_bytes());
            v.extend(*t);
        }
        v
    }

    #[test]
    fn running_status_and_velocity_zero_off() {
        // tempo 1 s per quarter; C4 on, E4 on (running status), both off via vel 0
        let body: &[u8] = &[
            0x00, 0xff, 0x51, 0x03, 0x0f, 0x42, 0x40, //
            0x00, 0x90, 60, 100, //
            0x00, 64, 90, //
            0x60, 60, 0, //
            0x00, 64, 0, //
            0x00, 0xff, 0x2f, 0x00,
        ];
        let t = parse_smf(&smf(0, 96, &[body])).unwrap();
        assert_eq!(t.events.len(), 2);
        assert_eq!(t.events[0].pitch, 60);
        assert_eq!(t.events[0].velocity, 100);
        assert_eq!(t.events[1].pitch, 64);
        assert_eq!(t.events[1].t_release, 1.0);
    }

    #[test]
    fn restrike_ends_previous_note() {
        let body: &[u8] = &[
            0x00, 0x90, 60, 100, //
            0x60, 0x90, 60, 80, //
            0x60, 0x80, 60, 0, //
        ];
        let t = parse_smf(&smf(0, 96, &[body])).unwrap();
        assert_eq!(t.events.len(), 2);
        assert_eq!(t.events[0].t_release, 0.5);
        assert_eq!(t.events[1].t_press, 0.5);
        assert_eq!(t.events[1].velocity, 80);
    }

    #[test]
    fn format_one_track_names_and_shared_tempo() {
        let conductor: &[u8] = &[
            0x00, 0xff, 0x51, 0x03, 0x0a, 0x2c, 0x2a, 0x00, 0xff, 0x2f, 0x00,
        ];
        let melody: &[u8] = &[
            0x00, 0xff, 0x03, 0x06, b'M', b'E', b'L', b'O', b'D', b'Y', //
            0x00, 0x90, 72, 70, 0x83, 0x60, 0x80, 72, 0,
        ];
        let t = parse_smf(&smf(1, 480, &[conductor, melody])).unwrap();
        assert_eq!(t.track_names, vec![None, Some("MELODY".into())]);
        assert_eq!(t.events[0].track, 1);
        // 480 ticks at 666_666 us/quarter
        assert!((t.events[0].t_release - 0.666_666).abs() < 1e-9);
    }

    #[test]
    fn rejects_unmatched_note_on() {
        let body: &[u8] = &[0x00, 0x90, 60, 100, 0x00, 0xff, 0x2f, 0x00];
        assert!(matches!(
            parse_smf(&smf(0, 96, &[body])),
            Err(MidiError::UnmatchedNoteOn {
                pitch: 60,
                tick: 0,
                ..
            })
        ));
    }

    #[test]
    fn rejects_format_two_and_smpte() {
        assert_eq!(
            parse_smf(&smf(2, 96, &[])),
            Err(MidiError::UnsupportedFormat(2))
        );
        assert_eq!(
            parse_smf(&smf(0, 0xe728, &[])),
            Err(MidiError::UnsupportedTiming)
        );
    }

    #[test]
    fn rejects_truncated_chunk() {
        let mut f = smf(0, 96, &[&[0x00, 0x90, 60, 100, 0x60, 0x80, 60, 0]]);
        f.truncate(f.len() - 3);
        assert!(matches!(parse_smf(&f), Err(MidiError::Truncated { .. })));
    }

    #[test]
    fn skips_pitches_outside_piano() {
        let body: &[u8] = &[
            0x00, 0x90, 10, 100, 0x10, 0x80, 10, 0, 0x00, 0x90, 60, 1, 0x10, 0x80, 60, 0,
        ];
        let t = parse_smf(&smf(0, 96, &[body])).unwrap();
        assert_eq!(t.events.len(), 1);
        assert_eq!(t.dropped_out_of_range, 1);
    }
}
