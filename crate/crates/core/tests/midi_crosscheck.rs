//! Cross-checks the SMF parser against a small independent reader.

use proptest::prelude::*;

use duet_core::{parse_smf, write_smf, MidiTrack, NoteEvent};

fn vlq(mut v: u32, out: &mut Vec<u8>) {
    let mut stack = vec![(v & 0x7f) as u8];
    v >>= 7;
    while v > 0 {
        stack.push((v & 0x7f) as u8 | 0x80);
        v >>= 7;
    }
    out.extend(stack.iter().rev());
}

fn read_vlq(b: &[u8], i: &mut usize) -> u32 {
    let mut v = 0u32;
    loop {
        let c = b[*i];
        *i += 1;
        v = (v << 7) | u32::from(c & 0x7f);
        if c & 0x80 == 0 {
            return v;
        }
    }
}

/// Note presses in seconds, assuming a single tempo set at tick 0 of the first track.
fn reference_presses(b: &[u8]) -> Vec<(u8, f64)> {
    let tpq = f64::from(u16::from_be_bytes([b[12], b[13]]));
    let ntracks = u16::from_be_bytes([b[10], b[11]]);
    let mut us_per_quarter = 500_000.0;
    let mut presses = Vec::new();
    let mut pos = 14;
    for _ in 0..ntracks {
        let len = u32::from_be_bytes([b[pos + 4], b[pos + 5], b[pos + 6], b[pos + 7]]) as usize;
        let (mut i, end) = (pos + 8, pos + 8 + len);
        let mut tick = 0u64;
        let mut status = 0u8;
        while i < end {
            tick += u64::from(read_vlq(b, &mut i));
            if b[i] & 0x80 != 0 {
                status = b[i];
                i += 1;
            }
            match status {
                0xff => {
                    let kind = b[i];
                    i += 1;
                    let n = read_vlq(b, &mut i) as usize;
                    if kind == 0x51 {
                        us_per_quarter =
                            f64::from(u32::from_be_bytes([0, b[i], b[i + 1], b[i + 2]]));
                    }
                    i += n;
                }
                s if s & 0xf0 == 0x90 => {
                    if b[i + 1] > 0 {
                        presses.push((b[i], tick as f64 / tpq * us_per_quarter * 1e-6));
                    }
                    i += 2;
                }
                s if matches!(s & 0xf0, 0x80 | 0xa0 | 0xb0 | 0xe0) => i += 2,
                _ => i += 1,
            }
        }
        pos = end;
    }
    presses.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    presses
}

fn chunk(tag: &[u8; 4], body: &[u8], out: &mut Vec<u8>) {
    out.extend(tag);
    out.extend((body.len() as u32).to_be_bytes());
    out.extend(body);
}

/// Format-1 file with a tempo track and a note track that uses running
/// status and zero-velocity note-ons as releases.
fn hand_built(notes: &[(u8, u32, u32)], us_per_quarter: u32) -> Vec<u8> {
    let mut out = Vec::new();
    let mut head = vec![0, 1, 0, 2];
    head.extend(480u16.to_be_bytes());
    chunk(b"MThd", &head, &mut out);

    let mut tempo = vec![0, 0xff, 0x51, 3];
    tempo.extend(&us_per_quarter.to_be_bytes()[1..]);
    tempo.extend([0, 0xff, 0x2f, 0]);
    chunk(b"MTrk", &tempo, &mut out);

    let mut events: Vec<(u32, u8, u8)> = Vec::new();
    for &(pitch, on, len) in notes {
        events.push((on, pitch, 90));
        events.push((on + len, pitch, 0));
    }
    events.sort_by_key(|e| (e.0, e.2));
    let mut body = vec![0, 0xb0, 64, 0];
    let mut last = 0;
    for (i, (tick, pitch, vel)) in events.iter().enumerate() {
        vlq(tick - last, &mut body);
        if i == 0 {
            body.push(0x90);
        }
        body.extend([*pitch, *vel]);
        last = *tick;
    }
    body.extend([0, 0xff, 0x2f, 0]);
    chunk(b"MTrk", &body, &mut out);
    out
}

fn assert_agree(bytes: &[u8]) {
    let ours: Vec<(u8, f64)> = parse_smf(bytes)
        .unwrap()
        .events
        .iter()
        .map(|e| (e.pitch, e.t_press))
        .collect();
    let theirs = reference_presses(bytes);
    assert_eq!(ours.len(), theirs.len());
    for (a, b) in ours.iter().zip(&theirs) {
        assert_eq!(a.0, b.0);
        assert!((a.1 - b.1).abs() < 1e-9, "{a:?} vs {b:?}");
    }
}

#[test]
fn hand_built_file_matches_reference_reader() {
    let notes = [
        (60, 0, 240),
        (64, 0, 240),
        (67, 240, 480),
        (72, 960, 120),
        (60, 960, 960),
        (62, 1920, 1),
    ];
    let bytes = hand_built(&notes, 652_174);
    assert_agree(&bytes);
    let track = parse_smf(&bytes).unwrap();
    assert_eq!(track.events.len(), notes.len());
    let seconds = |ticks: f64| ticks / 480.0 * 0.652174;
    let c = track.events.iter().find(|e| e.pitch == 72).unwrap();
    assert!((c.t_press - seconds(960.0)).abs() < 1e-9);
    assert!((c.t_release - seconds(1080.0)).abs() < 1e-9);
}

#[test]
fn written_file_matches_reference_reader() {
    let events: Vec<NoteEvent> = (0..40)
        .map(|i| {
            let t = f64::from(i) * 0.125;
            NoteEvent::new(
                48 + (i * 7 % 36) as u8,
                30 + i as u8,
                t,
                t + 0.1 + 0.05 * f64::from(i % 3),
            )
            .unwrap()
        })
        .collect();
    let bytes = write_smf(&MidiTrack::with_bpm(events, 480, 96.0)).unwrap();
    assert_agree(&bytes);
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_smf(&bytes);
    }

    #[test]
    fn corrupted_valid_file_never_panics(
        notes in proptest::collection::vec((21u8..=108, 0u32..4000, 1u32..900), 1..30),
        flips in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6),
        cut in any::<prop::sample::Index>(),
    ) {
        let mut kept: Vec<(u8, u32, u32)> = Vec::new();
        for n in notes {
            if kept.iter().all(|k| k.0 != n.0 || n.1 > k.1 + k.2 || k.1 > n.1 + n.2) {
                kept.push(n);
            }
        }
        let mut bytes = hand_built(&kept, 500_000);
        assert_agree(&bytes);
        for (at, v) in flips {
            let i = at.index(bytes.len());
            bytes[i] = v;
        }
        let _ = parse_smf(&bytes);
        let _ = parse_smf(&bytes[..cut.index(bytes.len())]);
    }
}
