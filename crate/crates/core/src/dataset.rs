//! Chord-melody pairs and their line-oriented JSON file format.
//!
//! The first line is a header carrying the schema version and record count;
//! each following line is one pair. A count mismatch means the file was cut.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::chord::ChordLabel;
use crate::tokenizer::{BarTokens, TOKENS_PER_BAR, TOKEN_VOCAB};

pub const DATASET_SCHEMA: &str = "duet-pairs";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChordMelodyPair {
    pub chord_label: ChordLabel,
    pub tokens: [u8; TOKENS_PER_BAR],
    pub source: String,
    pub bar: u32,
}

impl ChordMelodyPair {
    pub fn melody(&self) -> BarTokens {
        BarTokens::from_tokens(self.tokens)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt dataset at line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("dataset schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("dataset truncated: header promises {expected} records, found {found}")]
    Truncated { expected: usize, found: usize },
}

pub fn write_dataset<W: Write>(mut w: W, pairs: &[ChordMelodyPair]) -> Result<(), DatasetError> {
    let header = Header {
        schema: DATASET_SCHEMA.into(),
        version: DATASET_VERSION,
        count: pairs.len(),
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for p in pairs {
        serde_json::to_writer(&mut w, p).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<ChordMelodyPair>, DatasetError> {
    let mut lines = r.lines();
    let first = lines.next().ok_or(DatasetError::Corrupt {
        line: 1,
        detail: "empty file".into(),
    })??;
    let header: Header = serde_json::from_str(&first).map_err(|e| DatasetError::Corrupt {
        line: 1,
        detail: format!("bad header: {e}"),
    })?;
    if header.schema != DATASET_SCHEMA {
        return Err(DatasetError::Corrupt {
            line: 1,
            detail: format!("unknown schema `{}`", header.schema),
        });
    }
    if header.version != DATASET_VERSION {
        return Err(DatasetError::SchemaVersion {
            found: header.version,
            expected: DATASET_VERSION,
        });
    }
    let mut pairs = Vec::with_capacity(header.count.min(1 << 20));
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let p: ChordMelodyPair =
            serde_json::from_str(&line).map_err(|e| DatasetError::Corrupt {
                line: lineno,
                detail: e.to_string(),
            })?;
        if p.tokens.iter().any(|&t| t as usize >= TOKEN_VOCAB) {
            return Err(DatasetError::Corrupt {
                line: lineno,
                detail: "token out of range".into(),
            });
        }
        pairs.push(p);
    }
    if pairs.len() != header.count {
        return Err(DatasetError::Truncated {
            expected: header.count,
            found: pairs.len(),
        });
    }
    Ok(pairs)
}

pub fn save_dataset(path: &std::path::Path, pairs: &[ChordMelodyPair]) -> Result<(), DatasetError> {
    let f = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(f), pairs)
}

pub fn load_dataset(path: &std::path::Path) -> Result<Vec<ChordMelodyPair>, DatasetError> {
    let f = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(label: ChordLabel, t0: u8, bar: u32) -> ChordMelodyPair {
        let mut tokens = [0u8; 16];
        tokens[0] = t0;
        ChordMelodyPair {
            chord_label: label,
            tokens,
            source: "001/001".into(),
            bar,
        }
    }

    #[test]
    fn round_trip_three() {
        let ps = vec![
            pair(ChordLabel::C, 1, 0),
            pair(ChordLabel::Am, 10, 1),
            pair(ChordLabel::G, 8, 2),
        ];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ps).unwrap();
        assert_eq!(read_dataset(&buf[..]).unwrap(), ps);
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .contains("\"chord_label\":\"C\""));
    }

    #[test]
    fn truncated_file_is_reported() {
        let ps = vec![pair(ChordLabel::C, 1, 0), pair(ChordLabel::F, 6, 1)];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ps).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_dataset(cut.as_bytes()),
            Err(DatasetError::Truncated {
                expected: 2,
                found: 1
            })
        ));
        let mid = &text[..text.len() - 10];
        assert!(matches!(
            read_dataset(mid.as_bytes()),
            Err(DatasetError::Corrupt { line: 3, .. })
        ));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let f = "{\"schema\":\"duet-pairs\",\"version\":9,\"count\":0}\n";
        assert!(matches!(
            read_dataset(f.as_bytes()),
            Err(DatasetError::SchemaVersion { found: 9, .. })
        ));
    }

    #[test]
    fn out_of_range_token_is_corrupt() {
        let f = "{\"schema\":\"duet-pairs\",\"version\":1,\"count\":1}\n\
                 {\"chord_label\":\"C\",\"tokens\":[13,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0],\"source\":\"x\",\"bar\":0}\n";
        assert!(matches!(
            read_dataset(f.as_bytes()),
            Err(DatasetError::Corrupt { line: 2, .. })
        ));
    }

    fn arb_pair() -> impl Strategy<Value = ChordMelodyPair> {
        (
            0usize..7,
            prop::array::uniform16(0u8..13),
            "[a-z0-9/]{1,12}",
            any::<u32>(),
        )
            .prop_map(|(c, tokens, source, bar)| ChordMelodyPair {
                chord_label: ChordLabel::ALL[c],
                tokens,
                source,
                bar,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]
        #[test]
        fn round_trip_ten_thousand(ps in prop::collection::vec(arb_pair(), 10_000)) {
            let mut buf = Vec::new();
            write_dataset(&mut buf, &ps).unwrap();
            prop_assert_eq!(read_dataset(&buf[..]).unwrap(), ps);
        }
    }
}
