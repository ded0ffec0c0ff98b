//! MIT-format annotation files (`.atr`).
//!
//! Each entry is a little-endian 16-bit word: the top six bits hold the
//! code, the low ten bits the sample-time increment. Codes 59-63 are
//! pseudo-annotations: `SKIP` is followed by a 32-bit increment stored high
//! word first, `NUM`, `SUB` and `CHN` carry their value in the low byte, and
//! `AUX` carries a byte count followed by the text padded to an even length.
//! A zero word ends the file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SKIP: u8 = 59;
pub const NUM: u8 = 60;
pub const SUB: u8 = 61;
pub const CHN: u8 = 62;
pub const AUX: u8 = 63;
const MAX_DELTA: i64 = 0x3FF;

/// Standard WFDB annotation codes and their symbols.
const SYMBOLS: [(u8, &str); 42] = [
    (1, "N"),
    (2, "L"),
    (3, "R"),
    (4, "a"),
    (5, "V"),
    (6, "F"),
    (7, "J"),
    (8, "A"),
    (9, "S"),
    (10, "E"),
    (11, "j"),
    (12, "/"),
    (13, "Q"),
    (14, "~"),
    (16, "|"),
    (18, "s"),
    (19, "T"),
    (20, "*"),
    (21, "D"),
    (22, "\""),
    (23, "="),
    (24, "p"),
    (25, "B"),
    (26, "^"),
    (27, "t"),
    (28, "+"),
    (29, "u"),
    (30, "?"),
    (31, "!"),
    (32, "["),
    (33, "]"),
    (34, "e"),
    (35, "n"),
    (36, "@"),
    (37, "x"),
    (38, "f"),
    (39, "("),
    (40, ")"),
    (41, "r"),
    (0, ""),
    (15, ""),
    (17, ""),
];

/// Symbol for an annotation code, `None` for unassigned codes.
pub fn code_symbol(code: u8) -> Option<&'static str> {
    SYMBOLS
        .iter()
        .find(|&&(c, s)| c == code && !s.is_empty())
        .map(|&(_, s)| s)
}

pub fn symbol_code(symbol: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .find(|&&(_, s)| s == symbol && !s.is_empty())
        .map(|&(c, _)| c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub sample: u64,
    pub code: u8,
    pub subtype: i8,
    pub chan: u8,
    pub num: i8,
    pub aux: Option<String>,
}

impl Annotation {
    pub fn new(sample: u64, code: u8) -> Self {
        Annotation {
            sample,
            code,
            subtype: 0,
            chan: 0,
            num: 0,
            aux: None,
        }
    }

    pub fn symbol(&self) -> Option<&'static str> {
        code_symbol(self.code)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn word(&mut self) -> Option<u16> {
        let w = self.bytes.get(self.pos..self.pos + 2)?;
        self.pos += 2;
        Some(u16::from_le_bytes([w[0], w[1]]))
    }

    fn need_word(&mut self, what: &str) -> Result<u16> {
        let at = self.pos;
        self.word().ok_or_else(|| Error::AnnotationParse {
            offset: at,
            reason: format!("file ends inside {what}"),
        })
    }
}

/// Parses an annotation file. `chan` and `num` carry over from the
/// previous annotation when not given; `subtype` and `aux` do not.
pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut r = Reader { bytes, pos: 0 };
    let mut out: Vec<Annotation> = Vec::new();
    let mut time: i64 = 0;
    let mut pending_skip: i64 = 0;
    let (mut chan, mut num) = (0u8, 0i8);
    loop {
        let at = r.pos;
        let Some(word) = r.word() else {
            if r.pos < bytes.len() {
                return Err(Error::AnnotationParse {
                    offset: at,
                    reason: "odd trailing byte".into(),
                });
            }
            break;
        };
        if word == 0 {
            break;
        }
        let code = (word >> 10) as u8;
        let value = word & 0x3FF;
        match code {
            SKIP => {
                let hi = r.need_word("SKIP interval")? as u32;
                let lo = r.need_word("SKIP interval")? as u32;
                pending_skip += ((hi << 16) | lo) as i32 as i64;
            }
            NUM | SUB | CHN | AUX => {
                let Some(last) = out.last_mut() else {
                    return Err(Error::AnnotationParse {
                        offset: at,
                        reason: format!("modifier code {code} before any annotation"),
                    });
                };
                let low = (value & 0xFF) as u8;
                match code {
                    NUM => {
                        num = low as i8;
                        last.num = num;
                    }
                    SUB => last.subtype = low as i8,
                    CHN => {
                        chan = low;
                        last.chan = chan;
                    }
                    _ => {
                        let len = value as usize;
                        let padded = len + len % 2;
                        let text = bytes.get(r.pos..r.pos + padded).ok_or_else(|| {
                            Error::AnnotationParse {
                                offset: r.pos,
                                reason: format!("AUX text of {len} bytes runs past end of file"),
                            }
                        })?;
                        last.aux = Some(text[..len].iter().map(|&b| b as char).collect());
                        r.pos += padded;
                    }
                }
            }
            _ => {
                time += pending_skip + value as i64;
                pending_skip = 0;
                if time < 0 {
                    return Err(Error::AnnotationParse {
                        offset: at,
                        reason: format!("negative sample time {time}"),
                    });
                }
                out.push(Annotation {
                    sample: time as u64,
                    code,
                    subtype: 0,
                    chan,
                    num,
                    aux: None,
                });
            }
        }
    }
    Ok(out)
}

/// Encodes annotations; the inverse of [`parse_annotations`] for
/// annotations in non-decreasing sample order.
pub fn write_annotations(annotations: &[Annotation]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<u8>, w: u16| out.extend_from_slice(&w.to_le_bytes());
    let mut time: i64 = 0;
    let (mut chan, mut num) = (0u8, 0i8);
    for (i, a) in annotations.iter().enumerate() {
        if a.code >= SKIP {
            return Err(Error::invalid(
                "write_annotations",
                format!("annotation {i}: code {} is reserved", a.code),
            ));
        }
        if a.code == 0 {
            return Err(Error::invalid(
                "write_annotations",
                format!("annotation {i}: code 0 is reserved"),
            ));
        }
        let mut delta = a.sample as i64 - time;
        if delta < 0 {
            return Err(Error::invalid(
                "write_annotations",
                format!(
                    "annotation {i} at sample {} precedes previous at {time}",
                    a.sample
                ),
            ));
        }
        while delta > MAX_DELTA {
            let step = delta.min(i32::MAX as i64) as u32;
            push(&mut out, (SKIP as u16) << 10);
            push(&mut out, (step >> 16) as u16);
            push(&mut out, (step & 0xFFFF) as u16);
            delta -= step as i64;
        }
        push(&mut out, ((a.code as u16) << 10) | delta as u16);
        time = a.sample as i64;
        if a.subtype != 0 {
            push(&mut out, ((SUB as u16) << 10) | a.subtype as u8 as u16);
        }
        if a.chan != chan {
            push(&mut out, ((CHN as u16) << 10) | a.chan as u16);
            chan = a.chan;
        }
        if a.num != num {
            push(&mut out, ((NUM as u16) << 10) | a.num as u8 as u16);
            num = a.num;
        }
        if let Some(aux) = &a.aux {
            let bytes: Vec<u8> = aux
                .chars()
                .map(|c| {
                    u8::try_from(c as u32).map_err(|_| {
                        Error::invalid("write_annotations", "AUX text must be Latin-1")
                    })
                })
                .collect::<Result<_>>()?;
            if bytes.len() > 255 {
                return Err(Error::invalid(
                    "write_annotations",
                    "AUX text longer than 255 bytes",
                ));
            }
            push(&mut out, ((AUX as u16) << 10) | bytes.len() as u16);
            out.extend_from_slice(&bytes);
            if bytes.len() % 2 == 1 {
                out.push(0);
            }
        }
    }
    push(&mut out, 0);
    Ok(out)
}
