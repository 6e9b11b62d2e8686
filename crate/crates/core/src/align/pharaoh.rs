use std::io::{BufRead, Write};

use super::SentenceAlignment;
use crate::error::{Error, Result};

/// Parses Pharaoh alignment lines (`i-j i-j ...`, 0-based, one line per pair).
pub fn read_pharaoh<R: BufRead>(r: R) -> Result<Vec<SentenceAlignment>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let mut links = Vec::new();
        for tok in line.split_whitespace() {
            let parsed = tok
                .split_once('-')
                .and_then(|(i, j)| Some((i.parse().ok()?, j.parse().ok()?)));
            match parsed {
                Some(link) => links.push(link),
                None => {
                    return Err(Error::Malformed {
                        line: lineno + 1,
                        reason: format!("bad link `{tok}`"),
                    })
                }
            }
        }
        out.push(SentenceAlignment::new(links));
    }
    Ok(out)
}

pub fn write_pharaoh<W: Write>(alignments: &[SentenceAlignment], mut w: W) -> Result<()> {
    for a in alignments {
        for (k, (i, j)) in a.links().iter().enumerate() {
            if k > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{i}-{j}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
