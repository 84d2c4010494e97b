//! Line-delimited corpus manifest: tab-separated fields
//! `id  relative_path  speaker_id  gender  tokens` with tokens as
//! space-separated integers.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{CorpusError, Gender, VoiceProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceMeta {
    pub id: String,
    pub relative_path: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub tokens: Vec<usize>,
}

pub fn write_manifest(path: &Path, rows: &[UtteranceMeta]) -> Result<(), CorpusError> {
    let mut f = std::fs::File::create(path)?;
    for r in rows {
        let tokens = r
            .tokens
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            r.id, r.relative_path, r.speaker_id, r.gender, tokens
        )?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<UtteranceMeta>, CorpusError> {
    let f = std::fs::File::open(path)?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CorpusError::BadManifest { line: i + 1, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 tab-separated fields, got {}", fields.len())));
        }
        let gender = Gender::parse(fields[3])
            .ok_or_else(|| bad(format!("unknown gender `{}`", fields[3])))?;
        let tokens = fields[4]
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("bad token list: {e}")))?;
        if tokens.is_empty() {
            return Err(bad("empty token sequence".into()));
        }
        rows.push(UtteranceMeta {
            id: fields[0].to_string(),
            relative_path: fields[1].to_string(),
            speaker_id: fields[2].to_string(),
            gender,
            tokens,
        });
    }
    Ok(rows)
}

pub fn write_speakers(path: &Path, speakers: &[VoiceProfile]) -> Result<(), CorpusError> {
    let mut f = std::fs::File::create(path)?;
    for s in speakers {
        writeln!(f, "{}\t{}\t{}\t{}", s.speaker_id, s.gender, s.f0, s.tract_scale)?;
    }
    Ok(())
}

pub fn read_speakers(path: &Path) -> Result<Vec<VoiceProfile>, CorpusError> {
    let f = std::fs::File::open(path)?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CorpusError::BadManifest { line: i + 1, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        }
        rows.push(VoiceProfile {
            speaker_id: fields[0].to_string(),
            gender: Gender::parse(fields[1])
                .ok_or_else(|| bad(format!("unknown gender `{}`", fields[1])))?,
            f0: fields[2].parse().map_err(|e| bad(format!("bad f0: {e}")))?,
            tract_scale: fields[3].parse().map_err(|e| bad(format!("bad tract_scale: {e}")))?,
        });
    }
    Ok(rows)
}
