//! The analysed-corpus interchange format written by `analyze` and read by
//! `stats`: one token per line,
//! `doc_id<TAB>idx<TAB>surface<TAB>reading1;reading2;...`, each reading as
//! `lemma/pos/tag1|tag2/D-or-I`, a blank line between documents. Lemmas may
//! contain `/` (readings are split from the right); a lemma containing `;`
//! only occurs in single-reading punctuation rows, which are parsed whole.

use anyhow::{bail, Context, Result};
use morphdis::corpus::{Document, SurfaceToken};
use morphdis::morphology::{AnalysedToken, Reading, UniversalPos};

pub fn write_analysed(docs: &[Document], analysed: &[Vec<AnalysedToken>]) -> String {
    let mut out = String::new();
    for (doc, tokens) in docs.iter().zip(analysed) {
        for (idx, token) in tokens.iter().enumerate() {
            let readings: Vec<String> = token
                .readings
                .iter()
                .map(|r| {
                    format!(
                        "{}/{}/{}/{}",
                        r.lemma,
                        r.pos.name(),
                        r.tags.join("|"),
                        if r.declinable { "D" } else { "I" }
                    )
                })
                .collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                doc.id,
                idx,
                token.token.text,
                readings.join(";")
            ));
        }
        out.push('\n');
    }
    out
}

fn parse_reading(field: &str) -> Result<Reading> {
    let mut parts = field.rsplitn(4, '/');
    let decl = parts.next().context("missing declinability field")?;
    let tags = parts.next().context("missing tags field")?;
    let pos = parts.next().context("missing pos field")?;
    let lemma = parts.next().context("missing lemma field")?;
    if lemma.is_empty() {
        bail!("empty lemma in reading {field:?}");
    }
    let pos = UniversalPos::ALL
        .iter()
        .copied()
        .find(|p| p.name() == pos)
        .with_context(|| format!("unknown pos {pos:?} in reading {field:?}"))?;
    let declinable = match decl {
        "D" => true,
        "I" => false,
        other => bail!("declinability must be D or I, found {other:?}"),
    };
    let mut reading = Reading::new(lemma, pos, declinable);
    if !tags.is_empty() {
        reading.tags = tags.split('|').map(String::from).collect();
    }
    Ok(reading)
}

pub fn parse_analysed(text: &str) -> Result<(Vec<Document>, Vec<Vec<AnalysedToken>>)> {
    let mut docs: Vec<Document> = Vec::new();
    let mut analysed: Vec<Vec<AnalysedToken>> = Vec::new();
    let mut cur_id: Option<String> = None;
    let mut cur_tokens: Vec<SurfaceToken> = Vec::new();
    let mut cur_analysed: Vec<AnalysedToken> = Vec::new();

    let mut flush = |id: &mut Option<String>,
                     tokens: &mut Vec<SurfaceToken>,
                     toks: &mut Vec<AnalysedToken>| {
        if let Some(id) = id.take() {
            docs.push(Document::new(id, std::mem::take(tokens)));
            analysed.push(std::mem::take(toks));
        }
    };

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            flush(&mut cur_id, &mut cur_tokens, &mut cur_analysed);
            continue;
        }
        let cols: Vec<&str> = line.splitn(4, '\t').collect();
        if cols.len() != 4 {
            bail!("line {lineno}: expected 4 tab-separated columns");
        }
        let (doc_id, idx, surface, readings_field) = (cols[0], cols[1], cols[2], cols[3]);
        let idx: usize = idx
            .parse()
            .with_context(|| format!("line {lineno}: bad token index {idx:?}"))?;
        match &cur_id {
            Some(id) if id != doc_id => {
                flush(&mut cur_id, &mut cur_tokens, &mut cur_analysed);
                cur_id = Some(doc_id.to_string());
            }
            None => cur_id = Some(doc_id.to_string()),
            _ => {}
        }
        if idx != cur_tokens.len() {
            bail!("line {lineno}: token index {idx} out of order");
        }
        let token = SurfaceToken::new(surface);
        let readings: Vec<Reading> = if readings_field.is_empty() {
            Vec::new()
        } else if token.is_punctuation {
            vec![parse_reading(readings_field)
                .with_context(|| format!("line {lineno}"))?]
        } else {
            readings_field
                .split(';')
                .map(parse_reading)
                .collect::<Result<_>>()
                .with_context(|| format!("line {lineno}"))?
        };
        cur_analysed.push(AnalysedToken {
            token: token.clone(),
            readings,
        });
        cur_tokens.push(token);
    }
    flush(&mut cur_id, &mut cur_tokens, &mut cur_analysed);
    Ok((docs, analysed))
}
