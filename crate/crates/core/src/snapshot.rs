//! Versioned text snapshots of trained models.
//!
//! ```text
//! sldae2e-model v1 K=<K> V=<V> alpha=<a> beta=<b>
//! <K lines of V topic logits>
//! <one line of K eta values>
//! recog v1 H=<H>            (approx-regime models only)
//! <H lines of V hidden weights>
//! <H lines of K output weights>
//! ```
//!
//! Values are space separated and written with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::recognition::RecognitionParams;

const MAGIC: &str = "sldae2e-model";
const RECOG_MAGIC: &str = "recog";
const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub params: ModelParams,
    pub recog: Option<RecognitionParams>,
}

fn push_row<'a>(out: &mut String, row: impl IntoIterator<Item = &'a f64>) {
    let cells: Vec<String> = row.into_iter().map(|x| format!("{x:.16e}")).collect();
    out.push_str(&cells.join(" "));
    out.push('\n');
}

pub fn format_snapshot(params: &ModelParams, recog: Option<&RecognitionParams>) -> String {
    let mut out = format!(
        "{MAGIC} {VERSION} K={} V={} alpha={:e} beta={:e}\n",
        params.num_topics(),
        params.vocab_size(),
        params.alpha,
        params.beta
    );
    for row in params.topic_logits.rows() {
        push_row(&mut out, row.iter());
    }
    push_row(&mut out, params.eta.iter());
    if let Some(r) = recog {
        out.push_str(&format!("{RECOG_MAGIC} {VERSION} H={}\n", r.hidden_size()));
        for row in r.hidden.rows() {
            push_row(&mut out, row.iter());
        }
        for row in r.output.rows() {
            push_row(&mut out, row.iter());
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((i, l)) => Ok((i + 1, l.trim_end())),
            None => Err(Error::Format(format!("snapshot truncated: missing {what}"))),
        }
    }

    fn row(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let (line, text) = self.next_line(what)?;
        let mut row = Vec::with_capacity(len.min(1 << 16));
        for tok in text.split(' ') {
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::parse(line, format!("bad number {tok:?} in {what}")))?;
            if !x.is_finite() {
                return Err(Error::parse(line, format!("non-finite value in {what}")));
            }
            row.push(x);
        }
        if row.len() != len {
            return Err(Error::parse(
                line,
                format!("{what} has {} values, expected {len}", row.len()),
            ));
        }
        Ok(row)
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Array2<f64>> {
        let mut data = Vec::new();
        for _ in 0..rows {
            data.extend(self.row(cols, what)?);
        }
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
    }
}

fn header_field<'a>(tok: Option<&'a str>, key: &str, line: usize) -> Result<&'a str> {
    tok.and_then(|t| t.strip_prefix(key)?.strip_prefix('='))
        .ok_or_else(|| Error::parse(line, format!("expected {key}=<value>")))
}

fn header_usize(tok: Option<&str>, key: &str, line: usize) -> Result<usize> {
    let v = header_field(tok, key, line)?;
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::parse(line, format!("{key} must be a positive integer, got {v:?}"))),
    }
}

fn header_f64(tok: Option<&str>, key: &str, line: usize) -> Result<f64> {
    let v = header_field(tok, key, line)?;
    v.parse::<f64>()
        .map_err(|_| Error::parse(line, format!("{key} must be a number, got {v:?}")))
}

pub fn parse_snapshot(text: &str) -> Result<Snapshot> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (ln, header) = lines.next_line("header")?;
    let mut tok = header.split(' ');
    if tok.next() != Some(MAGIC) {
        return Err(Error::parse(ln, "not a model snapshot"));
    }
    if tok.next() != Some(VERSION) {
        return Err(Error::parse(ln, "unsupported snapshot version"));
    }
    let k = header_usize(tok.next(), "K", ln)?;
    let v = header_usize(tok.next(), "V", ln)?;
    let alpha = header_f64(tok.next(), "alpha", ln)?;
    let beta = header_f64(tok.next(), "beta", ln)?;
    if tok.next().is_some() {
        return Err(Error::parse(ln, "trailing header fields"));
    }
    let logits = lines.matrix(k, v, "topic logits")?;
    let eta = lines.row(k, "eta")?;
    let params = ModelParams::new(logits, eta, alpha, beta)?;

    let recog = match lines.inner.next() {
        None => None,
        Some((i, l)) => {
            let ln = i + 1;
            let mut tok = l.trim_end().split(' ');
            if tok.next() != Some(RECOG_MAGIC) || tok.next() != Some(VERSION) {
                return Err(Error::parse(ln, "expected recognition section or end of file"));
            }
            let h = header_usize(tok.next(), "H", ln)?;
            if tok.next().is_some() {
                return Err(Error::parse(ln, "trailing header fields"));
            }
            let hidden = lines.matrix(h, v, "recognition hidden weights")?;
            let output = lines.matrix(h, k, "recognition output weights")?;
            Some(RecognitionParams::new(hidden, output)?)
        }
    };
    if let Some((i, _)) = lines.inner.next() {
        return Err(Error::parse(i + 1, "unexpected content after snapshot"));
    }
    Ok(Snapshot { params, recog })
}

pub fn write_snapshot(
    path: impl AsRef<Path>,
    params: &ModelParams,
    recog: Option<&RecognitionParams>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_snapshot(params, recog)).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot(&text).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Format(format!("{}:{line}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, seeded_rng};
    use proptest::prelude::*;

    fn sample() -> (ModelParams, RecognitionParams) {
        let mut p = init_params(3, 5, 7, 2.0).unwrap();
        p.eta = vec![0.1, -1.0 / 3.0, 7.25e-12];
        let mut rng = seeded_rng(1);
        let mut r = RecognitionParams::init(4, 5, 3, &mut rng).unwrap();
        r.output[[1, 2]] = std::f64::consts::PI;
        (p, r)
    }

    #[test]
    fn round_trip_is_exact() {
        let (p, r) = sample();
        let back = parse_snapshot(&format_snapshot(&p, None)).unwrap();
        assert_eq!(back.params, p);
        assert!(back.recog.is_none());
        let back = parse_snapshot(&format_snapshot(&p, Some(&r))).unwrap();
        assert_eq!(back.params, p);
        assert_eq!(back.recog, Some(r));
    }

    #[test]
    fn header_layout() {
        let (p, _) = sample();
        let text = format_snapshot(&p, None);
        assert!(text.starts_with("sldae2e-model v1 K=3 V=5 alpha=1.01e0 beta=1e0\n"));
        assert_eq!(text.lines().count(), 1 + 3 + 1);
    }

    #[test]
    fn rejects_malformed() {
        let (p, r) = sample();
        let good = format_snapshot(&p, Some(&r));
        assert!(parse_snapshot("").is_err());
        assert!(parse_snapshot(&good.replace("v1 K", "v2 K")).is_err());
        assert!(parse_snapshot(&good.replace("K=3", "K=4")).is_err());
        assert!(parse_snapshot(&good.replace("K=3", "K=0")).is_err());
        assert!(parse_snapshot(&good.replace("H=4", "H=5")).is_err());
        assert!(parse_snapshot(&format!("{good}extra\n")).is_err());
        let lines: Vec<&str> = good.lines().collect();
        assert!(parse_snapshot(&lines[..4].join("\n")).is_err());
        let mut bad = lines.clone();
        bad[1] = "nan 0 0 0 0";
        assert!(parse_snapshot(&bad.join("\n")).is_err());
        let err = parse_snapshot(&good.replace("alpha=1.01e0", "alpha=-1")).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let (p, r) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        write_snapshot(&path, &p, Some(&r)).unwrap();
        let back = load_snapshot(&path).unwrap();
        assert_eq!(back.params, p);
        assert_eq!(back.recog.unwrap(), r);
    }

    proptest! {
        #[test]
        fn any_finite_values_round_trip(
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 8),
        ) {
            let logits = Array2::from_shape_vec((2, 3), vals[..6].to_vec()).unwrap();
            let p = ModelParams::new(logits, vals[6..].to_vec(), 1.5, 0.5).unwrap();
            let back = parse_snapshot(&format_snapshot(&p, None)).unwrap();
            for (a, b) in back.params.topic_logits.iter().zip(p.topic_logits.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.params.eta, p.eta);
        }
    }
}
