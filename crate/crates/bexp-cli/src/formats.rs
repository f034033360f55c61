//! On-disk formats: the BED1 text dataset, the model JSON document
//! (schema version 1), and the representations JSON. All writers are
//! atomic (temp file + rename) and byte-deterministic.

use crate::error::{CliError, Result};
use bexp::compose::Rule;
use bexp::inference::{ExpertModel, Representation};
use bexp::learning::GeometricModel;
use bexp::likelihood::{BernoulliTemplate, BinaryVector};
use bexp::transform::{TransformGrid, TransformId};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

// ---------------------------------------------------------------------------
// Atomic file output
// ---------------------------------------------------------------------------

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| CliError::io("creating temp file", e))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::io("writing temp file", e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io("renaming into place", e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(&format!("reading {}", path.display()), e))
}

// ---------------------------------------------------------------------------
// BED1 datasets
// ---------------------------------------------------------------------------

/// Serializes image records to the BED1 text format: a `BED1 <N> <H> <W>`
/// header line, then one row-major `{0,1}` string per record. LF endings,
/// no trailing whitespace.
pub fn encode_bed(records: &[BinaryVector]) -> Result<String> {
    let Some(first) = records.first() else {
        return Err(CliError::Usage("cannot write an empty dataset".into()));
    };
    let (h, w) = first
        .shape()
        .ok_or_else(|| CliError::Usage("BED1 records must be image-shaped".into()))?;
    let mut out = String::with_capacity(records.len() * (h * w + 1) + 32);
    out.push_str(&format!("BED1 {} {} {}\n", records.len(), h, w));
    for record in records {
        if record.shape() != Some((h, w)) {
            return Err(CliError::Usage("BED1 records must share one shape".into()));
        }
        for &bit in record.bits() {
            out.push(if bit == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    Ok(out)
}

/// Strict BED1 parser: exact line lengths, `{0,1}` characters only, LF line
/// endings, no trailing content.
pub fn decode_bed(bytes: &[u8]) -> Result<Vec<BinaryVector>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| CliError::Usage("BED1 file is not valid UTF-8".into()))?;
    let bad = |msg: &str| CliError::Usage(format!("malformed BED1 file: {msg}"));
    let mut lines = text.split('\n');
    let header = lines.next().ok_or_else(|| bad("missing header"))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != "BED1" {
        return Err(bad("header must be `BED1 <N> <H> <W>`"));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| bad(&format!("{what} `{s}` is not a number")))
    };
    let n = parse(fields[1], "record count")?;
    let h = parse(fields[2], "height")?;
    let w = parse(fields[3], "width")?;
    if h == 0 || w == 0 {
        return Err(bad("height and width must be positive"));
    }
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines.next().ok_or_else(|| bad("fewer records than the header promises"))?;
        if line.len() != h * w {
            return Err(bad(&format!(
                "record line has {} characters, expected {}",
                line.len(),
                h * w
            )));
        }
        let mut bits = Vec::with_capacity(h * w);
        for ch in line.chars() {
            match ch {
                '0' => bits.push(0u8),
                '1' => bits.push(1u8),
                _ => return Err(bad(&format!("invalid character `{ch}` in record"))),
            }
        }
        records.push(BinaryVector::new(bits)?.with_shape(h, w)?);
    }
    match lines.next() {
        Some("") => {}
        _ => return Err(bad("file must end with exactly one trailing newline")),
    }
    if lines.next().is_some() {
        return Err(bad("trailing content after the last record"));
    }
    Ok(records)
}

pub fn write_bed(path: &Path, records: &[BinaryVector]) -> Result<()> {
    write_atomic(path, encode_bed(records)?.as_bytes())
}

pub fn read_bed(path: &Path) -> Result<Vec<BinaryVector>> {
    decode_bed(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// Model JSON (schema version 1)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct GridFile {
    pub shifts_x: Vec<i32>,
    pub shifts_y: Vec<i32>,
    pub rotations: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GeometryFile {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub rule: String,
    /// Abstention point; meaningful only when `rule` is `MaxMinusMin`.
    pub q: f64,
    pub epsilon: f64,
    pub shape: [usize; 2],
    pub experts: Vec<Vec<f64>>,
    /// Observation counts; serialized as integers whenever integral.
    pub counts: Vec<Vec<serde_json::Number>>,
    pub transform_grid: GridFile,
    pub geometry: Option<GeometryFile>,
}

pub fn rule_name(rule: Rule) -> &'static str {
    match rule {
        Rule::NoisyOr => "NoisyOr",
        Rule::SumOfOdds => "SumOfOdds",
        Rule::Max => "Max",
        Rule::ArithmeticMean => "ArithmeticMean",
        Rule::SumOfLogOdds => "SumOfLogOdds",
        Rule::NormalizedSumExact => "NormalizedSumExact",
        Rule::NormalizedSumApprox => "NormalizedSumApprox",
        Rule::MaxMinusMin { .. } => "MaxMinusMin",
    }
}

pub fn rule_from_name(name: &str, q: f64) -> Result<Rule> {
    Ok(match name {
        "NoisyOr" => Rule::NoisyOr,
        "SumOfOdds" => Rule::SumOfOdds,
        "Max" => Rule::Max,
        "ArithmeticMean" => Rule::ArithmeticMean,
        "SumOfLogOdds" => Rule::SumOfLogOdds,
        "NormalizedSumExact" => Rule::NormalizedSumExact,
        "NormalizedSumApprox" => Rule::NormalizedSumApprox,
        "MaxMinusMin" => Rule::MaxMinusMin { q },
        other => {
            return Err(CliError::Usage(format!("unknown rule `{other}`")));
        }
    })
}

fn count_number(v: f64) -> serde_json::Number {
    if v.fract() == 0.0 && v >= 0.0 && v <= 2f64.powi(53) {
        serde_json::Number::from(v as u64)
    } else {
        serde_json::Number::from_f64(v).expect("counts are finite")
    }
}

pub fn model_to_file(model: &ExpertModel) -> Result<ModelFile> {
    let (h, w) = model
        .shape()
        .ok_or_else(|| CliError::Usage("only image-shaped models are serializable".into()))?;
    Ok(ModelFile {
        version: 1,
        rule: rule_name(model.rule).to_string(),
        q: match model.rule {
            Rule::MaxMinusMin { q } => q,
            _ => 0.5,
        },
        epsilon: model.epsilon,
        shape: [h, w],
        experts: model
            .templates
            .iter()
            .map(|t| t.probs().to_vec())
            .collect(),
        counts: model
            .counts
            .iter()
            .map(|row| row.iter().map(|&v| count_number(v)).collect())
            .collect(),
        transform_grid: GridFile {
            shifts_x: model.grid.shifts_x().to_vec(),
            shifts_y: model.grid.shifts_y().to_vec(),
            rotations: model.grid.rotations().to_vec(),
        },
        geometry: model.geometry.as_ref().map(|g| GeometryFile {
            mean: g.mean().to_vec(),
            cov: g.cov().to_vec(),
            n: g.sample_count(),
        }),
    })
}

pub fn model_from_file(file: &ModelFile) -> Result<ExpertModel> {
    if file.version != 1 {
        return Err(CliError::Usage(format!(
            "unsupported model schema version {}",
            file.version
        )));
    }
    let rule = rule_from_name(&file.rule, file.q)?;
    let [h, w] = file.shape;
    let templates: Vec<BernoulliTemplate> = file
        .experts
        .iter()
        .map(|probs| Ok(BernoulliTemplate::new(probs.clone())?.with_shape(h, w)?))
        .collect::<Result<_>>()?;
    let grid = TransformGrid::new(
        file.transform_grid.shifts_x.clone(),
        file.transform_grid.shifts_y.clone(),
        file.transform_grid.rotations.clone(),
    )?;
    let counts: Vec<Vec<f64>> = file
        .counts
        .iter()
        .map(|row| {
            row.iter()
                .map(|n| {
                    n.as_f64()
                        .ok_or_else(|| CliError::Usage("count is not a number".into()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut model =
        ExpertModel::new(rule, templates, grid, file.epsilon, true)?.with_counts(counts)?;
    if let Some(g) = &file.geometry {
        model.geometry = Some(GeometricModel::new(g.mean.clone(), g.cov.clone(), g.n)?);
    }
    Ok(model)
}

pub fn encode_model(model: &ExpertModel) -> Result<String> {
    let file = model_to_file(model)?;
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Usage(format!("model serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn write_model(path: &Path, model: &ExpertModel) -> Result<()> {
    write_atomic(path, encode_model(model)?.as_bytes())
}

pub fn read_model(path: &Path) -> Result<ExpertModel> {
    let bytes = read_file(path)?;
    let file: ModelFile = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("malformed model file: {e}")))?;
    model_from_file(&file)
}

// ---------------------------------------------------------------------------
// Representations JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct RepFile {
    pub picks: Vec<[usize; 2]>,
    pub loglik: f64,
    pub trace: Vec<f64>,
}

pub fn encode_reps(reps: &[Representation]) -> Result<String> {
    let files: Vec<RepFile> = reps
        .iter()
        .map(|r| RepFile {
            picks: r.picks.iter().map(|&(k, t)| [k, t.0]).collect(),
            loglik: r.loglik,
            trace: r.trace.clone(),
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&files)
        .map_err(|e| CliError::Usage(format!("representation serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn decode_reps(bytes: &[u8]) -> Result<Vec<Representation>> {
    let files: Vec<RepFile> = serde_json::from_slice(bytes)
        .map_err(|e| CliError::Usage(format!("malformed representations file: {e}")))?;
    Ok(files
        .into_iter()
        .map(|f| Representation {
            picks: f.picks.iter().map(|&[k, t]| (k, TransformId(t))).collect(),
            loglik: f.loglik,
            trace: f.trace,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Scene truth sidecar
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneTruthFile {
    /// Planted `(glyph index, transform id)` pairs in placement order.
    pub truth: Vec<[usize; 2]>,
    pub transform_grid: GridFile,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<BinaryVector> {
        vec![
            BinaryVector::new(vec![1, 0, 0, 1, 1, 0])
                .unwrap()
                .with_shape(2, 3)
                .unwrap(),
            BinaryVector::new(vec![0, 0, 1, 0, 1, 1])
                .unwrap()
                .with_shape(2, 3)
                .unwrap(),
        ]
    }

    #[test]
    fn bed_round_trip_is_byte_identical() {
        let records = sample_records();
        let text = encode_bed(&records).unwrap();
        assert_eq!(text, "BED1 2 2 3\n100110\n001011\n");
        let parsed = decode_bed(text.as_bytes()).unwrap();
        assert_eq!(parsed, records);
        assert_eq!(encode_bed(&parsed).unwrap(), text);
    }

    #[test]
    fn bed_parser_rejects_malformed_input() {
        for bad in [
            "BED2 1 2 3\n100110\n",
            "BED1 1 2\n1001\n",
            "BED1 1 2 3\n10011\n",
            "BED1 1 2 3\n100112\n",
            "BED1 2 2 3\n100110\n",
            "BED1 1 2 3\n100110",
            "BED1 1 2 3\n100110\n\n",
            "BED1 1 2 3\r\n100110\r\n",
        ] {
            assert!(decode_bed(bad.as_bytes()).is_err(), "accepted: {bad:?}");
        }
    }

    #[test]
    fn model_round_trip_preserves_numbers_exactly() {
        let templates = vec![
            BernoulliTemplate::new(vec![0.1234567890123456, 1.0 / 3.0, 1.0, 0.0])
                .unwrap()
                .with_shape(2, 2)
                .unwrap(),
        ];
        let grid = TransformGrid::new(vec![-2, 0, 2], vec![0], vec![0.0, 10.0]).unwrap();
        let model = ExpertModel::new(Rule::MaxMinusMin { q: 0.5 }, templates, grid, 1.0, true)
            .unwrap()
            .with_counts(vec![vec![3.0, 2.0, 7.0, 2.0]])
            .unwrap();
        let text = encode_model(&model).unwrap();
        // Integral counts serialize as JSON integers.
        assert!(text.contains("\n      3,"), "{text}");
        assert!(!text.contains("3.0,"), "{text}");
        let parsed: ModelFile = serde_json::from_str(&text).unwrap();
        let restored = model_from_file(&parsed).unwrap();
        assert_eq!(restored.templates, model.templates);
        assert_eq!(restored.counts, model.counts);
        assert_eq!(restored.rule, model.rule);
        // Write -> read -> write is byte identical.
        assert_eq!(encode_model(&restored).unwrap(), text);
    }

    #[test]
    fn reps_round_trip() {
        let reps = vec![Representation {
            picks: vec![(0, TransformId(3)), (2, TransformId(0))],
            loglik: -12.5,
            trace: vec![-20.0, -12.5],
        }];
        let text = encode_reps(&reps).unwrap();
        let parsed = decode_reps(text.as_bytes()).unwrap();
        assert_eq!(parsed, reps);
        assert_eq!(encode_reps(&parsed).unwrap(), text);
    }
}
