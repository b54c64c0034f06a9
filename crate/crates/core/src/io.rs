//! JSONL event files and self-describing checkpoints.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decision::{feature_width, LogisticWeights, LOGISTIC_VERSION};
use crate::error::{Error, Result};
use crate::features::{EncodingConfig, TackleEvent};
use crate::mdn::{MdnModel, ModelArchitecture};
use crate::nn::{ParamStore, ParamTensor};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Parses one event per non-blank line, validating each.
pub fn parse_events<R: BufRead>(reader: R) -> Result<Vec<TackleEvent>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let e: TackleEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        e.validate().map_err(|err| Error::Parse {
            line: line_no,
            message: err.to_string(),
        })?;
        out.push(e);
    }
    Ok(out)
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<TackleEvent>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_events(BufReader::new(f))
}

pub fn write_events_to<W: Write>(mut w: W, events: &[TackleEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn write_events(path: impl AsRef<Path>, events: &[TackleEvent]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_events_to(&mut w, events)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub final_train_nll: Option<f64>,
    pub final_val_nll: Option<f64>,
    pub logistic_train_loss: Option<f64>,
    pub logistic_test_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MdnModel,
    pub logistic: Option<LogisticWeights>,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogisticSection {
    version: u32,
    n_features: usize,
    weights: Vec<f64>,
    bias: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    architecture: ModelArchitecture,
    encoding: EncodingConfig,
    sections: Vec<Section>,
    logistic: Option<LogisticSection>,
    metadata: TrainingMetadata,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            architecture: self.model.arch.clone(),
            encoding: self.model.encoding.clone(),
            sections: self
                .model
                .params
                .iter()
                .map(|(name, t)| Section {
                    name: name.to_string(),
                    shape: t.shape.clone(),
                    values: t.values.clone(),
                })
                .collect(),
            logistic: self.logistic.as_ref().map(|w| LogisticSection {
                version: LOGISTIC_VERSION,
                n_features: w.n_features,
                weights: w.weights.clone(),
                bias: w.bias,
            }),
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Checkpoint("missing format_version".into()))?;
        if version != CHECKPOINT_VERSION as u64 {
            return Err(Error::Version {
                found: version.min(u32::MAX as u64) as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        let file: CheckpointFile = serde_json::from_value(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut params = ParamStore::new();
        for s in file.sections {
            params.add(s.name, ParamTensor::from_values(&s.shape, s.values)?);
        }
        let model = MdnModel::from_params(file.architecture, file.encoding, params)?;
        let logistic = match file.logistic {
            None => None,
            Some(l) => {
                if l.version != LOGISTIC_VERSION {
                    return Err(Error::Version {
                        found: l.version,
                        expected: LOGISTIC_VERSION,
                    });
                }
                let expected = feature_width(&model.encoding);
                if l.n_features != expected {
                    return Err(Error::Checkpoint(format!(
                        "logistic section has {} features, encoding implies {expected}",
                        l.n_features
                    )));
                }
                let w = LogisticWeights {
                    n_features: l.n_features,
                    weights: l.weights,
                    bias: l.bias,
                };
                w.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
                Some(w)
            }
        };
        Ok(Self {
            model,
            logistic,
            metadata: file.metadata,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, cp: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let mut text = cp.to_json()?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{encode_event, tests::sample_event};
    use crate::mdn::ModelArchitecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn checkpoint() -> Checkpoint {
        let enc = EncodingConfig::new(1, 4);
        let model = MdnModel::init(ModelArchitecture::default(), enc.clone(), 3).unwrap();
        let mut w = LogisticWeights::zeros(feature_width(&enc));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        w.weights.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        Checkpoint {
            model,
            logistic: Some(w),
            metadata: TrainingMetadata {
                seed: 3,
                epochs: 2,
                best_epoch: 1,
                final_train_nll: Some(10.25),
                ..Default::default()
            },
        }
    }

    #[test]
    fn events_round_trip_and_blank_lines() {
        let mut b = sample_event();
        b.tackle_number = 6;
        b.last_tackle_play = Some(crate::features::LastTacklePlay::OffensiveKick);
        b.pos_x = 0.1 + 0.2;
        let events = vec![sample_event(), b];
        let mut buf = Vec::new();
        write_events_to(&mut buf, &events).unwrap();
        buf.extend_from_slice(b"\n  \n");
        assert_eq!(parse_events(&buf[..]).unwrap(), events);
        assert!(parse_events(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn bad_lines_cite_line_number() {
        let good = serde_json::to_string(&sample_event()).unwrap();
        let bad = good.replace("\"tackle_number\":1", "\"tackle_number\":7");
        let text = format!("{good}\n{bad}\n");
        match parse_events(text.as_bytes()) {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains("tackle_number"), "{message}"),
            other => panic!("{other:?}"),
        }
        let unknown = good.replace("\"round\"", "\"extra\":1,\"round\"");
        assert!(matches!(
            parse_events(unknown.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let missing = good.replace("\"round\":1,", "");
        assert!(matches!(
            parse_events(missing.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_events(&b"{not json\n"[..]),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let cp = checkpoint();
        let text = cp.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.to_json().unwrap(), text);
        let ex = encode_event(&sample_event(), &cp.model.encoding).unwrap();
        assert_eq!(cp.model.forward(&ex).unwrap(), back.model.forward(&ex).unwrap());
    }

    #[test]
    fn checkpoint_rejections() {
        let text = checkpoint().to_json().unwrap();
        assert!(matches!(
            Checkpoint::from_json(&text[..text.len() / 2]),
            Err(Error::Checkpoint(_))
        ));
        let v2 = text.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
        assert!(matches!(
            Checkpoint::from_json(&v2),
            Err(Error::Version { found: 9, expected: 1 })
        ));
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["sections"][0]["values"].as_array_mut().unwrap().pop();
        assert!(Checkpoint::from_json(&value.to_string()).is_err());
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["logistic"]["version"] = 2.into();
        assert!(matches!(
            Checkpoint::from_json(&value.to_string()),
            Err(Error::Version { found: 2, .. })
        ));
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["architecture"]["trunk_hidden"] = 32.into();
        assert!(Checkpoint::from_json(&value.to_string()).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cp = checkpoint();
        save_checkpoint(dir.path().join("m.json"), &cp).unwrap();
        assert_eq!(load_checkpoint(dir.path().join("m.json")).unwrap(), cp);
        write_events(dir.path().join("e.jsonl"), &[sample_event()]).unwrap();
        assert_eq!(read_events(dir.path().join("e.jsonl")).unwrap(), vec![sample_event()]);
        assert!(matches!(
            read_events(dir.path().join("nope.jsonl")),
            Err(Error::Io { .. })
        ));
    }
}
