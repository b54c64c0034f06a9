//! Single-event prediction: the full state summary plus play probabilities
//! on the last tackle.

use serde::{Deserialize, Serialize};

use crate::decision::{predict_play, LogisticWeights};
use crate::error::Result;
use crate::features::{encode_event, TackleEvent};
use crate::inference::StateSummary;
use crate::mdn::MdnModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayProbabilities {
    pub run: f64,
    pub offensive_kick: f64,
    pub defensive_kick: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(flatten)]
    pub state: StateSummary,
    /// Only present on tackle six when a decision model is available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub play_probabilities: Option<PlayProbabilities>,
}

pub fn predict(event: &TackleEvent, model: &MdnModel, policy: Option<&LogisticWeights>) -> Result<Prediction> {
    event.validate()?;
    let ex = encode_event(event, &model.encoding)?;
    let state = StateSummary::of(&model.forward(&ex)?)?;
    let play_probabilities = match policy {
        Some(w) if event.tackle_number == 6 => {
            let p = predict_play(&ex, w)?;
            Some(PlayProbabilities {
                run: p[0],
                offensive_kick: p[1],
                defensive_kick: p[2],
            })
        }
        _ => None,
    };
    Ok(Prediction {
        state,
        play_probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::feature_width;
    use crate::features::{tests::sample_event, EncodingConfig};
    use crate::mdn::ModelArchitecture;

    #[test]
    fn play_probabilities_only_on_last_tackle() {
        let enc = EncodingConfig::new(1, 4);
        let m = MdnModel::init(ModelArchitecture::default(), enc.clone(), 0).unwrap();
        let w = LogisticWeights::zeros(feature_width(&enc));
        let mut e = sample_event();
        for t in 1..=5 {
            e.tackle_number = t;
            assert!(predict(&e, &m, Some(&w)).unwrap().play_probabilities.is_none());
        }
        e.tackle_number = 6;
        let p = predict(&e, &m, Some(&w)).unwrap().play_probabilities.unwrap();
        assert!((p.run + p.offensive_kick + p.defensive_kick - 1.0).abs() < 1e-12);
        assert!(predict(&e, &m, None).unwrap().play_probabilities.is_none());
        let json = serde_json::to_value(predict(&e, &m, Some(&w)).unwrap()).unwrap();
        assert!(json.get("win_probability").is_some() && json.get("play_probabilities").is_some());
    }
}
