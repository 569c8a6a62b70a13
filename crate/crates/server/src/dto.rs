use probattn::playground::{BBox, ClickEvent, Mask, SegmentationSession, SessionConfig};
use probattn::AdaptationConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::ApiError;

/// Mask as per-row run lengths; each row starts with a background run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskDto {
    pub height: usize,
    pub width: usize,
    pub rle: Vec<Vec<u32>>,
}

impl MaskDto {
    pub fn of(mask: &Mask) -> Self {
        MaskDto {
            height: mask.height(),
            width: mask.width(),
            rle: mask.to_rle(),
        }
    }

    pub fn decode(&self) -> probattn::Result<Mask> {
        Mask::from_rle(self.height, self.width, &self.rle)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionStateDto {
    pub id: String,
    /// Working size; clicks and masks use these coordinates.
    pub height: usize,
    pub width: usize,
    pub original_height: usize,
    pub original_width: usize,
    pub bbox: Option<BBox>,
    pub clicks: Vec<ClickEvent>,
    pub config: SessionConfig,
    pub mask: MaskDto,
    /// IoU before any click and after each click, when ground truth was supplied.
    pub iou: Vec<f64>,
}

impl SessionStateDto {
    pub fn of(id: &str, s: &SegmentationSession) -> Self {
        let (original_height, original_width) = s.original_size();
        SessionStateDto {
            id: id.to_string(),
            height: s.height(),
            width: s.width(),
            original_height,
            original_width,
            bbox: s.bbox(),
            clicks: s.clicks().to_vec(),
            config: s.config().clone(),
            mask: MaskDto::of(s.predict_mask()),
            iou: s.iou_history().to_vec(),
        }
    }

    pub(crate) fn with_id(mut self, id: String) -> Self {
        self.id = id;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub state: SessionStateDto,
}

/// Body of a config update: session config fields as a JSON merge patch,
/// with adaptation fields accepted at the top level as well, plus `replay`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigPatch {
    pub replay: bool,
    pub changes: Value,
}

impl ConfigPatch {
    pub fn parse(body: Value) -> Result<Self, ApiError> {
        let Value::Object(mut fields) = body else {
            return Err(ApiError::invalid("config patch must be a JSON object"));
        };
        let replay = match fields.remove("replay") {
            None => false,
            Some(Value::Bool(b)) => b,
            Some(other) => return Err(ApiError::invalid(format!("replay must be a boolean, got {other}"))),
        };
        let adaptation_keys = adaptation_fields();
        let mut adaptation = match fields.remove("adaptation") {
            None => Map::new(),
            Some(Value::Object(m)) => m,
            Some(other) => return Err(ApiError::invalid(format!("adaptation must be an object, got {other}"))),
        };
        let top: Vec<String> = fields.keys().filter(|k| adaptation_keys.contains(k)).cloned().collect();
        for key in top {
            let v = fields.remove(&key).expect("key present");
            adaptation.insert(key, v);
        }
        if !adaptation.is_empty() {
            fields.insert("adaptation".into(), Value::Object(adaptation));
        }
        Ok(ConfigPatch {
            replay,
            changes: Value::Object(fields),
        })
    }
}

fn adaptation_fields() -> Vec<String> {
    match serde_json::to_value(AdaptationConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn merge(target: &mut Value, patch: Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                match t.get_mut(&k) {
                    Some(slot) if v.is_object() && slot.is_object() => merge(slot, v),
                    _ => {
                        t.insert(k, v);
                    }
                }
            }
        }
        (t, p) => *t = p,
    }
}

/// Applies `patch` to `base` and validates the result.
pub(crate) fn merge_config(base: &SessionConfig, patch: Value) -> Result<SessionConfig, ApiError> {
    let patch = match patch {
        Value::Object(_) => ConfigPatch::parse(patch)?.changes,
        other => return Err(ApiError::invalid(format!("config must be a JSON object, got {other}"))),
    };
    let mut value = serde_json::to_value(base).map_err(|e| ApiError::internal(e.to_string()))?;
    merge(&mut value, patch);
    let config: SessionConfig = serde_json::from_value(value).map_err(|e| ApiError::invalid(e.to_string()))?;
    config.validate()?;
    Ok(config)
}
