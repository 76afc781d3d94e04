//! Data model for predictions and ground truth, plus COCO-style JSON
//! ingestion, validation and emission.
//!
//! Prediction files are JSON arrays of
//! `{image_id, category_id, bbox: [x, y, w, h], score}` records; ground
//! truth is COCO annotation JSON (`images` / `annotations` / `categories`).
//! Boxes are converted to corner form on the way in and back to
//! `[x, y, w, h]` on the way out.

use std::collections::BTreeSet;
use std::collections::BTreeMap;
use std::fmt;

use serde_json::Value;
use thiserror::Error;

use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {index}: invalid field \"{field}\": {reason}")]
    Record {
        index: usize,
        field: &'static str,
        reason: String,
    },
    #[error("record {index}: unknown category id {category}")]
    UnknownCategory { index: usize, category: u32 },
    #[error("{section}[{index}]: {reason}")]
    Entry {
        section: &'static str,
        index: usize,
        reason: String,
    },
    #[error("annotations[{index}]: unknown image id {image}")]
    UnknownImage { index: usize, image: ImageId },
    #[error("detection for {image}/{category:?} has category outside the declared set")]
    CategoryOutsideSet { image: ImageId, category: CategoryId },
}

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("cannot merge an empty list of prediction sets")]
    Empty,
    #[error("category sets differ between \"{first}\" and \"{other}\"")]
    CategoryMismatch { first: String, other: String },
}

/// Opaque image identifier. JSON integers and strings are both accepted;
/// a string that is itself a canonical decimal integer (`"7"`, `"-3"`)
/// normalizes to the integer form, so the same image referenced as `7` in
/// one file and `"7"` in another compares equal. Padded forms like
/// `"0007"` stay textual.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImageId {
    Int(i64),
    Text(String),
}

impl ImageId {
    pub fn from_json(value: &Value) -> Option<ImageId> {
        match value {
            Value::Number(n) => n.as_i64().map(ImageId::Int),
            Value::String(s) => Some(Self::from_text(s)),
            _ => None,
        }
    }

    fn from_text(s: &str) -> ImageId {
        match s.parse::<i64>() {
            Ok(n) if n.to_string() == s => ImageId::Int(n),
            _ => ImageId::Text(s.to_owned()),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            ImageId::Int(n) => Value::from(*n),
            ImageId::Text(s) => Value::from(s.as_str()),
        }
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageId::Int(n) => write!(f, "{n}"),
            ImageId::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for ImageId {
    fn from(n: i64) -> Self {
        ImageId::Int(n)
    }
}

impl From<&str> for ImageId {
    fn from(s: &str) -> Self {
        ImageId::from_text(s)
    }
}

/// Dataset class identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryId(pub u32);

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One predicted box: where, what, and how confident.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    /// Validates `score` in `[0, 1]`; the box carries its own invariants.
    pub fn new(
        image_id: ImageId,
        category_id: CategoryId,
        bbox: BBox,
        score: f64,
    ) -> Result<Self, String> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(format!("score must be in [0, 1], got {score}"));
        }
        Ok(Self {
            image_id,
            category_id,
            bbox,
            score,
        })
    }
}

/// All detections of one model run over a dataset.
///
/// Immutable after construction; the grouping index always reflects the
/// flat detection list. Safe to share across threads for reading.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    source_label: String,
    categories: BTreeSet<CategoryId>,
    detections: Vec<Detection>,
    groups: BTreeMap<(ImageId, CategoryId), Vec<usize>>,
}

impl PredictionSet {
    pub fn new(
        source_label: impl Into<String>,
        categories: BTreeSet<CategoryId>,
        detections: Vec<Detection>,
    ) -> Result<Self, ParseError> {
        for det in &detections {
            if !categories.contains(&det.category_id) {
                return Err(ParseError::CategoryOutsideSet {
                    image: det.image_id.clone(),
                    category: det.category_id,
                });
            }
        }
        let groups = build_groups(&detections);
        Ok(Self {
            source_label: source_label.into(),
            categories,
            detections,
            groups,
        })
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn categories(&self) -> &BTreeSet<CategoryId> {
        &self.categories
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Indices (into [`Self::detections`]) of the detections for one
    /// `(image, category)` group, in input order.
    pub fn group(&self, image: &ImageId, category: CategoryId) -> &[usize] {
        self.groups
            .get(&(image.clone(), category))
            .map_or(&[], Vec::as_slice)
    }

    /// Iterates groups in sorted `(image, category)` order.
    pub fn groups(&self) -> impl Iterator<Item = (&(ImageId, CategoryId), &Vec<usize>)> {
        self.groups.iter()
    }

    pub fn images(&self) -> BTreeSet<&ImageId> {
        self.detections.iter().map(|d| &d.image_id).collect()
    }
}

fn build_groups(detections: &[Detection]) -> BTreeMap<(ImageId, CategoryId), Vec<usize>> {
    let mut groups: BTreeMap<(ImageId, CategoryId), Vec<usize>> = BTreeMap::new();
    for (idx, det) in detections.iter().enumerate() {
        groups
            .entry((det.image_id.clone(), det.category_id))
            .or_default()
            .push(idx);
    }
    groups
}

/// Image dimensions from a ground-truth file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageInfo {
    pub width: u32,
    pub height: u32,
}

/// One labeled box.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BBox,
}

/// The labeled dataset: images with their dimensions, the category set,
/// and ground-truth boxes (clamped to image bounds on ingestion).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    images: BTreeMap<ImageId, ImageInfo>,
    categories: BTreeMap<CategoryId, String>,
    annotations: Vec<Annotation>,
    groups: BTreeMap<(ImageId, CategoryId), Vec<usize>>,
}

impl GroundTruth {
    pub fn images(&self) -> &BTreeMap<ImageId, ImageInfo> {
        &self.images
    }

    /// Category ids with their names, as declared in the file.
    pub fn categories(&self) -> &BTreeMap<CategoryId, String> {
        &self.categories
    }

    pub fn category_ids(&self) -> BTreeSet<CategoryId> {
        self.categories.keys().copied().collect()
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    /// Indices of annotations for one `(image, category)` group.
    pub fn group(&self, image: &ImageId, category: CategoryId) -> &[usize] {
        self.groups
            .get(&(image.clone(), category))
            .map_or(&[], Vec::as_slice)
    }
}

/// Parses a COCO-results-style JSON array of detection records against a
/// declared category set. Every malformed record is reported with its
/// index in the array.
pub fn parse_predictions(
    bytes: &[u8],
    categories: &BTreeSet<CategoryId>,
    source_label: &str,
) -> Result<PredictionSet, ParseError> {
    let records: Vec<Value> = serde_json::from_slice(bytes)?;
    let mut detections = Vec::with_capacity(records.len());
    for (index, record) in records.iter().enumerate() {
        detections.push(parse_record(index, record, categories)?);
    }
    PredictionSet::new(source_label, categories.clone(), detections)
}

fn parse_record(
    index: usize,
    record: &Value,
    categories: &BTreeSet<CategoryId>,
) -> Result<Detection, ParseError> {
    let field = |name: &'static str| -> Result<&Value, ParseError> {
        record.get(name).ok_or(ParseError::Record {
            index,
            field: name,
            reason: "missing".into(),
        })
    };

    let image_id = ImageId::from_json(field("image_id")?).ok_or(ParseError::Record {
        index,
        field: "image_id",
        reason: "expected an integer or a string".into(),
    })?;

    let category_id = parse_category(index, "category_id", field("category_id")?)?;
    if !categories.contains(&category_id) {
        return Err(ParseError::UnknownCategory {
            index,
            category: category_id.0,
        });
    }

    let bbox = parse_bbox(index, field("bbox")?)?;

    let score = field("score")?.as_f64().ok_or(ParseError::Record {
        index,
        field: "score",
        reason: "expected a number".into(),
    })?;
    let detection =
        Detection::new(image_id, category_id, bbox, score).map_err(|reason| ParseError::Record {
            index,
            field: "score",
            reason,
        })?;
    Ok(detection)
}

fn parse_category(
    index: usize,
    field: &'static str,
    value: &Value,
) -> Result<CategoryId, ParseError> {
    value
        .as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .map(CategoryId)
        .ok_or(ParseError::Record {
            index,
            field,
            reason: "expected a non-negative integer".into(),
        })
}

fn parse_bbox(index: usize, value: &Value) -> Result<BBox, ParseError> {
    let arr = value.as_array().filter(|a| a.len() == 4).ok_or(ParseError::Record {
        index,
        field: "bbox",
        reason: "expected [x, y, width, height]".into(),
    })?;
    let mut xywh = [0.0f64; 4];
    for (slot, v) in xywh.iter_mut().zip(arr) {
        *slot = v.as_f64().ok_or(ParseError::Record {
            index,
            field: "bbox",
            reason: "expected a number".into(),
        })?;
    }
    BBox::from_xywh(xywh[0], xywh[1], xywh[2], xywh[3]).map_err(|e| ParseError::Record {
        index,
        field: "bbox",
        reason: e.to_string(),
    })
}

/// Parses COCO annotation JSON into a [`GroundTruth`].
///
/// Annotation boxes extending beyond their image bounds are clamped with a
/// warning; an annotation referencing an unknown image or category is an
/// error.
pub fn parse_ground_truth(bytes: &[u8]) -> Result<GroundTruth, ParseError> {
    let root: Value = serde_json::from_slice(bytes)?;
    let section = |name: &'static str| -> Result<&Vec<Value>, ParseError> {
        root.get(name).and_then(Value::as_array).ok_or(ParseError::Entry {
            section: name,
            index: 0,
            reason: "missing or not an array".into(),
        })
    };

    let mut categories = BTreeMap::new();
    for (index, entry) in section("categories")?.iter().enumerate() {
        let id = parse_category(index, "id", entry.get("id").unwrap_or(&Value::Null))
            .map_err(|e| entry_err("categories", index, e))?;
        let name = entry
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned();
        if categories.insert(id, name).is_some() {
            return Err(ParseError::Entry {
                section: "categories",
                index,
                reason: format!("duplicate category id {id}"),
            });
        }
    }

    let mut images = BTreeMap::new();
    for (index, entry) in section("images")?.iter().enumerate() {
        let id = entry
            .get("id")
            .and_then(ImageId::from_json)
            .ok_or(ParseError::Entry {
                section: "images",
                index,
                reason: "invalid or missing id".into(),
            })?;
        let width = dim(entry, "width").ok_or(ParseError::Entry {
            section: "images",
            index,
            reason: "invalid or missing width".into(),
        })?;
        let height = dim(entry, "height").ok_or(ParseError::Entry {
            section: "images",
            index,
            reason: "invalid or missing height".into(),
        })?;
        if images.insert(id.clone(), ImageInfo { width, height }).is_some() {
            return Err(ParseError::Entry {
                section: "images",
                index,
                reason: format!("duplicate image id {id}"),
            });
        }
    }

    let mut annotations = Vec::new();
    for (index, entry) in section("annotations")?.iter().enumerate() {
        let image_id = entry
            .get("image_id")
            .and_then(ImageId::from_json)
            .ok_or(ParseError::Entry {
                section: "annotations",
                index,
                reason: "invalid or missing image_id".into(),
            })?;
        let info = *images
            .get(&image_id)
            .ok_or_else(|| ParseError::UnknownImage {
                index,
                image: image_id.clone(),
            })?;
        let category_id =
            parse_category(index, "category_id", entry.get("category_id").unwrap_or(&Value::Null))
                .map_err(|e| entry_err("annotations", index, e))?;
        if !categories.contains_key(&category_id) {
            return Err(ParseError::Entry {
                section: "annotations",
                index,
                reason: format!("unknown category id {category_id}"),
            });
        }
        let raw = parse_bbox(index, entry.get("bbox").unwrap_or(&Value::Null))
            .map_err(|e| entry_err("annotations", index, e))?;
        let bbox = clamp_to_image(&raw, info);
        if bbox != raw {
            log::warn!(
                "annotations[{index}]: box {:?} extends beyond image {image_id} ({}x{}); clamped",
                raw.to_xywh(),
                info.width,
                info.height
            );
        }
        annotations.push(Annotation {
            image_id,
            category_id,
            bbox,
        });
    }

    let groups = {
        let mut groups: BTreeMap<(ImageId, CategoryId), Vec<usize>> = BTreeMap::new();
        for (idx, ann) in annotations.iter().enumerate() {
            groups
                .entry((ann.image_id.clone(), ann.category_id))
                .or_default()
                .push(idx);
        }
        groups
    };

    Ok(GroundTruth {
        images,
        categories,
        annotations,
        groups,
    })
}

fn dim(entry: &Value, name: &str) -> Option<u32> {
    entry
        .get(name)
        .and_then(Value::as_u64)
        .and_then(|n| u32::try_from(n).ok())
        .filter(|&n| n > 0)
}

fn entry_err(section: &'static str, index: usize, e: ParseError) -> ParseError {
    ParseError::Entry {
        section,
        index,
        reason: e.to_string(),
    }
}

fn clamp_to_image(bbox: &BBox, info: ImageInfo) -> BBox {
    let w = f64::from(info.width);
    let h = f64::from(info.height);
    BBox::new_unchecked(
        bbox.x_min().clamp(0.0, w),
        bbox.y_min().clamp(0.0, h),
        bbox.x_max().clamp(0.0, w),
        bbox.y_max().clamp(0.0, h),
    )
}

/// Serializes a prediction set back to the record shape accepted by
/// [`parse_predictions`]. Coordinates and scores are rendered with enough
/// digits that `parse(emit(s))` reproduces `s` exactly.
pub fn emit_predictions(set: &PredictionSet) -> String {
    let records: Vec<Value> = set
        .detections()
        .iter()
        .map(|det| {
            let b = &det.bbox;
            serde_json::json!({
                "image_id": det.image_id.to_json(),
                "category_id": det.category_id.0,
                "bbox": [
                    b.x_min(),
                    b.y_min(),
                    roundtrip_extent(b.x_min(), b.x_max()),
                    roundtrip_extent(b.y_min(), b.y_max()),
                ],
                "score": det.score,
            })
        })
        .collect();
    serde_json::to_string(&records).expect("detection records serialize infallibly")
}

/// An extent `w` with `lo + w == hi` in floating point, so the emitted
/// `[x, y, w, h]` box re-parses to the exact stored corners. The plain
/// difference can land one ulp off; any corner that itself came from
/// `x + w` has an exact witness within a few ulps.
fn roundtrip_extent(lo: f64, hi: f64) -> f64 {
    let mut w = hi - lo;
    for _ in 0..4 {
        let got = lo + w;
        if got == hi {
            return w;
        }
        w = if got < hi { w.next_up() } else { w.next_down() };
    }
    hi - lo
}

/// Concatenates prediction sets that share a category set. Detections keep
/// their per-set order; the merged label records each constituent.
pub fn merge_sets(sets: &[PredictionSet]) -> Result<PredictionSet, MergeError> {
    let first = sets.first().ok_or(MergeError::Empty)?;
    for other in &sets[1..] {
        if other.categories() != first.categories() {
            return Err(MergeError::CategoryMismatch {
                first: first.source_label().to_owned(),
                other: other.source_label().to_owned(),
            });
        }
    }
    let label = sets
        .iter()
        .map(PredictionSet::source_label)
        .collect::<Vec<_>>()
        .join("+");
    let detections: Vec<Detection> = sets
        .iter()
        .flat_map(|s| s.detections().iter().cloned())
        .collect();
    Ok(PredictionSet::new(label, first.categories().clone(), detections)
        .expect("constituent sets already validated"))
}
