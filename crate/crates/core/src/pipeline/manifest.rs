//! Dataset manifest: the CSV interchange format tying together sample
//! files, their provenance plans, and split assignments.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AugmentationPlan, SubsetTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split '{other}'"))),
        }
    }
}

/// One dataset sample and its full provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub source_id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub subset: SubsetTag,
    pub split: Split,
    pub plan: AugmentationPlan,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

pub const CSV_HEADER: [&str; 7] = [
    "sample_id",
    "source_id",
    "image_path",
    "mask_path",
    "subset",
    "split",
    "plan_json",
];

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one split, in manifest order.
    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// The untouched source record behind any sample.
    pub fn original_record(&self, source_id: &str) -> Option<&ManifestRecord> {
        self.records
            .iter()
            .find(|r| r.subset == SubsetTag::Original && r.source_id == source_id)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
            }
        }
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        writer
            .write_record(CSV_HEADER)
            .map_err(|e| csv_err(path, e))?;
        for r in &self.records {
            let plan_json = serde_json::to_string(&r.plan)
                .map_err(|e| Error::Manifest(format!("plan for {}: {e}", r.sample_id)))?;
            writer
                .write_record([
                    r.sample_id.as_str(),
                    r.source_id.as_str(),
                    &r.image_path.to_string_lossy(),
                    &r.mask_path.to_string_lossy(),
                    subset_str(r.subset),
                    r.split.as_str(),
                    &plan_json,
                ])
                .map_err(|e| csv_err(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        {
            let headers = reader.headers().map_err(|e| csv_err(path, e))?;
            let expected: Vec<&str> = CSV_HEADER.to_vec();
            if headers.iter().collect::<Vec<_>>() != expected {
                return Err(Error::Manifest(format!(
                    "unexpected header in {}",
                    path.display()
                )));
            }
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| csv_err(path, e))?;
            if row.len() != CSV_HEADER.len() {
                return Err(Error::Manifest(format!(
                    "row with {} fields in {}",
                    row.len(),
                    path.display()
                )));
            }
            let plan: AugmentationPlan = serde_json::from_str(&row[6])
                .map_err(|e| Error::Manifest(format!("plan for {}: {e}", &row[0])))?;
            records.push(ManifestRecord {
                sample_id: row[0].to_string(),
                source_id: row[1].to_string(),
                image_path: PathBuf::from(&row[2]),
                mask_path: PathBuf::from(&row[3]),
                subset: parse_subset(&row[4])?,
                split: Split::parse(&row[5])?,
                plan,
            });
        }
        Ok(DatasetManifest { records })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Manifest(format!("{}: {e}", path.display()))
}

pub(super) fn subset_str(tag: SubsetTag) -> &'static str {
    match tag {
        SubsetTag::Original => "original",
        SubsetTag::Unconstrained => "unconstrained",
        SubsetTag::OffAxis => "off_axis",
        SubsetTag::OffAxisUnconstrained => "off_axis_unconstrained",
    }
}

fn parse_subset(s: &str) -> Result<SubsetTag> {
    match s {
        "original" => Ok(SubsetTag::Original),
        "unconstrained" => Ok(SubsetTag::Unconstrained),
        "off_axis" => Ok(SubsetTag::OffAxis),
        "off_axis_unconstrained" => Ok(SubsetTag::OffAxisUnconstrained),
        other => Err(Error::Manifest(format!("unknown subset '{other}'"))),
    }
}
