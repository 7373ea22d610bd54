use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{bilinear_resample, Raster};

/// ESA CCI land cover legend: (class id, label, burnable in the default table).
///
/// Grassland and shrubland entries are `None`; they are burnable or not
/// depending on the region (see [`LandcoverMapping::esa_cci`]).
pub const ESA_CCI_CLASSES: &[(i64, &str, Option<bool>)] = &[
    (0, "no data", Some(false)),
    (10, "cropland, rainfed", Some(false)),
    (11, "cropland, rainfed, herbaceous cover", Some(false)),
    (12, "cropland, rainfed, tree or shrub cover", Some(false)),
    (20, "cropland, irrigated or post-flooding", Some(false)),
    (30, "mosaic cropland / natural vegetation", Some(false)),
    (40, "mosaic natural vegetation / cropland", Some(false)),
    (50, "tree cover, broadleaved, evergreen", Some(true)),
    (60, "tree cover, broadleaved, deciduous", Some(true)),
    (61, "tree cover, broadleaved, deciduous, closed", Some(true)),
    (62, "tree cover, broadleaved, deciduous, open", Some(true)),
    (70, "tree cover, needleleaved, evergreen", Some(true)),
    (
        71,
        "tree cover, needleleaved, evergreen, closed",
        Some(true),
    ),
    (72, "tree cover, needleleaved, evergreen, open", Some(true)),
    (80, "tree cover, needleleaved, deciduous", Some(true)),
    (
        81,
        "tree cover, needleleaved, deciduous, closed",
        Some(true),
    ),
    (82, "tree cover, needleleaved, deciduous, open", Some(true)),
    (90, "tree cover, mixed leaf type", Some(true)),
    (100, "mosaic tree and shrub / herbaceous cover", Some(true)),
    (110, "mosaic herbaceous cover / tree and shrub", Some(true)),
    (120, "shrubland", None),
    (121, "shrubland, evergreen", None),
    (122, "shrubland, deciduous", None),
    (130, "grassland", None),
    (140, "lichens and mosses", Some(false)),
    (150, "sparse vegetation", Some(false)),
    (151, "sparse tree", Some(false)),
    (152, "sparse shrub", Some(false)),
    (153, "sparse herbaceous cover", Some(false)),
    (
        160,
        "tree cover, flooded, fresh or brackish water",
        Some(false),
    ),
    (170, "tree cover, flooded, saline water", Some(false)),
    (180, "shrub or herbaceous cover, flooded", Some(false)),
    (190, "urban areas", Some(false)),
    (200, "bare areas", Some(false)),
    (201, "consolidated bare areas", Some(false)),
    (202, "unconsolidated bare areas", Some(false)),
    (210, "water bodies", Some(false)),
    (220, "permanent snow and ice", Some(false)),
];

/// Binary burnable/non-burnable table over land cover class ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandcoverMapping {
    classes: BTreeMap<i64, u8>,
}

impl LandcoverMapping {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, bool)>) -> Self {
        Self {
            classes: pairs.into_iter().map(|(c, b)| (c, b as u8)).collect(),
        }
    }

    /// The ESA CCI table with grassland/shrubland set to
    /// `grass_and_shrub_burnable`.
    pub fn esa_cci(grass_and_shrub_burnable: bool) -> Self {
        Self::from_pairs(
            ESA_CCI_CLASSES
                .iter()
                .map(|&(id, _, b)| (id, b.unwrap_or(grass_and_shrub_burnable))),
        )
    }

    /// Grassland and shrubland non-burnable.
    pub fn us() -> Self {
        Self::esa_cci(false)
    }

    /// Grassland and shrubland burnable.
    pub fn aus() -> Self {
        Self::esa_cci(true)
    }

    /// Preset by region label (`US`, `AUS`), case-insensitive.
    pub fn for_region(region: &str) -> Option<Self> {
        match region.to_ascii_uppercase().as_str() {
            "US" => Some(Self::us()),
            "AUS" => Some(Self::aus()),
            _ => None,
        }
    }

    pub fn set(&mut self, class: i64, burnable: bool) {
        self.classes.insert(class, burnable as u8);
    }

    pub fn get(&self, class: i64) -> Option<bool> {
        self.classes.get(&class).map(|&b| b != 0)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mapping: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if let Some((c, v)) = mapping.classes.iter().find(|(_, v)| **v > 1) {
            return Err(Error::Format(format!(
                "{}: class {c} maps to {v}, expected 0 or 1",
                path.display()
            )));
        }
        Ok(mapping)
    }
}

/// Map each land cover pixel to 0/1 burnability and bilinearly resample the
/// binary map to `out_width x out_height`. Nodata pixels count as
/// non-burnable.
pub fn burnable_index(
    landcover: &Raster,
    mapping: &LandcoverMapping,
    out_width: usize,
    out_height: usize,
) -> Result<Raster> {
    let mut binary = Vec::with_capacity(landcover.len());
    for (i, &v) in landcover.values().iter().enumerate() {
        if landcover.is_nodata(v) {
            binary.push(0.0);
            continue;
        }
        if v.fract() != 0.0 {
            return Err(Error::DataQuality(format!(
                "land cover pixel ({}, {}) holds non-integer class {v}",
                i % landcover.width(),
                i / landcover.width()
            )));
        }
        let class = v as i64;
        let burnable = mapping.get(class).ok_or_else(|| {
            Error::DataQuality(format!(
                "land cover class {class} has no burnability mapping"
            ))
        })?;
        binary.push(if burnable { 1.0 } else { 0.0 });
    }
    let binary = Raster::new(
        landcover.width(),
        landcover.height(),
        binary,
        landcover.geo(),
    )?;
    bilinear_resample(&binary, out_width, out_height)
}
