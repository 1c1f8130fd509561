use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse object size derived from bounding-box volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeClass {
    Tiny,
    Small,
    MidRange,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 4] = [
        SizeClass::Tiny,
        SizeClass::Small,
        SizeClass::MidRange,
        SizeClass::Large,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Tiny => "tiny",
            SizeClass::Small => "small",
            SizeClass::MidRange => "mid-range",
            SizeClass::Large => "large",
        }
    }
}

/// Upper volume bounds (m³, exclusive) for tiny, small and mid-range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeThresholds {
    pub tiny: f64,
    pub small: f64,
    pub mid_range: f64,
}

impl Default for SizeThresholds {
    fn default() -> Self {
        Self {
            tiny: 0.001,
            small: 0.03,
            mid_range: 0.5,
        }
    }
}

impl SizeThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tiny > 0.0 && self.tiny < self.small && self.small < self.mid_range;
        if !ok || !self.mid_range.is_finite() {
            return Err(Error::Validation(format!(
                "size thresholds must be positive and strictly increasing, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn classify(&self, volume: f64) -> Result<SizeClass> {
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::Domain(format!("volume must be positive, got {volume}")));
        }
        Ok(if volume < self.tiny {
            SizeClass::Tiny
        } else if volume < self.small {
            SizeClass::Small
        } else if volume < self.mid_range {
            SizeClass::MidRange
        } else {
            SizeClass::Large
        })
    }
}

/// Classifies `volume` with the default thresholds.
pub fn assign_size_class(volume: f64) -> Result<SizeClass> {
    SizeThresholds::default().classify(volume)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    #[default]
    Any,
    Indoor,
    Outdoor,
}

impl Setting {
    pub fn admits(self, outdoor: bool) -> bool {
        match self {
            Setting::Any => true,
            Setting::Indoor => !outdoor,
            Setting::Outdoor => outdoor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectAsset {
    pub asset_id: String,
    pub category: String,
    pub default_color: String,
    pub default_material: String,
    /// Box extents (x, y, z) in meters; y is height.
    pub extents: [f64; 3],
    pub volume: f64,
    pub size_class: SizeClass,
    pub setting: Setting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    pub color: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBackdrop {
    pub id: String,
    #[serde(default)]
    pub floor_y: f64,
    /// Cameras are placed within this distance of the backdrop origin.
    pub radius: f64,
    #[serde(default)]
    pub outdoor: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssetLibrary {
    pub assets: Vec<ObjectAsset>,
    pub materials: Vec<Material>,
    pub colors: Vec<String>,
    pub backdrops: Vec<SceneBackdrop>,
    pub thresholds: SizeThresholds,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAsset {
    id: String,
    category: String,
    color: String,
    material: String,
    extents: [f64; 3],
    #[serde(default)]
    setting: Setting,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLibrary {
    #[serde(default)]
    size_thresholds: Option<SizeThresholds>,
    colors: Vec<String>,
    #[serde(default)]
    materials: Vec<Material>,
    #[serde(default)]
    backdrops: Vec<SceneBackdrop>,
    #[serde(default)]
    assets: Vec<RawAsset>,
}

const SHIPPED_LIBRARY: &str = include_str!("../../assets/library.toml");

fn check_unique<'a>(kind: &str, names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for name in names {
        if name.trim().is_empty() {
            return Err(Error::Validation(format!("empty {kind}")));
        }
        if !seen.insert(name) {
            return Err(Error::Validation(format!("duplicate {kind} `{name}`")));
        }
    }
    Ok(())
}

impl AssetLibrary {
    /// The desk-scale library bundled with the crate.
    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_LIBRARY, "library.toml").expect("shipped library is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let raw: RawLibrary =
            toml::from_str(text).map_err(|e| Error::from_toml(source_name, text, e))?;
        let thresholds = raw.size_thresholds.unwrap_or_default();
        thresholds.validate()?;

        let mut assets = Vec::with_capacity(raw.assets.len());
        for a in raw.assets {
            if a.extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                return Err(Error::Validation(format!(
                    "asset `{}` has non-positive extents {:?}",
                    a.id, a.extents
                )));
            }
            let volume = a.extents[0] * a.extents[1] * a.extents[2];
            assets.push(ObjectAsset {
                size_class: thresholds.classify(volume)?,
                asset_id: a.id,
                category: a.category,
                default_color: a.color,
                default_material: a.material,
                extents: a.extents,
                volume,
                setting: a.setting,
            });
        }
        let lib = AssetLibrary {
            assets,
            materials: raw.materials,
            colors: raw.colors,
            backdrops: raw.backdrops,
            thresholds,
        };
        lib.validate()?;
        Ok(lib)
    }

    pub fn validate(&self) -> Result<()> {
        check_unique("asset id", self.assets.iter().map(|a| a.asset_id.as_str()))?;
        check_unique("asset category", self.assets.iter().map(|a| a.category.as_str()))?;
        check_unique("material", self.materials.iter().map(|m| m.name.as_str()))?;
        check_unique("color", self.colors.iter().map(String::as_str))?;
        check_unique("backdrop", self.backdrops.iter().map(|b| b.id.as_str()))?;

        let colors: BTreeSet<&str> = self.colors.iter().map(String::as_str).collect();
        let materials: BTreeSet<&str> = self.materials.iter().map(|m| m.name.as_str()).collect();
        // Question parsing relies on the three vocabularies being disjoint.
        if let Some(c) = colors.intersection(&materials).next() {
            return Err(Error::Validation(format!("`{c}` is both a color and a material")));
        }
        for m in &self.materials {
            if !colors.contains(m.color.as_str()) {
                return Err(Error::Validation(format!(
                    "material `{}` uses unknown color `{}`",
                    m.name, m.color
                )));
            }
        }
        for a in &self.assets {
            if colors.contains(a.category.as_str()) || materials.contains(a.category.as_str()) {
                return Err(Error::Validation(format!(
                    "category `{}` collides with a color or material name",
                    a.category
                )));
            }
            if !colors.contains(a.default_color.as_str()) {
                return Err(Error::Validation(format!(
                    "asset `{}` uses unknown color `{}`",
                    a.asset_id, a.default_color
                )));
            }
            if !materials.contains(a.default_material.as_str()) {
                return Err(Error::Validation(format!(
                    "asset `{}` uses unknown material `{}`",
                    a.asset_id, a.default_material
                )));
            }
            let expected = a.extents[0] * a.extents[1] * a.extents[2];
            if (a.volume - expected).abs() > 1e-9 * expected {
                return Err(Error::Validation(format!("asset `{}` volume mismatch", a.asset_id)));
            }
        }
        Ok(())
    }

    pub fn asset(&self, asset_id: &str) -> Option<&ObjectAsset> {
        self.assets.iter().find(|a| a.asset_id == asset_id)
    }

    pub fn asset_by_category(&self, category: &str) -> Option<&ObjectAsset> {
        self.assets.iter().find(|a| a.category == category)
    }

    /// All categories in sorted order.
    pub fn categories(&self) -> Vec<&str> {
        let mut cats: Vec<&str> = self.assets.iter().map(|a| a.category.as_str()).collect();
        cats.sort_unstable();
        cats
    }

    /// 1-based index of `category` in [`AssetLibrary::categories`]; 0 is background.
    pub fn category_index(&self, category: &str) -> Option<u16> {
        self.categories()
            .binary_search(&category)
            .ok()
            .map(|i| i as u16 + 1)
    }

    pub fn material_names(&self) -> Vec<&str> {
        self.materials.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn backdrop(&self, id: &str) -> Option<&SceneBackdrop> {
        self.backdrops.iter().find(|b| b.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
colors = ["red", "blue"]

[[materials]]
name = "wood"
color = "red"

[[materials]]
name = "metal"
color = "blue"

[[backdrops]]
id = "room"
radius = 2.0

[[assets]]
id = "cup_01"
category = "cup"
color = "red"
material = "metal"
extents = [0.08, 0.1, 0.08]

[[assets]]
id = "table_01"
category = "table"
color = "red"
material = "wood"
extents = [1.6, 0.75, 0.9]

[[assets]]
id = "chair_01"
category = "chair"
color = "blue"
material = "wood"
extents = [0.5, 0.9, 0.5]
"#;

    #[test]
    fn loads_small_library() {
        let lib = AssetLibrary::from_toml_str(SMALL, "small").unwrap();
        assert_eq!(lib.assets.len(), 3);
        assert_eq!(lib.materials.len(), 2);
        assert_eq!(lib.asset("cup_01").unwrap().size_class, SizeClass::Tiny);
        assert_eq!(lib.asset("table_01").unwrap().size_class, SizeClass::Large);
        assert_eq!(lib.category_index("chair"), Some(1));
        assert_eq!(lib.category_index("table"), Some(3));
    }

    #[test]
    fn duplicate_asset_id_is_named() {
        let text = SMALL.replace("id = \"chair_01\"", "id = \"cup_01\"");
        let err = AssetLibrary::from_toml_str(&text, "dup").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("cup_01")), "{err}");
    }

    #[test]
    fn parse_failure_reports_line() {
        let text = SMALL.replace("extents = [0.5, 0.9, 0.5]", "extents = \"wide\"");
        match AssetLibrary::from_toml_str(&text, "bad").unwrap_err() {
            Error::Format { line, .. } => assert!(line > 30, "line {line}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn size_class_defaults() {
        assert_eq!(assign_size_class(0.0005).unwrap(), SizeClass::Tiny);
        assert_eq!(assign_size_class(0.01).unwrap(), SizeClass::Small);
        assert_eq!(assign_size_class(0.1).unwrap(), SizeClass::MidRange);
        assert_eq!(assign_size_class(2.0).unwrap(), SizeClass::Large);
        assert!(matches!(assign_size_class(0.0), Err(Error::Domain(_))));
        assert!(matches!(assign_size_class(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn shipped_library_statistics() {
        let lib = AssetLibrary::shipped();
        assert!(lib.assets.len() >= 40, "{} assets", lib.assets.len());
        for class in SizeClass::ALL {
            let n = lib.assets.iter().filter(|a| a.size_class == class).count();
            assert!(n >= 5, "{} has only {n} assets", class.as_str());
        }
        assert!(lib.backdrops.iter().any(|b| b.outdoor));
        assert!(lib.backdrops.iter().any(|b| !b.outdoor));
    }
}
