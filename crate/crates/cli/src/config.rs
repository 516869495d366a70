//! Run configuration: every tunable constant with its default, persisted as
//! TOML (sections of key/value pairs).
//!
//! A few constants are pinned by the metric definitions and are present here
//! for reference only; loading a file that changes them is rejected rather
//! than silently ignored.

use std::path::Path;

use camomap::augment::AugmentConfig;
use camomap::fusion::{FusionConfig, OverlapRule};
use camomap::visdiff::TextonParams;
use camomap::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for batch commands; 0 picks the machine default.
    pub workers: usize,
    pub core: CoreSection,
    pub roi: RoiSection,
    pub fusion: FusionSection,
    pub metrics: MetricsSection,
    pub augment: AugmentSection,
    pub visdiff: VisdiffSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreSection {
    /// Side length of the box-aligned instance masks detection files are
    /// expected to carry.
    pub mask_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiSection {
    pub bins_x: usize,
    pub bins_y: usize,
    pub samples_per_axis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub score_threshold: f64,
    pub overlap_threshold: f64,
    pub overlap_rule: OverlapRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub beta_sq: f64,
    /// Pinned by the E-measure definition.
    pub e_epsilon: f64,
    /// Pinned by the weighted F-measure definition.
    pub wf_kernel_size: usize,
    pub wf_kernel_sigma: f64,
    pub wf_distance_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub max_components: usize,
    pub color_tolerance: f64,
    pub surround_margin: usize,
    pub placements_per_instance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisdiffSection {
    /// Pinned floor under the lαβ logarithm.
    pub lab_log_floor: f64,
    pub texton_bank_size: usize,
    pub texton_vocab: usize,
    pub texton_kmeans_seed: u64,
    pub texton_kmeans_iterations: usize,
    pub texton_max_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            workers: 0,
            core: CoreSection::default(),
            roi: RoiSection::default(),
            fusion: FusionSection::default(),
            metrics: MetricsSection::default(),
            augment: AugmentSection::default(),
            visdiff: VisdiffSection::default(),
        }
    }
}

impl Default for CoreSection {
    fn default() -> Self {
        Self {
            mask_resolution: camomap::detection::DEFAULT_MASK_RESOLUTION,
        }
    }
}

impl Default for RoiSection {
    fn default() -> Self {
        Self {
            bins_x: camomap::roi::DEFAULT_BINS,
            bins_y: camomap::roi::DEFAULT_BINS,
            samples_per_axis: camomap::roi::DEFAULT_SAMPLES_PER_AXIS,
        }
    }
}

impl Default for FusionSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        Self {
            score_threshold: f.score_threshold,
            overlap_threshold: f.overlap_threshold,
            overlap_rule: f.overlap_rule,
        }
    }
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            beta_sq: camomap::metrics::DEFAULT_BETA_SQ,
            e_epsilon: camomap::metrics::E_MEASURE_EPSILON,
            wf_kernel_size: 7,
            wf_kernel_sigma: 5.0,
            wf_distance_decay: 5.0,
        }
    }
}

impl Default for AugmentSection {
    fn default() -> Self {
        let a = AugmentConfig::default();
        Self {
            max_components: a.max_components,
            color_tolerance: a.color_tolerance,
            surround_margin: a.surround_margin,
            placements_per_instance: a.placements_per_instance,
        }
    }
}

impl Default for VisdiffSection {
    fn default() -> Self {
        let t = TextonParams::default();
        Self {
            lab_log_floor: camomap::visdiff::LAB_LOG_FLOOR,
            texton_bank_size: t.bank_size,
            texton_vocab: t.vocab,
            texton_kmeans_seed: t.seed,
            texton_kmeans_iterations: t.iterations,
            texton_max_samples: t.max_samples,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[allow(dead_code)] // exercised by the round-trip tests
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion_config().validate()?;
        self.augment_config().validate()?;
        let pinned = MetricsSection::default();
        if self.metrics.e_epsilon != pinned.e_epsilon
            || self.metrics.wf_kernel_size != pinned.wf_kernel_size
            || self.metrics.wf_kernel_sigma != pinned.wf_kernel_sigma
            || self.metrics.wf_distance_decay != pinned.wf_distance_decay
        {
            return Err(Error::InvalidInput(
                "metrics constants e_epsilon / wf_* are pinned by the metric definitions".into(),
            ));
        }
        if self.visdiff.lab_log_floor != VisdiffSection::default().lab_log_floor {
            return Err(Error::InvalidInput(
                "visdiff.lab_log_floor is pinned by the color conversion".into(),
            ));
        }
        Ok(())
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            score_threshold: self.fusion.score_threshold,
            overlap_threshold: self.fusion.overlap_threshold,
            overlap_rule: self.fusion.overlap_rule,
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            max_components: self.augment.max_components,
            color_tolerance: self.augment.color_tolerance,
            surround_margin: self.augment.surround_margin,
            placements_per_instance: self.augment.placements_per_instance,
        }
    }

    pub fn texton_params(&self) -> TextonParams {
        TextonParams {
            bank_size: self.visdiff.texton_bank_size,
            vocab: self.visdiff.texton_vocab,
            seed: self.visdiff.texton_kmeans_seed,
            iterations: self.visdiff.texton_kmeans_iterations,
            max_samples: self.visdiff.texton_max_samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_a_fixpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        let cfg = RunConfig::default();
        cfg.save(&path).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded, cfg);
        loaded.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), loaded);
    }

    #[test]
    fn pinned_constants_are_rejected_when_edited() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        let cfg = RunConfig::default();
        cfg.save(&path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("wf_kernel_size = 7", "wf_kernel_size = 9");
        std::fs::write(&path, text).unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        std::fs::write(&path, "mystery = 1\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }
}
