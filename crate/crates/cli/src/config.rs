use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sesnet::forecast::{ErrorMetric, ForecastConfig};
use sesnet::mhhcnn::MhhcnnConfig;
use sesnet::synthgen::{FeatureCounts, SynthConfig};

/// Effective run configuration after merging defaults, the optional TOML
/// file, and command-line overrides (flags win).
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub schema_path: PathBuf,
    pub features_path: PathBuf,
    pub cases_path: PathBuf,
    pub synth: SynthConfig,
    pub mhhcnn: MhhcnnConfig,
    pub forecast: ForecastConfig,
    pub shapley: ShapleySettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapleySettings {
    pub n_permutations: usize,
    pub exact_max_features: usize,
    pub top_k: usize,
}

impl Default for ShapleySettings {
    fn default() -> Self {
        Self {
            n_permutations: 500,
            exact_max_features: 8,
            top_k: 20,
        }
    }
}

/// TOML file shape: every field optional so partial files work.
#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paths: Option<FilePaths>,
    pub synth: Option<FileSynth>,
    pub mhhcnn: Option<FileMhhcnn>,
    pub forecast: Option<FileForecast>,
    pub shapley: Option<FileShapley>,
}

#[derive(Debug, Default, Deserialize)]
pub struct FilePaths {
    pub schema: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub cases: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
pub struct FileSynth {
    pub district_sizes: Option<Vec<usize>>,
    pub estates_per_district: Option<usize>,
    pub tpus_per_district: Option<usize>,
    pub noise_scale: Option<f64>,
    pub features: Option<FileFeatureCounts>,
}

#[derive(Debug, Default, Deserialize)]
pub struct FileFeatureCounts {
    pub building: Option<usize>,
    pub estate: Option<usize>,
    pub tpu: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
pub struct FileMhhcnn {
    pub embed_dim: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub conv_out_channels: Option<usize>,
    pub conv_kernel_size: Option<usize>,
    pub dense_widths: Option<Vec<usize>>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
pub struct FileForecast {
    pub window_len: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub origins_per_building: Option<usize>,
    pub metric: Option<ErrorMetric>,
}

#[derive(Debug, Default, Deserialize)]
pub struct FileShapley {
    pub n_permutations: Option<usize>,
    pub exact_max_features: Option<usize>,
    pub top_k: Option<usize>,
}

impl RunConfig {
    /// Defaults, overlaid by the file when present.
    pub fn build(file: Option<FileConfig>, seed_flag: Option<u64>, out_flag: Option<PathBuf>) -> Self {
        let file = file.unwrap_or_default();
        let seed = seed_flag.or(file.seed).unwrap_or(42);
        let out = out_flag
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("runs/default"));

        let paths = file.paths.unwrap_or_default();
        let schema_path = paths.schema.unwrap_or_else(|| out.join("schema.json"));
        let features_path = paths.features.unwrap_or_else(|| out.join("features.csv"));
        let cases_path = paths.cases.unwrap_or_else(|| out.join("cases.csv"));

        let mut synth = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        if let Some(s) = file.synth {
            if let Some(v) = s.district_sizes {
                synth.district_sizes = v;
            }
            if let Some(v) = s.estates_per_district {
                synth.estates_per_district = v;
            }
            if let Some(v) = s.tpus_per_district {
                synth.tpus_per_district = v;
            }
            if let Some(v) = s.noise_scale {
                synth.noise_scale = v;
            }
            if let Some(f) = s.features {
                let mut counts = FeatureCounts::default();
                if let Some(v) = f.building {
                    counts.building = v;
                }
                if let Some(v) = f.estate {
                    counts.estate = v;
                }
                if let Some(v) = f.tpu {
                    counts.tpu = v;
                }
                synth.features = counts;
            }
        }

        let mut mhhcnn = MhhcnnConfig {
            seed,
            ..MhhcnnConfig::default()
        };
        if let Some(m) = file.mhhcnn {
            if let Some(v) = m.embed_dim {
                mhhcnn.embed_dim = v;
            }
            if let Some(v) = m.lstm_hidden {
                mhhcnn.lstm_hidden = v;
            }
            if let Some(v) = m.conv_out_channels {
                mhhcnn.conv_out_channels = v;
            }
            if let Some(v) = m.conv_kernel_size {
                mhhcnn.conv_kernel_size = v;
            }
            if let Some(v) = m.dense_widths {
                mhhcnn.dense_widths = v;
            }
            if let Some(v) = m.lr {
                mhhcnn.lr = v;
            }
            if let Some(v) = m.epochs {
                mhhcnn.epochs = v;
            }
            if let Some(v) = m.batch_size {
                mhhcnn.batch_size = v;
            }
        }

        let mut forecast = ForecastConfig {
            seed,
            ..ForecastConfig::default()
        };
        if let Some(f) = file.forecast {
            if let Some(v) = f.window_len {
                forecast.window_len = v;
            }
            if let Some(v) = f.lstm_hidden {
                forecast.lstm_hidden = v;
            }
            if let Some(v) = f.lr {
                forecast.lr = v;
            }
            if let Some(v) = f.max_epochs {
                forecast.max_epochs = v;
            }
            if let Some(v) = f.patience {
                forecast.patience = v;
            }
            if let Some(v) = f.batch_size {
                forecast.batch_size = v;
            }
            if let Some(v) = f.origins_per_building {
                forecast.origins_per_building = v;
            }
            if let Some(v) = f.metric {
                forecast.metric = v;
            }
        }

        let mut shapley = ShapleySettings::default();
        if let Some(s) = file.shapley {
            if let Some(v) = s.n_permutations {
                shapley.n_permutations = v;
            }
            if let Some(v) = s.exact_max_features {
                shapley.exact_max_features = v;
            }
            if let Some(v) = s.top_k {
                shapley.top_k = v;
            }
        }

        Self {
            seed,
            out,
            schema_path,
            features_path,
            cases_path,
            synth,
            mhhcnn,
            forecast,
            shapley,
        }
    }

    /// SHA-256 of the effective configuration; stamped into every report.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn load_file_config(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow::anyhow!("bad config {}: {e}", path.display()))
}
