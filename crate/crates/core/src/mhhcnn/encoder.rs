use serde::{Deserialize, Serialize};

use super::{MhhcnnError, Result};
use crate::schema::{Dataset, FeatureKind, FeatureValue, QuantileBins};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
enum FeatureCoder {
    Categorical { n_levels: usize },
    /// Quantile bins fitted on the training split; `None` when the split had
    /// no observed value (every input then lands in bin 0 or the missing
    /// slot).
    Continuous {
        bins: usize,
        quantiles: Option<QuantileBins>,
    },
}

/// Maps raw feature values to embedding indices.
///
/// Categorical features pass their category through; continuous features go
/// through quantile bins fitted over the *training split only*. Missing
/// values map to the dedicated extra index after the regular range.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Encoder {
    coders: Vec<FeatureCoder>,
}

impl Encoder {
    /// Fits per-feature coders on the records selected by `train_indices`.
    pub fn fit(dataset: &Dataset, train_indices: &[usize]) -> Result<Encoder> {
        let mut coders = Vec::with_capacity(dataset.schema.len());
        for (pos, spec) in dataset.schema.features().iter().enumerate() {
            let coder = match spec.kind {
                FeatureKind::Categorical { n_levels } => FeatureCoder::Categorical { n_levels },
                FeatureKind::Continuous { bins } => {
                    let observed: Vec<f64> = train_indices
                        .iter()
                        .filter_map(|&i| match dataset.records[i].values[pos] {
                            FeatureValue::Real(v) => Some(v),
                            _ => None,
                        })
                        .collect();
                    let quantiles = if observed.is_empty() {
                        None
                    } else {
                        Some(QuantileBins::fit(&observed, bins)?)
                    };
                    FeatureCoder::Continuous { bins, quantiles }
                }
            };
            coders.push(coder);
        }
        Ok(Encoder { coders })
    }

    /// Fits on every record.
    pub fn fit_all(dataset: &Dataset) -> Result<Encoder> {
        let all: Vec<usize> = (0..dataset.records.len()).collect();
        Self::fit(dataset, &all)
    }

    pub fn n_features(&self) -> usize {
        self.coders.len()
    }

    /// One embedding index per feature, in schema order.
    pub fn encode(&self, values: &[FeatureValue]) -> Result<Vec<usize>> {
        if values.len() != self.coders.len() {
            return Err(MhhcnnError::RecordWidth {
                got: values.len(),
                expected: self.coders.len(),
            });
        }
        Ok(self
            .coders
            .iter()
            .zip(values)
            .map(|(coder, value)| match (coder, value) {
                (FeatureCoder::Categorical { .. }, FeatureValue::Category(i)) => *i,
                (FeatureCoder::Categorical { n_levels }, _) => *n_levels,
                (FeatureCoder::Continuous { quantiles, .. }, FeatureValue::Real(v)) => {
                    quantiles.as_ref().map_or(0, |q| q.assign(*v))
                }
                (FeatureCoder::Continuous { bins, .. }, _) => *bins,
            })
            .collect())
    }

    /// Encodes a subset of the dataset's records.
    pub fn encode_records(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<Vec<usize>>> {
        indices
            .iter()
            .map(|&i| self.encode(&dataset.records[i].values))
            .collect()
    }

    /// Encodes every record, in dataset order.
    pub fn encode_all(&self, dataset: &Dataset) -> Result<Vec<Vec<usize>>> {
        let all: Vec<usize> = (0..dataset.records.len()).collect();
        self.encode_records(dataset, &all)
    }
}
