//! Ordered series of reported PIT values.

/// A daily series of PIT observations.
///
/// Entries are `None` when the reported value is missing or has been flagged
/// as spurious; such entries are skipped as dependent variables in every
/// test. A parallel vector of imputed values, when available, fills in lagged
/// regressor slots for the conditional tests.
#[derive(Debug, Clone)]
pub struct PitSeries {
    values: Vec<Option<f64>>,
    imputed: Vec<Option<f64>>,
}

impl PitSeries {
    /// Series with every value present.
    pub fn from_values(values: Vec<f64>) -> Self {
        let values: Vec<Option<f64>> = values.into_iter().map(Some).collect();
        let imputed = values.clone();
        PitSeries { values, imputed }
    }

    /// Series with possible gaps and no imputation (regressor slots fall back
    /// to the observed values).
    pub fn from_optional(values: Vec<Option<f64>>) -> Self {
        let imputed = values.clone();
        PitSeries { values, imputed }
    }

    /// Series with possible gaps plus imputed stand-ins for regressors.
    /// Panics if the two vectors differ in length.
    pub fn with_imputed(values: Vec<Option<f64>>, imputed: Vec<Option<f64>>) -> Self {
        assert_eq!(values.len(), imputed.len(), "imputed series must align with values");
        PitSeries { values, imputed }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observed value at `t` (0-based), `None` if missing or spurious.
    pub fn value(&self, t: usize) -> Option<f64> {
        self.values[t]
    }

    /// Value to use in a lagged regressor slot: the observed value when
    /// present, otherwise the imputed value when available.
    pub fn regressor_value(&self, t: usize) -> Option<f64> {
        self.values[t].or(self.imputed[t])
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// Number of non-missing observations.
    pub fn n_present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Iterator over the present values.
    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().filter_map(|v| *v)
    }
}

impl From<Vec<f64>> for PitSeries {
    fn from(values: Vec<f64>) -> Self {
        PitSeries::from_values(values)
    }
}
