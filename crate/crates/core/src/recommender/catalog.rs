use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RecommendError;

/// Bytes per catalog GB (GPU memory is quoted in binary gigabytes).
pub const BYTES_PER_GB: f64 = (1u64 << 30) as f64;

/// A priced hardware offering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceQuote {
    pub name: String,
    pub gpu: String,
    pub gpu_memory_gb: f64,
    pub tflops: f64,
    pub price_per_hour: f64,
}

impl InstanceQuote {
    pub fn new(name: &str, gpu: &str, gpu_memory_gb: f64, tflops: f64, price_per_hour: f64) -> Self {
        Self {
            name: name.into(),
            gpu: gpu.into(),
            gpu_memory_gb,
            tflops,
            price_per_hour,
        }
    }

    pub fn gpu_memory_bytes(&self) -> f64 {
        self.gpu_memory_gb * BYTES_PER_GB
    }

    pub fn validate(&self) -> Result<(), RecommendError> {
        let bad = |field: &str| {
            Err(RecommendError::Catalog(format!(
                "quote `{}`: invalid {field}",
                self.name
            )))
        };
        if !(self.tflops > 0.0) {
            return bad("tflops");
        }
        if !(self.price_per_hour >= 0.0) {
            return bad("price_per_hour");
        }
        if !(self.gpu_memory_gb > 0.0) {
            return bad("gpu_memory_gb");
        }
        Ok(())
    }
}

/// Per-token prices of an online service, dollars per million tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingEntry {
    pub model: String,
    pub input_per_1m: f64,
    pub output_per_1m: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, RecommendError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| RecommendError::Catalog(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| RecommendError::Catalog(format!("{}: {e}", path.display()))))
        .collect()
}

/// Reads `name,gpu,gpu_memory_gb,tflops,price_per_hour`.
pub fn load_quotes(path: &Path) -> Result<Vec<InstanceQuote>, RecommendError> {
    let quotes: Vec<InstanceQuote> = read_csv(path)?;
    for q in &quotes {
        q.validate()?;
    }
    Ok(quotes)
}

/// Reads `model,input_per_1m,output_per_1m`.
pub fn load_pricing(path: &Path) -> Result<Vec<PricingEntry>, RecommendError> {
    let entries: Vec<PricingEntry> = read_csv(path)?;
    if let Some(e) = entries
        .iter()
        .find(|e| !(e.input_per_1m >= 0.0 && e.output_per_1m >= 0.0))
    {
        return Err(RecommendError::Catalog(format!(
            "pricing `{}`: prices must be non-negative",
            e.model
        )));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn loads_quotes_with_header() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "name,gpu,gpu_memory_gb,tflops,price_per_hour").unwrap();
        writeln!(f, "G6,L4,16,30.29,1.172").unwrap();
        let quotes = load_quotes(f.path()).unwrap();
        assert_eq!(quotes, [InstanceQuote::new("G6", "L4", 16.0, 30.29, 1.172)]);
    }

    #[test]
    fn rejects_zero_tflops() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "name,gpu,gpu_memory_gb,tflops,price_per_hour\nX,Y,16,0,1").unwrap();
        assert!(load_quotes(f.path()).is_err());
    }

    #[test]
    fn loads_pricing() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "model,input_per_1m,output_per_1m\nhaiku,0.25,1.25").unwrap();
        assert_eq!(load_pricing(f.path()).unwrap()[0].output_per_1m, 1.25);
    }
}
