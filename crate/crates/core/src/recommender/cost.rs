use super::{PricingEntry, RecommendError};
use crate::num::Scalar;

const SECONDS_PER_HOUR: f64 = 3600.0;
const PROMPTS_PER_KPROMPT: f64 = 1000.0;

/// Scales a latency measured on the benchmark GPU to a target GPU by the TFLOPs ratio.
pub fn estimate_latency<S: Scalar>(
    measured: S,
    bench_tflops: S,
    target_tflops: S,
) -> Result<S, RecommendError> {
    for (name, v) in [
        ("measured latency", measured),
        ("benchmark TFLOPs", bench_tflops),
        ("target TFLOPs", target_tflops),
    ] {
        if !(v > S::zero()) || !v.is_finite() {
            return Err(RecommendError::NonPositive {
                what: name,
                value: v.as_f64(),
            });
        }
    }
    Ok(measured * (bench_tflops / target_tflops))
}

/// Dollars to process 1000 prompts at `est_time` seconds each on an instance billed `price` per hour.
pub fn estimate_cost_per_kprompt<S: Scalar>(est_time: S, price: S) -> Result<S, RecommendError> {
    if !(est_time > S::zero()) || !est_time.is_finite() {
        return Err(RecommendError::NonPositive {
            what: "estimated time",
            value: est_time.as_f64(),
        });
    }
    if !(price >= S::zero()) || !price.is_finite() {
        return Err(RecommendError::NonPositive {
            what: "price",
            value: price.as_f64(),
        });
    }
    Ok(price * est_time * S::of(PROMPTS_PER_KPROMPT) / S::of(SECONDS_PER_HOUR))
}

/// Dollars for one prompt on a per-token priced service.
pub fn online_cost_per_prompt(tokens_in: f64, tokens_out: f64, pricing: &PricingEntry) -> f64 {
    tokens_in * pricing.input_per_1m / 1e6 + tokens_out * pricing.output_per_1m / 1e6
}
