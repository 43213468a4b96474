//! Labor-vs-API cost model.
//!
//! * human-only cost = n × full-annotation seconds / 3600 × hourly wage
//! * assisted human cost = n × box-only seconds / 3600 × hourly wage
//! * API cost = n × per-item API price
//! * assisted total = assisted human cost + API cost
//! * savings = human-only cost − assisted total
//! * ROI = savings / assisted total (absent when the assisted total is zero)

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::EvaluationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams<T> {
    pub n_items: u64,
    /// Seconds per item when a human both boxes and labels.
    pub human_full_seconds: T,
    /// Seconds per item when a human only draws the box.
    pub human_box_seconds: T,
    pub wage_per_hour: T,
    pub api_cost_per_item: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport<T> {
    pub human_only_cost: T,
    pub assisted_human_cost: T,
    pub api_cost: T,
    pub assisted_total: T,
    pub savings: T,
    pub roi: Option<T>,
}

fn non_negative<T: Float>(value: T, name: &'static str) -> Result<T, EvaluationError> {
    if value.is_finite() && value >= T::zero() {
        Ok(value)
    } else {
        Err(EvaluationError::NegativeParam(name))
    }
}

pub fn cost_roi<T: Float>(params: &CostParams<T>) -> Result<CostReport<T>, EvaluationError> {
    let full = non_negative(params.human_full_seconds, "human_full_seconds")?;
    let boxed = non_negative(params.human_box_seconds, "human_box_seconds")?;
    let wage = non_negative(params.wage_per_hour, "wage_per_hour")?;
    let api_price = non_negative(params.api_cost_per_item, "api_cost_per_item")?;
    let n = T::from(params.n_items).ok_or(EvaluationError::NegativeParam("n_items"))?;
    let hour = T::from(3600.0).expect("representable");

    let human_only_cost = n * full / hour * wage;
    let assisted_human_cost = n * boxed / hour * wage;
    let api_cost = n * api_price;
    let assisted_total = assisted_human_cost + api_cost;
    let savings = human_only_cost - assisted_total;
    let roi = (assisted_total > T::zero()).then(|| savings / assisted_total);
    Ok(CostReport { human_only_cost, assisted_human_cost, api_cost, assisted_total, savings, roi })
}
