use std::collections::BTreeMap;

use crate::linalg::fmt_f64;
use crate::sim::State;

/// Flat record of a verification run. Pass flags are derived from the stored
/// numbers and thresholds only, see [`VerificationReport::recompute_pass`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    /// `sup_{t ∈ [T, T_obs]} ‖C_p(U, U')(t)‖ / ‖C_p(U, U')(0)‖`.
    pub sync_error: f64,
    /// `(t, ‖C_p(U, U')(t)‖ / ‖C_p(U, U')(0)‖)` over the whole run.
    pub sync_series: Vec<(f64, f64)>,
    /// Extracted `u_r = (E_r, U)` at the snapshots, `p` components each.
    pub state_traces: Vec<State>,
    pub comparison_errors: BTreeMap<String, f64>,
    /// Upper bounds the named errors are checked against.
    pub thresholds: BTreeMap<String, f64>,
    pub pass: BTreeMap<String, bool>,
    /// Free-form context (horizon, grid, ...).
    pub info: BTreeMap<String, String>,
}

impl VerificationReport {
    /// Records a named error with its bound and the resulting flag.
    pub fn check(&mut self, name: &str, value: f64, bound: f64) {
        self.comparison_errors.insert(name.to_string(), value);
        self.thresholds.insert(name.to_string(), bound);
        self.pass.insert(name.to_string(), value.is_finite() && value <= bound);
    }

    pub fn recompute_pass(&self) -> BTreeMap<String, bool> {
        self.thresholds
            .iter()
            .map(|(k, b)| {
                let v = self.comparison_errors.get(k).copied().unwrap_or(f64::NAN);
                (k.clone(), v.is_finite() && v <= *b)
            })
            .collect()
    }

    pub fn all_pass(&self) -> bool {
        self.pass.values().all(|&p| p)
    }

    /// `key = value` lines, sorted by key.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("sync_error = {}\n", fmt_f64(self.sync_error)));
        for (k, v) in &self.comparison_errors {
            out.push_str(&format!("error.{k} = {}\n", fmt_f64(*v)));
        }
        for (k, v) in &self.thresholds {
            out.push_str(&format!("threshold.{k} = {}\n", fmt_f64(*v)));
        }
        for (k, v) in &self.pass {
            out.push_str(&format!("pass.{k} = {v}\n"));
        }
        for (k, v) in &self.info {
            out.push_str(&format!("info.{k} = {v}\n"));
        }
        out.push_str(&format!("pass = {}\n", self.all_pass()));
        out
    }

    /// CSV `t, sync_error`.
    pub fn sync_csv(&self) -> String {
        let mut out = String::from("t,sync_error\n");
        for (t, e) in &self.sync_series {
            out.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*e)));
        }
        out
    }
}
