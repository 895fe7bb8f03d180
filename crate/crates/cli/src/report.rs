//! Summary tables assembled from the evaluation artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use terra_core::eval::{ForceRmse, HorizonMse};
use terra_core::mlp::Mlp;
use terra_core::{Result, TerraError};

/// Everything `terra evaluate` measures, serialized as `evaluation.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    /// Surrogate force error against the reference model along the drive.
    pub force: ForceRmse,
    /// Sinkage exponent the plant actually ran with.
    pub n_true: f64,
    /// Final filtered estimate of the sinkage exponent.
    pub n_hat: f64,
    /// Prior the filter started from.
    pub n0: f64,
    /// Open-loop prediction error with the true exponent.
    pub horizon_true: HorizonMse,
    /// Open-loop prediction error with the filtered exponent.
    pub horizon_estimated: HorizonMse,
    /// Open-loop prediction error with the uncorrected prior.
    pub horizon_nominal: HorizonMse,
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| TerraError::Serialization(e.to_string()))?;
    w.write_record(header)
        .map_err(|e| TerraError::Serialization(e.to_string()))?;
    for row in rows {
        w.write_record(row)
            .map_err(|e| TerraError::Serialization(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Force-error table: per-axle trace RMSE plus the held-out-split MSE
/// recorded at training time for context.
pub fn write_force_table(path: &Path, evaluation: &Evaluation, model: &Mlp) -> Result<()> {
    let test_rmse = model
        .manifest
        .as_ref()
        .map(|m| m.test_mse.sqrt())
        .unwrap_or(f64::NAN);
    let rows = vec![
        vec![
            "front".into(),
            format!("{:.3}", evaluation.force.front),
            format!("{test_rmse:.3}"),
        ],
        vec![
            "rear".into(),
            format!("{:.3}", evaluation.force.rear),
            format!("{test_rmse:.3}"),
        ],
        vec![
            "combined".into(),
            format!("{:.3}", evaluation.force.combined),
            format!("{test_rmse:.3}"),
        ],
    ];
    write_rows(path, &["axle", "trace_rmse_n", "test_split_rmse_n"], &rows)
}

/// Horizon-prediction table: per-state MSE for the three terrain
/// hypotheses, with the nominal-to-estimated improvement ratio.
pub fn write_horizon_table(path: &Path, evaluation: &Evaluation) -> Result<()> {
    let per_state: [(&str, fn(&HorizonMse) -> f64); 6] = [
        ("x", |h| h.x),
        ("y", |h| h.y),
        ("psi", |h| h.psi),
        ("u", |h| h.u),
        ("v", |h| h.v),
        ("omega_z", |h| h.omega_z),
    ];
    let mut rows = Vec::new();
    for (name, get) in per_state {
        let true_n = get(&evaluation.horizon_true);
        let est = get(&evaluation.horizon_estimated);
        let nominal = get(&evaluation.horizon_nominal);
        let ratio = if est > 0.0 { nominal / est } else { f64::NAN };
        rows.push(vec![
            name.into(),
            format!("{true_n:.6e}"),
            format!("{est:.6e}"),
            format!("{nominal:.6e}"),
            format!("{ratio:.3}"),
        ]);
    }
    write_rows(
        path,
        &[
            "state",
            "mse_true_n",
            "mse_estimated_n",
            "mse_nominal_n",
            "nominal_over_estimated",
        ],
        &rows,
    )
}
