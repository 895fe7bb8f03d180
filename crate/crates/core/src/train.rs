//! Surrogate training: Levenberg–Marquardt with Bayesian
//! regularization and best-of-ensemble selection.
//!
//! Each ensemble member minimizes the regularized objective
//! F = β·E_D + α·E_W, where E_D is half the summed squared error on
//! the training split (in normalized target units) and E_W half the
//! summed squared weights. The damped Gauss–Newton step solves
//! (β·JᵀJ + (α + μ)·I)·δ = −(β·Jᵀe + α·w) with Marquardt damping μ
//! adapted multiplicatively, and the MacKay evidence equations
//! re-estimate (α, β) from the effective parameter count
//! γ = P − α·tr(H⁻¹). Training stops on the epoch cap, an
//! early-stopping patience on validation MSE, or damping overflow.
//!
//! Members run independently (in parallel when cores allow) and the
//! member with the lowest validation MSE is selected. When the
//! materialized jacobian would exceed the configured memory budget the
//! trainer falls back to first-order descent with momentum.

use ndarray::{Array1, Array2};
use ndarray_linalg::cholesky::{CholeskyFactorized, FactorizeC, InverseC, SolveC, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TerraError};
use crate::lhs::{split_dataset, Dataset};
use crate::mlp::{Mlp, ModelManifest};

/// How the weight-decay strength is adapted during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaMode {
    /// MacKay evidence re-estimation of (α, β) each accepted step.
    Bayesian,
    /// α, β frozen at their initial values.
    Fixed,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Layer widths of every ensemble member.
    pub widths: Vec<usize>,
    /// Cap on Levenberg–Marquardt epochs per member.
    pub max_epochs: usize,
    /// Early-stopping patience, in validation checks without
    /// improvement.
    pub patience: usize,
    /// Number of independently initialized members.
    pub ensemble: usize,
    /// Initial weight-decay ratio λ = α/β.
    pub lambda_init: f64,
    /// λ adaptation mode.
    pub lambda_mode: LambdaMode,
    /// Initial Marquardt damping μ₀.
    pub mu_init: f64,
    /// Multiplicative damping growth/shrink factor.
    pub mu_factor: f64,
    /// Memory budget [bytes] for the materialized jacobian; above it
    /// the first-order fallback trains instead.
    pub memory_budget: usize,
    /// Master seed; member seeds and the split derive from it.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            widths: vec![10, 35, 35, 35, 1],
            max_epochs: 26,
            patience: 10,
            ensemble: 8,
            lambda_init: 0.1,
            lambda_mode: LambdaMode::Bayesian,
            mu_init: 1e-3,
            mu_factor: 10.0,
            memory_budget: 2 << 30,
            seed: 0,
        }
    }
}

/// Per-member training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    /// Seed the member was initialized with.
    pub seed: u64,
    /// Epochs actually run.
    pub epochs: usize,
    /// Final training MSE [N²].
    pub train_mse: f64,
    /// Best validation MSE [N²].
    pub val_mse: f64,
    /// Held-out test MSE [N²].
    pub test_mse: f64,
    /// True when the member hit a non-finite objective and was
    /// abandoned.
    pub diverged: bool,
}

/// Ensemble training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// One entry per member, in member order.
    pub members: Vec<MemberReport>,
    /// Index of the selected member.
    pub selected: usize,
    /// Content hash of the dataset trained on.
    pub dataset_sha256: String,
    /// Wall-clock training time [s].
    pub wall_time_s: f64,
}

extern "C" {
    fn openblas_set_num_threads(n: i32);
    fn cblas_dsyrk(
        order: i32,
        uplo: i32,
        trans: i32,
        n: i32,
        k: i32,
        alpha: f64,
        a: *const f64,
        lda: i32,
        beta: f64,
        c: *mut f64,
        ldc: i32,
    );
}

/// J -> JᵀJ through a single rank-k BLAS update (half the flops of a
/// general matrix product), mirrored to a full symmetric matrix.
fn gram_matrix(j: &Array2<f64>) -> Array2<f64> {
    assert!(j.is_standard_layout());
    let (n, p) = j.dim();
    let mut jtj = Array2::<f64>::zeros((p, p));
    // Row-major (101), upper triangle (121), transposed product (112):
    // C = αAᵀA + βC.
    unsafe {
        cblas_dsyrk(
            101,
            121,
            112,
            p as i32,
            n as i32,
            1.0,
            j.as_ptr(),
            p as i32,
            0.0,
            jtj.as_mut_ptr(),
            p as i32,
        );
    }
    for r in 1..p {
        for c in 0..r {
            jtj[[r, c]] = jtj[[c, r]];
        }
    }
    jtj
}

/// Flattens all parameters into one vector, layer by layer, each layer
/// as row-major weights followed by biases. The jacobian columns use
/// the same layout.
fn pack_params(m: &Mlp) -> Array1<f64> {
    let mut out = Vec::with_capacity(m.param_count());
    for (w, b) in m.weights.iter().zip(&m.biases) {
        out.extend(w.iter().copied());
        out.extend(b.iter().copied());
    }
    Array1::from_vec(out)
}

/// Inverse of [`pack_params`].
fn unpack_params(m: &mut Mlp, theta: &Array1<f64>) {
    let mut offset = 0;
    for (w, b) in m.weights.iter_mut().zip(m.biases.iter_mut()) {
        for v in w.iter_mut() {
            *v = theta[offset];
            offset += 1;
        }
        for v in b.iter_mut() {
            *v = theta[offset];
            offset += 1;
        }
    }
    debug_assert_eq!(offset, theta.len());
}

/// Activations of every layer for a whole batch of normalized inputs;
/// `hidden[l]` is N×width, `output` is N (normalized units).
struct BatchTrace {
    hidden: Vec<Array2<f64>>,
    output: Array1<f64>,
}

fn batch_forward(m: &Mlp, x_norm: &Array2<f64>) -> BatchTrace {
    let layers = m.weights.len();
    let mut hidden = Vec::with_capacity(layers - 1);
    let mut a = x_norm.clone();
    for l in 0..layers - 1 {
        let mut s = a.dot(&m.weights[l].t());
        s += &m.biases[l];
        a = s.mapv(f64::tanh);
        hidden.push(a.clone());
    }
    let output = a.dot(&m.weights[layers - 1].row(0)) + m.biases[layers - 1][0];
    BatchTrace { hidden, output }
}

/// Residual jacobian ∂y_norm/∂θ for every training row, laid out to
/// match [`pack_params`].
fn batch_jacobian(m: &Mlp, x_norm: &Array2<f64>, trace: &BatchTrace) -> Array2<f64> {
    let layers = m.weights.len();
    let n = x_norm.nrows();
    let p = m.param_count();
    let mut j = Array2::<f64>::zeros((n, p));

    // Backpropagated sensitivities D_l = ∂y/∂s_l per row (N×width_l).
    let mut sensitivities: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); layers];
    let last_hidden = &trace.hidden[layers - 2];
    sensitivities[layers - 1] = Array2::ones((n, 1));
    let mut d = Array2::from_shape_fn((n, last_hidden.ncols()), |(r, c)| {
        m.weights[layers - 1][[0, c]] * (1.0 - last_hidden[[r, c]] * last_hidden[[r, c]])
    });
    sensitivities[layers - 2] = d.clone();
    for l in (0..layers - 2).rev() {
        let a = &trace.hidden[l];
        let back = d.dot(&m.weights[l + 1]);
        d = Array2::from_shape_fn((n, a.ncols()), |(r, c)| {
            back[[r, c]] * (1.0 - a[[r, c]] * a[[r, c]])
        });
        sensitivities[l] = d.clone();
    }

    let mut offset = 0;
    for l in 0..layers {
        let inputs_l: &Array2<f64> = if l == 0 { x_norm } else { &trace.hidden[l - 1] };
        let (out_w, in_w) = m.weights[l].dim();
        let d_l = &sensitivities[l];
        for r in 0..n {
            let base = offset;
            for o in 0..out_w {
                let s = d_l[[r, o]];
                if s == 0.0 {
                    continue;
                }
                let row_base = base + o * in_w;
                for i in 0..in_w {
                    j[[r, row_base + i]] = s * inputs_l[[r, i]];
                }
            }
            let bias_base = base + out_w * in_w;
            for o in 0..out_w {
                j[[r, bias_base + o]] = d_l[[r, o]];
            }
        }
        offset += out_w * in_w + out_w;
    }
    j
}

/// Normalized inputs/targets of a split under a model's records.
fn normalize_split(m: &Mlp, d: &Dataset) -> (Array2<f64>, Array1<f64>) {
    let x = Array2::from_shape_fn(d.inputs.dim(), |(r, c)| {
        (d.inputs[[r, c]] - m.input_shift[c]) / m.input_scale[c]
    });
    let t = Array1::from_shape_fn(d.targets.nrows(), |r| {
        (d.targets[[r, 0]] - m.output_shift) / m.output_scale
    });
    (x, t)
}

/// Mean squared error in physical units [N²] of a model on a split.
fn split_mse(m: &Mlp, d: &Dataset) -> f64 {
    let (x, t) = normalize_split(m, d);
    let y = batch_forward(m, &x).output;
    let n = t.len().max(1);
    let norm_mse = (&y - &t).mapv(|e| e * e).sum() / n as f64;
    norm_mse * m.output_scale * m.output_scale
}

struct MemberOutcome {
    model: Mlp,
    report: MemberReport,
}

/// Trains the ensemble on `data` (split 70/15/15 internally from the
/// config seed) and returns the member with the lowest validation MSE
/// together with the full report.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, TrainingReport)> {
    if cfg.ensemble == 0 || cfg.patience == 0 {
        return Err(TerraError::InvalidInput(
            "ensemble size and patience must be at least 1".into(),
        ));
    }
    if cfg.widths.first() != Some(&data.inputs.ncols()) {
        return Err(TerraError::InvalidInput(format!(
            "network input width {:?} does not match dataset dimension {}",
            cfg.widths.first(),
            data.inputs.ncols()
        )));
    }
    // Keep BLAS single-threaded: members already parallelize across
    // cores and single-threaded kernels keep runs bit-reproducible.
    unsafe { openblas_set_num_threads(1) };

    let start = std::time::Instant::now();
    let (train_split, val_split, test_split) = split_dataset(data, cfg.seed)?;

    // Normalization bounds from the training split.
    let mut input_bounds = vec![[f64::INFINITY, f64::NEG_INFINITY]; data.inputs.ncols()];
    for row in train_split.inputs.rows() {
        for (d, v) in row.iter().enumerate() {
            input_bounds[d][0] = input_bounds[d][0].min(*v);
            input_bounds[d][1] = input_bounds[d][1].max(*v);
        }
    }
    let targets = train_split.targets.column(0);
    let target_bounds = [
        targets.iter().cloned().fold(f64::INFINITY, f64::min),
        targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ];

    let mut seed_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let member_seeds: Vec<u64> = (0..cfg.ensemble).map(|_| seed_rng.random()).collect();

    let jacobian_bytes = train_split.len() * pack_len(&cfg.widths) * std::mem::size_of::<f64>();
    let use_fallback = jacobian_bytes > cfg.memory_budget;
    if use_fallback {
        log::warn!(
            "jacobian would need {jacobian_bytes} bytes (> {} budget); \
             falling back to first-order descent",
            cfg.memory_budget
        );
    }

    let outcomes: Vec<MemberOutcome> = member_seeds
        .par_iter()
        .map(|&seed| {
            let mut model = Mlp::new(&cfg.widths, seed).expect("validated widths");
            model.set_normalization(&input_bounds, target_bounds);
            let epochs = if use_fallback {
                train_member_first_order(&mut model, &train_split, &val_split, cfg)
            } else {
                train_member_lm(&mut model, &train_split, &val_split, cfg)
            };
            let train_mse = split_mse(&model, &train_split);
            let report = MemberReport {
                seed,
                epochs,
                train_mse,
                val_mse: split_mse(&model, &val_split),
                test_mse: split_mse(&model, &test_split),
                diverged: !train_mse.is_finite(),
            };
            MemberOutcome { model, report }
        })
        .collect();

    let reports: Vec<MemberReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let selected = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.diverged && r.val_mse.is_finite())
        .min_by(|a, b| a.1.val_mse.total_cmp(&b.1.val_mse))
        .map(|(i, _)| i)
        .ok_or_else(|| TerraError::Convergence("every ensemble member diverged".into()))?;

    let mut model = outcomes[selected].model.clone();
    model.manifest = Some(ModelManifest {
        layer_sizes: cfg.widths.clone(),
        train_seed: member_seeds[selected],
        dataset_sha256: data.content_hash(),
        train_mse: reports[selected].train_mse,
        val_mse: reports[selected].val_mse,
        test_mse: reports[selected].test_mse,
    });
    let report = TrainingReport {
        members: reports,
        selected,
        dataset_sha256: data.content_hash(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

fn pack_len(widths: &[usize]) -> usize {
    widths
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

/// Levenberg–Marquardt with MacKay evidence updates on one member.
/// Returns the number of epochs run; the best-validation parameters
/// are left in `model`.
fn train_member_lm(
    model: &mut Mlp,
    train_split: &Dataset,
    val_split: &Dataset,
    cfg: &TrainConfig,
) -> usize {
    let (x, t) = normalize_split(model, train_split);
    let n = t.len();
    let p = model.param_count();

    let mut theta = pack_params(model);
    let mut alpha = cfg.lambda_init;
    let mut beta = 1.0_f64;
    let mut mu = cfg.mu_init;

    let eval_objective = |m: &Mlp| -> (f64, Array1<f64>) {
        let trace = batch_forward(m, &x);
        let e = &trace.output - &t;
        let e_d = 0.5 * e.mapv(|v| v * v).sum();
        (e_d, e)
    };
    let weight_energy = |theta: &Array1<f64>| 0.5 * theta.mapv(|v| v * v).sum();

    let (mut e_d, mut residuals) = eval_objective(model);
    let mut e_w = weight_energy(&theta);
    let mut best_val = split_mse(model, val_split);
    let mut best_theta = theta.clone();
    let mut stale_checks = 0usize;
    let mut epochs = 0usize;

    for epoch in 0..cfg.max_epochs {
        epochs = epoch + 1;
        let trace = batch_forward(model, &x);
        let j = batch_jacobian(model, &x, &trace);
        let jtj = gram_matrix(&j);
        let jte = j.t().dot(&residuals);
        let gradient = &jte * beta + &theta * alpha;

        // Evidence update from the undamped regularized Hessian.
        if matches!(cfg.lambda_mode, LambdaMode::Bayesian) && epoch % 2 == 1 {
            if let Some(trace_hinv) = inverse_trace(&jtj, beta, alpha) {
                let gamma = (p as f64 - alpha * trace_hinv).clamp(1e-6, p as f64);
                alpha = (gamma / (2.0 * e_w).max(1e-300)).clamp(1e-9, 1e6);
                beta = ((n as f64 - gamma).max(1e-3) / (2.0 * e_d).max(1e-300))
                    .clamp(1e-9, 1e12);
            }
        }

        // Damped Gauss–Newton step, growing μ until the objective
        // decreases.
        let objective = beta * e_d + alpha * e_w;
        let mut stepped = false;
        while mu < 1e11 {
            match damped_solve(&jtj, beta, alpha + mu, &gradient) {
                Some(delta) => {
                    let candidate = &theta - &delta;
                    unpack_params(model, &candidate);
                    let (e_d_new, residuals_new) = eval_objective(model);
                    let e_w_new = weight_energy(&candidate);
                    let objective_new = beta * e_d_new + alpha * e_w_new;
                    if objective_new.is_finite() && objective_new < objective {
                        theta = candidate;
                        e_d = e_d_new;
                        e_w = e_w_new;
                        residuals = residuals_new;
                        mu = (mu / cfg.mu_factor).max(1e-12);
                        stepped = true;
                        break;
                    }
                    mu *= cfg.mu_factor;
                }
                None => mu *= cfg.mu_factor,
            }
        }
        if !stepped {
            // Damping overflow: the quadratic model cannot improve the
            // objective any further.
            unpack_params(model, &theta);
            break;
        }

        let val = split_mse(model, val_split);
        if val < best_val {
            best_val = val;
            best_theta = theta.clone();
            stale_checks = 0;
        } else {
            stale_checks += 1;
            if stale_checks >= cfg.patience {
                break;
            }
        }
        if epoch % 10 == 0 {
            log::debug!(
                "epoch {epoch}: F = {:.3e}, val MSE = {val:.3e}, alpha = {alpha:.2e}, \
                 beta = {beta:.2e}, mu = {mu:.1e}",
                objective
            );
        }
    }
    unpack_params(model, &best_theta);
    epochs
}

/// Solves (β·JᵀJ + d·I)·δ = g by Cholesky factorization; `None` when
/// the damped matrix is not positive definite.
fn damped_solve(jtj: &Array2<f64>, beta: f64, d: f64, g: &Array1<f64>) -> Option<Array1<f64>> {
    let factor = factorize(jtj, beta, d)?;
    factor.solvec(g).ok()
}

fn factorize(
    jtj: &Array2<f64>,
    beta: f64,
    d: f64,
) -> Option<CholeskyFactorized<ndarray::OwnedRepr<f64>>> {
    let mut h = jtj * beta;
    for i in 0..h.nrows() {
        h[[i, i]] += d;
    }
    h.factorizec(UPLO::Lower).ok()
}

/// tr((β·JᵀJ + α·I)⁻¹) for the MacKay effective-parameter count.
fn inverse_trace(jtj: &Array2<f64>, beta: f64, alpha: f64) -> Option<f64> {
    let factor = factorize(jtj, beta, alpha)?;
    let inverse = factor.invc().ok()?;
    Some(inverse.diag().sum())
}

/// First-order fallback: gradient descent with momentum on the same
/// regularized objective, used when the jacobian exceeds the memory
/// budget.
fn train_member_first_order(
    model: &mut Mlp,
    train_split: &Dataset,
    val_split: &Dataset,
    cfg: &TrainConfig,
) -> usize {
    let (x, t) = normalize_split(model, train_split);
    let n = t.len() as f64;
    let alpha = cfg.lambda_init;
    let learning_rate = 0.05;
    let momentum = 0.9;

    let mut theta = pack_params(model);
    let mut velocity: Array1<f64> = Array1::zeros(theta.len());
    let mut best_val = split_mse(model, val_split);
    let mut best_theta = theta.clone();
    let mut stale = 0usize;
    let mut epochs = 0usize;

    // The epoch budget stretches because first-order steps are cheap
    // and far less greedy than Gauss–Newton ones.
    for epoch in 0..cfg.max_epochs * 20 {
        epochs = epoch + 1;
        let trace = batch_forward(model, &x);
        let e = &trace.output - &t;
        let j = batch_jacobian(model, &x, &trace);
        let gradient = j.t().dot(&e).mapv(|g| g / n) + &theta * (alpha / n);
        velocity = velocity * momentum - gradient * learning_rate;
        theta = &theta + &velocity;
        unpack_params(model, &theta);

        if epoch % 10 == 9 {
            let val = split_mse(model, val_split);
            if val < best_val {
                best_val = val;
                best_theta = theta.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    unpack_params(model, &best_theta);
    epochs
}
