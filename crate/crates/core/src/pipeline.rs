//! Sequential user-signal estimation along the AP chain.
//!
//! Each AP receives the running estimate `ŝ_{l-1}` and its error covariance
//! `C_{l-1}`, forms an `r`-dimensional observation from its own received
//! vector, quantizes it, and refines the estimate with an LMMSE update.
//! The three processing options differ only in what enters the quantizer:
//!
//! | option   | quantizer input                       | basis `A`                       |
//! |----------|---------------------------------------|---------------------------------|
//! | Option 1 | `Aᴴ (y - H ŝ_{l-1})`                   | top-`r` eigenvectors of `R_G`   |
//! | Option 2 | `Aᴴ y`                                 | top-`r` eigenvectors of `R_y`   |
//! | Option 3 | `y`                                    | `I_N`                           |
//! | NoQuant  | as Option 1, quantizer bypassed       |                                 |
//!
//! For Options 2 and 3 the predictable part `Aᴴ H ŝ_{l-1}` is removed after
//! quantization, so all options feed the same recursion.
//!
//! Everything that depends only on the channel (bases, quantizer ranges,
//! combining matrices, covariances) is computed once per coherence block in a
//! [`ChainPlan`]; per-sample work is then a handful of small mat-vecs.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::config::{NetworkConfig, ProcessingOption};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, hermitize, solve_hpd, trace_re, CMatrix, CVector, ZERO};
use crate::quantization::{calibrate_dynamic_range, draw_dither_into, quantize_into, QuantizedFrame, QuantizerBank};

/// Running estimate and error covariance handed from AP to AP.
#[derive(Debug, Clone, PartialEq)]
pub struct ApState {
    pub s_hat: CVector,
    pub c: CMatrix,
}

impl ApState {
    /// `ŝ_0 = 0`, `C_0 = p I_K`.
    pub fn prior(users: usize, p: f64) -> Self {
        Self {
            s_hat: CVector::zeros(users),
            c: CMatrix::identity(users, users) * c(p),
        }
    }
}

/// Intermediate quantities of one AP for one sample.
#[derive(Debug, Clone)]
pub struct ApWorkspace {
    /// `y - H ŝ_{l-1}`.
    pub g: CVector,
    /// `H C_{l-1} Hᴴ + σ² I`.
    pub r_g: CMatrix,
    /// `N x r` basis with orthonormal columns.
    pub a: CMatrix,
    /// Quantizer input.
    pub projected: CVector,
    /// `K x r` combining matrix.
    pub v: CMatrix,
    /// Covariance of the de-biased observation.
    pub r_f: CMatrix,
}

fn check_dims(what: &str, ok: bool, detail: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: {}", detail())))
    }
}

/// `y - H ŝ_{l-1}`.
pub fn interap_decorrelate(y: &CVector, h: &CMatrix, s_hat_prev: &CVector) -> Result<CVector> {
    check_dims(
        "inter-AP de-correlation",
        y.len() == h.nrows() && s_hat_prev.len() == h.ncols(),
        || {
            format!(
                "y has {}, H is {}x{}, ŝ has {}",
                y.len(),
                h.nrows(),
                h.ncols(),
                s_hat_prev.len()
            )
        },
    )?;
    Ok(y - h * s_hat_prev)
}

/// `H C Hᴴ + σ² I`, symmetrized.
pub fn residual_covariance(h: &CMatrix, c_prev: &CMatrix, sigma2: f64) -> Result<CMatrix> {
    check_dims(
        "residual covariance",
        c_prev.nrows() == h.ncols() && c_prev.ncols() == h.ncols(),
        || {
            format!(
                "H is {}x{}, C is {}x{}",
                h.nrows(),
                h.ncols(),
                c_prev.nrows(),
                c_prev.ncols()
            )
        },
    )?;
    let n = h.nrows();
    let r = h * c_prev * h.adjoint() + CMatrix::identity(n, n) * c(sigma2);
    Ok(hermitize(&r))
}

/// Covariance of the raw received vector, `p H Hᴴ + σ² I`.
pub fn received_covariance(h: &CMatrix, p: f64, sigma2: f64) -> CMatrix {
    let n = h.nrows();
    hermitize(&((h * h.adjoint()) * c(p) + CMatrix::identity(n, n) * c(sigma2)))
}

#[derive(Debug, Clone)]
pub struct PcaBasis {
    /// `N x r`, eigenvectors of the `r` largest eigenvalues.
    pub basis: CMatrix,
    /// The `r` retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// The full spectrum, descending.
    pub spectrum: Vec<f64>,
}

pub fn pca_basis(r_mat: &CMatrix, rank: usize) -> Result<PcaBasis> {
    let n = r_mat.nrows();
    check_dims("PCA", rank <= n, || format!("rank {rank} > dimension {n}"))?;
    let eig = hermitian_eigen(r_mat)?;
    Ok(PcaBasis {
        basis: eig.vectors.columns(0, rank).into_owned(),
        eigenvalues: eig.values[..rank].to_vec(),
        spectrum: eig.values,
    })
}

/// `Aᴴ G`.
pub fn project(a: &CMatrix, g: &CVector) -> Result<CVector> {
    check_dims("projection", a.nrows() == g.len(), || {
        format!("A is {}x{}, vector has {}", a.nrows(), a.ncols(), g.len())
    })?;
    Ok(a.ad_mul(g))
}

/// `Aᴴ R_G A + R_d + R_η`; the quantization terms vanish when `bank` is `None`.
pub fn observation_covariance(a: &CMatrix, r_g: &CMatrix, bank: Option<&QuantizerBank>) -> Result<CMatrix> {
    check_dims("observation covariance", a.nrows() == r_g.nrows(), || {
        format!(
            "A is {}x{}, R_G is {}x{}",
            a.nrows(),
            a.ncols(),
            r_g.nrows(),
            r_g.ncols()
        )
    })?;
    let mut r_f = hermitize(&(a.adjoint() * r_g * a));
    if let Some(bank) = bank {
        check_dims("observation covariance", bank.len() == a.ncols(), || {
            format!("{} quantizer pairs for {} streams", bank.len(), a.ncols())
        })?;
        for (i, v) in bank.dither_variance().iter().enumerate() {
            // R_d + R_η, equal diagonals.
            r_f[(i, i)] += c(2.0 * v);
        }
    }
    Ok(r_f)
}

/// `V = C Hᴴ A R_f⁻¹`, computed by a Cholesky solve of `R_f X = Aᴴ H C`.
pub fn combining_matrix(c_prev: &CMatrix, projected_channel: &CMatrix, r_f: &CMatrix) -> Result<CMatrix> {
    let rhs = projected_channel * c_prev;
    Ok(solve_hpd(r_f, &rhs)?.adjoint())
}

/// `(I - V Aᴴ H) C`, symmetrized.
pub fn update_covariance(c_prev: &CMatrix, v: &CMatrix, projected_channel: &CMatrix) -> CMatrix {
    hermitize(&(c_prev - v * (projected_channel * c_prev)))
}

/// LMMSE refinement from the de-biased observation `f`.
pub fn refine_estimate(prev: &ApState, h: &CMatrix, a: &CMatrix, r_f: &CMatrix, f: &CVector) -> Result<ApState> {
    let k = prev.s_hat.len();
    check_dims(
        "refinement",
        h.ncols() == k && a.nrows() == h.nrows() && r_f.nrows() == a.ncols() && f.len() == a.ncols(),
        || {
            format!(
                "H {}x{}, A {}x{}, R_f {}x{}, f {}",
                h.nrows(),
                h.ncols(),
                a.nrows(),
                a.ncols(),
                r_f.nrows(),
                r_f.ncols(),
                f.len()
            )
        },
    )?;
    let ah = a.adjoint() * h;
    let v = combining_matrix(&prev.c, &ah, r_f)?;
    Ok(ApState {
        s_hat: &prev.s_hat + &v * f,
        c: update_covariance(&prev.c, &v, &ah),
    })
}

/// Scenario constants the recursion needs.
#[derive(Debug, Clone, Copy)]
pub struct ChainParams {
    pub p: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub rank: usize,
}

impl ChainParams {
    pub fn from_config(cfg: &NetworkConfig) -> Self {
        Self {
            p: cfg.p(),
            sigma2: cfg.sigma2(),
            alpha: cfg.alpha,
            rank: cfg.r(),
        }
    }
}

/// One AP for one sample, composed from the individual operations.
/// Returns the refined state, the intermediates and the quantized frame.
pub fn process_ap<R: Rng + ?Sized>(
    option: ProcessingOption,
    prev: &ApState,
    h: &CMatrix,
    y: &CVector,
    bits: u32,
    params: &ChainParams,
    rng: &mut R,
) -> Result<(ApState, ApWorkspace, Option<QuantizedFrame>)> {
    let n = h.nrows();
    let g = interap_decorrelate(y, h, &prev.s_hat)?;
    let r_g = residual_covariance(h, &prev.c, params.sigma2)?;
    let (a, input_var, raw) = stage_basis(option, h, &r_g, params)?;
    let bank = if option.is_quantized() {
        Some(calibrate_dynamic_range(&input_var, params.alpha, bits)?)
    } else {
        None
    };
    let projected = if raw { project(&a, y)? } else { project(&a, &g)? };
    let known = project(&a, &(h * &prev.s_hat))?;
    let (quantized, frame) = match &bank {
        Some(bank) => {
            let mut dither = vec![ZERO; bank.len()];
            draw_dither_into(bank, rng, &mut dither);
            let z: Vec<Complex64> = projected.iter().zip(&dither).map(|(x, d)| x + d).collect();
            let frame = crate::quantization::quantize(bank, &z)?;
            (CVector::from_column_slice(&frame.output), Some(frame))
        }
        None => (projected.clone(), None),
    };
    let f = if raw { quantized - known } else { quantized };
    let r_f = observation_covariance(&a, &r_g, bank.as_ref())?;
    let next = refine_estimate(prev, h, &a, &r_f, &f)?;
    let v = combining_matrix(&prev.c, &(a.adjoint() * h), &r_f)?;
    debug_assert_eq!(g.len(), n);
    Ok((
        next,
        ApWorkspace {
            g,
            r_g,
            a,
            projected,
            v,
            r_f,
        },
        frame,
    ))
}

/// Basis, quantizer input variances, and whether the quantizer sees the raw
/// received vector (Options 2 and 3) rather than the inter-AP residual.
fn stage_basis(
    option: ProcessingOption,
    h: &CMatrix,
    r_g: &CMatrix,
    params: &ChainParams,
) -> Result<(CMatrix, Vec<f64>, bool)> {
    let n = h.nrows();
    let rank = params.rank.min(n);
    Ok(match option {
        ProcessingOption::Option1 | ProcessingOption::NoQuant => {
            let pca = pca_basis(r_g, rank)?;
            (pca.basis, pca.eigenvalues, false)
        }
        ProcessingOption::Option2 => {
            let pca = pca_basis(&received_covariance(h, params.p, params.sigma2), rank)?;
            (pca.basis, pca.eigenvalues, true)
        }
        ProcessingOption::Option3 => {
            let r_y = received_covariance(h, params.p, params.sigma2);
            let var = (0..n).map(|i| r_y[(i, i)].re).collect();
            (CMatrix::identity(n, n), var, true)
        }
    })
}

/// Block-level quantities of one AP.
#[derive(Debug, Clone)]
pub struct ApStage {
    /// `N x r̃`.
    pub basis: CMatrix,
    identity_basis: bool,
    raw_input: bool,
    /// `Aᴴ H`, `r̃ x K`.
    pub projected_channel: CMatrix,
    pub bank: Option<QuantizerBank>,
    /// `K x r̃`.
    pub combiner: CMatrix,
    pub r_f: CMatrix,
    /// Variances the quantizer was calibrated for.
    pub input_variance: Vec<f64>,
}

impl ApStage {
    pub fn streams(&self) -> usize {
        self.basis.ncols()
    }
}

/// Per-block plan of the whole chain for one processing option.
#[derive(Debug, Clone)]
pub struct ChainPlan {
    pub option: ProcessingOption,
    pub stages: Vec<ApStage>,
    /// `C_0, C_1, ..., C_L`.
    pub covariances: Vec<CMatrix>,
    users: usize,
    antennas: usize,
}

/// Values seen at one AP for one sample.
#[derive(Debug)]
pub struct ApTap<'a> {
    pub ap: usize,
    /// Quantizer input (before dither).
    pub input: &'a [Complex64],
    /// Dithered input.
    pub dithered: &'a [Complex64],
    /// Quantizer output, equal to `input` for NoQuant.
    pub output: &'a [Complex64],
    pub clipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub s_hat: CVector,
    pub clipped: usize,
}

impl ChainPlan {
    pub fn build(option: ProcessingOption, h: &[CMatrix], bits: &[u32], params: &ChainParams) -> Result<Self> {
        let users = h.first().map_or(0, |m| m.ncols());
        let antennas = h.first().map_or(0, |m| m.nrows());
        check_dims("chain plan", bits.len() == h.len(), || {
            format!("{} bit widths for {} APs", bits.len(), h.len())
        })?;
        let mut state_c = CMatrix::identity(users, users) * c(params.p);
        let mut covariances = vec![state_c.clone()];
        let mut stages = Vec::with_capacity(h.len());
        for (hl, &b) in h.iter().zip(bits) {
            check_dims("chain plan", hl.shape() == (antennas, users), || {
                format!("AP channels must all be {antennas}x{users}")
            })?;
            let r_g = residual_covariance(hl, &state_c, params.sigma2)?;
            let (basis, input_variance, raw_input) = stage_basis(option, hl, &r_g, params)?;
            let bank = if option.is_quantized() {
                Some(calibrate_dynamic_range(&input_variance, params.alpha, b)?)
            } else {
                None
            };
            let r_f = observation_covariance(&basis, &r_g, bank.as_ref())?;
            let projected_channel = basis.adjoint() * hl;
            let combiner = combining_matrix(&state_c, &projected_channel, &r_f)?;
            state_c = update_covariance(&state_c, &combiner, &projected_channel);
            covariances.push(state_c.clone());
            stages.push(ApStage {
                identity_basis: option == ProcessingOption::Option3,
                raw_input,
                basis,
                projected_channel,
                bank,
                combiner,
                r_f,
                input_variance,
            });
        }
        Ok(Self {
            option,
            stages,
            covariances,
            users,
            antennas,
        })
    }

    pub fn for_config(cfg: &NetworkConfig, channel: &ChannelRealization) -> Result<Self> {
        Self::build(cfg.option, &channel.h, &cfg.bits, &ChainParams::from_config(cfg))
    }

    pub fn final_covariance(&self) -> &CMatrix {
        self.covariances.last().expect("C_0 is always present")
    }

    pub fn covariance_traces(&self) -> Vec<f64> {
        self.covariances.iter().map(trace_re).collect()
    }

    pub fn estimate<R: Rng + ?Sized>(&self, y: &[CVector], rng: &mut R) -> Result<ChainOutput> {
        self.estimate_observed(y, rng, |_| {})
    }

    /// Runs one sample through the chain, reporting each AP's quantizer
    /// activity to `observer`. Dither is drawn from `rng` AP by AP.
    pub fn estimate_observed<R, F>(&self, y: &[CVector], rng: &mut R, mut observer: F) -> Result<ChainOutput>
    where
        R: Rng + ?Sized,
        F: FnMut(ApTap<'_>),
    {
        check_dims(
            "chain input",
            y.len() == self.stages.len() && y.iter().all(|v| v.len() == self.antennas),
            || format!("expected {} vectors of length {}", self.stages.len(), self.antennas),
        )?;
        let k = self.users;
        let max_streams = self.stages.iter().map(ApStage::streams).max().unwrap_or(0);
        let mut s_hat = vec![ZERO; k];
        let mut x = vec![ZERO; max_streams];
        let mut known = vec![ZERO; max_streams];
        let mut z = vec![ZERO; max_streams];
        let mut out = vec![ZERO; max_streams];
        let mut clipped_total = 0;

        for (ap, (stage, yl)) in self.stages.iter().zip(y).enumerate() {
            let r = stage.streams();
            let n = self.antennas;
            let (x, known, z, out) = (&mut x[..r], &mut known[..r], &mut z[..r], &mut out[..r]);
            let a = stage.basis.as_slice();
            let ah = stage.projected_channel.as_slice();
            let yl = yl.as_slice();
            for i in 0..r {
                x[i] = if stage.identity_basis {
                    yl[i]
                } else {
                    let col = &a[i * n..(i + 1) * n];
                    col.iter().zip(yl).fold(ZERO, |acc, (ai, yi)| acc + ai.conj() * yi)
                };
                let mut kn = ZERO;
                for (j, sj) in s_hat.iter().enumerate() {
                    kn += ah[i + j * r] * sj;
                }
                known[i] = kn;
                if !stage.raw_input {
                    x[i] -= kn;
                }
            }
            let clipped = match &stage.bank {
                Some(bank) => {
                    draw_dither_into(bank, rng, z);
                    for (zi, xi) in z.iter_mut().zip(x.iter()) {
                        *zi += xi;
                    }
                    quantize_into(bank, z, out)
                }
                None => {
                    z.copy_from_slice(x);
                    out.copy_from_slice(x);
                    0
                }
            };
            clipped_total += clipped;
            observer(ApTap {
                ap,
                input: x,
                dithered: z,
                output: out,
                clipped,
            });
            if stage.raw_input {
                for (o, kn) in out.iter_mut().zip(known.iter()) {
                    *o -= kn;
                }
            }
            let v = stage.combiner.as_slice();
            for (j, fj) in out.iter().enumerate() {
                let col = &v[j * k..(j + 1) * k];
                for (s, vij) in s_hat.iter_mut().zip(col) {
                    *s += vij * fj;
                }
            }
        }
        Ok(ChainOutput {
            s_hat: CVector::from_vec(s_hat),
            clipped: clipped_total,
        })
    }
}

/// Per-AP record produced by [`run_chain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApDiagnostics {
    pub ap: usize,
    pub trace_c: f64,
    /// Variances the quantizer was calibrated for (eigenvalues for PCA options).
    pub spectrum: Vec<f64>,
    pub clipped: usize,
}

/// Runs the configured option over the whole chain for one sample.
pub fn run_chain<R: Rng + ?Sized>(
    cfg: &NetworkConfig,
    channel: &ChannelRealization,
    y: &[CVector],
    rng: &mut R,
) -> Result<(ApState, Vec<ApDiagnostics>)> {
    let plan = ChainPlan::for_config(cfg, channel)?;
    let mut clipped = vec![0; plan.stages.len()];
    let out = plan.estimate_observed(y, rng, |tap| clipped[tap.ap] = tap.clipped)?;
    let diagnostics = plan
        .stages
        .iter()
        .enumerate()
        .map(|(ap, stage)| ApDiagnostics {
            ap,
            trace_c: trace_re(&plan.covariances[ap + 1]),
            spectrum: stage.input_variance.clone(),
            clipped: clipped[ap],
        })
        .collect();
    Ok((
        ApState {
            s_hat: out.s_hat,
            c: plan.final_covariance().clone(),
        },
        diagnostics,
    ))
}

/// Centralized LMMSE on the stacked channel, `p H̄ᴴ (p H̄ H̄ᴴ + σ² I)⁻¹ ȳ`.
pub fn centralized_mmse_oracle(h_all: &[CMatrix], y_all: &[CVector], p: f64, sigma2: f64) -> Result<CVector> {
    check_dims(
        "centralized oracle",
        h_all.len() == y_all.len() && !h_all.is_empty(),
        || format!("{} channels, {} observations", h_all.len(), y_all.len()),
    )?;
    let k = h_all[0].ncols();
    let rows: usize = h_all.iter().map(|h| h.nrows()).sum();
    let mut h_bar = CMatrix::zeros(rows, k);
    let mut y_bar = CVector::zeros(rows);
    let mut offset = 0;
    for (h, y) in h_all.iter().zip(y_all) {
        check_dims("centralized oracle", h.ncols() == k && y.len() == h.nrows(), || {
            "inconsistent per-AP shapes".to_string()
        })?;
        h_bar.view_mut((offset, 0), h.shape()).copy_from(h);
        y_bar.rows_mut(offset, y.len()).copy_from(y);
        offset += h.nrows();
    }
    let m = hermitize(&((&h_bar * h_bar.adjoint()) * c(p) + CMatrix::identity(rows, rows) * c(sigma2)));
    let x = solve_hpd(&m, &CMatrix::from_column_slice(rows, 1, y_bar.as_slice()))?;
    Ok((h_bar.adjoint() * x).column(0) * c(p))
}
