//! One function per subcommand. Each computes everything first and returns
//! the staged [`Outputs`]; the caller decides whether to commit them.

use rayon::prelude::*;
use serde::Serialize;

use diabatic::dynamics::{decay_fit, fwhm, DecayFit, DecayWindow};
use diabatic::fit::linear_fit;
use diabatic::hamiltonian::reduced_operators;
use diabatic::lz::{extract_lz_params, lz_report, LzEntry};
use diabatic::oracle::{classical_optima_check, reduced_gap_containment};
use diabatic::perturbation::{bipartite_pair, predict_crossing, CrossingPrediction};
use diabatic::spectrum::{catalyst_gap_minimum, compute_spectrum, find_gap_minima, gap_minima, level_gap_minima, JStar, LevelGapMinimum};
use diabatic::sweep::{cached_j_star, lz_time_axis, scaling_row, ScalingRow};
use diabatic::{Bitstring, Cache, CatalystSpec, Error, GapMinimum, GraphInstance, ProblemParams};

use crate::config::{ConfigError, NamedInstance, Resolved};
use crate::output::{num, opt, tag, Outputs, Provenance};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Numerical(_) => "numerical",
            Failure::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            e if e.is_numerical() => Failure::Numerical(e.to_string()),
            Error::Integrator(_) | Error::Eigensolver { .. } => Failure::Numerical(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

type Outcome = Result<Outputs, Failure>;

pub struct Context {
    pub cfg: Resolved,
    pub cache: Option<Cache>,
    pub seedless: bool,
}

impl Context {
    fn outputs(&self, command: &str, instances: &[&NamedInstance]) -> Outputs {
        let hashes: Vec<String> = instances.iter().map(|i| i.instance.fingerprint()).collect();
        Outputs::new(Provenance::new(command, self.cfg.hash(), &hashes, self.seedless))
    }

    fn all(&self) -> Vec<&NamedInstance> {
        self.cfg.instances.iter().collect()
    }

    fn params(inst: &GraphInstance) -> Result<ProblemParams, Failure> {
        Ok(inst.normalize::<f64>()?)
    }

    /// Configured strength, or J*xx from the (cached) search.
    fn reference_strength(&self, params: &ProblemParams, pairs: &[(usize, usize)]) -> Result<(f64, Option<JStar>), Failure> {
        match self.cfg.raw.catalyst.strength {
            Some(j) => Ok((j, None)),
            None => {
                let (js, _) = cached_j_star(params, pairs, self.cfg.bracket(), &self.cfg.search_options(), self.cache.as_ref())?;
                Ok((js.j_star, Some(js)))
            }
        }
    }
}

#[derive(Serialize)]
struct CatalystRecord {
    pairs: Vec<(usize, usize)>,
    strength: f64,
    reference_strength: f64,
    delta: f64,
    j_star_searched: bool,
}

#[derive(Serialize)]
struct GapMinimumRecord {
    s_star: f64,
    gap_ghz: f64,
    #[serde(rename = "d2E0")]
    d2e0: f64,
    #[serde(rename = "d2E1")]
    d2e1: f64,
    tol: f64,
    d1_mean: f64,
    fd_step: f64,
    fd_halving_change: f64,
}

impl From<&GapMinimum> for GapMinimumRecord {
    fn from(m: &GapMinimum) -> Self {
        Self {
            s_star: m.s_star,
            gap_ghz: m.gap,
            d2e0: m.d2e0,
            d2e1: m.d2e1,
            tol: m.refinement_tolerance,
            d1_mean: m.d1_mean,
            fd_step: m.fd_step,
            fd_halving_change: m.fd_halving_change,
        }
    }
}

#[derive(Serialize)]
struct SpectrumReport {
    instance: String,
    catalyst: Option<CatalystRecord>,
    minima: Vec<GapMinimumRecord>,
    level_minima: Vec<LevelGapMinimum<f64>>,
}

pub fn spectrum(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let inst = cfg.single("spectrum")?;
    let s_axis = cfg.raw.spectrum.s.values();
    let params = Context::params(&inst.instance)?;
    let levels = cfg.raw.spectrum.levels;
    let catalyst = if cfg.raw.catalyst.enabled {
        let pairs = cfg.pairs_for(&inst.instance);
        let (reference, searched) = ctx.reference_strength(&params, &pairs)?;
        let delta = cfg.raw.catalyst.delta;
        let spec = if delta == 0.0 {
            CatalystSpec::new(pairs.clone(), reference)?
        } else {
            CatalystSpec::detuned(pairs.clone(), reference, delta)?
        };
        Some((
            spec.clone(),
            CatalystRecord {
                pairs,
                strength: spec.strength,
                reference_strength: reference,
                delta,
                j_star_searched: searched.is_some(),
            },
        ))
    } else {
        None
    };
    let ops = reduced_operators(&params, catalyst.as_ref().map(|c| &c.0))?;
    if levels > ops.dim() {
        return Err(Failure::Config(format!("spectrum.levels = {levels} exceeds the reduced dimension {}", ops.dim())));
    }
    let spec = compute_spectrum(&ops, &s_axis, levels)?;
    let opts = cfg.gap_options();
    let minima = match find_gap_minima(&spec, &ops, &opts) {
        Ok(m) => m,
        Err(Error::NoGapMinimum(_)) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut level_minima = Vec::new();
    for a in 0..levels - 1 {
        level_minima.extend(level_gap_minima(&spec, &ops, a, a + 1, &opts)?);
    }

    let mut out = ctx.outputs("spectrum", &[inst]);
    let mut header = vec!["s".to_string()];
    header.extend((0..levels).map(|a| format!("E_{a}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = spec.s_grid.iter().zip(&spec.energies).map(|(s, e)| {
        let mut r = vec![num(*s)];
        r.extend(e.iter().map(|x| num(*x)));
        r
    });
    out.csv("spectrum.csv", &header, rows);
    out.json(
        "gap_minima.json",
        &SpectrumReport {
            instance: inst.label.clone(),
            catalyst: catalyst.map(|c| c.1),
            minima: minima.iter().map(GapMinimumRecord::from).collect(),
            level_minima,
        },
    );
    Ok(out)
}

#[derive(Serialize)]
struct JStarRow {
    label: String,
    n: usize,
    pairs: Vec<(usize, usize)>,
    result: Option<JStar>,
    error: Option<String>,
}

pub fn jstar(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let rows = cfg
        .instances
        .par_iter()
        .map(|inst| {
            let params = Context::params(&inst.instance)?;
            let pairs = cfg.pairs_for(&inst.instance);
            let (result, error) = match cached_j_star(&params, &pairs, cfg.bracket(), &cfg.search_options(), ctx.cache.as_ref()) {
                Ok((js, _)) => (Some(js), None),
                Err(e @ Error::Bracket { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(Failure::from(e)),
            };
            Ok(JStarRow {
                label: inst.label.clone(),
                n: inst.instance.n_qubits(),
                pairs,
                result,
                error,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    let mut out = ctx.outputs("jstar", &ctx.all());
    out.csv(
        "jstar.csv",
        &["label", "n", "j_star", "s_star", "residual_gap_ghz", "error"],
        rows.iter().map(|r| {
            let j = r.result.as_ref();
            vec![
                r.label.clone(),
                r.n.to_string(),
                opt(j.map(|j| j.j_star)),
                opt(j.map(|j| j.s_star)),
                opt(j.map(|j| j.residual_gap)),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    );
    out.json("jstar.json", &rows);
    Ok(out)
}

#[derive(Serialize)]
struct GridSummary {
    reference_strength: f64,
    j_star: Option<JStar>,
    /// FWHM in ΔJxx of each t_a row, linear interpolation on the grid.
    row_fwhm: Vec<(f64, Option<f64>)>,
    /// Exponential decay fit of each ΔJxx column.
    column_decay: Vec<(f64, Option<DecayFit>)>,
    failures: usize,
}

fn locate(axis: &[f64], x: f64, what: &str) -> Result<usize, Failure> {
    axis.iter()
        .position(|v| (v - x).abs() <= 1e-9 * x.abs().max(1.0))
        .ok_or_else(|| Failure::Config(format!("{what} slice {x} is not on the grid axis")))
}

pub fn grid(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let inst = cfg.single("grid")?;
    let section = cfg.raw.grid.as_ref().ok_or_else(|| Failure::Config("`grid` needs a [grid] section".into()))?;
    let t_axis = section.t_a_us.values();
    let d_axis = section.delta_jxx.values();
    let t_slices = section.slice_t_a_us.iter().map(|&t| locate(&t_axis, t, "t_a").map(|i| (t, i))).collect::<Result<Vec<_>, _>>()?;
    let d_slices = section.slice_delta_jxx.iter().map(|&d| locate(&d_axis, d, "ΔJxx").map(|j| (d, j))).collect::<Result<Vec<_>, _>>()?;

    let params = Context::params(&inst.instance)?;
    let pairs = cfg.pairs_for(&inst.instance);
    let (reference, js) = ctx.reference_strength(&params, &pairs)?;
    let grid = diabatic::dynamics::fidelity_grid(&params, &pairs, reference, &t_axis, &d_axis, &cfg.evolve_options(), ctx.cache.as_ref())?;

    let row_fwhm = (0..t_axis.len())
        .map(|i| {
            let row = grid.row(i);
            let complete: Option<Vec<f64>> = row.iter().copied().collect();
            (t_axis[i], complete.and_then(|r| fwhm(&d_axis, &r).ok()))
        })
        .collect();
    let column_decay = (0..d_axis.len())
        .map(|j| {
            let col = grid.column(j);
            let complete: Option<Vec<f64>> = col.into_iter().collect();
            (d_axis[j], complete.and_then(|c| decay_fit(&t_axis, &c, DecayWindow::Auto).ok()))
        })
        .collect();

    let mut out = ctx.outputs("grid", &[inst]);
    let cells = t_axis.iter().enumerate().flat_map(|(i, t)| {
        let grid = &grid;
        d_axis.iter().enumerate().map(move |(j, d)| vec![num(*t), num(*d), opt(grid.fidelity[i][j])])
    });
    out.csv("grid.csv", &["t_a_us", "delta_jxx", "fidelity"], cells);
    out.csv(
        "grid_failures.csv",
        &["t_a_us", "delta_jxx", "message"],
        grid.failures.iter().map(|f| vec![num(f.t_a_us), num(f.delta), f.message.clone()]),
    );
    for (t, i) in t_slices {
        let rows = d_axis.iter().zip(grid.row(i)).map(|(d, f)| vec![num(*d), opt(*f)]);
        out.csv(&format!("slice_t_{}.csv", tag(t)), &["delta_jxx", "fidelity"], rows);
    }
    for (d, j) in d_slices {
        let rows = t_axis.iter().zip(grid.column(j)).map(|(t, f)| vec![num(*t), opt(f)]);
        out.csv(&format!("slice_delta_{}.csv", tag(d)), &["t_a_us", "fidelity"], rows);
    }
    out.json(
        "grid_summary.json",
        &GridSummary {
            reference_strength: reference,
            j_star: js,
            row_fwhm,
            column_decay,
            failures: grid.failures.len(),
        },
    );
    Ok(out)
}

#[derive(Serialize)]
struct Trend {
    key: f64,
    slope_per_qubit: f64,
    r_squared: f64,
}

#[derive(Serialize)]
struct ScalingReport {
    rows: Vec<ScalingRow>,
    /// Linear fits against n, present with at least three sizes.
    fwhm_trends: Vec<Trend>,
    decay_trends: Vec<Trend>,
}

fn trend(ns: &[f64], ys: &[Option<f64>], key: f64) -> Option<Trend> {
    let (x, y): (Vec<f64>, Vec<f64>) = ns.iter().zip(ys).filter_map(|(n, y)| y.map(|y| (*n, y))).unzip();
    if x.len() < 3 {
        return None;
    }
    linear_fit(&x, &y).ok().map(|f| Trend {
        key,
        slope_per_qubit: f.slope,
        r_squared: f.r_squared,
    })
}

pub fn scaling(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let sec = &cfg.raw.scaling;
    let opts = cfg.sweep_options();
    let rows = cfg
        .instances
        .par_iter()
        .map(|inst| {
            let pairs = cfg.pairs_for(&inst.instance);
            scaling_row(&inst.instance, &pairs, &sec.fwhm_t_a_us, &sec.decay_delta_jxx, &opts, ctx.cache.as_ref()).map_err(Failure::from)
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let fwhm_trends = sec
        .fwhm_t_a_us
        .iter()
        .enumerate()
        .filter_map(|(k, &t)| trend(&ns, &rows.iter().map(|r| Some(r.fwhm[k].width)).collect::<Vec<_>>(), t))
        .collect();
    let decay_trends = sec
        .decay_delta_jxx
        .iter()
        .enumerate()
        .filter_map(|(k, &d)| trend(&ns, &rows.iter().map(|r| r.decay[k].fit.as_ref().map(|f| f.rate)).collect::<Vec<_>>(), d))
        .collect();

    let mut out = ctx.outputs("scaling", &ctx.all());
    out.csv(
        "scaling_fwhm.csv",
        &["n", "t_a_us", "fwhm", "left", "right", "peak", "j_star"],
        rows.iter().flat_map(|r| {
            r.fwhm.iter().map(move |f| {
                vec![r.n.to_string(), num(f.t_a_us), num(f.width), num(f.left), num(f.right), num(f.peak), num(r.j_star)]
            })
        }),
    );
    out.csv(
        "scaling_decay.csv",
        &["n", "delta_jxx", "gamma_fit", "gamma_lz", "gamma_lo", "gamma_hi", "window_lo_us", "window_hi_us", "points"],
        rows.iter().flat_map(|r| {
            r.decay.iter().map(move |c| {
                let f = c.fit.as_ref();
                vec![
                    r.n.to_string(),
                    num(c.delta),
                    opt(f.map(|f| f.rate)),
                    num(c.gamma_lz),
                    num(c.gamma_lo),
                    num(c.gamma_hi),
                    opt(f.map(|f| f.window_us.0)),
                    opt(f.map(|f| f.window_us.1)),
                    f.map(|f| f.points.to_string()).unwrap_or_default(),
                ]
            })
        }),
    );
    out.json(
        "scaling.json",
        &ScalingReport {
            rows,
            fwhm_trends,
            decay_trends,
        },
    );
    Ok(out)
}

pub fn lz(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let inst = cfg.single("lz")?;
    let params = Context::params(&inst.instance)?;
    let pairs = cfg.pairs_for(&inst.instance);
    let (reference, _) = ctx.reference_strength(&params, &pairs)?;
    let search = cfg.search_options();
    let evolve = cfg.evolve_options();
    let shared = cfg.raw.lz.t_a_us.as_ref().map(|a| a.values());
    let mut entries: Vec<LzEntry> = Vec::new();
    for &delta in &cfg.raw.lz.delta_jxx {
        let axis = match &shared {
            Some(a) => a.clone(),
            None => {
                let strength = CatalystSpec::detuned(pairs.clone(), reference, delta)?.strength;
                let lzp = extract_lz_params(&catalyst_gap_minimum(&params, &pairs, strength, &search)?)?;
                lz_time_axis(lzp.gamma, cfg.raw.scaling.decay_span, cfg.raw.scaling.decay_points)?
            }
        };
        entries.extend(lz_report(&params, &pairs, reference, &[delta], &axis, &search, &evolve, ctx.cache.as_ref())?);
    }

    let mut out = ctx.outputs("lz", &[inst]);
    out.csv(
        "lz.csv",
        &["delta_jxx", "t_a_us", "f_numeric", "f_lz", "rel_deviation", "too_fast"],
        entries.iter().flat_map(|e| {
            e.rows.iter().map(move |r| {
                vec![num(e.delta), num(r.t_a_us), num(r.f_numeric), num(r.f_lz), num(r.rel_deviation), r.too_fast.to_string()]
            })
        }),
    );
    out.json("lz.json", &entries);
    Ok(out)
}

#[derive(Serialize)]
struct PcRecord {
    label: String,
    n: usize,
    hamming: usize,
    #[serde(flatten)]
    crossing: CrossingPrediction<f64>,
    /// Catalyst-free exact minimum of ΔE₀₁ for comparison.
    exact_s_star: Option<f64>,
    exact_min_gap_ghz: Option<f64>,
}

pub fn pc_predict(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let sec = &cfg.raw.perturbation;
    let records = cfg
        .instances
        .par_iter()
        .map(|inst| -> Result<Vec<PcRecord>, Failure> {
            let params = Context::params(&inst.instance)?;
            let n = params.n_qubits();
            let pairs: Vec<(Bitstring, Bitstring)> = if sec.states.is_empty() {
                vec![bipartite_pair(&params)]
            } else {
                sec.states
                    .iter()
                    .map(|(a, b)| {
                        let a: Bitstring = a.parse()?;
                        let b: Bitstring = b.parse()?;
                        if a.len() != n || b.len() != n {
                            return Err(Error::InvalidArgument(format!("states must have {n} bits for {}", inst.label)));
                        }
                        Ok((a, b))
                    })
                    .collect::<Result<_, Error>>()?
            };
            let exact = gap_minima(&reduced_operators(&params, None)?, &cfg.gap_options())
                .ok()
                .and_then(|m| m.into_iter().min_by(|a, b| a.gap.total_cmp(&b.gap)));
            pairs
                .iter()
                .map(|(a, b)| {
                    Ok(PcRecord {
                        label: inst.label.clone(),
                        n,
                        hamming: a.hamming(b),
                        crossing: predict_crossing(&params, a, b, sec.delta)?,
                        exact_s_star: exact.as_ref().map(|m| m.s_star),
                        exact_min_gap_ghz: exact.as_ref().map(|m| m.gap),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>, Failure>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();

    let mut out = ctx.outputs("pc-predict", &ctx.all());
    out.csv(
        "pc_predict.csv",
        &["label", "n", "state_a", "state_b", "hamming", "lambda_star", "s_pred", "coeff_a", "coeff_b", "in_L_delta", "exact_s_star", "exact_min_gap_ghz"],
        records.iter().map(|r| {
            let c = &r.crossing;
            vec![
                r.label.clone(),
                r.n.to_string(),
                c.state_a.to_string(),
                c.state_b.to_string(),
                r.hamming.to_string(),
                opt(c.lambda_star),
                opt(c.s_star),
                num(c.coeff_a),
                num(c.coeff_b),
                c.in_l_delta.to_string(),
                opt(r.exact_s_star),
                opt(r.exact_min_gap_ghz),
            ]
        }),
    );
    out.json("pc_predict.json", &records);
    Ok(out)
}

#[derive(Serialize)]
struct Check {
    label: String,
    check: String,
    value: f64,
    threshold: f64,
    passed: bool,
}

/// Runs the brute-force cross-checks; the second value is false when any fails.
pub fn validate(ctx: &Context) -> Result<(Outputs, bool), Failure> {
    let cfg = &ctx.cfg;
    let sec = &cfg.raw.validate;
    let mut checks = Vec::new();
    for inst in &cfg.instances {
        let params = Context::params(&inst.instance)?;
        let optima = classical_optima_check(&params)?;
        checks.push(Check {
            label: inst.label.clone(),
            check: "classical optima are G0 then G1".into(),
            value: optima.first_excited_energy - optima.ground_energy,
            threshold: 0.0,
            passed: optima.passed,
        });
        let strength = cfg.raw.catalyst.strength.unwrap_or(1.0) * (1.0 + cfg.raw.catalyst.delta);
        let cat = CatalystSpec::new(cfg.pairs_for(&inst.instance), strength)?;
        for (name, c) in [("catalyst-free", None), ("catalysed", Some(&cat))] {
            for r in reduced_gap_containment(&params, c, &sec.s)? {
                checks.push(Check {
                    label: inst.label.clone(),
                    check: format!("reduced gaps in full spectrum, {name}, s = {}", r.s),
                    value: r.max_rel_error,
                    threshold: sec.tolerance,
                    passed: r.max_rel_error < sec.tolerance,
                });
            }
        }
    }
    let ok = checks.iter().all(|c| c.passed);
    let mut out = ctx.outputs("validate", &ctx.all());
    out.csv(
        "validate.csv",
        &["label", "check", "value", "threshold", "passed"],
        checks.iter().map(|c| vec![c.label.clone(), c.check.clone(), num(c.value), num(c.threshold), c.passed.to_string()]),
    );
    out.json("validate.json", &checks);
    Ok((out, ok))
}
