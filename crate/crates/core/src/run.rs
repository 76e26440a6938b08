//! Experiment driver: runs the configured tasks, writes CSV artifacts and
//! assembles the [`SpectrumReport`].

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::adaptive::{bs_refine, entropy_fit, gamma_fit, partition_count, stopping_partition};
use crate::coarse::{default_alpha_grid, CoarseProfile};
use crate::config::{ExperimentConfig, Task};
use crate::cube::MAX_LEVEL;
use crate::eigen;
use crate::error::{Error, Result};
use crate::partition_fn::{
    dim_infty, dimension_bounds, kappa_estimate, minkowski, per_level_zeros, subdifferential_bound,
    write_summary_csv, KappaEstimate, PartitionFunctionCurve, SummaryRow, TauRows,
};
use crate::report::{Relation, SpectrumReport};
use crate::setfn::{SetFunction, SetFunctionKind};
use crate::Mode;

/// Largest stopping partition written cube by cube.
const PARTITION_CSV_LIMIT: f64 = 1e5;

#[derive(Debug)]
pub struct RunOutcome {
    pub report: SpectrumReport,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }
}

fn task<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_task(name))
}

/// Run `cfg`, writing into its (possibly overridden) output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_in(cfg, &cfg.resolved_out_dir())
}

pub fn run_in(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let mut art = Artifacts {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let measure = Arc::new(task("measure", cfg.measure.build())?);
    let d = measure.dim();
    let kind = cfg.set_function.unwrap_or(SetFunctionKind::spectral(d));
    let j = task("set_function", SetFunction::new(kind, measure.clone()))?;
    task("set_function_eval", j.check_admissible())?;

    let mut rep = SpectrumReport::new();
    rep.set_str("name", &cfg.name);
    rep.set_str("measure.kind", measure.kind_name());
    rep.set_num("dimension", d as f64);
    rep.set_str("set_function", kind.to_string());
    rep.set_num("seed", cfg.seed as f64);
    let modes: Vec<String> = cfg.modes.iter().map(|m| m.to_string()).collect();
    rep.set_str("modes", modes.join(","));
    let tau_window = cfg.tau_window()?;
    rep.set_str("window.tau", tau_window.to_string());
    let q_grid = cfg.q_grid()?;
    let mut summary: Vec<SummaryRow> = Vec::new();
    let mut push_summary = |rep: &SpectrumReport, key: &str, window: String, check: Option<&str>| {
        if let Some(v) = rep.num(key) {
            let flag = check.is_none_or(|c| {
                rep.entries().get(&format!("check.{c}.pass")).and_then(|v| v.as_bool()) == Some(true)
            });
            summary.push(SummaryRow {
                quantity: key.into(),
                value: v,
                window,
                tolerance_flag: flag,
            });
        }
    };

    let needs_zero = [Task::Tau, Task::Qzero, Task::Dims, Task::Report, Task::Coarse, Task::Partition, Task::Gamma, Task::Eigen]
        .iter()
        .any(|t| cfg.has(*t));
    // Decay exponent of the set function's values, centring the α grid.
    let mut j_decay = None;
    if needs_zero {
        for &mode in &cfg.modes {
            let rows = task("tau", TauRows::build(&j, tau_window.levels(), mode))?;
            if mode == cfg.modes[0] {
                j_decay = Some(rows.decay_exponent());
                rep.set_num("tau.decay_exponent", rows.decay_exponent());
            }
            if cfg.has(Task::Tau) {
                let curve = task("tau", PartitionFunctionCurve::from_rows(&j, rows.rows(), &q_grid))?;
                curve.write_csv(art.create(&format!("tau_{mode}.csv"))?)?;
                let key = format!("tau.{mode}.convexity_defect");
                rep.set_num(&key, curve.max_convexity_violation());
                rep.set_num("const.zero", 0.0);
                rep.add_check(&format!("tau_convex_{mode}"), &key, Relation::Le, "const.zero", cfg.tolerances.convexity);
                rep.set_num(&format!("tau.{mode}.at_0"), rows.envelope(0.0));
                if let Ok(sd) = subdifferential_bound(|q| rows.envelope(q), 1.0) {
                    rep.set_num(&format!("subdiff.{mode}.q1.bound"), sd.bound);
                    rep.set_bool(&format!("subdiff.{mode}.q1.converged"), sd.converged);
                }
            }
            let zero_key = format!("q_zero.{mode}");
            match rows.zero() {
                Ok(q) => rep.set_num(&zero_key, q),
                Err(e) if mode == Mode::Dirichlet => rep.set_str(&format!("{zero_key}.status"), e.to_string()),
                Err(e) => return Err(e.in_task("qzero")),
            }
            push_summary(&rep, &zero_key, tau_window.to_string(), None);
            if cfg.has(Task::Qzero) {
                if let Ok(zeros) = per_level_zeros(rows.rows(), d) {
                    let mut w = csv::Writer::from_writer(art.create(&format!("per_level_zeros_{mode}.csv"))?);
                    w.write_record(["n", "q", "balanced"])?;
                    for z in &zeros {
                        w.write_record([z.n.to_string(), format!("{}", z.q), z.balanced.to_string()])?;
                    }
                    w.flush()?;
                    let qs: Vec<f64> = zeros.iter().map(|z| z.q).collect();
                    rep.set_nums(&format!("per_level_zeros.{mode}"), &qs);
                    rep.set_num(&format!("per_level_zeros.{mode}.min"), qs.iter().copied().fold(f64::INFINITY, f64::min));
                    rep.set_num(&format!("per_level_zeros.{mode}.max"), qs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                    rep.set_bool(&format!("per_level_zeros.{mode}.all_balanced"), zeros.iter().all(|z| z.balanced));
                }
            }
        }
        if rep.num("q_zero.dirichlet").is_some() && rep.num("q_zero.neumann").is_some() {
            rep.add_check("chain_qd_le_qn", "q_zero.dirichlet", Relation::Le, "q_zero.neumann", cfg.tolerances.sandwich);
        }
    }

    if cfg.has(Task::Dims) {
        let w = cfg.dims_window()?;
        let dinf = task("dims", dim_infty(&measure, w))?;
        let mink = task("dims", minkowski(&measure, w))?;
        rep.set_num("dims.infty", dinf.value);
        rep.set_num("dims.infty.level", dinf.level as f64);
        rep.set_num("dims.minkowski", mink.value);
        rep.set_str("window.dims", w.to_string());
        push_summary(&rep, "dims.infty", w.to_string(), None);
        push_summary(&rep, "dims.minkowski", w.to_string(), None);
        if let Some(qn) = rep.num("q_zero.neumann") {
            match dimension_bounds(d, dinf.value, mink.value, qn, cfg.tolerances.sandwich) {
                Ok(b) => {
                    rep.set_num("bounds.lower", b.lower);
                    rep.set_num("bounds.upper", b.upper);
                    rep.add_check("sandwich_lower", "bounds.lower", Relation::Le, "q_zero.neumann", cfg.tolerances.sandwich);
                    rep.add_check("sandwich_upper", "q_zero.neumann", Relation::Le, "bounds.upper", cfg.tolerances.sandwich);
                }
                Err(e) => rep.set_str("bounds.status", e.to_string()),
            }
        }
        let kq = cfg.kappa_q_grid()?;
        match kappa_estimate(&j, &kq, cfg.levels.kappa) {
            Ok(k) => {
                rep.set_num("kappa", k.value());
                if let KappaEstimate::Interval { lo, hi } = k {
                    rep.set_num("kappa.lo", lo);
                    rep.set_num("kappa.hi", hi);
                }
                rep.set_str("window.kappa", format!("1..{}", cfg.levels.kappa));
                if rep.num("q_zero.neumann").is_some() {
                    rep.add_check("kappa_eq_qn", "kappa", Relation::Eq, "q_zero.neumann", cfg.tolerances.kappa);
                }
                push_summary(&rep, "kappa", format!("1..{}", cfg.levels.kappa), Some("kappa_eq_qn"));
            }
            Err(e) => rep.set_str("kappa.status", e.to_string()),
        }
    }

    if cfg.has(Task::Partition) {
        let xs = cfg.partition_log2_xs()?;
        let fit = task("partition", entropy_fit(&j, &xs))?;
        let mut w = csv::Writer::from_writer(art.create("partition_counts.csv")?);
        w.write_record(["log2_x", "log2_M"])?;
        for (x, m) in &fit.points {
            w.write_record([format!("{x}"), format!("{m}")])?;
        }
        w.flush()?;
        rep.set_num("entropy.h_upper", fit.slope);
        rep.set_num("entropy.h_upper.stderr", fit.slope_stderr);
        rep.set_num("entropy.ratio_max", fit.h_upper);
        rep.set_num("entropy.h_lower", fit.h_lower_canonical);
        if rep.num("q_zero.neumann").is_some() {
            rep.add_check("chain_h_upper_eq_qn", "entropy.h_upper", Relation::Eq, "q_zero.neumann", cfg.tolerances.entropy);
        }
        push_summary(&rep, "entropy.h_upper", format!("log2 x in {xs:?}"), Some("chain_h_upper_eq_qn"));
        rep.add_check("chain_h_lower_le_h_upper", "entropy.h_lower", Relation::Le, "entropy.ratio_max", 1e-12);
        let lx = xs[0];
        if task("partition", partition_count(&j, lx))? <= PARTITION_CSV_LIMIT {
            let p = task("partition", stopping_partition(&j, -lx, MAX_LEVEL, PARTITION_CSV_LIMIT as usize * 4))?;
            p.write_csv(art.create("stopping_partition.csv")?)?;
            rep.set_num("partition.log2_x", lx);
            rep.set_num("partition.cubes", p.len() as f64);
        }
    }

    if cfg.has(Task::Gamma) {
        let ns = cfg.gamma_log2_ns()?;
        let fit = task("gamma", gamma_fit(&j, &ns))?;
        let mut w = csv::Writer::from_writer(art.create("gamma.csv")?);
        w.write_record(["n", "gamma", "card"])?;
        for g in &fit.values {
            w.write_record([format!("{}", g.n), format!("{}", g.log2_gamma.exp2()), format!("{}", g.card)])?;
        }
        w.flush()?;
        rep.set_num("gamma.alpha", fit.slope);
        if let Some(qn) = rep.num("q_zero.neumann") {
            rep.set_num("gamma.expected", -1.0 / qn);
            rep.add_check("gamma_alpha", "gamma.alpha", Relation::Rel, "gamma.expected", cfg.tolerances.gamma);
        }
        push_summary(&rep, "gamma.alpha", format!("log2 n in {ns:?}"), Some("gamma_alpha"));
    }

    if cfg.has(Task::Coarse) {
        let w = cfg.coarse_window()?;
        let grid = match cfg.alpha_grid()? {
            Some(g) => g,
            None => default_alpha_grid(j_decay.expect("coarse computes the zeros first")),
        };
        let levels: Vec<u64> = w.levels().collect();
        for &mode in &cfg.modes {
            let profile = task("coarse", CoarseProfile::build(&j, &levels, &grid, mode))?;
            profile.write_csv(art.create(&format!("coarse_counts_{mode}.csv"))?)?;
            let dim = task("coarse", profile.dimension())?;
            dim.write_csv(art.create(&format!("coarse_dim_{mode}.csv"))?)?;
            let (fu, fl) = (format!("coarse.{mode}.f_upper"), format!("coarse.{mode}.f_lower"));
            rep.set_num(&fu, dim.f_upper);
            rep.set_num(&fl, dim.f_lower);
            rep.set_num(&format!("coarse.{mode}.alpha_star"), dim.alpha_star);
            rep.set_bool(&format!("coarse.{mode}.alpha_at_edge"), dim.alpha_at_edge);
            rep.set_str("window.coarse", format!("{}..{}", dim.window_lo, dim.window_hi));
            let zero = format!("q_zero.{mode}");
            if rep.num(&zero).is_some() {
                rep.add_check(&format!("chain_f_upper_eq_q_{mode}"), &fu, Relation::Eq, &zero, cfg.tolerances.coarse);
            }
            if mode == Mode::Neumann && rep.num("entropy.h_lower").is_some() {
                rep.add_check("chain_f_lower_le_h_lower", &fl, Relation::Le, "entropy.h_lower", cfg.tolerances.coarse);
            }
            push_summary(&rep, &fu, w.to_string(), Some(&format!("chain_f_upper_eq_q_{mode}")));
            push_summary(&rep, &fl, w.to_string(), None);
        }
    }

    if cfg.has(Task::Bs) {
        let a = cfg.bs.a.unwrap_or(1.0);
        let trace = task("bs", bs_refine(&measure, a, cfg.bs.steps))?;
        trace.write_csv(art.create("bs_trace.csv")?)?;
        let g: Vec<f64> = trace.steps.iter().map(|s| s.log2_g).collect();
        rep.set_num("bs.a", a);
        rep.set_nums("bs.log2_g", &g);
        rep.set_num("bs.step_decrement", a * d as f64);
        rep.add_check("bs_contraction", "bs.log2_g", Relation::Contraction, "bs.step_decrement", 1e-12);
        rep.set_bool("bs.bound_holds", trace.bound_holds());
        let fit = trace.decay_fit();
        rep.set_num("bs.decay_slope", fit.slope);
        rep.set_num("bs.decay_ceiling", -(1.0 + a) + 0.1);
        rep.add_check("bs_decay", "bs.decay_slope", Relation::Le, "bs.decay_ceiling", 0.0);
    }

    if cfg.has(Task::Eigen) {
        if d > 2 {
            rep.set_str("eigen.status", format!("not attempted (d = {d})"));
        } else {
            let level = cfg.eigen_level(d);
            rep.set_num("eigen.level", level as f64);
            if let Some(r) = cfg.eigen.reference {
                rep.set_num("eigen.reference", r);
            }
            for &mode in &cfg.modes {
                let pencil = task("eigen", eigen::assemble(&measure, level, mode))?;
                let result = task("eigen", eigen::run(&pencil))?;
                result.write_counts_csv(art.create(&format!("eigen_counts_{mode}.csv"))?)?;
                if result.eigenvalues.is_some() {
                    result.write_eigenvalues_csv(art.create(&format!("eigen_values_{mode}.csv"))?)?;
                }
                let cmp = eigen::fit_spectral_dimension(
                    &result,
                    rep.num("q_zero.neumann"),
                    rep.num("q_zero.dirichlet"),
                    cfg.tolerances.eigen,
                );
                cmp.write_csv(art.create(&format!("eigen_compare_{mode}.csv"))?)?;
                let key = format!("eigen.{mode}.slope");
                rep.set_num(&key, result.fit.slope);
                rep.set_num(&format!("eigen.{mode}.stderr"), result.fit.slope_stderr);
                rep.set_num(&format!("eigen.{mode}.active"), result.active as f64);
                let zero = if rep.num(&format!("q_zero.{mode}")).is_some() {
                    format!("q_zero.{mode}")
                } else {
                    "q_zero.neumann".into()
                };
                rep.add_check(&format!("eigen_{mode}_vs_q"), &key, Relation::Eq, &zero, cfg.tolerances.eigen);
                if cfg.eigen.reference.is_some() {
                    rep.add_check(&format!("eigen_{mode}_vs_reference"), &key, Relation::Eq, "eigen.reference", cfg.tolerances.eigen);
                }
                push_summary(&rep, &key, format!("L = {level}"), Some(&format!("eigen_{mode}_vs_q")));
            }
        }
    }

    rep.set_bool("all_checks_pass", rep.all_pass());
    if cfg.has(Task::Report) {
        write_summary_csv(&summary, art.create("summary.csv")?)?;
    }
    let path = out_dir.join("report.json");
    std::fs::write(&path, rep.to_json()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    art.files.push(path);
    Ok(RunOutcome {
        report: rep,
        out_dir: out_dir.to_path_buf(),
        files: art.files,
    })
}
