use rpflab_core::apps::{
    correlation_decay, equilibrium_gap, matrix_decay_bounds, matrix_rpf, psi_mixing, CorrelationOptions, EquilibriumOptions, MixingOptions,
};
use rpflab_core::config::ExperimentConfig;
use rpflab_core::pipeline::{prepare, PrepareOptions, Prepared};
use rpflab_core::potential::Potential;
use rpflab_core::shift::Fibered;
use rpflab_core::transfer::{gibbs_check, gurevich_pressure, GibbsOptions};
use rpflab_core::transport::{verify_decay, verify_main_lemma, DecayOptions, LemmaOptions};
use rpflab_core::{LabError, Result};
use serde_json::{json, Value};

use crate::output::Curves;

pub const EXPERIMENTS: [&str; 6] = ["rpf", "contract", "matrices", "mixing", "correlations", "equilibrium"];

/// Tolerance on the RPF residual and normalization.
const RPF_TOL: f64 = 1e-8;

pub struct Outcome {
    pub experiment: &'static str,
    pub failures: Vec<String>,
    pub report: Value,
    pub curves: Curves,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

/// The shared state of one (config, seed) run; the prepared triple is built on first use.
pub struct Run<'a> {
    pub cfg: &'a ExperimentConfig,
    pub seed: u64,
    pub sys: Fibered,
    pub phi: Potential,
    prepared: Option<Prepared>,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(Self { cfg, seed, sys: cfg.system(seed)?, phi: cfg.potential()?, prepared: None })
    }

    fn horizon(&self) -> usize {
        self.cfg.horizons.decay
    }

    fn prepared(&mut self) -> Result<&Prepared> {
        if self.prepared.is_none() {
            let cfg = self.cfg;
            let opts = PrepareOptions {
                forward: self.horizon(),
                backward: self.horizon(),
                margin: 48usize.max(cfg.depths.max + cfg.depths.psi + 8),
                rpf: cfg.rpf_options(),
                certificate: cfg.certificate_options(),
            };
            self.prepared = Some(prepare(&self.phi, &self.sys, &opts)?);
        }
        Ok(self.prepared.as_ref().expect("just prepared"))
    }

    pub fn experiment(&mut self, name: &str) -> Result<Outcome> {
        match name {
            "rpf" => self.rpf(),
            "contract" => self.contract(),
            "matrices" => self.matrices(),
            "mixing" => self.mixing(),
            "correlations" => self.correlations(),
            "equilibrium" => self.equilibrium(),
            other => Err(LabError::Config { field: "experiment".into(), message: format!("unknown experiment {other:?}") }),
        }
    }

    fn rpf(&mut self) -> Result<Outcome> {
        let cfg = self.cfg;
        let samples = cfg.experiments.gibbs_samples;
        let pressure_letter = match cfg.experiments.pressure_letter {
            Some(a) => a,
            None => self.sys.alphabet(0)?[0],
        };
        let family = cfg.matrix_family();
        let p = self.prepared()?.clone();
        let (sys, phi) = (&self.sys, &self.phi);
        let triple = &p.triple;
        let d = &triple.diagnostics;
        let mut failures = Vec::new();
        if !(d.max_residual <= RPF_TOL) {
            failures.push(format!("RPF residual {:.3e} exceeds {RPF_TOL:e}", d.max_residual));
        }
        if !(d.max_norm_error <= RPF_TOL) {
            failures.push(format!("|∫h dμ − 1| = {:.3e} exceeds {RPF_TOL:e}", d.max_norm_error));
        }

        let mut bi = Vec::new();
        for j in 0..self.horizon() as i64 {
            if sys.in_bi(j)? {
                bi.push(j);
            }
            if bi.len() == 8 {
                break;
            }
        }
        let gibbs = gibbs_check(triple, phi, sys, &bi, &GibbsOptions { samples, max_len: triple.depth(), seed: self.seed })?;
        if !gibbs.violations.is_empty() {
            let v = &gibbs.violations[0];
            failures.push(format!(
                "{} Gibbs violations; first at fiber {} word {:?}: ratio {:.6e} outside [{:.6e}, {:.6e}]",
                gibbs.violations.len(),
                v.fiber,
                v.word,
                v.ratio,
                v.lower,
                v.upper
            ));
        }

        let pressure = gurevich_pressure(phi, sys, pressure_letter, cfg.horizons.pressure, None, None).ok();

        let agreement = match &family {
            Some(fam) => {
                let h = self.horizon();
                let m = matrix_rpf(fam, sys, 0, h as i64, cfg.horizons.burn_in, h)?;
                let mut worst = 0.0f64;
                for j in 0..=h as i64 {
                    worst = worst.max((m.log_lambda(j)? - triple.log_lambda(j)?).abs());
                    let alphabet = sys.alphabet(j)?;
                    for (i, &a) in alphabet.iter().enumerate() {
                        worst = worst.max((m.mu(j)?[i] - triple.mu(j)?.cylinder_mass(&[a])).abs());
                        worst = worst.max((m.h(j)?[i] - triple.h(j)?.value_at(sys, &[a])?).abs());
                    }
                }
                if worst > RPF_TOL {
                    failures.push(format!("matrix and transfer-operator triples differ by {worst:.3e} > {RPF_TOL:e}"));
                }
                Some(worst)
            }
            None => None,
        };

        let mut curves = Curves::default();
        for j in 0..=self.horizon() as i64 {
            let h = triple.h(j)?;
            curves.push("log_lambda", j as usize, triple.log_lambda(j)?, None);
            curves.push("h_min", j as usize, h.min(), None);
            curves.push("h_max", j as usize, h.max(), None);
        }
        if let Some(pr) = &pressure {
            curves.series("pressure", &pr.times, &pr.per_time, None);
        }
        let lambda: Vec<f64> = (0..=self.horizon() as i64).map(|j| triple.log_lambda(j)).collect::<Result<_>>()?;
        let report = json!({
            "window": [triple.first, triple.last],
            "log_lambda": lambda,
            "diagnostics": {
                "max_residual": d.max_residual,
                "max_norm_error": d.max_norm_error,
                "h_gap": d.h_gap,
                "mu_gap": d.mu_gap,
                "log_l1_average": d.log_l1_average,
            },
            "h": (0..=3).map(|j| triple.h(j).map(to_value)).collect::<Result<Vec<_>>>()?,
            "mu": (0..=3).map(|j| triple.mu(j).map(to_value)).collect::<Result<Vec<_>>>()?,
            "gibbs": to_value(&gibbs),
            "pressure": pressure.as_ref().map(to_value),
            "matrix_agreement": agreement,
        });
        Ok(Outcome { experiment: "rpf", failures, report, curves })
    }

    fn contract(&mut self) -> Result<Outcome> {
        let cfg = self.cfg;
        let seed = self.seed;
        let horizon = self.horizon();
        let f = ExperimentConfig::observable(&cfg.experiments.f)?;
        let p = self.prepared()?.clone();
        let sys = &self.sys;
        let cert = &p.cert;
        let lemma_opts = LemmaOptions {
            fibers: (0..cfg.experiments.lemma_fibers as i64).collect(),
            functions: cfg.experiments.lemma_functions,
            measures: cfg.experiments.lemma_measures,
            seed,
            ..LemmaOptions::default()
        };
        let lemma = verify_main_lemma(&p.tilde, sys, cert, &lemma_opts)?;
        let decay = verify_decay(&p.tilde, sys, &p.triple, cert, &DecayOptions { observable: f, horizon, floor: 1e-13 })?;
        let mut failures: Vec<String> = lemma.violations.iter().map(|v| format!("contraction: {v}")).collect();
        failures.extend(decay.violations.iter().map(|v| format!("decay: {v}")));
        let t_formula = 1.0 - cert.c_threshold / (2.0 * cert.b_threshold);
        if (cert.t - t_formula).abs() > 1e-12 {
            failures.push(format!("t = {} differs from 1 − C/(2B) = {t_formula}", cert.t));
        }

        let mut curves = Curves::default();
        curves.series("gap", &decay.all.times, &decay.all.gaps, Some(&decay.all.bounds));
        curves.series("envelope_c", &decay.all.times, &decay.all.envelope_c, None);
        curves.series("envelope_b", &decay.all.times, &decay.all.envelope_b, None);
        curves.series("gap_l", &decay.along_l.times, &decay.along_l.gaps, Some(&decay.along_l.bounds));
        curves.series("gap_k", &decay.along_k.times, &decay.along_k.gaps, Some(&decay.along_k.bounds));
        let report = json!({
            "t": cert.t,
            "t_formula": t_formula,
            "t_observed": cert.t_observed,
            "c": cert.c,
            "b_threshold": cert.b_threshold,
            "c_threshold": cert.c_threshold,
            "certificate": to_value(cert),
            "lemma": to_value(&lemma),
            "decay": to_value(&decay),
        });
        Ok(Outcome { experiment: "contract", failures, report, curves })
    }

    fn matrices(&mut self) -> Result<Outcome> {
        let cfg = self.cfg;
        let family = cfg
            .matrix_family()
            .ok_or_else(|| LabError::Config { field: "potential.kind".into(), message: "the matrices experiment needs a log_matrix potential".into() })?;
        let sys = &self.sys;
        let h = cfg.horizons.matrix;
        let rpf = matrix_rpf(&family, sys, -(h as i64), h as i64, cfg.horizons.burn_in, h)?;
        let decay = matrix_decay_bounds(&family, sys, &rpf, h)?;
        let conditions = family.conditions(sys)?;
        let mut failures = decay.violations.clone();
        if !conditions.signum_matches {
            failures.push("matrix sign pattern differs from the fiber structure".into());
        }
        if (decay.t - (1.0 - decay.c / 2.0)).abs() > 1e-12 {
            failures.push(format!("t = {} differs from 1 − C/2", decay.t));
        }
        let mut curves = Curves::default();
        let ns: Vec<usize> = (1..=rpf.error_curve.len()).collect();
        curves.series("rank_one_error", &ns, &rpf.error_curve, None);
        curves.series("deviation_l", &decay.l, &decay.l_deviation, Some(&decay.envelope));
        curves.series("deviation_k", &decay.k, &decay.k_deviation, Some(&decay.envelope));
        let report = json!({
            "t": decay.t,
            "c": decay.c,
            "conditions": to_value(&conditions),
            "log_lambda": &rpf.log_lambda,
            "fit": rpf.fit.as_ref().map(to_value),
            "decay": to_value(&decay),
        });
        Ok(Outcome { experiment: "matrices", failures, report, curves })
    }

    fn mixing(&mut self) -> Result<Outcome> {
        let opts = MixingOptions { depth: self.cfg.depths.psi, horizon: self.horizon() };
        let p = self.prepared()?.clone();
        let r = psi_mixing(&p.tilde, &self.sys, &p.triple, &p.cert, &opts)?;
        let failures = r.violations.clone();
        let mut curves = Curves::default();
        curves.series("psi", &r.n, &r.psi, Some(&r.bound));
        curves.series("psi_abs", &r.n, &r.psi_abs, Some(&r.bound));
        curves.series("psi_l", &r.l, &r.l_psi, Some(&r.l_envelope));
        Ok(Outcome { experiment: "mixing", failures, report: to_value(&r), curves })
    }

    fn correlations(&mut self) -> Result<Outcome> {
        let e = &self.cfg.experiments;
        let opts = CorrelationOptions {
            f: ExperimentConfig::observable(&e.f)?,
            g: ExperimentConfig::observable(&e.g)?,
            horizon: self.horizon(),
            direct_lags: e.direct_lags,
        };
        let p = self.prepared()?.clone();
        let r = correlation_decay(&p.tilde, &self.sys, &p.triple, &p.cert, &opts)?;
        let mut failures = r.violations.clone();
        if r.direct_error > 1e-10 {
            failures.push(format!("identity and direct integration differ by {:.3e} > 1e-10", r.direct_error));
        }
        let mut curves = Curves::default();
        let ns: Vec<usize> = (0..r.curve.len()).collect();
        curves.series("correlation", &ns, &r.curve, None);
        curves.series("correlation_l", &r.l, &r.l_values, Some(&r.l_bound));
        curves.series("correlation_k", &r.k, &r.k_values, Some(&r.k_bound));
        curves.series("envelope_l", &r.l, &r.l_envelope, None);
        curves.series("envelope_k", &r.k, &r.k_envelope, None);
        Ok(Outcome { experiment: "correlations", failures, report: to_value(&r), curves })
    }

    fn equilibrium(&mut self) -> Result<Outcome> {
        let cfg = self.cfg;
        let opts = EquilibriumOptions {
            depth: cfg.depths.entropy,
            event: None,
            pressure_horizon: cfg.horizons.pressure.min(4 * cfg.depths.entropy.max(12)),
            perturbation: cfg.experiments.perturbation,
        };
        let p = self.prepared()?.clone();
        let r = equilibrium_gap(&self.phi, &p.tilde, &self.sys, &p.triple, &opts)?;
        let mut failures = Vec::new();
        if !(r.gap.is_finite() && r.entropy.is_finite()) {
            failures.push("non-finite entropy or gap".into());
        }
        if r.integral_error > RPF_TOL {
            failures.push(format!("ν mass error {:.3e} exceeds {RPF_TOL:e}", r.integral_error));
        }
        let mut curves = Curves::default();
        let ns: Vec<usize> = (1..=r.entropy_curve.len()).collect();
        curves.series("entropy", &ns, &r.entropy_curve, None);
        let mut report = to_value(&r);
        report["gap_within_1e-2"] = json!(r.gap <= 1e-2);
        Ok(Outcome { experiment: "equilibrium", failures, report, curves })
    }
}
