//! Experiment dispatch: resolves parameters, runs the owning module,
//! writes artifacts, and assembles the run manifest.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::absorption::{self, BoundReport, McEstimate};
use crate::diffusion::{self, composite_d, delta_membership, entropy_u, DeltaMembership, SdeConfig};
use crate::error::{Error, Result};
use crate::model::{validate_model, CheckRecord, ModelSpec, StateVec};
use crate::poly::Polynomial;
use crate::semigroup::{
    apply_generator, discrete_generator_apply, semigroup_matexp, sup_error_polys, trotter_product,
    GeneratorPart,
};
use crate::tolerances::MC_SCHEME_BAND;
use crate::wfchain::{self, ChainConfig, Clock, RandomStream, TargetSet};

use super::config::{ExperimentConfig, ExperimentKind, Params, ProcessKind};
use super::report::{self, RunManifest};

const DEFAULT_REPS: u64 = 1000;

/// Runs one experiment end to end and writes its manifest. Scientific
/// check failures are reported in the manifest, not as errors; errors mean
/// the run could not be carried out as configured.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunManifest> {
    if let Some(stated) = cfg.experiment {
        if stated != kind {
            return Err(Error::Usage(format!(
                "config file declares experiment '{stated}' but '{kind}' was requested"
            )));
        }
    }
    let start = Instant::now();
    let spec = cfg.model.build()?;
    let seed = cfg.master_seed.unwrap_or(0);
    let reps = cfg.reps.unwrap_or(DEFAULT_REPS);
    let run = ExperimentRun {
        kind,
        spec,
        seed,
        reps,
        params: &cfg.params,
        out_dir,
        checks: Vec::new(),
        artifacts: Vec::new(),
    };

    let (checks, artifacts) = run.dispatch()?;
    let manifest = RunManifest {
        experiment: kind,
        master_seed: seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
        checks,
        artifacts,
    };
    report::write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

struct ExperimentRun<'a> {
    kind: ExperimentKind,
    spec: ModelSpec,
    seed: u64,
    reps: u64,
    params: &'a Params,
    out_dir: &'a Path,
    checks: Vec<CheckRecord>,
    artifacts: Vec<String>,
}

fn required<T>(value: Option<T>, key: &str, kind: ExperimentKind) -> Result<T> {
    value.ok_or_else(|| {
        Error::Config(format!("experiment '{kind}' needs the parameter '{key}'"))
    })
}

impl ExperimentRun<'_> {
    fn dispatch(mut self) -> Result<(Vec<CheckRecord>, Vec<String>)> {
        match self.kind {
            ExperimentKind::Validate => self.validate()?,
            ExperimentKind::SimulateChain => self.simulate_chain()?,
            ExperimentKind::SimulateSde => self.simulate_sde()?,
            ExperimentKind::GeneratorCheck => self.generator_check()?,
            ExperimentKind::SemigroupCheck => self.semigroup_check()?,
            ExperimentKind::TrotterCheck => self.trotter_check()?,
            ExperimentKind::Absorption => self.absorption()?,
            ExperimentKind::BoundCheck => self.bound_check()?,
            ExperimentKind::HittingTime => self.hitting_time()?,
            ExperimentKind::StoppingCheck => self.stopping_check()?,
        }
        Ok((self.checks, self.artifacts))
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckRecord {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn json_artifact<T: Serialize>(&mut self, prefix: &str, ext_value: &T) -> Result<()> {
        let name = report::artifact_file_name(prefix, self.kind, self.seed, "json");
        self.artifacts
            .push(report::write_json(self.out_dir, &name, ext_value)?);
        Ok(())
    }

    fn text_artifact(&mut self, prefix: &str, ext: &str, contents: &str) -> Result<()> {
        let name = report::artifact_file_name(prefix, self.kind, self.seed, ext);
        self.artifacts
            .push(report::write_text(self.out_dir, &name, contents)?);
        Ok(())
    }

    fn start_state(&self) -> Result<StateVec> {
        let coords = required(self.params.x0.clone(), "x0", self.kind)?;
        if coords.len() != self.spec.m() {
            return Err(Error::Config(format!(
                "x0 has {} coordinates but the model has {} patches",
                coords.len(),
                self.spec.m()
            )));
        }
        StateVec::new(coords)
    }

    fn sde_config(&self, default_t_max: f64) -> Result<SdeConfig> {
        let dt = self.params.dt.unwrap_or(diffusion::DEFAULT_DT);
        let t_max = self.params.t_max.unwrap_or(default_t_max);
        let cfg = SdeConfig::new(dt, t_max)?;
        match self.params.corner_tol {
            Some(tol) => cfg.with_corner_tol(tol),
            None => Ok(cfg),
        }
    }

    fn observable(&self) -> Result<Polynomial> {
        self.params.observable(self.spec.m())
    }

    // ── Individual experiments ────────────────────────────────────────────

    fn validate(&mut self) -> Result<()> {
        let resolution = self.params.grid_resolution.unwrap_or(50);
        let validation = validate_model(&self.spec, resolution);
        self.json_artifact("report", &validation)?;
        self.checks.extend(validation.checks);
        Ok(())
    }

    fn simulate_chain(&mut self) -> Result<()> {
        let x0 = self.start_state()?;
        let n = required(self.params.n, "n", self.kind)?;
        let chain_cfg = ChainConfig {
            n,
            clock: self.params.clock.unwrap_or(Clock::Poissonized),
        };
        let t_max = self.params.t_max.unwrap_or(10.0);
        let targets = [TargetSet::Corner0, TargetSet::Corner1];
        let mut stream = RandomStream::new(self.seed, 0);
        let traj = wfchain::simulate_chain(&self.spec, &chain_cfg, &x0, t_max, &targets, &mut stream)?;
        let mut csv = Vec::new();
        traj.write_csv(&mut csv)?;
        let csv = String::from_utf8(csv).expect("trajectory text is ascii");
        self.text_artifact("trajectory", "csv", &csv)?;
        self.check(
            "containment",
            true,
            format!("{} states on the lattice inside the cube", traj.states.len()),
        );
        self.check(
            "recorded",
            true,
            format!("final time {}", traj.times.last().copied().unwrap_or(0.0)),
        );
        Ok(())
    }

    fn simulate_sde(&mut self) -> Result<()> {
        let x0 = self.start_state()?;
        let cfg = self.sde_config(10.0)?;
        let targets = [TargetSet::Corner0, TargetSet::Corner1];
        let mut stream = RandomStream::new(self.seed, 0);
        let traj = diffusion::simulate_sde(&self.spec, &cfg, &x0, &targets, &mut stream)?;
        let mut csv = Vec::new();
        traj.write_csv(&mut csv)?;
        let mut csv = String::from_utf8(csv).expect("trajectory text is ascii");
        let d = self.spec.distortions();
        let initial = d.dbar(traj.states.first().expect("nonempty path").as_slice());
        let final_ = d.dbar(traj.states.last().expect("nonempty path").as_slice());
        csv.push_str(&format!("Dbar_initial,Dbar_final\n{initial},{final_}\n"));
        self.text_artifact("trajectory", "csv", &csv)?;
        self.check(
            "containment",
            true,
            format!("{} truncated-scheme states inside the cube", traj.states.len()),
        );
        self.check(
            "recorded",
            true,
            format!("final time {}, Dbar {initial} -> {final_}", traj.times.last().unwrap()),
        );
        Ok(())
    }

    fn generator_check(&mut self) -> Result<()> {
        let f = self.observable()?;
        let n_values = self
            .params
            .n_values
            .clone()
            .unwrap_or_else(|| vec![40, 80, 160]);
        let resolution = self.params.grid_resolution.unwrap_or(100);
        let lf = apply_generator(&f, &self.spec, GeneratorPart::L)?;
        let mut rows = Vec::new();
        for &n in &n_values {
            let gn = discrete_generator_apply(&f, &self.spec, n)?;
            rows.push((n, sup_error_polys(&gn, &lf, resolution)?));
        }
        self.text_artifact("table", "csv", &report::error_table(("N", "sup_error"), &rows))?;
        let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
        self.check(
            "error-decreasing",
            decreasing,
            format!("sup errors {:?}", rows),
        );
        Ok(())
    }

    fn semigroup_check(&mut self) -> Result<()> {
        let f = self.observable()?;
        let x0 = self.start_state()?;
        let t = self.params.t.unwrap_or(0.5);
        let process = self.params.process.unwrap_or(ProcessKind::Sde);
        let reference = semigroup_matexp(&f, &self.spec, t, GeneratorPart::L)?.eval(x0.as_slice());

        let estimate = match process {
            ProcessKind::Sde => {
                let cfg = self.sde_config(t)?;
                let spec = &self.spec;
                let values = absorption::run_replicates(self.reps, self.seed, |_, rng| {
                    let y = diffusion::sde_state_at(spec, &cfg, &x0, t, rng)
                        .expect("configuration validated before the run");
                    f.eval(y.as_slice())
                });
                McEstimate::from_values(&values, 0, self.seed)?
            }
            ProcessKind::Chain => {
                let n = required(self.params.n, "n", self.kind)?;
                let chain_cfg = ChainConfig {
                    n,
                    clock: self.params.clock.unwrap_or(Clock::Poissonized),
                };
                self.spec.require_admissible_n(n)?;
                let spec = &self.spec;
                let values = absorption::run_replicates(self.reps, self.seed, |_, rng| {
                    let states = wfchain::chain_states_at(spec, &chain_cfg, &x0, &[t], rng)
                        .expect("configuration validated before the run");
                    f.eval(states[0].as_slice())
                });
                McEstimate::from_values(&values, 0, self.seed)?
            }
        };

        let gap = (estimate.mean - reference).abs();
        let tolerance = 3.0 * estimate.stderr + MC_SCHEME_BAND;
        #[derive(Serialize)]
        struct Comparison {
            process: ProcessKind,
            t: f64,
            reference: f64,
            estimate: McEstimate,
            gap: f64,
            tolerance: f64,
        }
        self.json_artifact(
            "report",
            &Comparison {
                process,
                t,
                reference,
                estimate,
                gap,
                tolerance,
            },
        )?;
        self.check(
            "mc-agreement",
            gap <= tolerance,
            format!("|{} - {reference}| = {gap} vs {tolerance}", estimate.mean),
        );
        Ok(())
    }

    fn trotter_check(&mut self) -> Result<()> {
        let f = self.observable()?;
        let t = self.params.t.unwrap_or(0.5);
        let n_steps = self
            .params
            .n_steps_values
            .clone()
            .unwrap_or_else(|| vec![4, 8, 16]);
        let resolution = self.params.grid_resolution.unwrap_or(100);
        let reference = semigroup_matexp(&f, &self.spec, t, GeneratorPart::L)?;
        let mut rows = Vec::new();
        for &n in &n_steps {
            let approx = trotter_product(&f, &self.spec, t, n)?;
            rows.push((n as u64, sup_error_polys(&approx, &reference, resolution)?));
        }
        self.text_artifact(
            "table",
            "csv",
            &report::error_table(("n_steps", "sup_error"), &rows),
        )?;
        let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
        self.check(
            "error-decreasing",
            decreasing,
            format!("sup errors {:?}", rows),
        );
        Ok(())
    }

    fn absorption(&mut self) -> Result<()> {
        let x0 = self.start_state()?;
        let cfg = self.sde_config(200.0)?;
        let est = absorption::estimate_absorption(&x0, &self.spec, &cfg, self.reps, self.seed)?;
        self.json_artifact("report", &est)?;
        let total = est.corner0.mean + est.corner1.mean + est.corner0.censored_fraction;
        self.check(
            "complementarity",
            total == 1.0,
            format!(
                "P0 {} + P1 {} + censored {} = {total}",
                est.corner0.mean, est.corner1.mean, est.corner0.censored_fraction
            ),
        );
        self.check(
            "absorbed-fraction",
            true,
            format!("{} absorbed by t_max = {}", 1.0 - est.corner0.censored_fraction, cfg.t_max),
        );
        Ok(())
    }

    fn bound_check(&mut self) -> Result<()> {
        let x0 = self.start_state()?;
        let alpha = required(self.params.alpha, "alpha", self.kind)?;
        let cfg = self.sde_config(200.0)?;
        let report = absorption::check_delta_bound(&x0, &self.spec, alpha, &cfg, self.reps, self.seed)?;
        // The artifact carries the entropy bounds alongside the wedge bound
        // so a single file documents both absorption statements.
        let r = match delta_membership(&self.spec, &x0, alpha)? {
            DeltaMembership::Delta1 => composite_d(&self.spec, &x0).dbar_mirror,
            _ => composite_d(&self.spec, &x0).dbar,
        };
        let u = entropy_u(r)?;
        #[derive(Serialize)]
        struct BoundArtifact {
            report: BoundReport,
            entropy_bound_stated: f64,
            entropy_bound_sharper: f64,
        }
        self.json_artifact(
            "report",
            &BoundArtifact {
                report,
                entropy_bound_stated: u,
                entropy_bound_sharper: 0.5 * self.spec.distortions().product() * u,
            },
        )?;
        self.check(
            "delta-bound",
            report.satisfied,
            format!(
                "estimate {} + 3 x {} vs bound {}",
                report.estimate.mean, report.estimate.stderr, report.bound_value
            ),
        );
        Ok(())
    }

    fn hitting_time(&mut self) -> Result<()> {
        let x0 = self.start_state()?;
        let alpha = required(self.params.alpha, "alpha", self.kind)?;
        let r = composite_d(&self.spec, &x0).dbar;
        let sharper = 0.5 * self.spec.distortions().product() * entropy_u(r.clamp(0.0, 1.0))?;
        // Horizon heuristic: 50x the mean bound keeps censoring around the
        // percent level by Markov's inequality.
        let cfg = self.sde_config((50.0 * sharper).max(1.0))?;
        let report =
            absorption::estimate_mean_hitting_time(&x0, &self.spec, alpha, &cfg, self.reps, self.seed)?;
        self.json_artifact("report", &report)?;
        self.check(
            "entropy-bound-sharper",
            report.satisfied_sharper,
            format!(
                "mean {} - 3 x {} vs (dprod/2) u = {}",
                report.estimate.mean, report.estimate.stderr, report.bound_sharper
            ),
        );
        self.check(
            "entropy-bound-stated",
            report.satisfied_stated,
            format!(
                "mean {} - 3 x {} vs u = {}",
                report.estimate.mean, report.estimate.stderr, report.bound_stated
            ),
        );
        Ok(())
    }

    fn stopping_check(&mut self) -> Result<()> {
        let x0 = self.start_state()?;
        let alpha = required(self.params.alpha, "alpha", self.kind)?;
        let cfg = self.sde_config(200.0)?;
        let report =
            absorption::optional_stopping_check(&x0, &self.spec, alpha, &cfg, self.reps, self.seed)?;
        self.json_artifact("report", &report)?;
        self.check(
            "optional-stopping",
            report.satisfied,
            format!(
                "|{alpha} x {} - {}| within 3 x {alpha} x {} + tolerance",
                report.estimate.mean, report.bound_value, report.estimate.stderr
            ),
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Params;
    use crate::model::{DriftConfig, ModelConfig};

    fn base_config(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment: Some(kind),
            master_seed: Some(11),
            reps: Some(200),
            model: ModelConfig {
                m: 2,
                distortions: vec![1.0, 1.0],
                drift: DriftConfig::LinearExchange {
                    s: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                },
                n_min: None,
            },
            params: Params::default(),
        }
    }

    #[test]
    fn validate_reports_six_passing_checks() {
        let cfg = base_config(ExperimentKind::Validate);
        let dir = tempfile::tempdir().unwrap();
        let manifest = run_experiment(ExperimentKind::Validate, &cfg, dir.path()).unwrap();
        assert_eq!(manifest.checks.len(), 6);
        assert!(manifest.passed());
        assert!(dir.path().join("manifest_validate_11.json").exists());
        assert!(dir.path().join("report_validate_11.json").exists());
    }

    #[test]
    fn generator_check_emits_decreasing_table() {
        let mut cfg = base_config(ExperimentKind::GeneratorCheck);
        cfg.params.n_values = Some(vec![20, 40, 80]);
        cfg.params.grid_resolution = Some(20);
        let dir = tempfile::tempdir().unwrap();
        let manifest = run_experiment(ExperimentKind::GeneratorCheck, &cfg, dir.path()).unwrap();
        assert!(manifest.passed());
        let table =
            std::fs::read_to_string(dir.path().join("table_generator-check_11.json".replace("json", "csv")))
                .unwrap();
        assert!(table.starts_with("N,sup_error\n"));
        assert_eq!(table.lines().count(), 4);
    }

    #[test]
    fn missing_alpha_is_a_config_error() {
        let mut cfg = base_config(ExperimentKind::BoundCheck);
        cfg.params.x0 = Some(vec![0.05, 0.05]);
        let dir = tempfile::tempdir().unwrap();
        let err = run_experiment(ExperimentKind::BoundCheck, &cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn experiment_name_mismatch_is_usage_error() {
        let cfg = base_config(ExperimentKind::Validate);
        let dir = tempfile::tempdir().unwrap();
        let err = run_experiment(ExperimentKind::Absorption, &cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn simulate_sde_writes_trajectory_with_mass_summary() {
        let mut cfg = base_config(ExperimentKind::SimulateSde);
        cfg.params.x0 = Some(vec![0.4, 0.6]);
        cfg.params.t_max = Some(0.05);
        let dir = tempfile::tempdir().unwrap();
        let manifest = run_experiment(ExperimentKind::SimulateSde, &cfg, dir.path()).unwrap();
        assert!(manifest.passed());
        let csv = std::fs::read_to_string(dir.path().join("trajectory_simulate-sde_11.csv")).unwrap();
        assert!(csv.starts_with("t,x_1,x_2\n"));
        assert!(csv.contains("Dbar_initial,Dbar_final"));
    }

    #[test]
    fn stopping_check_round_trips_through_files() {
        let mut cfg = base_config(ExperimentKind::StoppingCheck);
        cfg.params.x0 = Some(vec![0.05, 0.05]);
        cfg.params.alpha = Some(0.5);
        cfg.params.dt = Some(2e-3);
        cfg.params.t_max = Some(30.0);
        let dir = tempfile::tempdir().unwrap();
        let manifest = run_experiment(ExperimentKind::StoppingCheck, &cfg, dir.path()).unwrap();
        assert!(manifest.passed(), "checks {:?}", manifest.checks);
        assert!(dir.path().join("report_stopping-check_11.json").exists());
    }
}
