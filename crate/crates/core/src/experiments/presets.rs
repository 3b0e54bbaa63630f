//! Named configurations for each reference figure.
//!
//! Parameters a figure leaves open come from the other panels of the same
//! figure first, then from the shared defaults of [`ExperimentConfig`].

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::cg::{self, cg_betas};
use crate::experiments::config::{linspace, ConfigOverrides, ExperimentConfig};
use crate::experiments::output::{self, Metadata, Table, Timing};
use crate::experiments::sweep::{self, Family};
use crate::observation::HVariant;

pub const FIGURES: [&str; 8] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

/// Tolerances for the CG panels.
pub const CG_TOLERANCES: [f64; 5] = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

pub const EIGENCURVE_SEEDS: usize = 10;

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum Study {
    Sweep {
        config: ExperimentConfig,
    },
    Family {
        config: ExperimentConfig,
        family: Family,
        values: Vec<f64>,
    },
    EigenCurve {
        config: ExperimentConfig,
        lengths: Vec<f64>,
        seeds: Vec<u64>,
    },
    Cg {
        config: ExperimentConfig,
        tolerances: Vec<f64>,
    },
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Sweep { .. } => "sweep",
            Study::Family { .. } => "family",
            Study::EigenCurve { .. } => "eigencurve",
            Study::Cg { .. } => "cg",
        }
    }

    pub fn config_mut(&mut self) -> &mut ExperimentConfig {
        match self {
            Study::Sweep { config }
            | Study::Family { config, .. }
            | Study::EigenCurve { config, .. }
            | Study::Cg { config, .. } => config,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Panel {
    pub name: String,
    pub study: Study,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure {
    pub id: String,
    pub panels: Vec<Panel>,
}

fn base(id: &str) -> ExperimentConfig {
    ExperimentConfig {
        figure_id: Some(id.to_string()),
        ..Default::default()
    }
}

fn fig1(preconditioned: bool) -> ExperimentConfig {
    ExperimentConfig {
        lens: 0.05,
        l0: 0.2,
        m: 50,
        p: 100,
        h_variant: HVariant::RandomPlacement,
        preconditioned,
        ..base("fig1")
    }
}

fn panel(name: &str, study: Study, notes: &[&str]) -> Panel {
    Panel {
        name: name.to_string(),
        study,
        notes: notes.iter().map(|s| s.to_string()).collect(),
    }
}

fn family(name: &str, config: ExperimentConfig, family: Family, values: &[f64], notes: &[&str]) -> Panel {
    panel(
        name,
        Study::Family {
            config,
            family,
            values: values.to_vec(),
        },
        notes,
    )
}

const SIGMA_NOTE: &str = "panel labels are ambiguous between sigma_B0 and sigma_Pf; \
     here (c) varies sigma_Pf^2 and (d) varies sigma_B0^2";

fn length_and_variance_panels(id: &str, preconditioned: bool) -> Vec<Panel> {
    let c = ExperimentConfig {
        m: 100,
        p: 100,
        l0: 0.1,
        lens: 0.1,
        preconditioned,
        ..base(id)
    };
    vec![
        family(&format!("{id}a"), c.clone(), Family::L0, &[0.1, 0.2, 0.3], &["lens fixed at 0.1"]),
        family(&format!("{id}b"), c.clone(), Family::Lens, &[0.05, 0.1, 0.2], &["l0 fixed at 0.1"]),
        family(&format!("{id}c"), c.clone(), Family::Sigma2Pf, &[0.5, 1.0, 2.0], &[SIGMA_NOTE]),
        family(&format!("{id}d"), c, Family::Sigma2B0, &[0.5, 1.0, 2.0], &[SIGMA_NOTE]),
    ]
}

fn observation_panels(id: &str, preconditioned: bool) -> Vec<Panel> {
    let c = ExperimentConfig {
        m: 100,
        p: 100,
        l0: 0.1,
        lens: 0.1,
        preconditioned,
        ..base(id)
    };
    vec![
        family(&format!("{id}a"), c.clone(), Family::Sigma2R, &[0.5, 1.0, 2.0], &[]),
        family(&format!("{id}b"), c.clone(), Family::HVariant, &[1.0, 2.0, 3.0, 4.0], &[]),
        family(&format!("{id}c"), c, Family::P, &[50.0, 100.0, 200.0], &[]),
    ]
}

fn cg_panel(id: &str, preconditioned: bool) -> Panel {
    let c = ExperimentConfig {
        l0: 0.1,
        lens: 0.05,
        p: 100,
        m: 100,
        preconditioned,
        ..base(id)
    };
    panel(
        id,
        Study::Cg {
            config: c,
            tolerances: CG_TOLERANCES.to_vec(),
        },
        &["ensemble size not fixed by the reference setup; m = 100 as in the neighbouring studies"],
    )
}

pub fn figure(id: &str) -> Result<Figure> {
    let panels = match id {
        "fig1" => vec![
            panel("fig1_unprec", Study::Sweep { config: fig1(false) }, &[]),
            panel("fig1_prec", Study::Sweep { config: fig1(true) }, &[]),
        ],
        "fig2" => vec![panel(
            "fig2",
            Study::EigenCurve {
                config: ExperimentConfig {
                    m: 100,
                    ..base("fig2")
                },
                lengths: linspace(0.05, 1.0, 20),
                seeds: (1..=EIGENCURVE_SEEDS as u64).collect(),
            },
            &["both length scales set to each grid value; P_f resampled per seed"],
        )],
        "fig3" => length_and_variance_panels("fig3", false),
        "fig4" => observation_panels("fig4", false),
        "fig5" => length_and_variance_panels("fig5", true),
        "fig6" => observation_panels("fig6", true),
        "fig7" => vec![cg_panel("fig7", false)],
        "fig8" => vec![cg_panel("fig8", true)],
        _ => {
            return Err(Error::Config(format!(
                "unknown figure {id:?}; expected one of {}",
                FIGURES.join(", ")
            )))
        }
    };
    Ok(Figure {
        id: id.to_string(),
        panels,
    })
}

/// Runs one panel and writes `<name>.csv` and `<name>.json` into `out_dir`.
pub fn run_panel(panel: &Panel, figure_id: Option<&str>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let (table, details): (Table, serde_json::Value) = match &panel.study {
        Study::Sweep { config } => {
            let s = sweep::run_beta_sweep(config)?;
            let details = serde_json::json!({
                "config": config,
                "lambda_max_b0": s.lambda_max_b0,
                "lambda_min_b0": s.lambda_min_b0,
                "lambda_max_pf": s.lambda_max_pf,
                "lambda_max_k": s.lambda_max_k,
                "switch_point": s.switch_point,
                "violations": s.records.iter().flat_map(|r| &r.violations).collect::<Vec<_>>(),
            });
            (output::sweep_table(&s), details)
        }
        Study::Family {
            config,
            family,
            values,
        } => {
            let members = sweep::run_parameter_family(config, *family, values)?;
            let per_member: Vec<_> = members
                .iter()
                .map(|m| {
                    serde_json::json!({
                        "value": m.value,
                        "lambda_max_b0": m.sweep.lambda_max_b0,
                        "lambda_min_b0": m.sweep.lambda_min_b0,
                        "lambda_max_pf": m.sweep.lambda_max_pf,
                        "lambda_max_k": m.sweep.lambda_max_k,
                        "switch_point": m.sweep.switch_point,
                        "violations": m.sweep.violation_count(),
                    })
                })
                .collect();
            let details = serde_json::json!({
                "config": config,
                "family": family,
                "values": values,
                "members": per_member,
            });
            (output::family_table(family.name(), &members), details)
        }
        Study::EigenCurve {
            config,
            lengths,
            seeds,
        } => {
            let rows = sweep::run_eigen_vs_lengthscale(config, lengths, seeds)?;
            let details = serde_json::json!({ "config": config, "lengths": lengths, "seeds": seeds });
            (output::eigencurve_table(&rows, seeds), details)
        }
        Study::Cg { config, tolerances } => {
            let betas = cg_betas(config);
            let rows = cg::cg_sweep(config, &betas, tolerances)?;
            let details = serde_json::json!({
                "config": config,
                "betas": betas,
                "tolerances": tolerances,
                "max_iter_factor": crate::solver::MAX_ITER_FACTOR,
            });
            (output::cg_table(&rows), details)
        }
    };

    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", panel.name));
    let json_path = out_dir.join(format!("{}.json", panel.name));
    table.write(&csv_path)?;
    output::write_metadata(
        &json_path,
        &Metadata {
            figure: figure_id,
            panel: &panel.name,
            study: panel.study.name(),
            library_version: env!("CARGO_PKG_VERSION"),
            columns: &table.columns,
            notes: &panel.notes,
            details,
            timing: Timing {
                started_unix_seconds: started,
                wall_seconds: clock.elapsed().as_secs_f64(),
            },
        },
    )?;
    Ok(vec![csv_path, json_path])
}

/// Runs every panel of a preset, applying `overrides` to each panel's base
/// config (the family parameter itself still varies).
pub fn run_figure(id: &str, out_dir: &Path, overrides: &ConfigOverrides) -> Result<Vec<PathBuf>> {
    let mut fig = figure(id)?;
    let mut written = Vec::new();
    for p in &mut fig.panels {
        let config = p.study.config_mut();
        overrides.apply(config);
        config.validate()?;
        written.extend(run_panel(p, Some(&fig.id), out_dir)?);
    }
    Ok(written)
}
