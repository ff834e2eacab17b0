//! Result files. Reals are written with 17 significant digits so that reruns
//! of the same configuration reproduce files byte for byte.

use std::path::{Path, PathBuf};

use repeater_core::metrics::{FidelityDensity, RateResult};
use repeater_core::verification::Report;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::svg;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const OPTIMAL_JSON: &str = "optimal.json";
pub const VERIFY_CSV: &str = "verify.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const FIGURES_DIR: &str = "figures";

pub fn density_csv_name(memories: usize) -> String {
    format!("fidelity_density_M{memories}.csv")
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub timestamp: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, outputs: &[String]) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            seed: config.sweep.seed,
            config: config.clone(),
            outputs: outputs.to_vec(),
        }
    }
}

/// An output directory that remembers which files were written to it.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Paths relative to the directory, in write order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        std::fs::write(&path, contents).map_err(CliError::io(&path))?;
        self.written.push(name.to_owned());
        Ok(())
    }

    fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.dir.join(name);
        let wrap = |e| CliError::from((path.clone(), e));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(wrap)?;
        for row in rows {
            w.write_record(row).map_err(wrap)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::io(&path)(e.into_error()))?;
        self.write(name, &bytes)
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("result types serialize to JSON");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn sweep_csv(&mut self, rows: &[RateResult]) -> Result<(), CliError> {
        let header = [
            "M",
            "N_buffer",
            "trials",
            "successes",
            "p_succ",
            "mean_fidelity",
            "rains",
            "rate",
            "per_memory_rate",
            "rate_std_err",
        ];
        self.csv(
            SWEEP_CSV,
            &header,
            rows.iter().map(|r| {
                vec![
                    r.memories.to_string(),
                    r.buffer_steps.to_string(),
                    r.trials.to_string(),
                    r.successes.to_string(),
                    real(r.p_succ),
                    r.mean_fidelity.map(real).unwrap_or_default(),
                    real(r.rains),
                    real(r.rate),
                    real(r.per_memory_rate),
                    real(r.rate_std_err),
                ]
            }),
        )
    }

    pub fn optimal_json(&mut self, optima: &[RateResult]) -> Result<(), CliError> {
        self.json(OPTIMAL_JSON, optima)
    }

    pub fn density_csv(
        &mut self,
        memories: usize,
        density: &FidelityDensity,
    ) -> Result<(), CliError> {
        self.csv(
            &density_csv_name(memories),
            &["bin_center", "density"],
            density
                .centers
                .iter()
                .zip(&density.density)
                .map(|(&c, &d)| [real(c), real(d)]),
        )
    }

    pub fn density_svg(
        &mut self,
        memories: usize,
        buffer: u64,
        density: &FidelityDensity,
    ) -> Result<(), CliError> {
        let title = format!(
            "Delivered fidelity, M={memories}, N_buffer={buffer} ({} successes)",
            density.samples
        );
        let chart = svg::histogram(
            &title,
            "fidelity",
            &density.centers,
            &density.density,
            density.bin_width,
        );
        self.write(
            &format!("{FIGURES_DIR}/fidelity_density_M{memories}.svg"),
            chart.as_bytes(),
        )
    }

    pub fn summary_svgs(&mut self, optima: &[RateResult]) -> Result<(), CliError> {
        let charts = [
            (
                "rate_vs_M",
                "Optimal rate",
                "rate (ebit/s)",
                &(|r: &RateResult| r.rate) as &dyn Fn(&RateResult) -> f64,
            ),
            (
                "per_memory_rate_vs_M",
                "Optimal rate per memory",
                "rate per memory (ebit/s)",
                &|r| r.per_memory_rate,
            ),
            (
                "optimal_buffer_vs_M",
                "Optimal buffer time",
                "N_buffer (steps)",
                &|r| r.buffer_steps as f64,
            ),
        ];
        for (name, title, y_label, value) in charts {
            let points: Vec<(f64, f64)> = optima
                .iter()
                .map(|r| (r.memories as f64, value(r)))
                .collect();
            let chart = svg::line_chart(title, "memories per node M", y_label, &points);
            self.write(&format!("{FIGURES_DIR}/{name}.svg"), chart.as_bytes())?;
        }
        Ok(())
    }

    pub fn verify_csv(&mut self, report: &Report) -> Result<(), CliError> {
        self.csv(
            VERIFY_CSV,
            &[
                "formula",
                "inputs",
                "closed_form",
                "oracle",
                "abs_diff",
                "known_discrepancy",
            ],
            report.rows.iter().map(|r| {
                [
                    r.formula.to_owned(),
                    r.inputs.clone(),
                    real(r.closed_form),
                    real(r.oracle),
                    real(r.abs_diff()),
                    r.known_discrepancy.to_string(),
                ]
            }),
        )
    }

    pub fn manifest(&mut self, manifest: &Manifest) -> Result<(), CliError> {
        self.json(MANIFEST_JSON, manifest)
    }
}
