//! `key = value` config files mirroring the pipeline configuration.
//! Unknown keys are errors; CLI flags override whatever the file sets.

use std::path::Path;

use stemleaf::pipeline::PipelineConfig;
use stemleaf::svm::Gamma;

pub fn parse_gamma(text: &str) -> Result<Gamma, String> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(Gamma::Auto);
    }
    text.parse::<f64>()
        .map(Gamma::Value)
        .map_err(|_| format!("expected a number or `auto`, got `{text}`"))
}

fn parse_switch(value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected on/off, got `{other}`")),
    }
}

/// Reads a config file into a `PipelineConfig`, starting from defaults.
pub fn load_config(path: &Path) -> Result<PipelineConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut config = PipelineConfig::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                i + 1
            ));
        };
        let key = key.trim();
        let value = value.trim();
        let loc = || format!("{}:{}", path.display(), i + 1);
        let num = |what: &str| -> Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("{}: invalid {what} `{value}`", loc()))
        };
        let int = |what: &str| -> Result<usize, String> {
            value
                .parse::<usize>()
                .map_err(|_| format!("{}: invalid {what} `{value}`", loc()))
        };
        match key {
            "r1" => config.leaf_expand_radius = num("r1")?,
            "r2" => config.stem_expand_radius = num("r2")?,
            "p" => config.density.candidates = int("p")?,
            "r" => config.density.radius = num("r")?,
            "grid_spacing" => config.density.grid_spacing = num("grid_spacing")?,
            "n" => config.density.keep = int("n")?,
            "seed" => {
                config.density.seed = value
                    .parse::<u64>()
                    .map_err(|_| format!("{}: invalid seed `{value}`", loc()))?
            }
            "svm_c" => config.svm.c = num("svm_c")?,
            "svm_gamma" => {
                config.svm.gamma = parse_gamma(value).map_err(|e| format!("{}: {e}", loc()))?
            }
            "svm_tol" => config.svm.tol = num("svm_tol")?,
            "svm_max_passes" => config.svm.max_passes = int("svm_max_passes")?,
            "svm_scaling" => {
                config.svm.scaling = parse_switch(value).map_err(|e| format!("{}: {e}", loc()))?
            }
            "compactness_factor" => {
                config.validation.compactness_factor = num("compactness_factor")?
            }
            "spread_factor" => config.validation.spread_factor = num("spread_factor")?,
            "max_retries" => {
                config.validation.max_retries = int("max_retries")? as u32;
            }
            "validate" => {
                config.validation.enabled =
                    parse_switch(value).map_err(|e| format!("{}: {e}", loc()))?
            }
            other => return Err(format!("{}: unknown config key `{other}`", loc())),
        }
    }
    Ok(config)
}
