//! Line-oriented `key = value` run configuration with a known-key schema.

use crate::error::{Error, Result};

/// All pipeline parameters. Desk-scale defaults; the paper-scale settings
/// (side 256, batch 64, 70 epochs) remain selectable.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// working (model input) side; power of two >= 16
    pub side: usize,
    pub depth: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub w_kl: f64,
    pub w_vae: f64,
    pub w_ce: f64,
    pub train_slices: usize,
    /// master toggle for the training augmentation suite
    pub augment: bool,
    pub augment_bias: bool,
    pub augment_noise: bool,
    pub augment_gamma: bool,
    pub augment_ghosting: bool,
    pub augment_affine: bool,
    pub augment_rotation: bool,
    pub augment_flips: bool,
    pub se_size: usize,
    pub area_threshold: usize,
    pub n_cases: usize,
    pub n_healthy: usize,
    pub scale: f64,
    /// comma-separated injector kinds, assigned round-robin
    pub kinds: String,
    /// ICM smoothing sweeps in tissue segmentation
    pub icm_iters: usize,
    pub icm_beta: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            side: 64,
            depth: 64,
            epochs: 30,
            batch: 16,
            lr: 1e-4,
            w_kl: 1.0,
            w_vae: 1.0,
            w_ce: 1.0,
            train_slices: 200,
            augment: false,
            augment_bias: true,
            augment_noise: true,
            augment_gamma: true,
            augment_ghosting: true,
            augment_affine: true,
            augment_rotation: true,
            augment_flips: true,
            se_size: 3,
            area_threshold: 10,
            n_cases: 20,
            n_healthy: 5,
            scale: 0.6,
            kinds: "superimpose,sphere_random,sphere_deform,sphere_copy".to_string(),
            icm_iters: 2,
            icm_beta: 1.0,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "cannot parse '{value}' as a boolean for key '{key}'"
        ))),
    }
}

impl RunConfig {
    /// Apply one `key = value` assignment; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_as(key, value)?,
            "side" => self.side = parse_as(key, value)?,
            "depth" => self.depth = parse_as(key, value)?,
            "epochs" => self.epochs = parse_as(key, value)?,
            "batch" => self.batch = parse_as(key, value)?,
            "lr" => self.lr = parse_as(key, value)?,
            "w_kl" => self.w_kl = parse_as(key, value)?,
            "w_vae" => self.w_vae = parse_as(key, value)?,
            "w_ce" => self.w_ce = parse_as(key, value)?,
            "train_slices" => self.train_slices = parse_as(key, value)?,
            "augment" => self.augment = parse_bool(key, value)?,
            "augment_bias" => self.augment_bias = parse_bool(key, value)?,
            "augment_noise" => self.augment_noise = parse_bool(key, value)?,
            "augment_gamma" => self.augment_gamma = parse_bool(key, value)?,
            "augment_ghosting" => self.augment_ghosting = parse_bool(key, value)?,
            "augment_affine" => self.augment_affine = parse_bool(key, value)?,
            "augment_rotation" => self.augment_rotation = parse_bool(key, value)?,
            "augment_flips" => self.augment_flips = parse_bool(key, value)?,
            "se_size" => self.se_size = parse_as(key, value)?,
            "area_threshold" => self.area_threshold = parse_as(key, value)?,
            "n_cases" => self.n_cases = parse_as(key, value)?,
            "n_healthy" => self.n_healthy = parse_as(key, value)?,
            "scale" => self.scale = parse_as(key, value)?,
            "kinds" => self.kinds = value.to_string(),
            "icm_iters" => self.icm_iters = parse_as(key, value)?,
            "icm_beta" => self.icm_beta = parse_as(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parse a whole config file body: one `key = value` per line, `#` starts
    /// a comment, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Apply assignments from a config body on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.side.is_power_of_two() || self.side < 16 {
            return Err(Error::Config(format!(
                "side {} must be a power of two >= 16",
                self.side
            )));
        }
        if self.batch < 2 {
            return Err(Error::Config("batch must be at least 2".into()));
        }
        if self.se_size % 2 == 0 || self.se_size == 0 {
            return Err(Error::Config(format!(
                "se_size {} must be odd",
                self.se_size
            )));
        }
        if self.kinds.split(',').any(|k| {
            !matches!(
                k.trim(),
                "superimpose" | "sphere_random" | "sphere_deform" | "sphere_copy"
            )
        }) {
            return Err(Error::Config(format!("invalid kinds list '{}'", self.kinds)));
        }
        Ok(())
    }

    pub fn kinds_vec(&self) -> Vec<String> {
        self.kinds
            .split(',')
            .map(|k| k.trim().to_string())
            .filter(|k| !k.is_empty())
            .collect()
    }

    /// Render as a config body that `parse` reads back identically.
    pub fn snapshot(&self) -> String {
        format!(
            "# run configuration snapshot\n\
             seed = {}\nside = {}\ndepth = {}\nepochs = {}\nbatch = {}\nlr = {}\n\
             w_kl = {}\nw_vae = {}\nw_ce = {}\ntrain_slices = {}\n\
             augment = {}\naugment_bias = {}\naugment_noise = {}\naugment_gamma = {}\n\
             augment_ghosting = {}\naugment_affine = {}\naugment_rotation = {}\n\
             augment_flips = {}\nse_size = {}\narea_threshold = {}\nn_cases = {}\n\
             n_healthy = {}\nscale = {}\nkinds = {}\nicm_iters = {}\nicm_beta = {}\n",
            self.seed,
            self.side,
            self.depth,
            self.epochs,
            self.batch,
            self.lr,
            self.w_kl,
            self.w_vae,
            self.w_ce,
            self.train_slices,
            self.augment,
            self.augment_bias,
            self.augment_noise,
            self.augment_gamma,
            self.augment_ghosting,
            self.augment_affine,
            self.augment_rotation,
            self.augment_flips,
            self.se_size,
            self.area_threshold,
            self.n_cases,
            self.n_healthy,
            self.scale,
            self.kinds,
            self.icm_iters,
            self.icm_beta,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass_validation() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn parses_comments_and_overrides() {
        let cfg = RunConfig::parse(
            "# a comment\n\
             seed = 11\n\
             lr = 0.001  # inline comment\n\
             \n\
             kinds = superimpose, sphere_random\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.kinds_vec(), vec!["superimpose", "sphere_random"]);
        assert_eq!(cfg.epochs, 30);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            RunConfig::parse("sped = 3\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::parse("seed = banana\n").is_err());
        assert!(RunConfig::parse("side = 48\n").is_err());
        assert!(RunConfig::parse("se_size = 4\n").is_err());
        assert!(RunConfig::parse("kinds = blob\n").is_err());
        assert!(RunConfig::parse("no equals sign\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        cfg.augment = true;
        cfg.w_ce = 0.0;
        let back = RunConfig::parse(&cfg.snapshot()).unwrap();
        assert_eq!(cfg, back);
    }
}
