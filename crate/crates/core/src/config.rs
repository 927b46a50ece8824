use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! mode_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::config(format!(
                        concat!("unknown ", stringify!($name), " '{}'"),
                        other
                    ))),
                }
            }
        }
    };
}

mode_enum!(
    /// How the generation region is split into blocks.
    PartitionMode { Fixed => "fixed", Adaptive => "adaptive" }
);

mode_enum!(
    /// How the per-step unmasking threshold is chosen.
    ThresholdMode { Fixed => "fixed", Dynamic => "dynamic" }
);

mode_enum!(
    /// Which parts of the sequence count as cached when accounting compute.
    CacheMode { None => "none", Prefix => "prefix", Dual => "dual" }
);

/// Every knob of one decode session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub gen_len: usize,
    pub partition_mode: PartitionMode,
    pub fixed_block_size: usize,
    /// Minimum entropy shift (nats) that still places a boundary. May be +inf.
    #[serde(with = "f64_or_inf")]
    pub tau_min: f64,
    pub threshold_mode: ThresholdMode,
    pub tau_fixed: f64,
    pub tau_init: f64,
    pub cache_mode: CacheMode,
    /// When false, each step unmasks only the single most confident position.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            gen_len: 512,
            partition_mode: PartitionMode::Adaptive,
            fixed_block_size: 32,
            tau_min: 0.1,
            threshold_mode: ThresholdMode::Dynamic,
            tau_fixed: 0.9,
            tau_init: 0.9,
            cache_mode: CacheMode::None,
            parallel: true,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fixed_block_size == 0 {
            return Err(Error::config("block size must be positive"));
        }
        if self.partition_mode == PartitionMode::Fixed && self.gen_len > 0 && self.fixed_block_size > self.gen_len {
            return Err(Error::config(format!(
                "block size {} exceeds gen_len {}",
                self.fixed_block_size, self.gen_len
            )));
        }
        if self.tau_min.is_nan() || self.tau_min < 0.0 {
            return Err(Error::config(format!("tau_min must be >= 0, got {}", self.tau_min)));
        }
        for (name, tau) in [("tau_fixed", self.tau_fixed), ("tau_init", self.tau_init)] {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {tau}")));
            }
        }
        Ok(())
    }
}

/// JSON has no infinity; +inf round-trips through the string `"inf"`.
pub(crate) mod f64_or_inf {
    use serde::de::{self, Deserializer};
    use serde::{Deserialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("expected number or \"inf\", got {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_reference_hyperparameters() {
        let c = DecodeConfig::default();
        assert_eq!(c.gen_len, 512);
        assert_eq!(c.fixed_block_size, 32);
        assert_eq!(c.tau_min, 0.1);
        assert_eq!(c.tau_init, 0.9);
        assert_eq!(c.tau_fixed, 0.9);
        c.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_knobs() {
        let bad = [
            DecodeConfig { fixed_block_size: 0, ..Default::default() },
            DecodeConfig { partition_mode: PartitionMode::Fixed, fixed_block_size: 600, ..Default::default() },
            DecodeConfig { tau_min: -0.1, ..Default::default() },
            DecodeConfig { tau_fixed: 0.0, ..Default::default() },
            DecodeConfig { tau_init: 1.5, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        // an oversized block is fine when it is not used
        DecodeConfig { fixed_block_size: 600, ..Default::default() }.validate().unwrap();
        DecodeConfig { tau_min: f64::INFINITY, ..Default::default() }.validate().unwrap();
        // an empty generation is a valid no-op
        DecodeConfig { gen_len: 0, ..Default::default() }.validate().unwrap();
    }

    #[test]
    fn modes_parse_and_print() {
        assert_eq!("adaptive".parse::<PartitionMode>().unwrap(), PartitionMode::Adaptive);
        assert_eq!("dual".parse::<CacheMode>().unwrap(), CacheMode::Dual);
        assert_eq!(ThresholdMode::Dynamic.to_string(), "dynamic");
        assert!("both".parse::<ThresholdMode>().is_err());
    }

    #[test]
    fn infinite_tau_min_round_trips_through_json() {
        let c = DecodeConfig { tau_min: f64::INFINITY, ..Default::default() };
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"tau_min\":\"inf\""));
        let back: DecodeConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
