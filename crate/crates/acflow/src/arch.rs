//! Textual architecture descriptor. One `key = value` per line, `#`
//! comments; the `transforms` list names each layer in order with optional
//! per-layer hyperparameters in parentheses. The same text is embedded in
//! checkpoints, so parsing and emission round-trip exactly.
//!
//! ```text
//! dim = 2
//! transforms = linear(hidden=256,layers=2,rank=full), leaky_relu(alpha=0.01), rnn_coupling(hidden=256,layers=2,clamp=5)
//! base = ar_gmm(components=40,hidden=256,layers=2)
//! ```

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_MLP_LAYERS: usize = 2;
pub const DEFAULT_RNN_LAYERS: usize = 2;
pub const DEFAULT_COMPONENTS: usize = 40;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_SCALE_CLAMP: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    AffineCoupling { hidden: usize, mlp_layers: usize, clamp: f64 },
    /// `rank == 0` means full rank (d).
    Linear { hidden: usize, mlp_layers: usize, rank: usize },
    RnnCoupling { hidden: usize, rnn_layers: usize, clamp: f64 },
    LeakyRelu { alpha: f64 },
    Reverse,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaseSpec {
    Gaussian { hidden: usize, mlp_layers: usize },
    ArGmm { components: usize, hidden: usize, rnn_layers: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchDescriptor {
    pub d: usize,
    pub transforms: Vec<LayerSpec>,
    pub base: BaseSpec,
}

impl ArchDescriptor {
    /// Four conditional layers of linear -> leaky-ReLU -> RNN coupling with
    /// reverse transforms in between, 2-layer 256-unit networks, and a
    /// 40-component autoregressive mixture base.
    pub fn synthetic(d: usize) -> Self {
        Self::layered(d, 4, DEFAULT_HIDDEN, DEFAULT_RNN_LAYERS, DEFAULT_RNN_LAYERS)
    }

    /// Six conditional layers and a 4-layer GRU likelihood.
    pub fn tabular(d: usize) -> Self {
        Self::layered(d, 6, DEFAULT_HIDDEN, DEFAULT_RNN_LAYERS, 4)
    }

    /// `n_blocks` repetitions of linear -> leaky-ReLU -> RNN coupling,
    /// separated by reverse transforms.
    pub fn layered(
        d: usize,
        n_blocks: usize,
        hidden: usize,
        rnn_layers: usize,
        base_rnn_layers: usize,
    ) -> Self {
        let mut transforms = Vec::new();
        for block in 0..n_blocks {
            if block > 0 {
                transforms.push(LayerSpec::Reverse);
            }
            transforms.push(LayerSpec::Linear {
                hidden,
                mlp_layers: DEFAULT_MLP_LAYERS,
                rank: 0,
            });
            transforms.push(LayerSpec::LeakyRelu { alpha: DEFAULT_ALPHA });
            transforms.push(LayerSpec::RnnCoupling {
                hidden,
                rnn_layers,
                clamp: DEFAULT_SCALE_CLAMP,
            });
        }
        ArchDescriptor {
            d,
            transforms,
            base: BaseSpec::ArGmm {
                components: DEFAULT_COMPONENTS,
                hidden,
                rnn_layers: base_rnn_layers,
            },
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dim = {}\n", self.d));
        let layers: Vec<String> = self.transforms.iter().map(layer_to_text).collect();
        out.push_str(&format!("transforms = {}\n", layers.join(", ")));
        let base = match &self.base {
            BaseSpec::Gaussian { hidden, mlp_layers } => {
                format!("gaussian(hidden={hidden},layers={mlp_layers})")
            }
            BaseSpec::ArGmm { components, hidden, rnn_layers } => {
                format!("ar_gmm(components={components},hidden={hidden},layers={rnn_layers})")
            }
        };
        out.push_str(&format!("base = {base}\n"));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut transforms: Option<Vec<LayerSpec>> = None;
        let mut base: Option<BaseSpec> = None;
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = strip_comment(raw_line).trim().to_string();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("architecture line {} is not `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dim" => {
                    dim = Some(value.parse().map_err(|_| {
                        Error::Config(format!("bad dim `{value}`"))
                    })?)
                }
                "transforms" => {
                    let mut layers = Vec::new();
                    for part in split_top_level(value) {
                        layers.push(parse_layer(part.trim())?);
                    }
                    transforms = Some(layers);
                }
                "base" => base = Some(parse_base(value)?),
                other => {
                    return Err(Error::Config(format!(
                        "unknown architecture key `{other}`"
                    )))
                }
            }
        }
        Ok(ArchDescriptor {
            d: dim.ok_or_else(|| Error::Config("architecture is missing `dim`".into()))?,
            transforms: transforms
                .ok_or_else(|| Error::Config("architecture is missing `transforms`".into()))?,
            base: base.ok_or_else(|| Error::Config("architecture is missing `base`".into()))?,
        })
    }
}

impl fmt::Display for ArchDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

impl FromStr for ArchDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Split on commas that are not inside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < s.len() {
        parts.push(&s[start..]);
    }
    parts
}

fn parse_args(name: &str, spec: &str) -> Result<(String, HashMap<String, String>)> {
    let mut args = HashMap::new();
    let head;
    if let Some(open) = spec.find('(') {
        if !spec.ends_with(')') {
            return Err(Error::Config(format!("unbalanced parentheses in `{spec}`")));
        }
        head = spec[..open].trim().to_string();
        let inner = &spec[open + 1..spec.len() - 1];
        for pair in inner.split(',') {
            let pair = pair.trim();
            if pair.is_empty() {
                continue;
            }
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("bad {name} argument `{pair}` (want key=value)"))
            })?;
            args.insert(k.trim().to_string(), v.trim().to_string());
        }
    } else {
        head = spec.trim().to_string();
    }
    Ok((head, args))
}

fn take_usize(args: &mut HashMap<String, String>, key: &str, default: usize) -> Result<usize> {
    match args.remove(key) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad integer `{v}` for `{key}`"))),
        None => Ok(default),
    }
}

fn take_f64(args: &mut HashMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match args.remove(key) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad number `{v}` for `{key}`"))),
        None => Ok(default),
    }
}

fn reject_leftovers(kind: &str, args: HashMap<String, String>) -> Result<()> {
    if let Some(key) = args.keys().next() {
        return Err(Error::Config(format!("unknown `{kind}` argument `{key}`")));
    }
    Ok(())
}

fn parse_layer(spec: &str) -> Result<LayerSpec> {
    let (head, mut args) = parse_args("layer", spec)?;
    let layer = match head.as_str() {
        "affine_coupling" => LayerSpec::AffineCoupling {
            hidden: take_usize(&mut args, "hidden", DEFAULT_HIDDEN)?,
            mlp_layers: take_usize(&mut args, "layers", DEFAULT_MLP_LAYERS)?,
            clamp: take_f64(&mut args, "clamp", DEFAULT_SCALE_CLAMP)?,
        },
        "linear" => {
            let rank = match args.remove("rank") {
                None => 0,
                Some(v) if v == "full" => 0,
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad rank `{v}`")))?,
            };
            LayerSpec::Linear {
                hidden: take_usize(&mut args, "hidden", DEFAULT_HIDDEN)?,
                mlp_layers: take_usize(&mut args, "layers", DEFAULT_MLP_LAYERS)?,
                rank,
            }
        }
        "rnn_coupling" => LayerSpec::RnnCoupling {
            hidden: take_usize(&mut args, "hidden", DEFAULT_HIDDEN)?,
            rnn_layers: take_usize(&mut args, "layers", DEFAULT_RNN_LAYERS)?,
            clamp: take_f64(&mut args, "clamp", DEFAULT_SCALE_CLAMP)?,
        },
        "leaky_relu" => LayerSpec::LeakyRelu {
            alpha: take_f64(&mut args, "alpha", DEFAULT_ALPHA)?,
        },
        "reverse" => LayerSpec::Reverse,
        other => return Err(Error::Config(format!("unknown transform `{other}`"))),
    };
    reject_leftovers(&head, args)?;
    Ok(layer)
}

fn parse_base(spec: &str) -> Result<BaseSpec> {
    let (head, mut args) = parse_args("base", spec)?;
    let base = match head.as_str() {
        "gaussian" => BaseSpec::Gaussian {
            hidden: take_usize(&mut args, "hidden", DEFAULT_HIDDEN)?,
            mlp_layers: take_usize(&mut args, "layers", DEFAULT_MLP_LAYERS)?,
        },
        "ar_gmm" | "autoregressive_gmm" => BaseSpec::ArGmm {
            components: take_usize(&mut args, "components", DEFAULT_COMPONENTS)?,
            hidden: take_usize(&mut args, "hidden", DEFAULT_HIDDEN)?,
            rnn_layers: take_usize(&mut args, "layers", DEFAULT_RNN_LAYERS)?,
        },
        other => return Err(Error::Config(format!("unknown base `{other}`"))),
    };
    reject_leftovers(&head, args)?;
    Ok(base)
}

fn layer_to_text(layer: &LayerSpec) -> String {
    match layer {
        LayerSpec::AffineCoupling { hidden, mlp_layers, clamp } => {
            format!("affine_coupling(hidden={hidden},layers={mlp_layers},clamp={clamp})")
        }
        LayerSpec::Linear { hidden, mlp_layers, rank } => {
            let rank = if *rank == 0 { "full".to_string() } else { rank.to_string() };
            format!("linear(hidden={hidden},layers={mlp_layers},rank={rank})")
        }
        LayerSpec::RnnCoupling { hidden, rnn_layers, clamp } => {
            format!("rnn_coupling(hidden={hidden},layers={rnn_layers},clamp={clamp})")
        }
        LayerSpec::LeakyRelu { alpha } => format!("leaky_relu(alpha={alpha})"),
        LayerSpec::Reverse => "reverse".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_text() {
        for arch in [
            ArchDescriptor::synthetic(2),
            ArchDescriptor::tabular(8),
            ArchDescriptor {
                d: 4,
                transforms: vec![
                    LayerSpec::AffineCoupling { hidden: 16, mlp_layers: 1, clamp: 3.0 },
                    LayerSpec::Linear { hidden: 8, mlp_layers: 2, rank: 2 },
                    LayerSpec::LeakyRelu { alpha: 0.1 },
                    LayerSpec::Reverse,
                ],
                base: BaseSpec::Gaussian { hidden: 8, mlp_layers: 1 },
            },
        ] {
            let text = arch.to_text();
            let back = ArchDescriptor::parse(&text).unwrap();
            assert_eq!(arch, back, "round trip failed for:\n{text}");
        }
    }

    #[test]
    fn bare_names_get_defaults() {
        let arch = ArchDescriptor::parse(
            "dim = 3\ntransforms = linear, leaky_relu, reverse\nbase = ar_gmm\n",
        )
        .unwrap();
        assert_eq!(arch.d, 3);
        assert_eq!(arch.transforms.len(), 3);
        match &arch.transforms[0] {
            LayerSpec::Linear { hidden, mlp_layers, rank } => {
                assert_eq!(*hidden, DEFAULT_HIDDEN);
                assert_eq!(*mlp_layers, DEFAULT_MLP_LAYERS);
                assert_eq!(*rank, 0);
            }
            other => panic!("unexpected layer {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ArchDescriptor::parse("dim = 2\nwat = 3\n").is_err());
        assert!(
            ArchDescriptor::parse("dim = 2\ntransforms = linear(frobnicate=1)\nbase = ar_gmm\n")
                .is_err()
        );
        assert!(ArchDescriptor::parse("dim = 2\ntransforms = spline\nbase = ar_gmm\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let arch = ArchDescriptor::parse(
            "# header\ndim = 2\n\ntransforms = reverse # tail comment\nbase = gaussian\n",
        )
        .unwrap();
        assert_eq!(arch.transforms, vec![LayerSpec::Reverse]);
    }
}
