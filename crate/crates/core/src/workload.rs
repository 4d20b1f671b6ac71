//! MoE model shape, reference weights and token traces.
//!
//! Trace files hold one token per line: the signed input vector, a `|`,
//! then the routed expert ids. Blank lines and `#` comments are skipped.
//!
//! ```text
//! # in_dim = 4, top_k = 2
//! 1 -2 0 2 | 0 3
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::distr::{Distribution, Uniform};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::CodeSpace;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grouping {
    pub num_groups: u32,
    pub experts_per_group: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoESpec {
    pub num_experts: u32,
    pub top_k: u32,
    #[serde(default)]
    pub grouping: Option<Grouping>,
    pub in_dim: u32,
    pub out_dim: u32,
}

impl Default for MoESpec {
    fn default() -> Self {
        Self {
            num_experts: 4,
            top_k: 1,
            grouping: None,
            in_dim: 128,
            out_dim: 128,
        }
    }
}

impl MoESpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_experts == 0 {
            return Err(Error::config("num_experts", "must be at least 1"));
        }
        if self.top_k == 0 || self.top_k > self.num_experts {
            return Err(Error::config(
                "top_k",
                format!(
                    "must lie in 1..={} (num_experts), got {}",
                    self.num_experts, self.top_k
                ),
            ));
        }
        if self.in_dim == 0 {
            return Err(Error::config("in_dim", "must be at least 1"));
        }
        if self.out_dim == 0 {
            return Err(Error::config("out_dim", "must be at least 1"));
        }
        if let Some(g) = self.grouping {
            if g.num_groups != self.top_k {
                return Err(Error::config(
                    "grouping.num_groups",
                    format!(
                        "grouped routing picks one expert per group, so it must equal top_k = {}",
                        self.top_k
                    ),
                ));
            }
            if g.experts_per_group == 0 || g.num_groups * g.experts_per_group != self.num_experts {
                return Err(Error::config(
                    "grouping.experts_per_group",
                    format!(
                        "{} groups of {} do not cover {} experts",
                        g.num_groups, g.experts_per_group, self.num_experts
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Activated expert ratio `r = k / N`.
    pub fn activated_ratio(&self) -> f64 {
        f64::from(self.top_k) / f64::from(self.num_experts)
    }

    /// Group that expert `e` belongs to, if routing is grouped.
    pub fn group_of(&self, expert: u32) -> Option<u32> {
        self.grouping.map(|g| expert / g.experts_per_group)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum Routing {
    #[default]
    Uniform,
    /// Expert `i` (within its group, if grouped) has weight `1 / (i+1)^s`.
    Zipf {
        s: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub input: Vec<i32>,
    /// Routed experts in ascending order.
    pub experts: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub tokens: Vec<Token>,
}

impl TokenTrace {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Mean fraction of experts activated per token.
    pub fn mean_activated_fraction(&self, spec: &MoESpec) -> f64 {
        if self.tokens.is_empty() {
            return 0.0;
        }
        let total: usize = self.tokens.iter().map(|t| t.experts.len()).sum();
        total as f64 / (self.tokens.len() as f64 * f64::from(spec.num_experts))
    }

    /// Routing counts per expert.
    pub fn expert_histogram(&self, spec: &MoESpec) -> Vec<u64> {
        let mut h = vec![0u64; spec.num_experts as usize];
        for t in &self.tokens {
            for &e in &t.experts {
                h[e as usize] += 1;
            }
        }
        h
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            let xs: Vec<String> = t.input.iter().map(i32::to_string).collect();
            let es: Vec<String> = t.experts.iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{} | {}", xs.join(" "), es.join(" "));
        }
        out
    }

    pub fn validate(&self, spec: &MoESpec, space: &CodeSpace) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            check_token(t, spec, space).map_err(|reason| Error::Trace {
                line: i + 1,
                reason,
            })?;
        }
        Ok(())
    }
}

fn check_token(t: &Token, spec: &MoESpec, space: &CodeSpace) -> std::result::Result<(), String> {
    if t.input.len() != spec.in_dim as usize {
        return Err(format!(
            "{} inputs, expected {}",
            t.input.len(),
            spec.in_dim
        ));
    }
    if let Some(x) = t.input.iter().find(|x| !space.input_range().contains(x)) {
        return Err(format!("input {x} outside {:?}", space.input_range()));
    }
    if t.experts.len() != spec.top_k as usize {
        return Err(format!(
            "{} experts routed, expected {}",
            t.experts.len(),
            spec.top_k
        ));
    }
    let mut seen = t.experts.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != t.experts.len() {
        return Err("duplicate expert id".into());
    }
    if let Some(e) = t.experts.iter().find(|&&e| e >= spec.num_experts) {
        return Err(format!("expert {e} does not exist"));
    }
    if spec.grouping.is_some() {
        let mut groups: Vec<u32> = t.experts.iter().filter_map(|&e| spec.group_of(e)).collect();
        groups.sort_unstable();
        groups.dedup();
        if groups.len() != t.experts.len() {
            return Err("two experts routed from the same group".into());
        }
    }
    Ok(())
}

pub fn parse_trace(text: &str, spec: &MoESpec, space: &CodeSpace) -> Result<TokenTrace> {
    let mut tokens = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Trace {
            line: i + 1,
            reason,
        };
        let (xs, es) = line
            .split_once('|')
            .ok_or_else(|| err("missing `|` between inputs and experts".into()))?;
        let input = xs
            .split_whitespace()
            .map(|v| {
                v.parse::<i32>()
                    .map_err(|e| err(format!("input `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut experts = es
            .split_whitespace()
            .map(|v| {
                v.parse::<u32>()
                    .map_err(|e| err(format!("expert `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        experts.sort_unstable();
        let t = Token { input, experts };
        check_token(&t, spec, space).map_err(err)?;
        tokens.push(t);
    }
    Ok(TokenTrace { tokens })
}

fn choose(rng: &mut ChaCha8Rng, n: u32, amount: u32, zipf: Option<f64>) -> Result<Vec<u32>> {
    let picked = match zipf {
        None => index::sample(rng, n as usize, amount as usize).into_vec(),
        Some(s) => index::sample_weighted(
            rng,
            n as usize,
            |i| 1.0 / ((i + 1) as f64).powf(s),
            amount as usize,
        )
        .map_err(|e| Error::config("routing.s", e.to_string()))?
        .into_vec(),
    };
    Ok(picked.into_iter().map(|i| i as u32).collect())
}

pub fn generate_trace(
    spec: &MoESpec,
    space: &CodeSpace,
    tokens: usize,
    routing: &Routing,
    seed: u64,
) -> Result<TokenTrace> {
    spec.validate()?;
    space.validate()?;
    if tokens == 0 {
        return Err(Error::config("tokens", "must be at least 1"));
    }
    let zipf = match routing {
        Routing::Uniform => None,
        Routing::Zipf { s } => {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(Error::config(
                    "routing.s",
                    "Zipf exponent must be finite and non-negative",
                ));
            }
            Some(*s)
        }
        Routing::File { path } => {
            let trace = parse_trace(&std::fs::read_to_string(path)?, spec, space)?;
            return Ok(TokenTrace {
                tokens: trace.tokens.into_iter().take(tokens).collect(),
            });
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = Uniform::new_inclusive(-space.max_input(), space.max_input())
        .map_err(|e| Error::contract(e.to_string()))?;
    let mut out = Vec::with_capacity(tokens);
    for _ in 0..tokens {
        let input = (0..spec.in_dim).map(|_| xs.sample(&mut rng)).collect();
        let mut experts = match spec.grouping {
            None => choose(&mut rng, spec.num_experts, spec.top_k, zipf)?,
            Some(g) => (0..g.num_groups)
                .map(|grp| {
                    choose(&mut rng, g.experts_per_group, 1, zipf)
                        .map(|v| grp * g.experts_per_group + v[0])
                })
                .collect::<Result<Vec<_>>>()?,
        };
        experts.sort_unstable();
        out.push(Token { input, experts });
    }
    Ok(TokenTrace { tokens: out })
}

/// Weight matrix of one expert, `out_dim` rows of `in_dim` entries, so
/// `y[b] = sum_r w[b][r] * x[r]`.
pub type Matrix = Vec<Vec<i32>>;

/// Uniform random weights over the code space's range for every expert.
pub fn generate_weights(spec: &MoESpec, space: &CodeSpace, seed: u64) -> Result<Vec<Matrix>> {
    spec.validate()?;
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = Uniform::new_inclusive(-space.max_weight(), space.max_weight())
        .map_err(|e| Error::contract(e.to_string()))?;
    Ok((0..spec.num_experts)
        .map(|_| {
            (0..spec.out_dim)
                .map(|_| (0..spec.in_dim).map(|_| ws.sample(&mut rng)).collect())
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: u32, k: u32) -> MoESpec {
        MoESpec {
            num_experts: n,
            top_k: k,
            grouping: None,
            in_dim: 6,
            out_dim: 3,
        }
    }

    #[test]
    fn top_k_is_checked() {
        match spec(4, 5).validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "top_k"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(spec(4, 0).validate().is_err());
        let mut g = spec(4, 2);
        g.grouping = Some(Grouping {
            num_groups: 1,
            experts_per_group: 4,
        });
        assert!(g.validate().is_err());
    }

    #[test]
    fn uniform_routing_frequencies() {
        let s = spec(4, 1);
        let t = generate_trace(&s, &CodeSpace::default(), 4000, &Routing::Uniform, 9).unwrap();
        for c in t.expert_histogram(&s) {
            assert!((c as f64 / 4000.0 - 0.25).abs() < 0.02, "{c}");
        }
        assert!((t.mean_activated_fraction(&s) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dense_and_grouped() {
        let space = CodeSpace::default();
        let dense = generate_trace(&spec(4, 4), &space, 10, &Routing::Uniform, 1).unwrap();
        assert!(dense.tokens.iter().all(|t| t.experts == vec![0, 1, 2, 3]));
        let mut g = spec(4, 2);
        g.grouping = Some(Grouping {
            num_groups: 2,
            experts_per_group: 2,
        });
        let t = generate_trace(&g, &space, 200, &Routing::Zipf { s: 1.0 }, 3).unwrap();
        for tok in &t.tokens {
            assert_eq!(tok.experts.len(), 2);
            assert!(tok.experts[0] < 2 && tok.experts[1] >= 2);
        }
    }

    #[test]
    fn zipf_prefers_low_ids() {
        let s = spec(8, 1);
        let t = generate_trace(
            &s,
            &CodeSpace::default(),
            2000,
            &Routing::Zipf { s: 1.2 },
            5,
        )
        .unwrap();
        let h = t.expert_histogram(&s);
        assert!(h[0] > h[3] && h[3] > h[7]);
    }

    #[test]
    fn text_roundtrip_and_errors() {
        let s = spec(4, 2);
        let space = CodeSpace::default();
        let t = generate_trace(&s, &space, 20, &Routing::Uniform, 2).unwrap();
        assert_eq!(parse_trace(&t.to_text(), &s, &space).unwrap(), t);
        assert_eq!(
            t,
            generate_trace(&s, &space, 20, &Routing::Uniform, 2).unwrap()
        );
        let bad = "# header\n1 2 0 -1 -2 0 | 0 1\n1 2 0 | 0 1\n";
        match parse_trace(bad, &s, &space) {
            Err(Error::Trace { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_trace("0 0 0 0 0 0 | 1 1", &s, &space).is_err());
        assert!(parse_trace("0 0 0 0 0 0   0 1", &s, &space).is_err());
    }
}
