use std::collections::BTreeMap;
use std::fmt;

use super::hyperbolic::{IntMat, CAT};
use crate::error::{Error, Result};

/// Parameters of one member of the map family.
#[derive(Clone, Debug, PartialEq)]
pub enum MapSpec {
    /// s_r(x, y) = (2x - y + r sin x, x) on T².
    Standard { r: f64 },
    /// A^n on T².
    CatPower { a: IntMat, n: u32 },
    /// f_N(m) = (s_N(x,y) + P_x A^N(z,w), A^{2N}(z,w)).
    FN { n: u32, a: IntMat },
    /// f_r(m) = (s_r(x,y) + P_x A^{[r]}(z,w), A^{[2r]}(z,w)).
    FR { r: f64, a: IntMat },
    /// g(m) = (p x - y + N1 sin x, x) + (L(z,w), A^{N2}(z,w)).
    GN1N2 {
        p: i64,
        n1: u32,
        n2: u32,
        l: IntMat,
        a: IntMat,
    },
    /// f_N with the base map replaced by (p x - y + N sin x, x).
    PVariant { p: i64, n: u32, a: IntMat },
    /// h_ε ∘ inner with h_ε(x,y,z,w) = (x, y + ε sin(x+z), z, w + ε sin z).
    Perturbed { inner: Box<MapSpec>, eps: f64 },
}

impl MapSpec {
    pub fn f_n(n: u32) -> MapSpec {
        MapSpec::FN { n, a: CAT }
    }

    pub fn standard(r: f64) -> MapSpec {
        MapSpec::Standard { r }
    }

    pub fn perturbed_f_n(n: u32, eps: f64) -> MapSpec {
        MapSpec::Perturbed {
            inner: Box::new(MapSpec::f_n(n)),
            eps,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            MapSpec::Standard { .. } => "standard",
            MapSpec::CatPower { .. } => "cat_power",
            MapSpec::FN { .. } => "fN",
            MapSpec::FR { .. } => "fr",
            MapSpec::GN1N2 { .. } => "gN1N2",
            MapSpec::PVariant { .. } => "p_variant",
            MapSpec::Perturbed { .. } => "perturbed",
        }
    }

    /// Flat key=value representation, the inverse of [`MapSpec::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![("family".to_string(), self.family().to_string())];
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        let fmt_mat = |m: &IntMat| format!("{},{},{},{}", m[0][0], m[0][1], m[1][0], m[1][1]);
        match self {
            MapSpec::Standard { r } => push("r", format!("{r:?}")),
            MapSpec::CatPower { a, n } => {
                push("A", fmt_mat(a));
                push("N", n.to_string());
            }
            MapSpec::FN { n, a } => {
                push("N", n.to_string());
                push("A", fmt_mat(a));
            }
            MapSpec::FR { r, a } => {
                push("r", format!("{r:?}"));
                push("A", fmt_mat(a));
            }
            MapSpec::GN1N2 { p, n1, n2, l, a } => {
                push("p", p.to_string());
                push("N1", n1.to_string());
                push("N2", n2.to_string());
                push("L", fmt_mat(l));
                push("A", fmt_mat(a));
            }
            MapSpec::PVariant { p, n, a } => {
                push("p", p.to_string());
                push("N", n.to_string());
                push("A", fmt_mat(a));
            }
            MapSpec::Perturbed { inner, eps } => {
                push("eps", format!("{eps:?}"));
                for (k, v) in inner.to_pairs() {
                    let key = if k == "family" {
                        "inner".to_string()
                    } else {
                        k
                    };
                    out.push((key, v));
                }
            }
        }
        out
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<MapSpec> {
        let get = |k: &str| -> Result<&str> {
            pairs
                .get(k)
                .map(|s| s.as_str())
                .ok_or_else(|| Error::Parse(format!("missing key `{k}`")))
        };
        let float = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let uint = |k: &str| -> Result<u32> {
            get(k)?
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let int = |k: &str| -> Result<i64> {
            get(k)?
                .parse::<i64>()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let mat = |k: &str, default: Option<IntMat>| -> Result<IntMat> {
            match pairs.get(k) {
                None => default.ok_or_else(|| Error::Parse(format!("missing key `{k}`"))),
                Some(s) => parse_int_mat(s),
            }
        };
        let family = pairs
            .get("family")
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Parse("missing key `family`".into()))?;
        Ok(match family {
            "standard" => MapSpec::Standard { r: float("r")? },
            "cat_power" => MapSpec::CatPower {
                a: mat("A", Some(CAT))?,
                n: uint("N")?,
            },
            "fN" => MapSpec::FN {
                n: uint("N")?,
                a: mat("A", Some(CAT))?,
            },
            "fr" => MapSpec::FR {
                r: float("r")?,
                a: mat("A", Some(CAT))?,
            },
            "gN1N2" => MapSpec::GN1N2 {
                p: int("p")?,
                n1: uint("N1")?,
                n2: uint("N2")?,
                l: mat("L", None)?,
                a: mat("A", Some(CAT))?,
            },
            "p_variant" => MapSpec::PVariant {
                p: int("p")?,
                n: uint("N")?,
                a: mat("A", Some(CAT))?,
            },
            "perturbed" => {
                let mut inner = pairs.clone();
                let inner_family = pairs
                    .get("inner")
                    .cloned()
                    .unwrap_or_else(|| "fN".to_string());
                inner.insert("family".into(), inner_family);
                inner.remove("inner");
                MapSpec::Perturbed {
                    inner: Box::new(MapSpec::from_pairs(&inner)?),
                    eps: float("eps")?,
                }
            }
            other => return Err(Error::Parse(format!("unknown family `{other}`"))),
        })
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

pub fn parse_int_mat(s: &str) -> Result<IntMat> {
    let v: Vec<i64> = s
        .split(',')
        .map(|t| t.trim().parse::<i64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("matrix `{s}`: {e}")))?;
    if v.len() != 4 {
        return Err(Error::Parse(format!(
            "matrix `{s}` needs 4 comma-separated entries"
        )));
    }
    Ok([[v[0], v[1]], [v[2], v[3]]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn to_map(spec: &MapSpec) -> BTreeMap<String, String> {
        spec.to_pairs().into_iter().collect()
    }

    proptest! {
        #[test]
        fn pairs_round_trip(n in 1u32..30, r in -100.0f64..100.0, eps in -1.0f64..1.0, p in -5i64..5) {
            let specs = [
                MapSpec::standard(r),
                MapSpec::f_n(n),
                MapSpec::FR { r, a: CAT },
                MapSpec::GN1N2 { p, n1: n, n2: n + 1, l: [[1, 2], [3, 4]], a: CAT },
                MapSpec::PVariant { p, n, a: [[3, 1], [2, 1]] },
                MapSpec::CatPower { a: CAT, n },
                MapSpec::perturbed_f_n(n, eps),
            ];
            for s in specs {
                prop_assert_eq!(MapSpec::from_pairs(&to_map(&s)).unwrap(), s);
            }
        }
    }

    #[test]
    fn bad_input() {
        let mut m = BTreeMap::new();
        m.insert("family".to_string(), "fN".to_string());
        assert!(MapSpec::from_pairs(&m).is_err());
        m.insert("N".to_string(), "x".to_string());
        assert!(MapSpec::from_pairs(&m).is_err());
        assert!(parse_int_mat("1,2,3").is_err());
    }
}
