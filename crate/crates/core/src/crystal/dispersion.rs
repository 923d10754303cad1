//! Uniaxial Sellmeier dispersion datasets.
//!
//! Dataset files are plain text, one directive per line, `#` starts a comment:
//!
//! ```text
//! name <identifier>
//! range_um <min> <max>
//! ordinary <A> <B> <C> <D>
//! extraordinary <A> <B> <C> <D>
//! ```
//!
//! Each polarization follows `n² = A + B / (λ² - C) - D λ²` with λ in
//! micrometres. All four directives are required, in any order.

use std::path::Path;

use crate::error::{Error, Result};

const BBO_KATO_1986: &str = include_str!("../../data/bbo-kato1986.txt");
const BBO_EIMERL_1987: &str = include_str!("../../data/bbo-eimerl1987.txt");

/// `n² = A + B / (λ² - C) - D λ²`, λ in µm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sellmeier {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Sellmeier {
    pub fn index(&self, lambda_um: f64) -> f64 {
        let l2 = lambda_um * lambda_um;
        (self.a + self.b / (l2 - self.c) - self.d * l2).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexModel {
    pub name: String,
    pub ordinary: Sellmeier,
    pub extraordinary: Sellmeier,
    /// Validity range in metres.
    pub range: (f64, f64),
}

impl IndexModel {
    /// BBO after Kato (1986), the default dataset.
    pub fn bbo() -> Self {
        Self::parse(BBO_KATO_1986).expect("bundled dataset parses")
    }

    /// BBO after Eimerl et al. (1987).
    pub fn bbo_eimerl() -> Self {
        Self::parse(BBO_EIMERL_1987).expect("bundled dataset parses")
    }

    /// Bundled dataset by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "bbo" | "bbo-kato1986" => Some(Self::bbo()),
            "bbo-eimerl1987" => Some(Self::bbo_eimerl()),
            _ => None,
        }
    }

    /// Both polarizations share one curve, so there is no birefringence.
    pub fn isotropic(name: impl Into<String>, curve: Sellmeier, range: (f64, f64)) -> Self {
        Self {
            name: name.into(),
            ordinary: curve,
            extraordinary: curve,
            range,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Dataset {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut range = None;
        let mut ordinary = None;
        let mut extraordinary = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut words = content.split_whitespace();
            let key = words.next().unwrap_or_default();
            let rest: Vec<&str> = words.collect();
            let numbers = |count: usize| -> Result<Vec<f64>> {
                if rest.len() != count {
                    return Err(Error::Dataset {
                        line,
                        message: format!("`{key}` expects {count} values, found {}", rest.len()),
                    });
                }
                rest.iter()
                    .map(|w| {
                        w.parse::<f64>().map_err(|_| Error::Dataset {
                            line,
                            message: format!("`{w}` is not a number"),
                        })
                    })
                    .collect()
            };
            match key {
                "name" => {
                    if rest.len() != 1 {
                        return Err(Error::Dataset {
                            line,
                            message: "`name` expects one identifier".into(),
                        });
                    }
                    name = Some(rest[0].to_string());
                }
                "range_um" => {
                    let v = numbers(2)?;
                    if !(v[0] > 0.0 && v[1] > v[0]) {
                        return Err(Error::Dataset {
                            line,
                            message: "range must satisfy 0 < min < max".into(),
                        });
                    }
                    range = Some((v[0] * 1e-6, v[1] * 1e-6));
                }
                "ordinary" | "extraordinary" => {
                    let v = numbers(4)?;
                    let s = Sellmeier {
                        a: v[0],
                        b: v[1],
                        c: v[2],
                        d: v[3],
                    };
                    if key == "ordinary" {
                        ordinary = Some(s);
                    } else {
                        extraordinary = Some(s);
                    }
                }
                other => {
                    return Err(Error::Dataset {
                        line,
                        message: format!("unknown directive `{other}`"),
                    })
                }
            }
        }
        let missing = |what: &str| Error::Dataset {
            line: 0,
            message: format!("missing `{what}` directive"),
        };
        Ok(Self {
            name: name.ok_or_else(|| missing("name"))?,
            ordinary: ordinary.ok_or_else(|| missing("ordinary"))?,
            extraordinary: extraordinary.ok_or_else(|| missing("extraordinary"))?,
            range: range.ok_or_else(|| missing("range_um"))?,
        })
    }

    pub fn check_range(&self, lambda: f64) -> Result<()> {
        let (lo, hi) = self.range;
        if (lo..=hi).contains(&lambda) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                name: "wavelength",
                value: lambda,
                min: lo,
                max: hi,
            })
        }
    }

    pub fn n_o(&self, lambda: f64) -> Result<f64> {
        self.check_range(lambda)?;
        Ok(self.ordinary.index(lambda * 1e6))
    }

    pub fn n_e(&self, lambda: f64) -> Result<f64> {
        self.check_range(lambda)?;
        Ok(self.extraordinary.index(lambda * 1e6))
    }
}
