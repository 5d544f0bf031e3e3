//! Synthetic instance families.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BipartiteInstance, Color};
use crate::rng::stream_rng;

const PLANTED_ATTEMPTS: u64 = 100;

/// Path `0 - 1 - ... - (length-1)` with the listed positions blue.
pub fn gen_path(length: usize, blue_positions: &[usize]) -> Result<BipartiteInstance> {
    if length < 3 {
        return Err(Error::InvalidParameter(format!("path length {length} below 3")));
    }
    let mut colors = vec![Color::Red; length];
    for &b in blue_positions {
        if b >= length {
            return Err(Error::InvalidParameter(format!("blue position {b} outside path")));
        }
        colors[b] = Color::Blue;
    }
    let edges: Vec<(usize, usize)> = (1..length).map(|i| (i - 1, i)).collect();
    BipartiteInstance::new(length, &edges, colors)
}

fn fourth_root(n: usize) -> Option<usize> {
    let m = (n as f64).powf(0.25).round() as usize;
    (m.pow(4) == n).then_some(m)
}

/// A star of `n` nodes centered at the single blue node `0`; a path of
/// `n^{1/4}` red nodes hangs off the center and a red clique of `n^{1/4}`
/// nodes hangs off the far end of the path.
pub fn gen_star_path_clique(n: usize) -> Result<BipartiteInstance> {
    let m = match fourth_root(n) {
        Some(m) if n >= 16 => m,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "star size {n} must be a perfect fourth power >= 16"
            )))
        }
    };
    let total = n + 2 * m;
    let mut edges: Vec<(usize, usize)> = (1..n).map(|leaf| (0, leaf)).collect();
    let path: Vec<usize> = (n..n + m).collect();
    edges.push((0, path[0]));
    edges.extend(path.windows(2).map(|w| (w[0], w[1])));
    let clique: Vec<usize> = (n + m..total).collect();
    edges.push((path[m - 1], clique[0]));
    for (i, &a) in clique.iter().enumerate() {
        for &b in &clique[i + 1..] {
            edges.push((a, b));
        }
    }
    let mut colors = vec![Color::Red; total];
    colors[0] = Color::Blue;
    BipartiteInstance::new(total, &edges, colors)
}

/// Clique on `0..clique_size` with a path of `path_length` nodes attached to
/// node `clique_size - 1`; the far end of the path is the only blue node.
pub fn gen_lollipop(clique_size: usize, path_length: usize) -> Result<BipartiteInstance> {
    if clique_size < 2 || path_length < 1 {
        return Err(Error::InvalidParameter(
            "lollipop needs a clique of at least 2 and a path of at least 1".into(),
        ));
    }
    let total = clique_size + path_length;
    let mut edges = Vec::new();
    for a in 0..clique_size {
        for b in a + 1..clique_size {
            edges.push((a, b));
        }
    }
    for v in clique_size..total {
        edges.push((v - 1, v));
    }
    let mut colors = vec![Color::Red; total];
    colors[total - 1] = Color::Blue;
    BipartiteInstance::new(total, &edges, colors)
}

/// Two-block planted partition: red nodes `0..n_red`, blue nodes after them.
/// Same-group pairs are joined with probability `p_in`, cross pairs with
/// `p_out`. Draws are repeated until the graph is connected.
pub fn gen_planted_two_community(
    n_red: usize,
    n_blue: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<BipartiteInstance> {
    if n_red == 0 || n_blue == 0 {
        return Err(Error::InvalidParameter("both groups must be non-empty".into()));
    }
    if !(p_out > 0.0 && p_in > p_out && p_in <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    let n = n_red + n_blue;
    let colors: Vec<Color> = (0..n)
        .map(|v| if v < n_red { Color::Red } else { Color::Blue })
        .collect();
    for attempt in 0..PLANTED_ATTEMPTS {
        let mut rng = stream_rng(seed, attempt);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if (u < n_red) == (v < n_red) { p_in } else { p_out };
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        match BipartiteInstance::new(n, &edges, colors.clone()) {
            Ok(inst) => return Ok(inst),
            Err(Error::DisconnectedGraph { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed(format!(
        "no connected draw in {PLANTED_ATTEMPTS} attempts"
    )))
}

/// A named generator family with its parameters.
///
/// The compact text form is `family:arg:arg...`, e.g. `path:5:2`,
/// `star-path-clique:256`, `lollipop:6:4`, `planted:50:50:0.2:0.01:7`. Blue
/// positions of a path are comma separated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Path {
        length: usize,
        blue: Vec<usize>,
    },
    StarPathClique {
        n: usize,
    },
    Lollipop {
        clique: usize,
        path: usize,
    },
    PlantedTwoCommunity {
        n_red: usize,
        n_blue: usize,
        p_in: f64,
        p_out: f64,
        seed: u64,
    },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<BipartiteInstance> {
        match self {
            GeneratorSpec::Path { length, blue } => gen_path(*length, blue),
            GeneratorSpec::StarPathClique { n } => gen_star_path_clique(*n),
            GeneratorSpec::Lollipop { clique, path } => gen_lollipop(*clique, *path),
            GeneratorSpec::PlantedTwoCommunity {
                n_red,
                n_blue,
                p_in,
                p_out,
                seed,
            } => gen_planted_two_community(*n_red, *n_blue, *p_in, *p_out, *seed),
        }
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::Path { length, blue } => {
                let b: Vec<String> = blue.iter().map(|x| x.to_string()).collect();
                write!(f, "path:{length}:{}", b.join(","))
            }
            GeneratorSpec::StarPathClique { n } => write!(f, "star-path-clique:{n}"),
            GeneratorSpec::Lollipop { clique, path } => write!(f, "lollipop:{clique}:{path}"),
            GeneratorSpec::PlantedTwoCommunity {
                n_red,
                n_blue,
                p_in,
                p_out,
                seed,
            } => write!(f, "planted:{n_red}:{n_blue}:{p_in}:{p_out}:{seed}"),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParameter(format!("cannot parse generator spec `{s}`"));
        fn num<T: FromStr>(x: &str, bad: impl Fn() -> Error) -> Result<T> {
            x.trim().parse().map_err(|_| bad())
        }
        match parts.as_slice() {
            ["path", len, blue] => Ok(GeneratorSpec::Path {
                length: num(len, bad)?,
                blue: blue
                    .split(',')
                    .filter(|t| !t.is_empty())
                    .map(|t| num(t, bad))
                    .collect::<Result<_>>()?,
            }),
            ["star-path-clique" | "star_path_clique", n] => {
                Ok(GeneratorSpec::StarPathClique { n: num(n, bad)? })
            }
            ["lollipop", c, p] => Ok(GeneratorSpec::Lollipop {
                clique: num(c, bad)?,
                path: num(p, bad)?,
            }),
            ["planted" | "planted_two_community", r, b, pi, po, seed] => {
                Ok(GeneratorSpec::PlantedTwoCommunity {
                    n_red: num(r, bad)?,
                    n_blue: num(b, bad)?,
                    p_in: num(pi, bad)?,
                    p_out: num(po, bad)?,
                    seed: num(seed, bad)?,
                })
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::hitting_to_blue;
    use crate::graph::ShortcutSet;

    #[test]
    fn path_family() {
        let p = gen_path(5, &[2]).unwrap();
        assert_eq!((p.red().len(), p.blue().len()), (4, 1));
        assert!(gen_path(3, &[2]).is_ok());
        assert!(matches!(gen_path(3, &[0, 1, 2]), Err(Error::InvalidBipartition(_))));
        assert!(gen_path(2, &[1]).is_err());
    }

    #[test]
    fn star_path_clique_shape() {
        let g = gen_star_path_clique(16).unwrap();
        assert_eq!(g.node_count(), 20);
        assert_eq!(g.blue(), &[0]);
        // 15 leaves + 1 hub link + 1 path edge + 1 path-clique link + 1 clique edge
        assert_eq!(g.edge_count(), 19);
        assert!(matches!(gen_star_path_clique(81), Ok(_)));
        assert!(gen_star_path_clique(80).is_err());
        assert!(gen_star_path_clique(1).is_err());
    }

    #[test]
    fn star_path_clique_ratio_grows() {
        let ratio = |n| {
            let p = hitting_to_blue(&gen_star_path_clique(n).unwrap(), &ShortcutSet::new()).unwrap();
            (p.max, p.max / p.mean)
        };
        let (f16, r16) = ratio(16);
        let (f256, r256) = ratio(256);
        assert!(r256 > r16);
        assert!(f256 >= 2.0 * f16, "{f256} vs {f16}");
    }

    #[test]
    fn planted_is_deterministic_and_connected() {
        let a = gen_planted_two_community(50, 50, 0.2, 0.01, 7).unwrap();
        let b = gen_planted_two_community(50, 50, 0.2, 0.01, 7).unwrap();
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        let cross = a.edges().filter(|&(u, v)| a.color(u) != a.color(v)).count();
        // expectation 25, generous band
        assert!((5..=60).contains(&cross), "{cross}");
        assert!(gen_planted_two_community(5, 5, 0.5, 0.0, 1).is_err());
        assert!(gen_planted_two_community(5, 5, 0.1, 0.2, 1).is_err());
    }

    #[test]
    fn planted_gives_up_when_connectivity_is_hopeless() {
        assert!(matches!(
            gen_planted_two_community(60, 60, 0.002, 0.001, 1),
            Err(Error::GenerationFailed(_))
        ));
    }

    #[test]
    fn spec_strings_roundtrip() {
        for s in ["path:5:2", "star-path-clique:256", "lollipop:6:4", "planted:50:50:0.2:0.01:7"] {
            let spec: GeneratorSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            spec.generate().unwrap();
        }
        assert!("triangle:3".parse::<GeneratorSpec>().is_err());
    }
}
