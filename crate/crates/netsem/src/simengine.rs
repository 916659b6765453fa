//! Simulation engine: executes a finalized (or draft) model node by node,
//! with one counter-based RNG substream per (replicate, node) so results are
//! independent of thread count and of how many draws other nodes consume.

use crate::error::{Error, Result};
use crate::exprlang::{evaluate, EvalContext, Value};
use crate::netgraph::NetworkMatrix;
use crate::semodel::{
    sample_distribution, DagModel, DistrParam, NetGenerator, NetworkSpec, NodeSpec,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// Derives independent named substreams from one root seed: the ChaCha key is
/// sha256(seed_le_bytes || path).
#[derive(Debug, Clone, Copy)]
pub struct RngFactory {
    seed: u64,
}

impl RngFactory {
    pub fn new(seed: u64) -> RngFactory {
        RngFactory { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self, path: &str) -> ChaCha12Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(path.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        ChaCha12Rng::from_seed(digest)
    }
}

/// Write via a sibling temp file plus rename, so readers never observe a
/// partially written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::parameter(format!("invalid output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One simulated replicate: named columns plus the realized network.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub n: usize,
    pub names: Vec<String>,
    pub cols: Vec<Vec<f64>>,
    pub network: Option<NetworkMatrix>,
}

impl Dataset {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|s| s == name)
            .map(|i| self.cols[i].as_slice())
    }

    pub fn require_column(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::validation(format!("no column named {name:?}")))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.names.join(","));
        out.push('\n');
        for i in 0..self.n {
            for (j, col) in self.cols.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                if col[i].is_nan() {
                    out.push_str("NA");
                } else {
                    out.push_str(&format!("{}", col[i]));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_string(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::validation("empty dataset CSV"))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(Error::validation(format!(
                    "dataset CSV row {}: {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    names.len()
                )));
            }
            for (j, f) in fields.iter().enumerate() {
                let f = f.trim();
                let v = if f.is_empty() || f == "NA" {
                    f64::NAN
                } else {
                    f.parse::<f64>().map_err(|_| {
                        Error::validation(format!(
                            "dataset CSV row {}: bad number {f:?}",
                            lineno + 2
                        ))
                    })?
                };
                cols[j].push(v);
            }
        }
        let n = cols.first().map_or(0, |c| c.len());
        Ok(Dataset {
            n,
            names,
            cols,
            network: None,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv_string())
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        Dataset::from_csv_string(&fs::read_to_string(path)?)
    }
}

fn scalar_param(
    spec: &NetworkSpec,
    name: &str,
    ctx: &EvalContext,
    default: Option<f64>,
) -> Result<f64> {
    match spec.params.iter().find(|(k, _)| k == name) {
        Some((_, expr)) => match evaluate(expr, ctx)? {
            Value::Scalar(v) => Ok(v),
            _ => Err(Error::parameter(format!(
                "network parameter {name:?} must be a scalar"
            ))),
        },
        None => default.ok_or_else(|| {
            Error::parameter(format!(
                "network {:?}: missing parameter {name:?}",
                spec.name
            ))
        }),
    }
}

fn generate_network(
    spec: &NetworkSpec,
    n: usize,
    ctx: &EvalContext,
    rng: &mut ChaCha12Rng,
) -> Result<NetworkMatrix> {
    match &spec.generator {
        NetGenerator::Gnp => {
            let p = scalar_param(spec, "p", ctx, None)?;
            NetworkMatrix::gen_gnp(n, p, rng)
        }
        NetGenerator::SmallWorld => {
            let dim = scalar_param(spec, "dim", ctx, Some(1.0))?;
            let nei = scalar_param(spec, "nei", ctx, None)?;
            let p = scalar_param(spec, "p", ctx, None)?;
            if nei.fract() != 0.0 || nei < 1.0 {
                return Err(Error::parameter(format!(
                    "small_world: nei={nei} must be a positive integer"
                )));
            }
            NetworkMatrix::gen_small_world(n, dim as usize, nei as usize, p, rng)
        }
        NetGenerator::File(path) => {
            let net = NetworkMatrix::read_csv(path)?;
            if net.n() != n {
                return Err(Error::validation(format!(
                    "network file {} has {} units, simulation has {n}",
                    path.display(),
                    net.n()
                )));
            }
            Ok(net)
        }
    }
}

/// Nodes actually executed for a run: base specs with action replacements
/// substituted in place, plus the action's scalar bindings.
fn effective_nodes<'a>(
    model: &'a DagModel,
    action: Option<&str>,
) -> Result<(Vec<&'a NodeSpec>, BTreeMap<String, f64>)> {
    let mut nodes: Vec<&NodeSpec> = model.nodes().iter().collect();
    let mut scalars = BTreeMap::new();
    if let Some(name) = action {
        let act = model
            .action(name)
            .ok_or_else(|| Error::validation(format!("unknown action {name:?}")))?;
        for replacement in &act.nodes {
            let pos = nodes
                .iter()
                .position(|n| n.names == replacement.names)
                .expect("action node validated at add_action");
            nodes[pos] = replacement;
        }
        for (k, v) in &act.params {
            scalars.insert(k.clone(), *v);
        }
    }
    Ok((nodes, scalars))
}

/// Simulate one replicate. `namespace` and `replicate` key the RNG substreams
/// ("{namespace}/{replicate}/network" and ".../node/{name}"), so an action run
/// sharing a namespace and replicate index with an observed run reuses the
/// same randomness for every node the action does not replace.
pub fn simulate(
    model: &DagModel,
    action: Option<&str>,
    n: usize,
    seed: u64,
    namespace: &str,
    replicate: usize,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::parameter("simulate: n must be >= 1"));
    }
    let (nodes, scalars) = effective_nodes(model, action)?;
    let factory = RngFactory::new(seed);
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut net: Option<NetworkMatrix> = None;

    let make_net = |names: &[String], cols: &[Vec<f64>]| -> Result<NetworkMatrix> {
        let spec = model.network().expect("checked by caller");
        let mut ctx = EvalContext::new(n);
        for (nm, c) in names.iter().zip(cols) {
            ctx.columns.insert(nm.clone(), c.as_slice());
        }
        let mut rng = factory.substream(&format!("{namespace}/{replicate}/network"));
        generate_network(spec, n, &ctx, &mut rng)
    };

    for (pos, node) in nodes.iter().enumerate() {
        if net.is_none() && model.network().is_some() && pos == model.network_pos() {
            net = Some(make_net(&names, &cols)?);
        }
        let pvals = {
            let mut ctx = EvalContext::new(n);
            for (nm, c) in names.iter().zip(&cols) {
                ctx.columns.insert(nm.clone(), c.as_slice());
            }
            ctx.scalars = scalars.clone();
            ctx.net = net.as_ref();
            ctx.replace_na_w0 = node.replace_na_w0;
            let mut pvals: Vec<(String, Value)> = Vec::with_capacity(node.params.len());
            for (pname, p) in &node.params {
                let v = match p {
                    DistrParam::Expr(e) => evaluate(e, &ctx)?,
                    DistrParam::List(es) => {
                        let mut list_cols = Vec::with_capacity(es.len());
                        for e in es {
                            list_cols.push(evaluate(e, &ctx)?.into_column(n)?);
                        }
                        Value::Matrix(list_cols)
                    }
                };
                pvals.push((pname.clone(), v));
            }
            pvals
        };
        let mut rng = factory.substream(&format!("{namespace}/{replicate}/node/{}", node.names[0]));
        let new_cols = sample_distribution(node.distr, &pvals, n, &mut rng, &node.names[0])?;
        let new_names: Vec<String> = if new_cols.len() == node.names.len() {
            node.names.clone()
        } else if node.names.len() == 1 {
            (1..=new_cols.len())
                .map(|k| format!("{}.{k}", node.names[0]))
                .collect()
        } else {
            return Err(Error::eval(format!(
                "node {:?}: {} names declared but {} columns sampled",
                node.names[0],
                node.names.len(),
                new_cols.len()
            )));
        };
        names.extend(new_names);
        cols.extend(new_cols);
    }
    if net.is_none() && model.network().is_some() {
        net = Some(make_net(&names, &cols)?);
    }
    Ok(Dataset {
        n,
        names,
        cols,
        network: net,
    })
}

pub fn simulate_observed(model: &DagModel, n: usize, seed: u64) -> Result<Dataset> {
    simulate(model, None, n, seed, "sim", 0)
}

pub fn simulate_action(model: &DagModel, action: &str, n: usize, seed: u64) -> Result<Dataset> {
    simulate(model, Some(action), n, seed, "sim", 0)
}
