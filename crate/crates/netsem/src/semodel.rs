//! Structural equation model assembly: ordered node specs, network
//! attachment, distribution registry and named actions (interventions).

use crate::error::{Error, Result};
use crate::exprlang::{Expr, Value};
use rand::{Rng, RngCore};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeSet;
use std::path::PathBuf;

pub const DEFAULT_N_TEST: usize = 200;

/// Probability-sum slack for categorical nodes; no silent renormalization.
pub const CAT_PROB_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distr {
    /// `rbern(prob)`
    Bern,
    /// `rnorm(mean, sd)`
    Norm,
    /// `rcat.b0(probs)` — categories coded 0..K-1
    CatB0,
    /// `rconst(const)` — degenerate distribution, identity channel
    Const,
}

impl Distr {
    pub fn from_name(name: &str) -> Result<Distr> {
        Ok(match name {
            "rbern" => Distr::Bern,
            "rnorm" => Distr::Norm,
            "rcat.b0" => Distr::CatB0,
            "rconst" => Distr::Const,
            other => return Err(Error::validation(format!("unknown distribution {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Distr::Bern => "rbern",
            Distr::Norm => "rnorm",
            Distr::CatB0 => "rcat.b0",
            Distr::Const => "rconst",
        }
    }

    /// Required parameter names, in evaluation order.
    fn required_params(&self) -> &'static [&'static str] {
        match self {
            Distr::Bern => &["prob"],
            Distr::Norm => &["mean", "sd"],
            Distr::CatB0 => &["probs"],
            Distr::Const => &["const"],
        }
    }
}

#[derive(Debug, Clone)]
pub enum DistrParam {
    Expr(Expr),
    List(Vec<Expr>),
}

impl DistrParam {
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            DistrParam::Expr(e) => vec![e],
            DistrParam::List(es) => es.iter().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeSpec {
    /// Usually one name; several for multivariate nodes.
    pub names: Vec<String>,
    pub distr: Distr,
    pub params: Vec<(String, DistrParam)>,
    pub replace_na_w0: bool,
}

impl NodeSpec {
    pub fn new(name: &str, distr: Distr, params: Vec<(String, DistrParam)>) -> NodeSpec {
        NodeSpec {
            names: vec![name.to_string()],
            distr,
            params,
            replace_na_w0: false,
        }
    }

    pub fn with_replace_na_w0(mut self) -> NodeSpec {
        self.replace_na_w0 = true;
        self
    }

    pub fn param(&self, name: &str) -> Option<&DistrParam> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn dependencies(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (_, p) in &self.params {
            for e in p.exprs() {
                out.extend(e.dependencies());
            }
        }
        out
    }

    pub fn uses_network(&self) -> bool {
        self.params
            .iter()
            .flat_map(|(_, p)| p.exprs())
            .any(|e| e.uses_network())
    }

    fn check_params(&self) -> Result<()> {
        for required in self.distr.required_params() {
            if self.param(required).is_none() {
                return Err(Error::validation(format!(
                    "node {:?}: distribution {} requires parameter {required:?}",
                    self.names[0],
                    self.distr.name()
                )));
            }
        }
        for (name, _) in &self.params {
            if !self.distr.required_params().contains(&name.as_str()) {
                return Err(Error::validation(format!(
                    "node {:?}: distribution {} does not accept parameter {name:?}",
                    self.names[0],
                    self.distr.name()
                )));
            }
        }
        if matches!(self.distr, Distr::CatB0) {
            match self.param("probs") {
                Some(DistrParam::List(es)) if es.len() >= 2 => {}
                _ => {
                    return Err(Error::validation(format!(
                        "node {:?}: rcat.b0 needs a probs list with >= 2 entries",
                        self.names[0]
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetGenerator {
    Gnp,
    SmallWorld,
    /// Load a fixed network from a padded network CSV.
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub name: String,
    pub generator: NetGenerator,
    /// Generator parameters; expressions are evaluated at simulation time
    /// against the nodes defined before the network declaration.
    pub params: Vec<(String, Expr)>,
}

#[derive(Debug, Clone)]
pub struct Action {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
    pub params: Vec<(String, f64)>,
}

impl Action {
    pub fn param_names(&self) -> BTreeSet<String> {
        self.params.iter().map(|(k, _)| k.clone()).collect()
    }
}

/// The assembled SEM: insertion order is the topological order.
#[derive(Debug, Clone)]
pub struct DagModel {
    nodes: Vec<NodeSpec>,
    network: Option<NetworkSpec>,
    /// Number of nodes declared before the network was attached.
    network_pos: usize,
    actions: Vec<Action>,
    finalized: bool,
}

impl Default for DagModel {
    fn default() -> Self {
        Self::new()
    }
}

impl DagModel {
    pub fn new() -> DagModel {
        DagModel {
            nodes: Vec::new(),
            network: None,
            network_pos: 0,
            actions: Vec::new(),
            finalized: false,
        }
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn network(&self) -> Option<&NetworkSpec> {
        self.network.as_ref()
    }

    pub fn network_pos(&self) -> usize {
        self.network_pos
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, name: &str) -> Option<&Action> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn column_names(&self) -> Vec<String> {
        self.nodes.iter().flat_map(|n| n.names.clone()).collect()
    }

    /// Outcome node by default: the last declared node (must be univariate).
    pub fn default_outcome(&self) -> Result<&str> {
        let last = self
            .nodes
            .last()
            .ok_or_else(|| Error::validation("model has no nodes"))?;
        if last.names.len() != 1 {
            return Err(Error::validation(
                "last node is multivariate; designate the outcome explicitly",
            ));
        }
        Ok(&last.names[0])
    }

    fn ensure_mutable(&self) -> Result<()> {
        if self.finalized {
            Err(Error::validation("model is finalized and immutable"))
        } else {
            Ok(())
        }
    }

    pub fn add_node(&mut self, spec: NodeSpec) -> Result<()> {
        self.ensure_mutable()?;
        if spec.names.is_empty() {
            return Err(Error::validation("node must have at least one name"));
        }
        spec.check_params()?;
        let defined: BTreeSet<String> = self.column_names().into_iter().collect();
        for name in &spec.names {
            if defined.contains(name) {
                return Err(Error::validation(format!("duplicate node name {name:?}")));
            }
        }
        for dep in spec.dependencies() {
            if !defined.contains(&dep) {
                return Err(Error::validation(format!(
                    "node {:?} references undefined node {dep:?} (forward reference?)",
                    spec.names[0]
                )));
            }
        }
        if spec.uses_network() && self.network.is_none() {
            return Err(Error::validation(format!(
                "node {:?} uses friend references but no network attached",
                spec.names[0]
            )));
        }
        self.nodes.push(spec);
        Ok(())
    }

    /// Attach (or replace) the network. Returns true when a previously
    /// declared network was overwritten.
    pub fn add_network(&mut self, spec: NetworkSpec) -> Result<bool> {
        self.ensure_mutable()?;
        let defined: BTreeSet<String> = self.column_names().into_iter().collect();
        for (pname, expr) in &spec.params {
            for dep in expr.dependencies() {
                if !defined.contains(&dep) {
                    return Err(Error::validation(format!(
                        "network parameter {pname:?} references undefined node {dep:?}"
                    )));
                }
            }
        }
        let replaced = self.network.is_some();
        self.network = Some(spec);
        self.network_pos = self.nodes.len();
        Ok(replaced)
    }

    pub fn add_action(&mut self, action: Action) -> Result<()> {
        self.ensure_mutable()?;
        if self.action(&action.name).is_some() {
            return Err(Error::validation(format!(
                "duplicate action name {:?}",
                action.name
            )));
        }
        let params = action.param_names();
        for replacement in &action.nodes {
            replacement.check_params()?;
            let pos = self
                .nodes
                .iter()
                .position(|n| n.names == replacement.names)
                .ok_or_else(|| {
                    Error::validation(format!(
                        "action {:?} replaces unknown node {:?}",
                        action.name, replacement.names[0]
                    ))
                })?;
            let prior: BTreeSet<String> = self.nodes[..pos]
                .iter()
                .flat_map(|n| n.names.clone())
                .collect();
            for dep in replacement.dependencies() {
                if !prior.contains(&dep) && !params.contains(&dep) {
                    return Err(Error::validation(format!(
                        "action {:?}, node {:?}: {dep:?} is neither a prior node nor a declared parameter",
                        action.name, replacement.names[0]
                    )));
                }
            }
            if replacement.uses_network() && self.network.is_none() {
                return Err(Error::validation(format!(
                    "action {:?} uses friend references but no network attached",
                    action.name
                )));
            }
        }
        self.actions.push(action);
        Ok(())
    }

    /// Run a throwaway simulation at `n_test` units (base model and every
    /// action) to surface evaluation errors, then freeze the model.
    pub fn finalize(&mut self, n_test: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::validation("cannot finalize a model with no nodes"));
        }
        if self.finalized {
            return Ok(());
        }
        let action_names: Vec<String> = self.actions.iter().map(|a| a.name.clone()).collect();
        crate::simengine::simulate_observed(self, n_test, 0)?;
        for name in &action_names {
            crate::simengine::simulate_action(self, name, n_test, 0)?;
        }
        self.finalized = true;
        Ok(())
    }
}

fn uniform_open(rng: &mut impl RngCore) -> f64 {
    loop {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal quantile draw via inverse CDF, fixed for cross-platform
/// reproducibility.
pub fn draw_normal(rng: &mut impl RngCore) -> f64 {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    std_normal.inverse_cdf(uniform_open(rng))
}

fn param_columns(value: Value, n: usize) -> Vec<Vec<f64>> {
    value.into_columns(n)
}

fn broadcast_to(cols: &[Vec<f64>], k: usize, what: &str, node: &str) -> Result<Vec<Vec<f64>>> {
    match cols.len() {
        len if len == k => Ok(cols.to_vec()),
        1 => Ok(vec![cols[0].clone(); k]),
        len => Err(Error::eval(format!(
            "node {node:?}: parameter {what:?} has {len} columns, expected {k}"
        ))),
    }
}

/// Draw one batch of columns from a named distribution given evaluated
/// parameter values. Multivariate parameters produce one output column per
/// parameter column.
pub fn sample_distribution(
    distr: Distr,
    params: &[(String, Value)],
    n: usize,
    rng: &mut impl Rng,
    node: &str,
) -> Result<Vec<Vec<f64>>> {
    let get = |name: &str| -> Result<&Value> {
        params
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::eval(format!("node {node:?}: missing parameter {name:?}")))
    };
    match distr {
        Distr::Const => Ok(param_columns(get("const")?.clone(), n)),
        Distr::Bern => {
            let probs = param_columns(get("prob")?.clone(), n);
            let mut out = Vec::with_capacity(probs.len());
            for pcol in &probs {
                let mut col = Vec::with_capacity(n);
                for (i, &p) in pcol.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::eval(format!(
                            "node {node:?}, unit {}: rbern prob {p} outside [0,1]",
                            i + 1
                        )));
                    }
                    col.push(if uniform_open(rng) < p { 1.0 } else { 0.0 });
                }
                out.push(col);
            }
            Ok(out)
        }
        Distr::Norm => {
            let means = param_columns(get("mean")?.clone(), n);
            let sds = param_columns(get("sd")?.clone(), n);
            let k = means.len().max(sds.len());
            let means = broadcast_to(&means, k, "mean", node)?;
            let sds = broadcast_to(&sds, k, "sd", node)?;
            let mut out = Vec::with_capacity(k);
            for (mcol, scol) in means.iter().zip(&sds) {
                let mut col = Vec::with_capacity(n);
                for i in 0..n {
                    let sd = scol[i];
                    if !(sd > 0.0) {
                        return Err(Error::eval(format!(
                            "node {node:?}, unit {}: rnorm sd {sd} must be > 0",
                            i + 1
                        )));
                    }
                    col.push(mcol[i] + sd * draw_normal(rng));
                }
                out.push(col);
            }
            Ok(out)
        }
        Distr::CatB0 => {
            let probs = match get("probs")? {
                Value::Scalar(_) => {
                    return Err(Error::eval(format!(
                        "node {node:?}: rcat.b0 probs must be a list"
                    )))
                }
                v => v.clone(),
            };
            let pcols = param_columns(probs, n);
            let k = pcols.len();
            let mut col = Vec::with_capacity(n);
            for i in 0..n {
                let mut total = 0.0;
                for pcol in &pcols {
                    let p = pcol[i];
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::eval(format!(
                            "node {node:?}, unit {}: category prob {p} outside [0,1]",
                            i + 1
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > CAT_PROB_TOL {
                    return Err(Error::eval(format!(
                        "node {node:?}, unit {}: category probs sum to {total}, not 1",
                        i + 1
                    )));
                }
                let u = uniform_open(rng);
                let mut cum = 0.0;
                let mut cat = (k - 1) as f64;
                for (c, pcol) in pcols.iter().enumerate() {
                    cum += pcol[i];
                    if u < cum {
                        cat = c as f64;
                        break;
                    }
                }
                col.push(cat);
            }
            Ok(vec![col])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn expr_param(name: &str, src: &str) -> (String, DistrParam) {
        (name.to_string(), DistrParam::Expr(parse(src).unwrap()))
    }

    fn w_nodes(model: &mut DagModel) {
        model
            .add_node(NodeSpec::new(
                "W1",
                Distr::Bern,
                vec![expr_param("prob", "0.5")],
            ))
            .unwrap();
    }

    #[test]
    fn add_node_checks_dependencies() {
        let mut model = DagModel::new();
        w_nodes(&mut model);
        model
            .add_node(NodeSpec::new(
                "W2",
                Distr::Bern,
                vec![expr_param("prob", "plogis(-0.2 + W1/3)")],
            ))
            .unwrap();
        let err = model
            .add_node(NodeSpec::new(
                "bad",
                Distr::Bern,
                vec![expr_param("prob", "Z")],
            ))
            .unwrap_err();
        assert!(err.to_string().contains("undefined node"));
    }

    #[test]
    fn friend_refs_require_network() {
        let mut model = DagModel::new();
        w_nodes(&mut model);
        let err = model
            .add_node(NodeSpec::new(
                "Y",
                Distr::Bern,
                vec![expr_param("prob", "sum(W1[[1:Kmax]])")],
            ))
            .unwrap_err();
        assert!(err.to_string().contains("no network attached"));
    }

    #[test]
    fn duplicate_node_name_rejected() {
        let mut model = DagModel::new();
        w_nodes(&mut model);
        let err = model
            .add_node(NodeSpec::new(
                "W1",
                Distr::Bern,
                vec![expr_param("prob", "0.5")],
            ))
            .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn second_network_replaces_first() {
        let mut model = DagModel::new();
        let spec = |p: &str| NetworkSpec {
            name: "Net".into(),
            generator: NetGenerator::Gnp,
            params: vec![("p".into(), parse(p).unwrap())],
        };
        assert!(!model.add_network(spec("0.1")).unwrap());
        assert!(model.add_network(spec("0.2")).unwrap());
    }

    #[test]
    fn action_validation() {
        let mut model = DagModel::new();
        w_nodes(&mut model);
        let err = model
            .add_action(Action {
                name: "a".into(),
                nodes: vec![NodeSpec::new(
                    "B",
                    Distr::Const,
                    vec![expr_param("const", "1")],
                )],
                params: vec![],
            })
            .unwrap_err();
        assert!(err.to_string().contains("unknown node"));

        // undeclared parameter in replacement expression
        let err = model
            .add_action(Action {
                name: "b".into(),
                nodes: vec![NodeSpec::new(
                    "W1",
                    Distr::Const,
                    vec![expr_param("const", "shift")],
                )],
                params: vec![],
            })
            .unwrap_err();
        assert!(err.to_string().contains("neither a prior node"));

        model
            .add_action(Action {
                name: "static1".into(),
                nodes: vec![NodeSpec::new(
                    "W1",
                    Distr::Const,
                    vec![expr_param("const", "1")],
                )],
                params: vec![],
            })
            .unwrap();
    }

    #[test]
    fn rbern_prob_zero_is_all_zeros() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let cols = sample_distribution(
            Distr::Bern,
            &[("prob".into(), Value::Scalar(0.0))],
            100,
            &mut rng,
            "x",
        )
        .unwrap();
        assert!(cols[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rconst_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let col = vec![1.0, 2.5, -3.0];
        let cols = sample_distribution(
            Distr::Const,
            &[("const".into(), Value::column(col.clone()))],
            3,
            &mut rng,
            "x",
        )
        .unwrap();
        assert_eq!(cols[0], col);
    }

    #[test]
    fn rcat_b0_frequencies_match_probs() {
        let probs = [0.0494, 0.1823, 0.2806, 0.2680, 0.1651, 0.0546];
        let params = vec![(
            "probs".into(),
            Value::Matrix(probs.iter().map(|&p| vec![p]).collect()),
        )];
        let n = 1;
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let draws = 1_000_000usize;
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            let cols = sample_distribution(Distr::CatB0, &params, n, &mut rng, "W1").unwrap();
            counts[cols[0][0] as usize] += 1;
        }
        for (c, &p) in counts.iter().zip(&probs) {
            let freq = *c as f64 / draws as f64;
            assert!((freq - p).abs() < 0.003, "freq {freq} vs prob {p}");
        }
    }

    #[test]
    fn rcat_b0_rejects_bad_prob_sum() {
        let params = vec![(
            "probs".into(),
            Value::Matrix(vec![vec![0.5], vec![0.4]]),
        )];
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(sample_distribution(Distr::CatB0, &params, 1, &mut rng, "W").is_err());
    }

    #[test]
    fn rnorm_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 100_000;
        let cols = sample_distribution(
            Distr::Norm,
            &[
                ("mean".into(), Value::Scalar(2.0)),
                ("sd".into(), Value::Scalar(3.0)),
            ],
            n,
            &mut rng,
            "x",
        )
        .unwrap();
        let m = cols[0].iter().sum::<f64>() / n as f64;
        let v = cols[0].iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        // within 5 standard errors of (mean, var)
        let se_mean = 3.0 / (n as f64).sqrt();
        let se_var = (2.0f64).sqrt() * 9.0 / (n as f64).sqrt();
        assert!((m - 2.0).abs() < 5.0 * se_mean, "mean {m}");
        assert!((v - 9.0).abs() < 5.0 * se_var, "var {v}");
    }

    #[test]
    fn rnorm_rejects_bad_sd() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let err = sample_distribution(
            Distr::Norm,
            &[
                ("mean".into(), Value::Scalar(0.0)),
                ("sd".into(), Value::Scalar(0.0)),
            ],
            1,
            &mut rng,
            "x",
        )
        .unwrap_err();
        assert!(err.to_string().contains("sd"));
    }
}
