//! Scenario files: TOML documents declaring the model (nodes, network,
//! actions) plus optional estimation, experiment and sweep sections.
//! Unknown keys are rejected so typos fail loudly.

use crate::error::{Error, Result};
use crate::estimators::bootstrap::Estimator;
use crate::estimators::experiment::ExperimentConfig;
use crate::estimators::{
    summaries::check_no_collision, EstimationConfig, InterventionDef, RegressionSpec, SummaryDef,
    DEFAULT_MAX_PER_BIN, DEFAULT_WEIGHT_CAP,
};
use crate::exprlang::parse;
use crate::semodel::{
    Action, DagModel, Distr, DistrParam, NetGenerator, NetworkSpec, NodeSpec, DEFAULT_N_TEST,
};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, rename = "node")]
    nodes: Vec<NodeToml>,
    network: Option<NetworkToml>,
    #[serde(default, rename = "action")]
    actions: Vec<ActionToml>,
    estimation: Option<EstimationToml>,
    experiment: Option<ExperimentToml>,
    sweep: Option<SweepToml>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeToml {
    name: String,
    distr: String,
    #[serde(default, rename = "replaceNAw0")]
    replace_na_w0: bool,
    #[serde(default)]
    params: BTreeMap<String, ParamToml>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ParamToml {
    One(String),
    List(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkToml {
    #[serde(default = "default_net_name")]
    name: String,
    generator: String,
    /// Node after which the network is realized; default is before any node.
    after: Option<String>,
    file: Option<PathBuf>,
    #[serde(default)]
    params: BTreeMap<String, String>,
}

fn default_net_name() -> String {
    "Net".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionToml {
    name: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default, rename = "node")]
    nodes: Vec<NodeToml>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryToml {
    name: String,
    formula: String,
    #[serde(default, rename = "replaceNAw0")]
    replace_na_w0: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExposureToml {
    name: String,
    formula: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterventionToml {
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(rename = "exposure")]
    exposures: Vec<ExposureToml>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimationToml {
    outcome: String,
    qform: String,
    hform: String,
    baseline: Vec<String>,
    exposures: Vec<String>,
    #[serde(default = "default_max_per_bin")]
    max_per_bin: usize,
    #[serde(default = "default_weight_cap")]
    weight_cap: f64,
    #[serde(default)]
    n_bootstrap: usize,
    #[serde(default, rename = "summary")]
    summaries: Vec<SummaryToml>,
    intervention: InterventionToml,
}

fn default_max_per_bin() -> usize {
    DEFAULT_MAX_PER_BIN
}

fn default_weight_cap() -> f64 {
    DEFAULT_WEIGHT_CAP
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentToml {
    #[serde(default)]
    scenario: String,
    n: usize,
    reps: usize,
    seed: u64,
    truth_action: String,
    truth_reps: usize,
    #[serde(default = "default_estimators")]
    estimators: Vec<String>,
}

fn default_estimators() -> Vec<String> {
    vec!["gcomp".into(), "ipw".into()]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepToml {
    node: String,
    param: String,
    template: String,
    start: Vec<f64>,
    end: Vec<f64>,
    scenarios: usize,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub node: String,
    pub param: String,
    pub template: String,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub scenarios: usize,
}

#[derive(Debug)]
pub struct Scenario {
    file: ScenarioFile,
    pub model: DagModel,
    pub estimation: Option<EstimationConfig>,
    pub experiment: Option<ExperimentConfig>,
    pub sweep: Option<SweepSpec>,
}

fn parse_node(t: &NodeToml) -> Result<NodeSpec> {
    let distr = Distr::from_name(&t.distr)?;
    let mut params = Vec::with_capacity(t.params.len());
    for (k, v) in &t.params {
        let p = match v {
            ParamToml::One(src) => DistrParam::Expr(parse(src).map_err(|e| {
                Error::validation(format!("node {:?}, param {k:?}: {e}", t.name))
            })?),
            ParamToml::List(srcs) => {
                let mut exprs = Vec::with_capacity(srcs.len());
                for src in srcs {
                    exprs.push(parse(src).map_err(|e| {
                        Error::validation(format!("node {:?}, param {k:?}: {e}", t.name))
                    })?);
                }
                DistrParam::List(exprs)
            }
        };
        params.push((k.clone(), p));
    }
    let mut spec = NodeSpec::new(&t.name, distr, params);
    if t.replace_na_w0 {
        spec = spec.with_replace_na_w0();
    }
    Ok(spec)
}

fn parse_network(t: &NetworkToml, base_dir: &Path) -> Result<NetworkSpec> {
    let generator = match t.generator.as_str() {
        "gnp" => NetGenerator::Gnp,
        "small_world" => NetGenerator::SmallWorld,
        "file" => {
            let f = t.file.as_ref().ok_or_else(|| {
                Error::validation("network generator \"file\" requires a file path")
            })?;
            let path = if f.is_absolute() {
                f.clone()
            } else {
                base_dir.join(f)
            };
            NetGenerator::File(path)
        }
        other => {
            return Err(Error::validation(format!(
                "unknown network generator {other:?}"
            )))
        }
    };
    if t.file.is_some() && t.generator != "file" {
        return Err(Error::validation(
            "network file path given but generator is not \"file\"",
        ));
    }
    let mut params = Vec::with_capacity(t.params.len());
    for (k, v) in &t.params {
        params.push((
            k.clone(),
            parse(v).map_err(|e| Error::validation(format!("network param {k:?}: {e}")))?,
        ));
    }
    Ok(NetworkSpec {
        name: t.name.clone(),
        generator,
        params,
    })
}

/// Assemble and finalize the model, optionally overriding one node parameter
/// with a substituted formula (used by the sweep).
fn build_model(
    file: &ScenarioFile,
    base_dir: &Path,
    override_param: Option<(&str, &str, &str)>,
) -> Result<DagModel> {
    let mut model = DagModel::new();
    let net_after = file.network.as_ref().and_then(|n| n.after.clone());
    if let Some(net) = &file.network {
        if net_after.is_none() {
            model.add_network(parse_network(net, base_dir)?)?;
        }
    }
    for t in &file.nodes {
        let mut spec = parse_node(t)?;
        if let Some((node, param, formula)) = override_param {
            if t.name == node {
                let expr = parse(formula)?;
                match spec.params.iter_mut().find(|(k, _)| k == param) {
                    Some((_, v)) => *v = DistrParam::Expr(expr),
                    None => {
                        return Err(Error::validation(format!(
                            "sweep: node {node:?} has no parameter {param:?}"
                        )))
                    }
                }
            }
        }
        model.add_node(spec)?;
        if net_after.as_deref() == Some(t.name.as_str()) {
            let net = file.network.as_ref().unwrap();
            model.add_network(parse_network(net, base_dir)?)?;
        }
    }
    if let Some(after) = &net_after {
        if model.network().is_none() {
            return Err(Error::validation(format!(
                "network is declared after unknown node {after:?}"
            )));
        }
    }
    for a in &file.actions {
        let mut nodes = Vec::with_capacity(a.nodes.len());
        for t in &a.nodes {
            nodes.push(parse_node(t)?);
        }
        model.add_action(Action {
            name: a.name.clone(),
            nodes,
            params: a.params.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        })?;
    }
    model.finalize(DEFAULT_N_TEST)?;
    Ok(model)
}

fn parse_estimation(t: &EstimationToml, model: &DagModel) -> Result<EstimationConfig> {
    let qform = RegressionSpec::parse(&t.qform)?;
    let hform = RegressionSpec::parse(&t.hform)?;
    let mut summaries = Vec::with_capacity(t.summaries.len());
    for s in &t.summaries {
        let expr = parse(&s.formula)
            .map_err(|e| Error::validation(format!("summary {:?}: {e}", s.name)))?;
        let mut def = SummaryDef::new(&s.name, expr);
        if s.replace_na_w0 {
            def = def.with_replace_na_w0();
        }
        summaries.push(def);
    }
    let model_cols = model.column_names();
    check_no_collision(&model_cols, &summaries)?;
    let mut known: Vec<String> = model_cols;
    known.extend(summaries.iter().map(|s| s.name.clone()));
    for (label, terms) in [
        ("qform", &qform.rhs),
        ("qform", &qform.lhs),
        ("hform", &hform.rhs),
        ("hform", &hform.lhs),
        ("baseline", &t.baseline),
        ("exposures", &t.exposures),
    ] {
        for term in terms {
            if !known.contains(term) {
                return Err(Error::validation(format!(
                    "{label} references unknown column {term:?}"
                )));
            }
        }
    }
    let mut exposures = Vec::with_capacity(t.intervention.exposures.len());
    for e in &t.intervention.exposures {
        if !t.exposures.contains(&e.name) {
            return Err(Error::validation(format!(
                "intervention remaps {:?}, which is not a declared exposure",
                e.name
            )));
        }
        exposures.push((
            e.name.clone(),
            parse(&e.formula)
                .map_err(|er| Error::validation(format!("intervention {:?}: {er}", e.name)))?,
        ));
    }
    if exposures.is_empty() {
        return Err(Error::validation("intervention has no exposure formulas"));
    }
    Ok(EstimationConfig {
        outcome: t.outcome.clone(),
        qform,
        hform,
        summaries,
        intervention: InterventionDef {
            exposures,
            params: t.intervention.params.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        },
        baseline: t.baseline.clone(),
        exposures: t.exposures.clone(),
        max_per_bin: t.max_per_bin,
        weight_cap: t.weight_cap,
        n_bootstrap: t.n_bootstrap,
    })
}

fn parse_experiment(t: &ExperimentToml, model: &DagModel) -> Result<ExperimentConfig> {
    if model.action(&t.truth_action).is_none() {
        return Err(Error::validation(format!(
            "experiment truth_action {:?} is not a declared action",
            t.truth_action
        )));
    }
    let mut estimators = Vec::with_capacity(t.estimators.len());
    for name in &t.estimators {
        estimators.push(match name.as_str() {
            "gcomp" => Estimator::Gcomp,
            "ipw" => Estimator::Ipw,
            other => {
                return Err(Error::validation(format!("unknown estimator {other:?}")))
            }
        });
    }
    Ok(ExperimentConfig {
        scenario: t.scenario.clone(),
        n: t.n,
        reps: t.reps,
        seed: t.seed,
        truth_action: t.truth_action.clone(),
        truth_reps: t.truth_reps,
        estimators,
    })
}

impl Scenario {
    pub fn from_str_with_dir(text: &str, base_dir: &Path) -> Result<Scenario> {
        let file: ScenarioFile = toml::from_str(text)
            .map_err(|e| Error::validation(format!("scenario parse error: {e}")))?;
        if file.nodes.is_empty() {
            return Err(Error::validation("scenario declares no nodes"));
        }
        let model = build_model(&file, base_dir, None)?;
        let estimation = file
            .estimation
            .as_ref()
            .map(|t| parse_estimation(t, &model))
            .transpose()?;
        let experiment = file
            .experiment
            .as_ref()
            .map(|t| parse_experiment(t, &model))
            .transpose()?;
        let sweep = match &file.sweep {
            Some(s) => {
                if s.start.len() != s.end.len() || s.start.is_empty() {
                    return Err(Error::validation(
                        "sweep start/end must have the same nonzero length",
                    ));
                }
                if s.scenarios < 2 {
                    return Err(Error::validation("sweep needs at least 2 scenarios"));
                }
                Some(SweepSpec {
                    node: s.node.clone(),
                    param: s.param.clone(),
                    template: s.template.clone(),
                    start: s.start.clone(),
                    end: s.end.clone(),
                    scenarios: s.scenarios,
                })
            }
            None => None,
        };
        let scn = Scenario {
            file,
            model,
            estimation,
            experiment,
            sweep,
        };
        if let Some(sw) = &scn.sweep {
            // fail at load time if the template or node/param is unusable
            scn.sweep_model(sw, &sw.start)?;
        }
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Scenario::from_str_with_dir(&text, dir)
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
    }

    /// Model with the sweep template instantiated at one coefficient vector.
    pub fn sweep_model(&self, sweep: &SweepSpec, coefs: &[f64]) -> Result<DagModel> {
        let formula = crate::estimators::experiment::fill_template(&sweep.template, coefs)?;
        build_model(
            &self.file,
            Path::new("."),
            Some((&sweep.node, &sweep.param, &formula)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
[[node]]
name = "W"
distr = "rbern"
params = { prob = "0.5" }

[network]
name = "Net"
generator = "gnp"
params = { p = "0.05" }

[[node]]
name = "Aobs"
distr = "rnorm"
params = { mean = "0.4*W", sd = "1" }

[[node]]
name = "A"
distr = "rconst"
params = { const = "Aobs" }

[[node]]
name = "Y"
distr = "rbern"
replaceNAw0 = true
params = { prob = "plogis(-0.5 + 0.8*A + 0.6*W + 0.1*sum(A[[1:Kmax]]))" }

[[action]]
name = "shift"
params = { shift = 0.5 }

[[action.node]]
name = "A"
distr = "rconst"
params = { const = "Aobs + shift" }

[estimation]
outcome = "Y"
qform = "Y ~ A + sumA + W"
hform = "A ~ W"
baseline = ["W"]
exposures = ["A"]
n_bootstrap = 20

[[estimation.summary]]
name = "sumA"
formula = "sum(A[[1:Kmax]])"
replaceNAw0 = true

[estimation.intervention]
params = { shift = 0.5 }

[[estimation.intervention.exposure]]
name = "A"
formula = "A + shift"

[experiment]
n = 200
reps = 10
seed = 3
truth_action = "shift"
truth_reps = 50
"#;

    fn load_toy(extra: &str) -> Result<Scenario> {
        let text = format!("{TOY}\n{extra}");
        Scenario::from_str_with_dir(&text, Path::new("."))
    }

    #[test]
    fn toy_scenario_loads() {
        let s = load_toy("").unwrap();
        assert!(s.model.is_finalized());
        assert_eq!(s.model.column_names(), vec!["W", "Aobs", "A", "Y"]);
        // no `after` key: the network is realized before any node
        assert_eq!(s.model.network_pos(), 0);
        let est = s.estimation.as_ref().unwrap();
        assert_eq!(est.qform.rhs, vec!["A", "sumA", "W"]);
        assert_eq!(est.n_bootstrap, 20);
        assert_eq!(est.max_per_bin, DEFAULT_MAX_PER_BIN);
        let exp = s.experiment.as_ref().unwrap();
        assert_eq!(exp.estimators.len(), 2);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = load_toy("[bogus]\nx = 1\n").unwrap_err();
        assert!(err.to_string().contains("scenario parse error"));
    }

    #[test]
    fn network_after_named_node() {
        let text = TOY.replace(
            "generator = \"gnp\"",
            "generator = \"gnp\"\nafter = \"W\"",
        );
        let s = Scenario::from_str_with_dir(&text, Path::new(".")).unwrap();
        assert_eq!(s.model.network_pos(), 1);
    }

    #[test]
    fn bad_formula_is_a_load_error() {
        let text = TOY.replace("\"0.4*W\"", "\"0.4**W\"");
        assert!(Scenario::from_str_with_dir(&text, Path::new(".")).is_err());
    }

    #[test]
    fn unknown_qform_column_rejected() {
        let text = TOY.replace("qform = \"Y ~ A + sumA + W\"", "qform = \"Y ~ A + Zed\"");
        let err = Scenario::from_str_with_dir(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("Zed"));
    }

    #[test]
    fn unknown_truth_action_rejected() {
        let text = TOY.replace("truth_action = \"shift\"", "truth_action = \"nope\"");
        assert!(Scenario::from_str_with_dir(&text, Path::new(".")).is_err());
    }

    #[test]
    fn sweep_builds_models() {
        let s = load_toy(
            r#"
[sweep]
node = "Y"
param = "prob"
template = "plogis(-0.5 + 0.8*A + {c1}*W + {c2}*sum(A[[1:Kmax]]))"
start = [0.6, 0.1]
end = [-0.6, 0.3]
scenarios = 3
"#,
        )
        .unwrap();
        let sw = s.sweep.as_ref().unwrap();
        let m = s.sweep_model(sw, &sw.end).unwrap();
        assert!(m.is_finalized());
    }
}
