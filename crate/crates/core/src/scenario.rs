//! Config-driven scenario runner behind the `pomdpkit` binary.
//!
//! A scenario produces a list of in-memory artifacts which are then written
//! to the output directory together with `manifest.json`. Every random
//! draw comes from `RngStream`s keyed by the config seed, so artifacts do
//! not depend on the thread count.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::csv::{num, CsvTable};
use crate::detect::{detector_trace, detector_trace_csv, sequential_detection_dp, DetectionDpConfig, DetectorKind, DetectorState};
use crate::dp::{value_iteration_grid, PomdpModel};
use crate::error::Error;
use crate::estimate::{run_estimation, EstimatorConfig, GaussianHmm};
use crate::games::{
    ce_violation, correlated_eq_find, matrix_game_value, regret_matching_run, single_controller_solve, MatrixGame,
    NormalFormGame, RegretConfig, SingleControllerGame,
};
use crate::hmm::{run_sensitivity_experiment, HmmModel};
use crate::markov::{Belief, ObservationMatrix, StochasticMatrix};
use crate::orders::{fosd_dominates, is_ihr, is_tp2, mlr_dominates, OrderVerdict};
use crate::rng::{replicate, RngStream};
use crate::search::{search_invariant, search_ruler_run, BernoulliObjective, SearchConfig};
use crate::social::{simulate_limited_memory, simulate_vanilla, social_trace_csv, SocialModel};

pub const SCENARIOS: [&str; 9] = ["filter", "sensitivity", "orders", "social", "detect", "dp", "game", "ruler", "estimate"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("invalid config at {pointer:?}: {message}")]
    ConfigValidation { pointer: String, message: String },
    #[error("scenario {scenario}: {source}")]
    Module {
        scenario: String,
        #[source]
        source: Error,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::ConfigValidation { .. } | ScenarioError::Io { .. } => 2,
            ScenarioError::Module { .. } => 3,
            ScenarioError::UnknownScenario(_) => 4,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        ScenarioError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub model: Value,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn empty_object() -> Value {
    json!({})
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_artifacts(cfg: &ScenarioConfig, artifacts: &[Artifact]) -> Self {
        let mut files: Vec<ManifestEntry> = artifacts
            .iter()
            .map(|a| ManifestEntry { name: a.name.clone(), sha256: sha256_hex(&a.contents), bytes: a.contents.len() })
            .collect();
        files.sort_by(|a, b| a.name.cmp(&b.name));
        Manifest { scenario: cfg.scenario.clone(), seed: cfg.seed, files }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn pointer_of(path: &serde_path_to_error::Path, prefix: &str) -> String {
    use serde_path_to_error::Segment;
    let mut out = prefix.to_string();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

fn parse_at<T: DeserializeOwned>(v: &Value, prefix: &str) -> Result<T, ScenarioError> {
    serde_path_to_error::deserialize(v).map_err(|e| ScenarioError::ConfigValidation {
        pointer: pointer_of(e.path(), prefix),
        message: e.into_inner().to_string(),
    })
}

/// Parses a JSON config; the error pointer locates the offending field.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| ScenarioError::ConfigValidation {
        pointer: pointer_of(e.path(), ""),
        message: e.into_inner().to_string(),
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    parse_config(&text)
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    out: Vec<Artifact>,
}

impl Ctx<'_> {
    fn model<T: DeserializeOwned>(&self) -> Result<T, ScenarioError> {
        parse_at(&self.cfg.model, "/model")
    }

    fn params<T: DeserializeOwned>(&self) -> Result<T, ScenarioError> {
        parse_at(&self.cfg.params, "/params")
    }

    fn module<T>(&self, r: crate::Result<T>) -> Result<T, ScenarioError> {
        r.map_err(|source| ScenarioError::Module { scenario: self.cfg.scenario.clone(), source })
    }

    fn invalid_model(&self, r: crate::Result<()>) -> Result<(), ScenarioError> {
        r.map_err(|e| ScenarioError::ConfigValidation { pointer: "/model".into(), message: e.to_string() })
    }

    fn rng(&self) -> RngStream {
        RngStream::new(self.cfg.seed, 0)
    }

    fn csv(&mut self, name: &str, t: &CsvTable) {
        self.out.push(Artifact { name: name.into(), contents: t.render().into_bytes() });
    }

    fn json(&mut self, name: &str, v: &Value) {
        let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
        s.push('\n');
        self.out.push(Artifact { name: name.into(), contents: s.into_bytes() });
    }
}

/// Runs a scenario in memory and returns its artifacts (manifest excluded).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<Artifact>, ScenarioError> {
    let mut ctx = Ctx { cfg, out: Vec::new() };
    match cfg.scenario.as_str() {
        "filter" => filter(&mut ctx)?,
        "sensitivity" => sensitivity(&mut ctx)?,
        "orders" => orders(&mut ctx)?,
        "social" => social(&mut ctx)?,
        "detect" => detect(&mut ctx)?,
        "dp" => dp(&mut ctx)?,
        "game" => game(&mut ctx)?,
        "ruler" => ruler(&mut ctx)?,
        "estimate" => estimate(&mut ctx)?,
        other => return Err(ScenarioError::UnknownScenario(other.to_string())),
    }
    Ok(ctx.out)
}

/// Writes artifacts and `manifest.json` into `dir`.
pub fn write_artifacts(dir: &Path, cfg: &ScenarioConfig, artifacts: &[Artifact]) -> Result<Manifest, ScenarioError> {
    fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    for a in artifacts {
        let p = dir.join(&a.name);
        fs::write(&p, &a.contents).map_err(|e| ScenarioError::io(&p, e))?;
    }
    let manifest = Manifest::from_artifacts(cfg, artifacts);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let p = dir.join("manifest.json");
    fs::write(&p, text).map_err(|e| ScenarioError::io(&p, e))?;
    Ok(manifest)
}

fn verdict(v: &OrderVerdict) -> Value {
    serde_json::to_value(v).expect("verdict serializes")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepsParams {
    #[serde(default = "hundred")]
    steps: usize,
}

fn hundred() -> usize {
    100
}

fn filter(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    let model: HmmModel = ctx.model()?;
    ctx.invalid_model(model.validate())?;
    let p: StepsParams = ctx.params()?;
    let mut rng = ctx.rng();
    let (states, ys) = model.simulate(p.steps, &mut rng);
    let (beliefs, loglik) = ctx.module(model.filter(&ys))?;
    let mut header = vec!["k".to_string(), "state".into(), "y".into()];
    header.extend((1..=model.states()).map(|i| format!("pi_{i}")));
    let mut t = CsvTable::new(header);
    for (k, pi) in beliefs.iter().enumerate() {
        let mut row = vec![(k + 1).to_string(), states[k + 1].to_string(), ys[k].to_string()];
        row.extend(pi.as_slice().iter().map(|v| num(*v)));
        t.push(row);
    }
    ctx.csv("filter.csv", &t);
    ctx.json("summary.json", &json!({ "steps": p.steps, "log_likelihood": loglik }));
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SensitivityParams {
    p_bar: StochasticMatrix,
    #[serde(default = "thousand")]
    steps: usize,
    #[serde(default = "one")]
    runs: usize,
}

fn thousand() -> usize {
    1000
}

fn one() -> usize {
    1
}

fn sensitivity(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    let model: HmmModel = ctx.model()?;
    ctx.invalid_model(model.validate())?;
    let p: SensitivityParams = ctx.params()?;
    let reports = replicate(ctx.cfg.seed, p.runs, |mut rng| run_sensitivity_experiment(&model, &p.p_bar, p.steps, &mut rng));
    let mut summary = Vec::new();
    let mut epsilon = 0.0;
    for (r, rep) in reports.into_iter().enumerate() {
        let rep = ctx.module(rep)?;
        epsilon = rep.epsilon;
        summary.push(json!({ "run": r, "max_observed": rep.max_observed(), "max_bound": rep.max_bound() }));
        ctx.csv(&format!("sensitivity_{r:03}.csv"), &rep.to_csv());
    }
    ctx.json(
        "summary.json",
        &json!({ "epsilon": epsilon, "dobrushin_p_bar": p.p_bar.dobrushin(), "runs": summary }),
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OrdersModel {
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pairs: Vec<[Belief; 2]>,
    #[serde(default)]
    lifetimes: Vec<Belief>,
}

fn orders(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    let m: OrdersModel = ctx.model()?;
    let tp2 = match &m.matrix {
        Some(mat) => Some(verdict(&ctx.module(is_tp2(mat))?)),
        None => None,
    };
    let mut pairs = Vec::new();
    for [p, q] in &m.pairs {
        let mlr = ctx.module(mlr_dominates(p, q))?;
        let fosd = ctx.module(fosd_dominates(p, q))?;
        pairs.push(json!({ "mlr": verdict(&mlr), "fosd": verdict(&fosd) }));
    }
    let ihr: Vec<Value> = m.lifetimes.iter().map(|pmf| verdict(&is_ihr(pmf))).collect();
    ctx.json("orders.json", &json!({ "tp2": tp2, "pairs": pairs, "ihr": ihr }));
    Ok(())
}

#[derive(Deserialize, Default, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Protocol {
    #[default]
    Vanilla,
    LimitedMemory,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SocialParams {
    #[serde(default)]
    protocol: Protocol,
    #[serde(default)]
    theta: usize,
    #[serde(default = "hundred")]
    agents: usize,
    #[serde(default = "one")]
    sample_size: usize,
}

fn social(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    let model: SocialModel = ctx.model()?;
    let p: SocialParams = ctx.params()?;
    if p.theta > 1 {
        return Err(ScenarioError::ConfigValidation { pointer: "/params/theta".into(), message: "state must be 0 or 1".into() });
    }
    let mut rng = ctx.rng();
    let rows = match p.protocol {
        Protocol::Vanilla => ctx.module(simulate_vanilla(&model, p.theta, p.agents, &mut rng))?,
        Protocol::LimitedMemory => ctx.module(simulate_limited_memory(&model, p.sample_size, p.theta, p.agents, &mut rng))?.0,
    };
    let zeros = rows.iter().filter(|r| r.action == 0).count();
    let last_change = rows.windows(2).rposition(|w| w[0].action != w[1].action).map_or(0, |i| i + 1);
    ctx.csv("social.csv", &social_trace_csv(&rows));
    ctx.json(
        "summary.json",
        &json!({ "agents": rows.len(), "action_0": zeros, "action_1": rows.len() - zeros, "last_action_change": last_change }),
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectModel {
    /// Row 0 is the post-change state.
    observations: ObservationMatrix,
    change_prob: f64,
    detector: DetectorKind,
    threshold: f64,
    #[serde(default)]
    r0: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SequentialParams {
    misclassification: f64,
    measurement: f64,
    #[serde(default = "grid_points")]
    grid_points: usize,
}

fn grid_points() -> usize {
    1001
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectParams {
    #[serde(default = "two_hundred")]
    steps: usize,
    #[serde(default)]
    sequential: Option<SequentialParams>,
}

fn two_hundred() -> usize {
    200
}

fn detect(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    let m: DetectModel = ctx.model()?;
    let p: DetectParams = ctx.params()?;
    if m.observations.states() != 2 {
        return Err(ScenarioError::ConfigValidation {
            pointer: "/model/observations".into(),
            message: "change detection needs exactly two states".into(),
        });
    }
    if !(m.change_prob > 0.0 && m.change_prob < 1.0) {
        return Err(ScenarioError::ConfigValidation {
            pointer: "/model/change_prob".into(),
            message: format!("{} outside (0, 1)", m.change_prob),
        });
    }
    let state0 = ctx.module(DetectorState::new(m.detector, m.r0))?;
    let mut rng = ctx.rng();
    // Geometric change time on 1, 2, ...; state 1 before, state 0 after.
    let mut change = None;
    let mut ys = Vec::with_capacity(p.steps);
    for k in 1..=p.steps {
        if change.is_none() && rng.uniform() < m.change_prob {
            change = Some(k);
        }
        let x = if change.is_some() { 0 } else { 1 };
        ys.push(m.observations.sample(x, &mut rng));
    }
    let rows = ctx.module(detector_trace(&ys, &state0, &m.observations, m.threshold))?;
    let stop = rows.last().filter(|r| r.stopped).map(|r| r.k);
    ctx.csv("trace.csv", &detector_trace_csv(&rows));
    let mut summary = json!({ "change_time": change, "stop_time": stop });
    if let Some(sp) = p.sequential {
        let dp_cfg = DetectionDpConfig { grid_points: sp.grid_points, ..DetectionDpConfig::new(sp.misclassification, sp.measurement) };
        let sol = ctx.module(sequential_detection_dp(&dp_cfg, &m.observations))?;
        ctx.csv("sequential.csv", &sol.to_csv());
        summary["sequential"] = json!({
            "lower": sol.lower,
            "upper": sol.upper,
            "continue_is_interval": sol.continue_is_interval(),
            "sweeps": sol.sweeps,
        });
    }
    ctx.json("summary.json", &summary);
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DpParams {
    #[serde(default = "five")]
    horizon: usize,
    #[serde(default = "twenty")]
    resolution: usize,
}

fn five() -> usize {
    5
}

fn twenty() -> usize {
    20
}

fn dp(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    let model: PomdpModel = ctx.model()?;
    let p: DpParams = ctx.params()?;
    let seq = ctx.module(value_iteration_grid(&model, p.horizon, p.resolution))?;
    let concavity: Vec<f64> =
        seq.stages.iter().map(|s| seq.grid.midpoint_concavity_violation(&s.values)).collect();
    ctx.csv("values.csv", &seq.to_csv());
    ctx.json(
        "summary.json",
        &json!({ "horizon": p.horizon, "grid_points": seq.grid.len(), "concavity_violation": concavity }),
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GameModel {
    Matrix { payoffs: MatrixGame },
    SingleController(SingleControllerGame),
    NormalForm(NormalFormGame),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegretParams {
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "ten_thousand")]
    steps: usize,
    #[serde(default)]
    mu: Option<f64>,
    #[serde(default = "hundred")]
    record_every: usize,
}

fn default_epsilon() -> f64 {
    0.01
}

fn ten_thousand() -> usize {
    10_000
}

fn game(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    match ctx.model::<GameModel>()? {
        GameModel::Matrix { payoffs } => {
            let sol = ctx.module(matrix_game_value(&payoffs))?;
            ctx.json(
                "value.json",
                &json!({ "value": sol.value, "x": sol.x.as_slice(), "y": sol.y.as_slice() }),
            );
        }
        GameModel::SingleController(g) => {
            let sol = ctx.module(single_controller_solve(&g))?;
            ctx.json(
                "value.json",
                &json!({
                    "value": sol.value,
                    "q": sol.q,
                    "p": sol.p,
                    "primal_objective": sol.primal_objective,
                    "dual_objective": sol.dual_objective,
                    "degenerate_states": sol.degenerate_states,
                }),
            );
        }
        GameModel::NormalForm(g) => {
            let p: RegretParams = ctx.params()?;
            let cfg = RegretConfig { epsilon: p.epsilon, steps: p.steps, mu: p.mu, record_every: p.record_every };
            let mut rng = ctx.rng();
            let run = ctx.module(regret_matching_run(&g, &cfg, &mut rng))?;
            let ce = ctx.module(correlated_eq_find(&g))?;
            let final_violation = ctx.module(ce_violation(&run.final_z, &g))?;
            ctx.csv("trajectory.csv", &run.to_csv());
            ctx.json(
                "correlated.json",
                &json!({
                    "mu": run.mu,
                    "final_z": run.final_z.as_slice(),
                    "final_ce_violation": final_violation,
                    "lp_correlated_equilibrium": ce.as_slice(),
                }),
            );
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulerParams {
    #[serde(default = "ten_thousand")]
    steps: usize,
    #[serde(default)]
    antithetic: bool,
}

fn ruler(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    let obj: BernoulliObjective = ctx.model()?;
    ctx.invalid_model(BernoulliObjective::new(obj.m.clone()).map(|_| ()))?;
    let p: RulerParams = ctx.params()?;
    let cfg = SearchConfig { steps: p.steps, antithetic: p.antithetic, record_steps: true };
    let mut rng = ctx.rng();
    let trace = ctx.module(search_ruler_run(&obj, &cfg, &mut rng))?;
    let invariant = search_invariant(&obj.m).ok();
    ctx.csv("trace.csv", &trace.to_csv());
    ctx.json(
        "summary.json",
        &json!({
            "visits": trace.visits,
            "occupation": trace.occupation(),
            "estimate": trace.estimate,
            "invariant": invariant,
        }),
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateParams {
    estimator: EstimatorConfig,
    g0: Vec<f64>,
    #[serde(default = "ten_thousand")]
    steps: usize,
    #[serde(default = "ten")]
    record_every: usize,
}

fn ten() -> usize {
    10
}

fn estimate(ctx: &mut Ctx) -> Result<(), ScenarioError> {
    let truth: GaussianHmm = ctx.model()?;
    ctx.invalid_model(truth.validate())?;
    let p: EstimateParams = ctx.params()?;
    let mut rng = ctx.rng();
    let run = ctx.module(run_estimation(&truth, p.g0, &p.estimator, p.steps, p.record_every, &mut rng))?;
    ctx.csv("trajectory.csv", &run.to_csv());
    ctx.json(
        "summary.json",
        &json!({
            "final_levels": run.final_estimate.g,
            "sorted_error": run.sorted_error(&truth.levels),
            "floor_events": run.floor_events,
        }),
    );
    Ok(())
}
