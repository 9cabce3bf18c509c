//! Experiment configuration: a TOML file with one table per concern.
//!
//! ```toml
//! [experiment]
//! mode = "flit"          # pulse | flit | analytic
//! topology = "cmesh32"   # router2 | butterfly4 | mesh8 | cmesh32 | bfly32
//!
//! [epoch]
//! data_period = 300
//!
//! [traffic]
//! pattern = "tornado"
//! rate = 0.4
//! seed = 7
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flitsim::PatternKind;
use crate::packet::EpochConfig;
use crate::perf::TrafficCase;
use crate::router::Policy;
use crate::topology::{build_butterfly, build_mesh, router_pd, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pulse,
    Flit,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyName {
    Router2,
    Butterfly4,
    Mesh8,
    Cmesh32,
    Bfly32,
}

impl TopologyName {
    pub fn endpoints(self) -> u32 {
        match self {
            TopologyName::Router2 => 2,
            TopologyName::Butterfly4 => 4,
            TopologyName::Mesh8 => 8,
            TopologyName::Cmesh32 | TopologyName::Bfly32 => 32,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TopologyName::Router2 => "router2",
            TopologyName::Butterfly4 => "butterfly4",
            TopologyName::Mesh8 => "mesh8",
            TopologyName::Cmesh32 => "cmesh32",
            TopologyName::Bfly32 => "bfly32",
        }
    }

    pub fn build(self, epoch: EpochConfig) -> Result<Network> {
        let pd = router_pd(&epoch);
        match self {
            TopologyName::Router2 => build_butterfly(2, epoch, pd),
            TopologyName::Butterfly4 => build_butterfly(4, epoch, pd),
            TopologyName::Bfly32 => build_butterfly(32, epoch, pd),
            TopologyName::Mesh8 => build_mesh(2, 2, 2, epoch, pd),
            TopologyName::Cmesh32 => build_mesh(4, 4, 2, epoch, pd),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Fig9,
    Fig11,
    Fig14,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    None,
    Vcd,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: Mode,
    pub topology: TopologyName,
    #[serde(default)]
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpochSection {
    /// Defaults to the topology's endpoint count.
    pub destinations: Option<u32>,
    pub data_period: u64,
}

impl Default for EpochSection {
    fn default() -> Self {
        EpochSection {
            destinations: None,
            data_period: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouterSection {
    pub policy: String,
    pub rand_q: f64,
    /// Threshold slot for a standalone router.
    pub threshold: u32,
}

impl Default for RouterSection {
    fn default() -> Self {
        RouterSection {
            policy: "round_robin".into(),
            rand_q: 0.25,
            threshold: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub pattern: String,
    pub rate: f64,
    pub seed: u64,
    pub warmup: u64,
    pub sample: u64,
    pub reinject: bool,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            pattern: "uniform".into(),
            rate: 1.0,
            seed: 1,
            warmup: 1000,
            sample: 10_000,
            reinject: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub data_period: Vec<u64>,
    /// `[lo, hi, step]` range of data periods, merged with the list.
    pub data_period_range: Option<[u64; 3]>,
    pub rate: Vec<f64>,
    pub seeds: Vec<u64>,
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSection {
    pub baseline: String,
    pub cases: Vec<String>,
    /// Saturated throughput per port `[best, uniform, worst]` for meshes.
    pub mesh_fractions: Option<[f64; 3]>,
    pub search_max: u64,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        AnalyticSection {
            baseline: "banyan2x2".into(),
            cases: vec!["best".into(), "uniform".into(), "worst".into()],
            mesh_fractions: None,
            search_max: 20_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub trace: TraceFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub epoch: EpochSection,
    #[serde(default)]
    pub router: RouterSection,
    #[serde(default)]
    pub traffic: TrafficSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub analytic: AnalyticSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

pub fn parse_case(s: &str) -> Result<TrafficCase> {
    match s.trim().to_ascii_lowercase().as_str() {
        "best" => Ok(TrafficCase::Best),
        "uniform" | "ur" => Ok(TrafficCase::Uniform),
        "worst" => Ok(TrafficCase::Worst),
        other => Err(config_err(0, format!("unknown traffic case '{other}'"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            if let Some(field) = msg
                .strip_prefix("missing field `")
                .and_then(|r| r.split('`').next())
            {
                return Error::MissingField(field.to_string());
            }
            let line = e.span().map_or(0, |s| line_of(text, s.start));
            config_err(line, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy()?;
        self.epoch_config()?;
        if !(0.0..=1.0).contains(&self.router.rand_q) {
            return Err(config_err(0, "router.rand_q must be in [0, 1]"));
        }
        for p in self.patterns() {
            p?;
        }
        for c in &self.analytic.cases {
            parse_case(c)?;
        }
        let topo = self.experiment.topology;
        if self.experiment.mode == Mode::Pulse
            && !matches!(topo, TopologyName::Router2 | TopologyName::Butterfly4)
        {
            return Err(config_err(
                0,
                format!(
                    "pulse mode supports router2 and butterfly4, not {}",
                    topo.name()
                ),
            ));
        }
        if self.experiment.mode == Mode::Analytic
            && !matches!(
                topo,
                TopologyName::Router2 | TopologyName::Butterfly4 | TopologyName::Mesh8
            )
        {
            return Err(config_err(
                0,
                format!(
                    "analytic mode supports router2, butterfly4 and mesh8, not {}",
                    topo.name()
                ),
            ));
        }
        if let Some(s) = self.experiment.scenario {
            let want = match s {
                Scenario::Fig9 => TopologyName::Router2,
                Scenario::Fig11 => TopologyName::Butterfly4,
                Scenario::Fig14 => TopologyName::Mesh8,
            };
            if want != topo {
                return Err(config_err(
                    0,
                    format!("scenario {s:?} runs on {}", want.name()),
                ));
            }
        }
        if let Some([lo, hi, step]) = self.sweep.data_period_range {
            if step == 0 || lo > hi {
                return Err(config_err(
                    0,
                    "sweep.data_period_range must be [lo, hi, step] with step > 0",
                ));
            }
        }
        Ok(())
    }

    pub fn policy(&self) -> Result<Policy> {
        self.router
            .policy
            .parse()
            .map_err(|_| config_err(0, format!("unknown policy '{}'", self.router.policy)))
    }

    pub fn destinations(&self) -> u32 {
        self.epoch
            .destinations
            .unwrap_or_else(|| self.experiment.topology.endpoints())
    }

    pub fn epoch_config(&self) -> Result<EpochConfig> {
        self.epoch_config_at(self.epoch.data_period)
    }

    pub fn epoch_config_at(&self, data_period: u64) -> Result<EpochConfig> {
        EpochConfig::new(self.destinations(), data_period)
    }

    pub fn patterns(&self) -> Vec<Result<PatternKind>> {
        let names = if self.sweep.patterns.is_empty() {
            vec![self.traffic.pattern.clone()]
        } else {
            self.sweep.patterns.clone()
        };
        names.iter().map(|n| n.parse()).collect()
    }

    pub fn cases(&self) -> Result<Vec<TrafficCase>> {
        self.analytic.cases.iter().map(|c| parse_case(c)).collect()
    }

    pub fn sweep_data_periods(&self) -> Vec<u64> {
        let mut v = self.sweep.data_period.clone();
        if let Some([lo, hi, step]) = self.sweep.data_period_range {
            v.extend((lo..=hi).step_by(step as usize));
        }
        if v.is_empty() {
            v.push(self.epoch.data_period);
        }
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn sweep_rates(&self) -> Vec<f64> {
        if self.sweep.rate.is_empty() {
            vec![self.traffic.rate]
        } else {
            self.sweep.rate.clone()
        }
    }

    pub fn sweep_seeds(&self) -> Vec<u64> {
        if self.sweep.seeds.is_empty() {
            vec![self.traffic.seed]
        } else {
            self.sweep.seeds.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLIT: &str = r#"
[experiment]
mode = "flit"
topology = "cmesh32"

[traffic]
pattern = "tornado"
rate = 0.4
"#;

    #[test]
    fn parses_defaults() {
        let c = ExperimentConfig::parse(FLIT).unwrap();
        assert_eq!(c.experiment.topology, TopologyName::Cmesh32);
        assert_eq!(c.destinations(), 32);
        assert_eq!(c.epoch.data_period, 300);
        assert_eq!(c.policy().unwrap(), Policy::RoundRobin);
        assert_eq!(c.sweep_data_periods(), vec![300]);
        assert_eq!(c.sweep_rates(), vec![0.4]);
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn missing_topology_names_field() {
        let e = ExperimentConfig::parse("[experiment]\nmode = \"flit\"\n").unwrap_err();
        assert!(
            matches!(e, Error::MissingField(ref f) if f == "topology"),
            "{e}"
        );
    }

    #[test]
    fn errors_carry_lines() {
        let e = ExperimentConfig::parse("[experiment]\nmode = \"flit\"\ntopology = \"torus\"\n")
            .unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
        let e = ExperimentConfig::parse(
            "[experiment]\nmode = \"flit\"\ntopology = \"mesh8\"\ncolour = 1\n",
        )
        .unwrap_err();
        assert!(matches!(e, Error::Config { .. }), "{e}");
    }

    #[test]
    fn semantic_checks() {
        let pulse_mesh = "[experiment]\nmode = \"pulse\"\ntopology = \"cmesh32\"\n";
        assert!(ExperimentConfig::parse(pulse_mesh).is_err());
        let wrong_scn =
            "[experiment]\nmode = \"flit\"\ntopology = \"mesh8\"\nscenario = \"fig9\"\n";
        assert!(ExperimentConfig::parse(wrong_scn).is_err());
        let bad_pattern = format!("{FLIT}\n[sweep]\npatterns = [\"zigzag\"]\n");
        assert!(ExperimentConfig::parse(&bad_pattern).is_err());
    }

    #[test]
    fn sweep_axes() {
        let s = format!("{FLIT}\n[sweep]\ndata_period = [600]\ndata_period_range = [150, 300, 75]\nseeds = [3, 4]\n");
        let c = ExperimentConfig::parse(&s).unwrap();
        assert_eq!(c.sweep_data_periods(), vec![150, 225, 300, 600]);
        assert_eq!(c.sweep_seeds(), vec![3, 4]);
    }
}
