//! Operational semantics: intruder scenarios, configurations, the step
//! relation, and bounded state-space exploration.

mod explore;
mod scenario;
mod step;

pub use explore::{explore, Engine, ExpandError, ExploreConfig, ExploreStats, Lts};
pub use scenario::{
    builtin_scenario, load_scenario, BuiltinScenario, CapSet, CapabilityRule, Scenario,
    ScenarioError,
};
pub use step::{
    canonical_key, step, Action, Config, Divergence, SemanticsError, StepCache, StepCtx,
    StepOutcome, SwapPlan,
};
