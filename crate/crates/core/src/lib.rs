//! Energy- and data-aware prefetching of news articles over WiFi.
//!
//! The crate learns what a reader likes from the keywords and site sections
//! of the articles they open, predicts how long they will stay on the
//! current WiFi network and when they will next browse, and schedules
//! prefetches so that later reads on cellular or with no network are served
//! locally. A trace-driven simulator prices every transfer, radio tails
//! included, and reports hit ratio, cellular bytes, energy and freshness.

pub mod config;
pub mod energy;
pub mod netpredict;
pub mod preference;
pub mod scheduler;
pub mod sim;
pub mod synth;
pub mod trace;

pub use config::{Config, ConfigError};
pub use energy::{EnergyLedger, EnergyParams, RadioKind, RadioState};
pub use netpredict::{FetchTimeEstimator, GapHistory, NetPredictor, PredictorParams, SessionHistory};
pub use preference::{KeywordParams, KeywordStore, PreferenceModel, PreferenceScore, SiteTree};
pub use scheduler::{Candidate, PrefetchPlan, SchedulerConfig};
pub use sim::{compare, run, run_with, MetricsReport, SimOptions, SimOutcome};
pub use synth::{generate, SynthParams};
pub use trace::{parse_trace, serialize_trace, Article, NetInterval, NetKind, SitePath, Timestamp, Trace, TraceError};
