//! Text-guided editing by score distillation against an edit oracle.

mod codec;
mod oracle;
mod run;
mod schedule;
mod sds;
pub mod wire;

pub use codec::{codec_by_name, DownsampleCodec, IdentityCodec, ImageCodec, LatentImage};
pub use oracle::{
    builtin_oracle, EditOracle, IdentityOracle, OracleQuery, ProceduralEdit, ProceduralOracle, RemoteOracle,
};
pub use run::{convergence_check, edit, EditConfig, EditOutput};
pub use schedule::{add_noise, alpha_bar, NoiseSchedule, Weighting};
pub use sds::{sample_noise, sds_step, SdsContext, SdsDiagnostics, ViewCondition};
