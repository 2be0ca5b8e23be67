//! Decoding strategies, the sampling distributions they induce, and rollouts.

mod beam;
mod rollout;
mod spec;
mod transform;

pub use beam::{beam_search, beam_search_scored};
pub use rollout::{choose_token, decode_step, rollout, Rollout};
pub use spec::DecoderSpec;
pub use transform::transform_dist;
