//! TCP deployment of privacy-preserving push-sum.
//!
//! [`frame`] defines the wire format; [`node`] runs one participant. Each
//! node is an ordinary process (or thread) that owns a listener, so a local
//! network of `N` nodes is `N` invocations with the same address table.

pub mod frame;
pub mod node;

pub use frame::{FrameError, MsgType, WireFrame};
pub use node::{run_node, NetError, NodeConfig, NodeReport, Transport};
