//! Textual chart syntax (`.pchart` files) and the query formula language.
//!
//! ```text
//! chart SenderReceiver {
//!     and System {
//!         inv in Sleeping => !in Off;
//!         xor Sender {
//!             state Sleeping init { cost energy = 0.1; }
//!             state Sending { cost energy = 2; }
//!         }
//!         xor Receiver {
//!             state Listening init;
//!             state Off { query "?P.min"; }
//!         }
//!     }
//!     on wup from Sleeping -> prob { 0.6: Sending; 0.4: Sleeping; }
//!     on send from Sending -> prob { 0.9: Sending / msg cost tran = 1; 0.1: Sending cost tran = 1; }
//!     on msg from Listening -> Off;
//! }
//! ```

mod lexer;
mod parser;
mod printer;

pub use parser::{parse_chart, parse_chart_with, parse_query, parse_query_at, ParseOptions, ParseResult};
pub use printer::{format_query, pretty_print};
