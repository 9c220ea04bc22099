//! Systems and printed certificates shipped with the crate.
//!
//! * `example1`: a planar system whose two modes rotate in nearly orthogonal directions.
//! * `example2`: two carts coupled by springs, one of them one-sided, stabilized by
//!   `K = [10, 10, 1, 1]`. The file stores the open-loop matrices and the gain.

use crate::model::{BimodalSystem, SystemFile};
use crate::solve::Certificate;

pub const EXAMPLE1_JSON: &str = include_str!("../data/example1.json");
pub const EXAMPLE2_JSON: &str = include_str!("../data/example2.json");
pub const EXAMPLE2_PRINTED_COMMON_JSON: &str = include_str!("../data/example2_printed_common.json");
pub const EXAMPLE2_PRINTED_PIECEWISE_JSON: &str = include_str!("../data/example2_printed_piecewise.json");

pub fn example1() -> BimodalSystem {
    BimodalSystem::from_json(EXAMPLE1_JSON).expect("bundled example1 is valid")
}

/// Closed-loop cart system.
pub fn example2() -> BimodalSystem {
    BimodalSystem::from_json(EXAMPLE2_JSON).expect("bundled example2 is valid")
}

pub fn example2_open_loop() -> BimodalSystem {
    let mut file: SystemFile = serde_json::from_str(EXAMPLE2_JSON).expect("bundled example2 is valid");
    file.k = None;
    file.into_system().expect("bundled example2 is valid")
}

/// Common quadratic certificate printed to four decimals, `alpha = 0.1`.
pub fn example2_printed_common() -> Certificate {
    Certificate::from_json(EXAMPLE2_PRINTED_COMMON_JSON).expect("bundled certificate is valid")
}

/// Piecewise certificate printed to four decimals, `b = 0`, `e = 0`, `alpha = 0.1`.
/// Multipliers are not printed and default to zero.
pub fn example2_printed_piecewise() -> Certificate {
    Certificate::from_json(EXAMPLE2_PRINTED_PIECEWISE_JSON).expect("bundled certificate is valid")
}
