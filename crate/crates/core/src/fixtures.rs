//! The four stock equations shipped in `fixtures/`, exposed for tests and
//! the CLI. Each is the JSON text of an [`crate::pipeline::AnalysisRequest`].

use crate::pipeline::AnalysisRequest;

pub const EXAMPLE1: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/example1.json"));
pub const EXAMPLE2: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/example2.json"));
pub const EXAMPLE3: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/example3.json"));
pub const EXAMPLE4: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/example4.json"));

pub fn example(n: usize) -> Option<AnalysisRequest> {
    let text = match n {
        1 => EXAMPLE1,
        2 => EXAMPLE2,
        3 => EXAMPLE3,
        4 => EXAMPLE4,
        _ => return None,
    };
    Some(AnalysisRequest::from_json(text).expect("fixture parses"))
}

/// Example 2 at a different exponent value.
pub fn example2_with(a: f64) -> AnalysisRequest {
    let mut req = example(2).unwrap();
    req.parameters.insert("a".to_string(), a);
    req
}
