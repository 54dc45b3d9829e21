mod support;

use support::gradcheck::{worst_error, OP_NAMES};

#[test]
fn every_op_matches_central_differences() {
    for op in OP_NAMES {
        let err = worst_error(op);
        assert!(err < 1e-4, "{op}: worst relative error {err:e}");
    }
}
