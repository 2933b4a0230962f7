//! Holds the `acceptance` test target of the workspace. Run it with
//! `cargo test -p ofdm-sense-validation -- --test-threads=1` to see the
//! criteria in order.
