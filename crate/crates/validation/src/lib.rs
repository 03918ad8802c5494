//! Holds the reference-case acceptance run (`cargo test -p asr-validation`).
//! Kept in its own package so it runs after the unit and property suites.
