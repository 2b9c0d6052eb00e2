//! Criterion benchmarks for `sbm-ssl`; see `benches/`.
