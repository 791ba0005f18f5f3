//! Structural digraph algorithms for tournaments and semicomplete digraphs:
//! deterministic generators, Menger-style disjoint path systems, exact
//! vertex connectivity, an exhaustive linkage oracle, a counterexample
//! family generator/verifier, subdivision machinery with a splitting
//! algorithm that produces transitive-tournament blow-ups, a path-system
//! rerouting procedure that frees subdivision vertices, and a constructive
//! linker that assembles k vertex-disjoint terminal-to-terminal paths.

pub mod connectivity;
pub mod counterexample;
pub mod digraph;
pub mod linker;
pub mod oracle;
pub mod reroute;
pub mod subdivision;
pub(crate) mod vset;

pub use connectivity::{menger_paths, vertex_connectivity, MengerOutcome, PathSystem};
pub use counterexample::{
    build_counterexample, build_d1, build_d2, verify_counterexample, CounterexampleLayout,
    PkExclusion, VerificationReport, Verdict,
};
pub use digraph::{
    backward_path_tournament, blow_up, circulant_tournament, hamiltonian_path,
    random_semicomplete, transitive_tournament, Digraph, GraphError, Path,
};
pub use linker::{link, LinkerFailure, LinkerParams};
pub use oracle::{find_linkage_exact, is_k_linked, KLinkedOutcome, LinkageInstance, LinkageOutcome};
pub use reroute::{free_subdivision, RerouteResult, RerouteVariant};
pub use subdivision::{
    degree_window_subset, degree_window_subset_in, find_subdivision, grow_partial_subdivision,
    hall_matching, split_to_tt_blowup, HallOutcome, PartialSubdivision, SplitOutcome, SplitParams,
    Subdivision, SubdivisionSearch, TTBlowup,
};

/// Trace verbosity is controlled by the `LINKAGE_LOG` environment variable.
/// Any non-empty value other than `"0"` enables run-log output on stderr.
pub(crate) fn trace_enabled() -> bool {
    use std::sync::OnceLock;
    static ON: OnceLock<bool> = OnceLock::new();
    *ON.get_or_init(|| {
        std::env::var("LINKAGE_LOG")
            .map(|v| !v.is_empty() && v != "0")
            .unwrap_or(false)
    })
}

macro_rules! trace_log {
    ($($arg:tt)*) => {
        if $crate::trace_enabled() {
            eprintln!($($arg)*);
        }
    };
}
pub(crate) use trace_log;
