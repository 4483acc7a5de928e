//! CLI error shaping: every failure maps to one of four exit codes and is
//! printed as a single machine-parsable stderr line
//! (`error[<kind>]: <message>`).

use std::fmt;

use dslr_core::metrics::MetricError;
use dslr_core::model::ModelError;
use dslr_core::nn::NnError;
use dslr_core::pairing::PairError;
use dslr_core::scan::ScanError;
use dslr_core::sim::SimError;
use dslr_core::sweep::SweepError;
use dslr_core::traj::TrajError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrKind {
    /// Bad invocation: unknown flags, malformed values. Exit 1.
    Usage,
    /// Filesystem or serialization failures. Exit 2.
    Io,
    /// Config/data validation and pipeline-order violations. Exit 3.
    Validation,
    /// Non-finite training losses. Exit 4.
    Diverged,
}

impl ErrKind {
    pub fn code(self) -> i32 {
        match self {
            ErrKind::Usage => 1,
            ErrKind::Io => 2,
            ErrKind::Validation => 3,
            ErrKind::Diverged => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ErrKind::Usage => "usage",
            ErrKind::Io => "io",
            ErrKind::Validation => "validation",
            ErrKind::Diverged => "diverged",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrKind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Collapse to one line so scripts can parse stderr reliably.
        let flat = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.kind.label(), flat.trim())
    }
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { kind: ErrKind::Usage, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { kind: ErrKind::Io, message: msg.into() }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError { kind: ErrKind::Validation, message: msg.into() }
    }
}

// The library enums use transparent wrapping, which hides inner errors from
// a `source()` walk, so each enum is classified explicitly: filesystem
// failures exit 2, divergence exits 4, everything else is validation.

fn scan_kind(e: &ScanError) -> ErrKind {
    match e {
        ScanError::Io(_) => ErrKind::Io,
        _ => ErrKind::Validation,
    }
}

fn traj_kind(e: &TrajError) -> ErrKind {
    match e {
        TrajError::Io(_) => ErrKind::Io,
        TrajError::Scan(s) => scan_kind(s),
        _ => ErrKind::Validation,
    }
}

fn nn_kind(e: &NnError) -> ErrKind {
    match e {
        NnError::Io(_) => ErrKind::Io,
        _ => ErrKind::Validation,
    }
}

fn model_kind(e: &ModelError) -> ErrKind {
    match e {
        ModelError::Diverged { .. } => ErrKind::Diverged,
        ModelError::Nn(n) => nn_kind(n),
        ModelError::Scan(s) => scan_kind(s),
        _ => ErrKind::Validation,
    }
}

macro_rules! classify_from {
    ($ty:ty, $kind_fn:expr) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                #[allow(clippy::redundant_closure_call)]
                let kind = ($kind_fn)(&e);
                CliError { kind, message: e.to_string() }
            }
        }
    };
}

classify_from!(ScanError, scan_kind);
classify_from!(TrajError, traj_kind);
classify_from!(NnError, nn_kind);
classify_from!(ModelError, model_kind);
classify_from!(MetricError, |_: &MetricError| ErrKind::Validation);
classify_from!(std::io::Error, |_: &std::io::Error| ErrKind::Io);

classify_from!(SimError, |e: &SimError| match e {
    SimError::Io(_) => ErrKind::Io,
    SimError::Scan(s) => scan_kind(s),
    SimError::Traj(t) => traj_kind(t),
    _ => ErrKind::Validation,
});

classify_from!(PairError, |e: &PairError| match e {
    PairError::Io(_) => ErrKind::Io,
    PairError::Scan(s) => scan_kind(s),
    PairError::Traj(t) => traj_kind(t),
    _ => ErrKind::Validation,
});

classify_from!(SweepError, |e: &SweepError| match e {
    SweepError::Io(_) => ErrKind::Io,
    SweepError::Scan(s) => scan_kind(s),
    SweepError::Model(m) => model_kind(m),
    _ => ErrKind::Validation,
});
