//! Library side of the `dagcd` binary, so integration tests can drive the
//! commands in-process.

pub mod commands;
pub mod config;

/// Process exit status for a failed command: 1 when the numbers themselves
/// went bad during training or estimation, 2 for everything else
/// (unreadable files, invalid configs, incompatible checkpoints).
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<dagcd_core::Error>())
        .any(dagcd_core::Error::is_numerical);
    if numerical {
        1
    } else {
        2
    }
}
