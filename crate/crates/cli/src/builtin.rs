//! Scenarios compiled into the binary; the same files live in `scenarios/`.

pub struct Builtin {
    pub name: &'static str,
    pub source: &'static str,
}

pub const BUILTINS: &[Builtin] = &[
    Builtin { name: "paper-lambda", source: include_str!("../../../scenarios/paper-lambda.toml") },
    Builtin { name: "paper-taud-macro", source: include_str!("../../../scenarios/paper-taud-macro.toml") },
    Builtin { name: "cosmology-scan", source: include_str!("../../../scenarios/cosmology-scan.toml") },
    Builtin { name: "cross-validation", source: include_str!("../../../scenarios/cross-validation.toml") },
    Builtin { name: "cross-validation-moments", source: include_str!("../../../scenarios/cross-validation-moments.toml") },
    Builtin { name: "cross-validation-grid", source: include_str!("../../../scenarios/cross-validation-grid.toml") },
];

pub fn get(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}
