//! Configurations shipped with the binary.

pub const PRESETS: &[(&str, &str)] = &[
    ("fig3a", include_str!("../presets/fig3a.json")),
    ("fig3b_zeta0", include_str!("../presets/fig3b_zeta0.json")),
    ("fig3b_zeta3", include_str!("../presets/fig3b_zeta3.json")),
    ("fig3c", include_str!("../presets/fig3c.json")),
    ("oracle_triangle", include_str!("../presets/oracle_triangle.json")),
];

pub fn find(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
