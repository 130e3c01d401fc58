//! Built-in affine unit conversions.

use serde::{Deserialize, Serialize};

/// `target = source * factor + offset`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitConversion {
    pub source_unit: String,
    pub target_unit: String,
    pub factor: f64,
    pub offset: f64,
}

impl UnitConversion {
    pub fn apply(&self, x: f64) -> f64 {
        x * self.factor + self.offset
    }

    pub fn is_identity(&self) -> bool {
        self.factor == 1.0 && self.offset == 0.0
    }

    /// The inverse affine map.
    pub fn inverse(&self) -> UnitConversion {
        UnitConversion {
            source_unit: self.target_unit.clone(),
            target_unit: self.source_unit.clone(),
            factor: 1.0 / self.factor,
            offset: -self.offset / self.factor,
        }
    }
}

// (from, to, factor, offset); each entry is listed in both directions so the
// reverse constants are the exact decimal ones rather than computed inverses.
const TABLE: &[(&str, &str, f64, f64)] = &[
    ("ms", "s", 0.001, 0.0),
    ("s", "ms", 1000.0, 0.0),
    ("s", "min", 1.0 / 60.0, 0.0),
    ("min", "s", 60.0, 0.0),
    ("m", "cm", 100.0, 0.0),
    ("cm", "m", 0.01, 0.0),
    ("celsius", "fahrenheit", 1.8, 32.0),
    ("fahrenheit", "celsius", 5.0 / 9.0, -160.0 / 9.0),
    ("kpa", "pa", 1000.0, 0.0),
    ("pa", "kpa", 0.001, 0.0),
];

/// All known unit labels.
pub fn known_units() -> Vec<&'static str> {
    let mut out: Vec<&str> = TABLE.iter().map(|e| e.0).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Looks up the conversion between two unit labels. Equal labels give the
/// identity; unrelated labels give `None`.
pub fn infer_unit_conversion(source_unit: &str, target_unit: &str) -> Option<UnitConversion> {
    let (a, b) = (source_unit.trim().to_lowercase(), target_unit.trim().to_lowercase());
    let conv = |factor, offset| UnitConversion {
        source_unit: a.clone(),
        target_unit: b.clone(),
        factor,
        offset,
    };
    if a == b {
        return Some(conv(1.0, 0.0));
    }
    TABLE
        .iter()
        .find(|(from, to, _, _)| *from == a && *to == b)
        .map(|&(_, _, f, o)| conv(f, o))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lookups() {
        let ms = infer_unit_conversion("ms", "s").unwrap();
        assert_eq!((ms.factor, ms.offset), (0.001, 0.0));
        let cf = infer_unit_conversion("celsius", "fahrenheit").unwrap();
        assert_eq!((cf.factor, cf.offset), (1.8, 32.0));
        assert_eq!(cf.apply(20.0), 68.0);
        assert!(infer_unit_conversion("ms", "celsius").is_none());
        assert!(infer_unit_conversion("MS", "S").is_some());
        assert!(infer_unit_conversion("kpa", "kpa").unwrap().is_identity());
    }

    #[test]
    fn entries_are_mutual_inverses() {
        for a in known_units() {
            for b in known_units() {
                let (Some(f), Some(g)) = (infer_unit_conversion(a, b), infer_unit_conversion(b, a)) else {
                    continue;
                };
                for x in [-40.0, -1.5, 0.0, 1.0, 20.0, 1500.0, 1e6] {
                    let back = g.apply(f.apply(x));
                    assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0), "{a}->{b}: {x} -> {back}");
                }
                let inv = f.inverse();
                assert!((inv.factor - g.factor).abs() <= 1e-12 * g.factor.abs());
                assert!((inv.offset - g.offset).abs() <= 1e-9 * g.offset.abs().max(1.0));
            }
        }
    }
}
