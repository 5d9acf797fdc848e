use serde::{Deserialize, Serialize};

/// Outcome of a lookup that can miss.
///
/// `Dne` ("does not exist") is a global assertion and is only produced when
/// locality and a healthy network make it safe. `Idk` ("I don't know") is a
/// local assertion: this worker could not find the value and cannot vouch
/// for anyone else. Callers pick their own reaction to `Idk` (retry, wait,
/// guess and apologize).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tristate<T> {
    Value(T),
    Dne,
    Idk,
}

impl<T> Tristate<T> {
    pub fn is_value(&self) -> bool {
        matches!(self, Tristate::Value(_))
    }

    pub fn value(self) -> Option<T> {
        match self {
            Tristate::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Tristate<U> {
        match self {
            Tristate::Value(v) => Tristate::Value(f(v)),
            Tristate::Dne => Tristate::Dne,
            Tristate::Idk => Tristate::Idk,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Tristate::Value(_) => "value",
            Tristate::Dne => "DNE",
            Tristate::Idk => "IDK",
        }
    }
}
