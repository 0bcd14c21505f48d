//! Label taxonomies.
//!
//! Wire names are the exact output strings the classification prompts ask
//! the model for; the short CFS/UFS/NFS forms are display aliases only.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// A closed, ordered label space.
pub trait Label: Copy + Eq + Ord + fmt::Debug + 'static {
    /// Every member, in canonical order.
    const ALL: &'static [Self];

    /// The serialization name.
    fn name(self) -> &'static str;

    fn position(self) -> usize {
        Self::ALL
            .iter()
            .position(|l| *l == self)
            .expect("label is a member of its own space")
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.name() == s)
    }
}

/// Three-class check-worthiness label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CwLabel {
    #[serde(rename = "Check-worthy Factual")]
    Cfs,
    #[serde(rename = "Unimportant Factual")]
    Ufs,
    #[serde(rename = "Non-Factual")]
    Nfs,
}

impl CwLabel {
    /// Order in which the classification prompt lists the categories and
    /// the allowed outputs.
    pub const PROMPT_ORDER: [CwLabel; 3] = [CwLabel::Nfs, CwLabel::Ufs, CwLabel::Cfs];

    pub fn abbreviation(self) -> &'static str {
        match self {
            CwLabel::Cfs => "CFS",
            CwLabel::Ufs => "UFS",
            CwLabel::Nfs => "NFS",
        }
    }

    pub fn from_abbreviation(s: &str) -> Option<Self> {
        match s {
            "CFS" => Some(CwLabel::Cfs),
            "UFS" => Some(CwLabel::Ufs),
            "NFS" => Some(CwLabel::Nfs),
            _ => None,
        }
    }
}

impl Label for CwLabel {
    const ALL: &'static [Self] = &[CwLabel::Cfs, CwLabel::Ufs, CwLabel::Nfs];

    fn name(self) -> &'static str {
        match self {
            CwLabel::Cfs => "Check-worthy Factual",
            CwLabel::Ufs => "Unimportant Factual",
            CwLabel::Nfs => "Non-Factual",
        }
    }
}

/// Check-worthy vs. everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryCwLabel {
    #[serde(rename = "Check-worthy")]
    CheckWorthy,
    #[serde(rename = "Non-Check-worthy")]
    NonCheckWorthy,
}

impl Label for BinaryCwLabel {
    const ALL: &'static [Self] = &[BinaryCwLabel::CheckWorthy, BinaryCwLabel::NonCheckWorthy];

    fn name(self) -> &'static str {
        match self {
            BinaryCwLabel::CheckWorthy => "Check-worthy",
            BinaryCwLabel::NonCheckWorthy => "Non-Check-worthy",
        }
    }
}

/// Message- or claim-level hate speech label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HsLabel {
    #[serde(rename = "hateful")]
    Hateful,
    #[serde(rename = "non-hateful")]
    NonHateful,
}

impl HsLabel {
    /// Short stratum name used in reports.
    pub fn stratum(self) -> &'static str {
        match self {
            HsLabel::Hateful => "HS",
            HsLabel::NonHateful => "Non-HS",
        }
    }
}

impl Label for HsLabel {
    const ALL: &'static [Self] = &[HsLabel::Hateful, HsLabel::NonHateful];

    fn name(self) -> &'static str {
        match self {
            HsLabel::Hateful => "hateful",
            HsLabel::NonHateful => "non-hateful",
        }
    }
}

/// Merges the two non-check-worthy classes.
pub fn collapse_binary(label: CwLabel) -> BinaryCwLabel {
    match label {
        CwLabel::Cfs => BinaryCwLabel::CheckWorthy,
        CwLabel::Ufs | CwLabel::Nfs => BinaryCwLabel::NonCheckWorthy,
    }
}

/// Unknown label string.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?}")]
pub struct UnknownLabel(pub alloc::string::String);

macro_rules! label_text_impls {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

label_text_impls!(CwLabel);
label_text_impls!(BinaryCwLabel);
label_text_impls!(HsLabel);

impl FromStr for CwLabel {
    type Err = UnknownLabel;

    /// Accepts the wire name or the abbreviation.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s)
            .or_else(|| Self::from_abbreviation(s))
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

impl FromStr for BinaryCwLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s).ok_or_else(|| UnknownLabel(s.into()))
    }
}

impl FromStr for HsLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s).ok_or_else(|| UnknownLabel(s.into()))
    }
}
