//! Ambiguity taxonomy: classify reading pairs by declinability and
//! lemma/POS equality, report which disambiguation strategy can resolve each
//! class, and compute corpus incidence plus strategy accuracy ceilings.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::morphology::{AnalysedToken, Reading};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("identical readings with identical tags do not form an ambiguity")]
    NotAnAmbiguity,
    #[error("classification needs at least 2 distinct readings, found {0}")]
    TooFewReadings(usize),
    #[error("empty incidence report")]
    EmptyReport,
}

/// Declinability of the two readings in a pair, order-free (the declinable
/// reading is listed first in mixed pairs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeclinabilityPair {
    /// Both readings declinable.
    Dd,
    /// One declinable, one indeclinable.
    Di,
    /// Both indeclinable.
    Ii,
}

impl DeclinabilityPair {
    pub fn label(self) -> &'static str {
        match self {
            DeclinabilityPair::Dd => "DD",
            DeclinabilityPair::Di => "DI",
            DeclinabilityPair::Ii => "II",
        }
    }
}

/// One cell of the taxonomy: declinability pair crossed with POS and lemma
/// equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AmbiguityClass {
    pub pair: DeclinabilityPair,
    pub pos_equal: bool,
    pub lemma_equal: bool,
}

impl AmbiguityClass {
    pub fn new(pair: DeclinabilityPair, pos_equal: bool, lemma_equal: bool) -> Self {
        AmbiguityClass {
            pair,
            pos_equal,
            lemma_equal,
        }
    }

    /// All 12 cells, row-major over (pos_equal, lemma_equal) then pair.
    pub fn all() -> Vec<AmbiguityClass> {
        let mut cells = Vec::with_capacity(12);
        for (pos_equal, lemma_equal) in [(false, true), (true, false), (false, false), (true, true)]
        {
            for pair in [
                DeclinabilityPair::Dd,
                DeclinabilityPair::Di,
                DeclinabilityPair::Ii,
            ] {
                cells.push(AmbiguityClass::new(pair, pos_equal, lemma_equal));
            }
        }
        cells
    }

    /// II pairs with differing POS always co-occur on the same surface form,
    /// so their ambiguity is extra-morphological rather than inflectional.
    pub fn is_extra_morphological(self) -> bool {
        self.pair == DeclinabilityPair::Ii && !self.pos_equal
    }
}

/// Which disambiguation method can resolve a taxonomy cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    PosDisamb,
    LemmaDisamb,
    Either,
    Neither,
    /// Cell cannot arise from a single surface form.
    NotApplicable,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::PosDisamb => "pos",
            Strategy::LemmaDisamb => "lemma",
            Strategy::Either => "either",
            Strategy::Neither => "neither",
            Strategy::NotApplicable => "n/a",
        }
    }

    /// Severity used to pick a multi-reading token's dominant cell: harder
    /// cells dominate so ceilings stay conservative.
    fn severity(self) -> u8 {
        match self {
            Strategy::Neither => 0,
            Strategy::NotApplicable => 1,
            Strategy::LemmaDisamb => 2,
            Strategy::PosDisamb => 3,
            Strategy::Either => 4,
        }
    }
}

/// The viable-strategy table, one entry per taxonomy cell.
pub fn strategy_for(class: AmbiguityClass) -> Strategy {
    use DeclinabilityPair::*;
    match (class.pair, class.pos_equal, class.lemma_equal) {
        (_, false, true) => Strategy::PosDisamb,
        (Dd, true, false) => Strategy::LemmaDisamb,
        (Di | Ii, true, false) => Strategy::NotApplicable,
        (Dd, false, false) => Strategy::Either,
        (Di, false, false) => Strategy::PosDisamb,
        (Ii, false, false) => Strategy::NotApplicable,
        (Dd, true, true) => Strategy::Neither,
        (Di | Ii, true, true) => Strategy::NotApplicable,
    }
}

/// Which targets resolve *every* reading pair of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolvability {
    Pos,
    Lemma,
    Either,
    Neither,
    /// Some pairs need POS, others lemma; no single model resolves all.
    Partial,
}

impl Resolvability {
    pub fn label(self) -> &'static str {
        match self {
            Resolvability::Pos => "POS",
            Resolvability::Lemma => "LEMMA",
            Resolvability::Either => "EITHER",
            Resolvability::Neither => "NEITHER",
            Resolvability::Partial => "PARTIAL",
        }
    }
}

/// Classifies one reading pair. The readings must differ somewhere (lemma,
/// POS, or tags); fully identical readings are not an ambiguity.
pub fn classify_pair(a: &Reading, b: &Reading) -> Result<(AmbiguityClass, Strategy), TaxonomyError> {
    if a.lemma == b.lemma && a.pos == b.pos && a.tags == b.tags {
        return Err(TaxonomyError::NotAnAmbiguity);
    }
    let pair = match (a.declinable, b.declinable) {
        (true, true) => DeclinabilityPair::Dd,
        (false, false) => DeclinabilityPair::Ii,
        _ => DeclinabilityPair::Di,
    };
    let class = AmbiguityClass::new(pair, a.pos == b.pos, a.lemma == b.lemma);
    Ok((class, strategy_for(class)))
}

fn deduped_readings(token: &AnalysedToken) -> Vec<&Reading> {
    let mut rs: Vec<&Reading> = token.readings.iter().collect();
    rs.sort();
    rs.dedup_by(|a, b| a.lemma == b.lemma && a.pos == b.pos && a.tags == b.tags);
    rs
}

/// Classifies every reading pair of a token and reduces them to the set of
/// occupied cells plus the token-level resolvability.
pub fn classify_token(
    token: &AnalysedToken,
) -> Result<(Vec<AmbiguityClass>, Resolvability), TaxonomyError> {
    let readings = deduped_readings(token);
    if readings.len() < 2 {
        return Err(TaxonomyError::TooFewReadings(readings.len()));
    }

    let mut classes = Vec::new();
    let mut any_pos_equal = false;
    let mut any_lemma_equal = false;
    let mut any_both_equal = false;
    for i in 0..readings.len() {
        for j in i + 1..readings.len() {
            let (class, _) = classify_pair(readings[i], readings[j])?;
            if !classes.contains(&class) {
                classes.push(class);
            }
            any_pos_equal |= class.pos_equal;
            any_lemma_equal |= class.lemma_equal;
            any_both_equal |= class.pos_equal && class.lemma_equal;
        }
    }
    classes.sort();

    let resolvable = if any_both_equal {
        Resolvability::Neither
    } else {
        match (!any_pos_equal, !any_lemma_equal) {
            (true, true) => Resolvability::Either,
            (true, false) => Resolvability::Pos,
            (false, true) => Resolvability::Lemma,
            (false, false) => Resolvability::Partial,
        }
    };
    Ok((classes, resolvable))
}

/// The hardest pair's cell, used as a multi-reading token's single cell for
/// incidence counting. Ties go to the first pair in sorted reading order.
pub fn dominant_class(token: &AnalysedToken) -> Result<AmbiguityClass, TaxonomyError> {
    let readings = deduped_readings(token);
    if readings.len() < 2 {
        return Err(TaxonomyError::TooFewReadings(readings.len()));
    }
    let mut worst: Option<(u8, AmbiguityClass)> = None;
    for i in 0..readings.len() {
        for j in i + 1..readings.len() {
            let (class, strategy) = classify_pair(readings[i], readings[j])?;
            let sev = strategy.severity();
            if worst.is_none_or(|(w, _)| sev < w) {
                worst = Some((sev, class));
            }
        }
    }
    Ok(worst.expect("at least one pair").1)
}

/// Per-cell share of ambiguous tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceReport {
    counts: BTreeMap<AmbiguityClass, usize>,
    fractions: BTreeMap<AmbiguityClass, f64>,
    total_ambiguous: usize,
}

impl IncidenceReport {
    fn from_counts(counts: BTreeMap<AmbiguityClass, usize>) -> IncidenceReport {
        let total: usize = counts.values().sum();
        let fractions = counts
            .iter()
            .map(|(&c, &n)| (c, n as f64 / total as f64))
            .collect();
        IncidenceReport {
            counts,
            fractions,
            total_ambiguous: total,
        }
    }

    /// Builds a report from externally given fractions (e.g. a published
    /// incidence table). Fractions are taken as-is; rounding in the source is
    /// the caller's concern.
    pub fn from_fractions(cells: &[(AmbiguityClass, f64)]) -> IncidenceReport {
        IncidenceReport {
            counts: BTreeMap::new(),
            fractions: cells.iter().copied().collect(),
            total_ambiguous: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn total_ambiguous(&self) -> usize {
        self.total_ambiguous
    }

    pub fn fraction(&self, class: AmbiguityClass) -> f64 {
        self.fractions.get(&class).copied().unwrap_or(0.0)
    }

    pub fn count(&self, class: AmbiguityClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (AmbiguityClass, f64)> + '_ {
        self.fractions.iter().map(|(&c, &f)| (c, f))
    }
}

/// Counts each ambiguous token once, in its dominant cell. Tokens with fewer
/// than two distinct readings (or none) do not contribute.
pub fn incidence(corpus: &[AnalysedToken]) -> IncidenceReport {
    let mut counts: BTreeMap<AmbiguityClass, usize> = BTreeMap::new();
    for token in corpus {
        if let Ok(class) = dominant_class(token) {
            *counts.entry(class).or_insert(0) += 1;
        }
    }
    IncidenceReport::from_counts(counts)
}

/// Fraction of ambiguous tokens resolvable under `strategy`. `PosDisamb` and
/// `LemmaDisamb` count their own cells plus `Either` cells; `Either` means
/// the ensemble of both models. `Neither`/`NotApplicable` resolve nothing.
pub fn accuracy_ceiling(
    report: &IncidenceReport,
    strategy: Strategy,
) -> Result<f64, TaxonomyError> {
    if report.is_empty() {
        return Err(TaxonomyError::EmptyReport);
    }
    let counted: &[Strategy] = match strategy {
        Strategy::PosDisamb => &[Strategy::PosDisamb, Strategy::Either],
        Strategy::LemmaDisamb => &[Strategy::LemmaDisamb, Strategy::Either],
        Strategy::Either => &[Strategy::PosDisamb, Strategy::LemmaDisamb, Strategy::Either],
        Strategy::Neither | Strategy::NotApplicable => &[],
    };
    Ok(report
        .cells()
        .filter(|(class, _)| counted.contains(&strategy_for(*class)))
        .map(|(_, fraction)| fraction)
        .sum())
}
