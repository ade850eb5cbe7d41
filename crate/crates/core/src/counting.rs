//! Whole counting: which articles of a cohort belong to a country.

use std::collections::BTreeMap;

use crate::model::{Cohort, CountryCode, GroupSelection, Scheme};

/// Inclusive: any author from `country`. Exclusive: all authors from it.
/// Records without countries never join a group.
pub fn select_group(cohort: &Cohort, country: CountryCode, scheme: Scheme) -> GroupSelection {
    let member_indices = cohort
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| scheme.admits(&r.countries, country))
        .map(|(i, _)| i)
        .collect();
    GroupSelection {
        country,
        scheme,
        member_indices,
    }
}

/// Re-derives a selection and checks it against the stored indices.
pub fn is_consistent(cohort: &Cohort, selection: &GroupSelection) -> bool {
    select_group(cohort, selection.country, selection.scheme).member_indices
        == selection.member_indices
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedCountries {
    /// (country, inclusive article count), most articles first.
    pub ranking: Vec<(CountryCode, usize)>,
    /// Set when fewer than `k` distinct countries were available.
    pub short: bool,
}

impl RankedCountries {
    pub fn countries(&self) -> Vec<CountryCode> {
        self.ranking.iter().map(|(c, _)| *c).collect()
    }
}

/// The `k` countries with the most articles (inclusive counting), ties broken
/// by code.
pub fn top_countries<'a>(
    cohorts: impl IntoIterator<Item = &'a Cohort>,
    k: usize,
) -> RankedCountries {
    let mut counts: BTreeMap<CountryCode, usize> = BTreeMap::new();
    for cohort in cohorts {
        for record in cohort.records() {
            for &c in &record.countries {
                *counts.entry(c).or_default() += 1;
            }
        }
    }
    let mut ranking: Vec<_> = counts.into_iter().collect();
    // Stable sort over code-ordered entries keeps the lexicographic tie-break.
    ranking.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    let short = ranking.len() < k;
    ranking.truncate(k);
    RankedCountries { ranking, short }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CitationRecord;
    use proptest::prelude::*;

    fn cc(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    fn rec(year: i32, cites: u64, countries: &[&str]) -> CitationRecord {
        CitationRecord::new("J", year, cites, countries.iter().map(|c| cc(c)))
    }

    #[test]
    fn scheme_membership_examples() {
        let cohort = Cohort::new(vec![
            rec(2000, 1, &["US", "JP"]),
            rec(2000, 2, &["US"]),
            rec(2000, 3, &["JP"]),
            rec(2000, 4, &[]),
        ])
        .unwrap();
        let inc = select_group(&cohort, cc("US"), Scheme::Inclusive);
        let exc = select_group(&cohort, cc("US"), Scheme::Exclusive);
        let cites = |s: &GroupSelection| -> Vec<u64> {
            s.member_indices
                .iter()
                .map(|&i| cohort.records()[i].citations)
                .collect()
        };
        assert_eq!(cites(&inc), vec![1, 2]);
        assert_eq!(cites(&exc), vec![2]);
        assert!(is_consistent(&cohort, &inc) && is_consistent(&cohort, &exc));
    }

    #[test]
    fn top_countries_ties_lexicographic() {
        let a = Cohort::new(vec![
            rec(2000, 0, &["US", "JP"]),
            rec(2000, 0, &["US", "DE"]),
            rec(2000, 0, &["US"]),
        ])
        .unwrap();
        let b = Cohort::new(vec![
            rec(2001, 0, &["US", "JP"]),
            rec(2001, 0, &["US", "DE"]),
            rec(2001, 0, &["JP"]),
            rec(2001, 0, &["DE"]),
        ])
        .unwrap();
        // US 5, JP 3, DE 3
        let top = top_countries([&a, &b], 2);
        assert_eq!(top.countries(), vec![cc("US"), cc("DE")]);
        assert_eq!(top.ranking[0].1, 5);
        assert!(!top.short);
    }

    #[test]
    fn top_countries_degenerate() {
        let single = Cohort::new(vec![rec(2000, 1, &["NL"])]).unwrap();
        let top = top_countries([&single], 1);
        assert_eq!(top.countries(), vec![cc("NL")]);
        let empty = Cohort::new(vec![rec(2000, 1, &[])]).unwrap();
        let top = top_countries([&empty], 3);
        assert!(top.ranking.is_empty() && top.short);
    }

    fn arb_cohort() -> impl Strategy<Value = Cohort> {
        let codes = ["US", "JP", "DE", "GB", "CN"];
        prop::collection::vec(
            (0u64..50, prop::collection::btree_set(0usize..5, 0..4)),
            1..40,
        )
        .prop_map(move |rows| {
            Cohort::new(
                rows.into_iter()
                    .map(|(c, set)| {
                        CitationRecord::new("J", 2000, c, set.into_iter().map(|i| cc(codes[i])))
                    })
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn exclusive_subset_of_inclusive(cohort in arb_cohort()) {
            let mut exclusive_total = 0;
            for code in ["US", "JP", "DE", "GB", "CN"] {
                let inc = select_group(&cohort, cc(code), Scheme::Inclusive);
                let exc = select_group(&cohort, cc(code), Scheme::Exclusive);
                prop_assert!(exc.member_indices.iter().all(|i| inc.member_indices.contains(i)));
                exclusive_total += exc.len();
            }
            prop_assert!(exclusive_total <= cohort.len());
        }
    }
}
