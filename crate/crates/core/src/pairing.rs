//! Pair rotation by the circle method.
//!
//! The first member stays put and the rest turn around a circle one seat per
//! round. Seat 0 pairs with seat 1 and the remaining seats pair across the
//! circle. With an odd head count an empty seat joins the circle and whoever
//! sits next to it works solo that round. Over `n - 1` rounds (even `n`) every
//! unordered pair meets exactly once.

use serde::{Deserialize, Serialize};

use crate::ids::MemberId;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub pairs: Vec<(MemberId, MemberId)>,
    pub solo: Vec<MemberId>,
}

impl Pairing {
    /// The pair or solo unit `member` belongs to, as an index: pairs first,
    /// then solo members.
    pub fn unit_of(&self, member: &MemberId) -> Option<usize> {
        self.pairs
            .iter()
            .position(|(a, b)| a == member || b == member)
            .or_else(|| self.solo.iter().position(|m| m == member).map(|i| self.pairs.len() + i))
    }

    pub fn contains(&self, member: &MemberId) -> bool {
        self.unit_of(member).is_some()
    }

    pub fn members(&self) -> impl Iterator<Item = &MemberId> {
        self.pairs.iter().flat_map(|(a, b)| [a, b]).chain(self.solo.iter())
    }
}

/// Number of distinct rounds before the schedule repeats.
pub fn cycle_len(members: usize) -> usize {
    match members {
        0 | 1 => 1,
        n if n % 2 == 0 => n - 1,
        n => n,
    }
}

/// Pairing for `round` (taken modulo the cycle length) over `members` in order.
pub fn round_robin(members: &[MemberId], round: usize) -> Pairing {
    let Some((fixed, rest)) = members.split_first() else {
        return Pairing::default();
    };
    let mut ring: Vec<Option<&MemberId>> = rest.iter().map(Some).collect();
    if members.len() % 2 == 1 {
        ring.push(None);
    }
    if ring.is_empty() {
        return Pairing { pairs: Vec::new(), solo: vec![fixed.clone()] };
    }
    let shift = round % cycle_len(members.len());
    ring.rotate_left(shift);

    let mut seats = Vec::with_capacity(ring.len() + 1);
    seats.push(Some(fixed));
    seats.extend(ring);

    let mut pairing = Pairing::default();
    let mut place = |a: Option<&MemberId>, b: Option<&MemberId>| match (a, b) {
        (Some(a), Some(b)) => pairing.pairs.push((a.clone(), b.clone())),
        (Some(m), None) | (None, Some(m)) => pairing.solo.push(m.clone()),
        (None, None) => {}
    };
    place(seats[0], seats[1]);
    let n = seats.len();
    for k in 1..n / 2 {
        place(seats[1 + k], seats[n - k]);
    }
    pairing
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeSet, HashMap};

    use super::*;

    fn ids(names: &str) -> Vec<MemberId> {
        names.chars().map(|c| MemberId::new(c.to_string())).collect()
    }

    fn pair(a: &str, b: &str) -> (MemberId, MemberId) {
        (MemberId::new(a), MemberId::new(b))
    }

    #[test]
    fn four_members_first_rotation() {
        let m = ids("ABCD");
        assert_eq!(round_robin(&m, 0).pairs, vec![pair("A", "B"), pair("C", "D")]);
        assert_eq!(round_robin(&m, 1).pairs, vec![pair("A", "C"), pair("D", "B")]);
    }

    fn unordered(p: &(MemberId, MemberId)) -> (MemberId, MemberId) {
        if p.0 <= p.1 {
            p.clone()
        } else {
            (p.1.clone(), p.0.clone())
        }
    }

    // Enumerate every round of a cycle and check each unordered pair shows up
    // exactly once and every member is placed exactly once per round.
    #[test]
    fn even_cycles_visit_every_pair_once() {
        for n in [2usize, 4, 6, 8] {
            let m: Vec<MemberId> = (0..n).map(|i| MemberId::new(format!("m{i}"))).collect();
            let mut seen: HashMap<(MemberId, MemberId), usize> = HashMap::new();
            for round in 0..cycle_len(n) {
                let p = round_robin(&m, round);
                assert!(p.solo.is_empty());
                let placed: BTreeSet<_> = p.members().cloned().collect();
                assert_eq!(placed.len(), n);
                for pr in &p.pairs {
                    *seen.entry(unordered(pr)).or_default() += 1;
                }
            }
            assert_eq!(seen.len(), n * (n - 1) / 2, "n={n}");
            assert!(seen.values().all(|&c| c == 1), "n={n}");
        }
    }

    #[test]
    fn odd_cycles_make_everyone_solo_once() {
        for n in [1usize, 3, 5, 7] {
            let m: Vec<MemberId> = (0..n).map(|i| MemberId::new(format!("m{i}"))).collect();
            let mut solo_count: HashMap<MemberId, usize> = HashMap::new();
            let mut seen = BTreeSet::new();
            for round in 0..cycle_len(n) {
                let p = round_robin(&m, round);
                assert_eq!(p.solo.len(), 1);
                assert_eq!(p.pairs.len(), n / 2);
                assert_eq!(p.members().count(), n);
                for pr in &p.pairs {
                    assert!(seen.insert(unordered(pr)), "pair repeated within a cycle");
                }
                *solo_count.entry(p.solo[0].clone()).or_default() += 1;
            }
            assert!(solo_count.values().all(|&c| c <= 1));
            assert_eq!(seen.len(), n * (n - 1) / 2);
        }
    }

    #[test]
    fn five_members_two_pairs_one_solo() {
        let p = round_robin(&ids("ABCDE"), 0);
        assert_eq!(p.pairs.len(), 2);
        assert_eq!(p.solo.len(), 1);
    }

    #[test]
    fn schedule_repeats_after_cycle() {
        let m = ids("ABCDEF");
        assert_eq!(round_robin(&m, 0), round_robin(&m, cycle_len(6)));
    }

    #[test]
    fn unit_lookup() {
        let p = round_robin(&ids("ABC"), 0);
        assert_eq!(p.unit_of(&MemberId::new("A")), Some(0));
        assert_eq!(p.unit_of(&MemberId::new("B")), Some(0));
        assert_eq!(p.unit_of(&MemberId::new("C")), Some(1));
        assert_eq!(p.unit_of(&MemberId::new("Z")), None);
    }
}
