use std::fmt;

use crate::graph::EntityId;

/// A subset of the entity universe `[0, universe)`, stored as a bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct EntitySet {
    words: Vec<u64>,
    universe: usize,
}

impl EntitySet {
    pub fn empty(universe: usize) -> Self {
        EntitySet { words: vec![0; universe.div_ceil(64)], universe }
    }

    pub fn full(universe: usize) -> Self {
        let mut s = Self::empty(universe);
        s.words.iter_mut().for_each(|w| *w = !0);
        s.clear_tail();
        s
    }

    pub fn singleton(universe: usize, e: EntityId) -> Self {
        let mut s = Self::empty(universe);
        s.insert(e);
        s
    }

    /// # Panics
    /// If any id is outside the universe.
    pub fn from_ids(universe: usize, ids: impl IntoIterator<Item = EntityId>) -> Self {
        let mut s = Self::empty(universe);
        for e in ids {
            s.insert(e);
        }
        s
    }

    fn clear_tail(&mut self) {
        let rem = self.universe % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    /// # Panics
    /// If `e` is outside the universe.
    pub fn insert(&mut self, e: EntityId) {
        let i = e.index();
        assert!(i < self.universe, "entity {i} outside universe {}", self.universe);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, e: EntityId) -> bool {
        let i = e.index();
        i < self.universe && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &EntitySet) {
        debug_assert_eq!(self.universe, other.universe);
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a |= b);
    }

    pub fn intersect_with(&mut self, other: &EntitySet) {
        debug_assert_eq!(self.universe, other.universe);
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= b);
    }

    /// Elements of `self` not in `other`.
    pub fn difference(&self, other: &EntitySet) -> EntitySet {
        let mut s = self.clone();
        s.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= !b);
        s
    }

    /// Absolute complement within the universe.
    pub fn complement(&self) -> EntitySet {
        let mut s = self.clone();
        s.words.iter_mut().for_each(|w| *w = !*w);
        s.clear_tail();
        s
    }

    pub fn is_subset(&self, other: &EntitySet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros();
                w &= w - 1;
                Some(EntityId((wi * 64) as u32 + b))
            })
        })
    }

    pub fn to_vec(&self) -> Vec<EntityId> {
        self.iter().collect()
    }
}

impl fmt::Debug for EntitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|e| e.0)).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complement_respects_universe() {
        for n in [0, 1, 63, 64, 65, 130] {
            let full = EntitySet::full(n);
            assert_eq!(full.len(), n);
            assert!(full.complement().is_empty());
            if n > 0 {
                let s = EntitySet::singleton(n, EntityId(0));
                assert_eq!(s.complement().len(), n - 1);
            }
        }
    }

    proptest! {
        #[test]
        fn matches_btreeset_semantics(a in proptest::collection::btree_set(0u32..150, 0..40),
                                      b in proptest::collection::btree_set(0u32..150, 0..40)) {
            let sa = EntitySet::from_ids(150, a.iter().map(|&i| EntityId(i)));
            let sb = EntitySet::from_ids(150, b.iter().map(|&i| EntityId(i)));
            let ids = |s: &EntitySet| s.iter().map(|e| e.0).collect::<Vec<_>>();
            prop_assert_eq!(ids(&sa), a.iter().copied().collect::<Vec<_>>());
            let mut u = sa.clone();
            u.union_with(&sb);
            prop_assert_eq!(ids(&u), a.union(&b).copied().collect::<Vec<_>>());
            let mut i = sa.clone();
            i.intersect_with(&sb);
            prop_assert_eq!(ids(&i), a.intersection(&b).copied().collect::<Vec<_>>());
            prop_assert_eq!(ids(&sa.difference(&sb)), a.difference(&b).copied().collect::<Vec<_>>());
            prop_assert_eq!(sa.is_subset(&sb), a.is_subset(&b));
            prop_assert_eq!(sa.len() + sa.complement().len(), 150);
        }
    }
}
