//! User id to dense slot lookup.

use rustc_hash::FxHashMap;

use crate::graph::UserId;

const ABSENT: u32 = u32::MAX;

/// Maps user ids to slots `0..n`. Compact id ranges use a direct array,
/// anything else a hash map.
#[derive(Debug, Clone)]
pub(crate) enum SlotIndex {
    Dense { base: u64, slots: Vec<u32>, len: usize },
    Sparse(FxHashMap<UserId, u32>),
}

impl Default for SlotIndex {
    fn default() -> Self {
        SlotIndex::Sparse(FxHashMap::default())
    }
}

impl SlotIndex {
    /// Empty index sized for ids in `[lo, hi]` and about `n` entries.
    pub(crate) fn for_range(lo: u64, hi: u64, n: usize) -> Self {
        let span = hi.saturating_sub(lo).saturating_add(1);
        if n > 0 && lo <= hi && span <= 4 * n as u64 + 1024 {
            SlotIndex::Dense {
                base: lo,
                slots: vec![ABSENT; span as usize],
                len: 0,
            }
        } else {
            let mut map = FxHashMap::default();
            map.reserve(n);
            SlotIndex::Sparse(map)
        }
    }

    /// Index over `ids`, which receive slots in order.
    pub(crate) fn from_ids(ids: &[UserId]) -> Self {
        let lo = ids.iter().map(|u| u.0).min().unwrap_or(0);
        let hi = ids.iter().map(|u| u.0).max().unwrap_or(0);
        let mut index = SlotIndex::for_range(lo, hi, ids.len());
        for &u in ids {
            index.insert(u);
        }
        index
    }

    #[inline]
    pub(crate) fn get(&self, user: UserId) -> Option<u32> {
        match self {
            SlotIndex::Dense { base, slots, .. } => {
                let i = user.0.wrapping_sub(*base);
                match slots.get(usize::try_from(i).ok()?) {
                    Some(&s) if s != ABSENT => Some(s),
                    _ => None,
                }
            }
            SlotIndex::Sparse(map) => map.get(&user).copied(),
        }
    }

    /// Slot of `user`, assigning the next one if absent. The flag is true
    /// for a new assignment.
    #[inline]
    pub(crate) fn insert(&mut self, user: UserId) -> (u32, bool) {
        let next = self.len() as u32;
        match self {
            SlotIndex::Dense { base, slots, len } => {
                let i = user.0.wrapping_sub(*base);
                if let Some(s) = usize::try_from(i).ok().and_then(|i| slots.get_mut(i)) {
                    if *s != ABSENT {
                        return (*s, false);
                    }
                    *s = next;
                    *len += 1;
                    return (next, true);
                }
                self.spill();
                self.insert(user)
            }
            SlotIndex::Sparse(map) => match map.entry(user) {
                std::collections::hash_map::Entry::Occupied(o) => (*o.get(), false),
                std::collections::hash_map::Entry::Vacant(v) => {
                    v.insert(next);
                    (next, true)
                }
            },
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            SlotIndex::Dense { len, .. } => *len,
            SlotIndex::Sparse(map) => map.len(),
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Indexed users in unspecified order.
    pub(crate) fn users(&self) -> Vec<UserId> {
        match self {
            SlotIndex::Dense { base, slots, .. } => slots
                .iter()
                .enumerate()
                .filter(|(_, &s)| s != ABSENT)
                .map(|(i, _)| UserId(base + i as u64))
                .collect(),
            SlotIndex::Sparse(map) => map.keys().copied().collect(),
        }
    }

    // An id outside the dense range turns the index into a hash map.
    fn spill(&mut self) {
        if let SlotIndex::Dense { base, slots, len } = self {
            let mut map = FxHashMap::default();
            map.reserve(*len + 1);
            for (i, &s) in slots.iter().enumerate() {
                if s != ABSENT {
                    map.insert(UserId(*base + i as u64), s);
                }
            }
            *self = SlotIndex::Sparse(map);
        }
    }
}
