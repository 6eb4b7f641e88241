//! Shared fixtures for unit tests.

use crate::data::{Dataset, Interaction};

/// The 2-user/3-item toy used across modules:
/// (u0,i0,3), (u0,i1,1), (u1,i1,2), (u1,i2,U).
pub(crate) fn toy_dataset() -> Dataset {
    Dataset {
        num_users: 2,
        num_items: 3,
        rating_set: vec![1, 2, 3],
        interactions: vec![
            Interaction { user: 0, item: 0, label: Some(3) },
            Interaction { user: 0, item: 1, label: Some(1) },
            Interaction { user: 1, item: 1, label: Some(2) },
            Interaction { user: 1, item: 2, label: None },
        ],
    }
}
