//! The four-peer, two-resource walkthrough instance.
//!
//! Users 0 and 1 buy, users 2 and 3 sell (1-based: buyers 1, 2 and sellers
//! 3, 4). Links are 0-2, 0-3 and 1-3. Stock amounts that the walkthrough
//! does not print are the smallest values consistent with its figures:
//! user 2 holds 4 of resource 0 and user 3 holds 6, and user 1 asks
//! for 6 of resource 1 (costs 8 then 14, 11 units demanded against 10).

use crate::model::Instance;

pub fn four_peer_instance() -> Instance {
    let edges = [(0, 2), (0, 3), (1, 3)];
    let mut adjacency = vec![vec![false; 4]; 4];
    for (a, b) in edges {
        adjacency[a][b] = true;
        adjacency[b][a] = true;
    }
    Instance {
        n_users: 4,
        n_resources: 2,
        adjacency,
        req: vec![vec![3.0, 2.0, 0.0, 0.0], vec![5.0, 6.0, 0.0, 0.0]],
        off: vec![vec![0.0, 0.0, 4.0, 6.0], vec![0.0, 0.0, 0.0, 10.0]],
        buyer_reserve: vec![15.0, 10.0, 0.0, 0.0],
        seller_reserve_price: vec![vec![1.0; 4]; 2],
        price_increment: 1.0,
    }
}
