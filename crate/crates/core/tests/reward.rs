mod common;

use common::reward_mismatches;
use navlearn::{compute_reward, Action, EnvConfig};

#[test]
fn reward_matches_case_table() {
    assert_eq!(reward_mismatches(10_000, 3), 0);
}

#[test]
fn band_edges_follow_strict_inequalities() {
    let c = EnvConfig::default();
    let a = Action::new(0.2, 0.0);
    assert_eq!(compute_reward(1.0, 1.0, c.d_romin, a, &c).1.collision, c.r_collision);
    assert_eq!(compute_reward(1.0, 1.0, c.d_romin.next_down(), a, &c).1.collision, 2.0 * c.r_collision);
    assert_eq!(compute_reward(1.0, c.d_gmin, 2.0, a, &c).1.goal, c.c_g * (1.0 - c.d_gmin));
    assert_eq!(compute_reward(1.0, 1.0, 2.0, Action::new(c.l_vmin, 0.8 * c.a_vmax), &c).0, 0.0);
}
