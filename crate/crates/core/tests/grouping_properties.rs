use proptest::prelude::*;

use jae_core::grouping::{selection_matrix, validate, GroupSpec};

/// Partitions `joints` joints into groups by `owner`, then lets each group
/// borrow the joints flagged in `borrow` that it does not own.
fn build(owner: &[usize], borrow: &[Vec<bool>]) -> Vec<GroupSpec> {
    let groups = borrow.len();
    (0..groups)
        .map(|g| {
            let estimated: Vec<String> = owner
                .iter()
                .enumerate()
                .filter(|(_, &o)| o % groups == g)
                .map(|(j, _)| format!("j{j}"))
                .collect();
            let borrowed = owner
                .iter()
                .enumerate()
                .filter(|(j, &o)| o % groups != g && borrow[g][*j])
                .map(|(j, _)| format!("j{j}"))
                .collect();
            GroupSpec {
                name: format!("g{g}"),
                estimated_joints: estimated,
                borrowed_joints: borrowed,
                muscles: vec![format!("m{g}")],
                jmm: String::new(),
            }
        })
        .collect()
}

fn partitions() -> impl Strategy<Value = (Vec<usize>, Vec<Vec<bool>>)> {
    (1usize..4, 2usize..8).prop_flat_map(|(groups, joints)| {
        (
            proptest::collection::vec(0..groups, joints),
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), joints), groups),
        )
    })
}

proptest! {
    #[test]
    fn validation_is_idempotent((owner, borrow) in partitions()) {
        let specs = build(&owner, &borrow);
        if let Ok(set) = validate(specs, 8) {
            let again = validate(set.groups().to_vec(), 8).unwrap();
            prop_assert_eq!(set.groups(), again.groups());
            prop_assert_eq!(set.source_map(), again.source_map());
        }
    }

    #[test]
    fn selection_is_a_projector((owner, borrow) in partitions()) {
        for spec in build(&owner, &borrow) {
            let s = selection_matrix(&spec);
            prop_assert_eq!(&s * &s, s.clone());
            prop_assert_eq!(s.trace() as usize, spec.estimated_joints.len());
        }
    }

    #[test]
    fn every_borrowed_joint_has_one_estimating_source((owner, borrow) in partitions()) {
        if let Ok(set) = validate(build(&owner, &borrow), 8) {
            for (g, spec) in set.groups().iter().enumerate() {
                for (b, src) in set.sources(g).iter().enumerate() {
                    let source = &set.groups()[src.group];
                    prop_assert_eq!(
                        &source.estimated_joints[src.index],
                        &spec.borrowed_joints[b]
                    );
                }
            }
        }
    }
}
