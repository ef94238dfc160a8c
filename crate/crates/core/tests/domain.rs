use std::collections::BTreeSet;

use cofed::domain::{
    generate_taxonomy, generate_unlabeled, partition, CategoryId, PartitionMode, PartitionSpec, TaxonomySpec,
    UnlabeledStrategy,
};

fn spec() -> TaxonomySpec {
    TaxonomySpec {
        n_superclasses: 6,
        subclasses_per_superclass: 3,
        held_out_per_superclass: 1,
        instances_per_subclass: 400,
        dim: 5,
        ..TaxonomySpec::default()
    }
}

#[test]
fn cluster_sample_means_match_generating_means() {
    let spec = spec();
    let (pool, tax) = generate_taxonomy(&spec, 3).unwrap();
    let n = spec.instances_per_subclass as f64;
    // Four standard errors per coordinate keeps the fixed-seed check far
    // from the tail across every coordinate.
    let tol = 4.0 * spec.noise_std / n.sqrt();
    for sub in 0..tax.n_clusters() {
        if tax.is_held_out(sub) {
            continue;
        }
        let rows: Vec<&[f64]> = pool
            .tags()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.subclass == sub)
            .map(|(i, _)| pool.instance(i))
            .collect();
        assert_eq!(rows.len(), spec.instances_per_subclass);
        for d in 0..spec.dim {
            let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            assert!((mean - tax.mean(sub)[d]).abs() < tol, "subclass {sub} axis {d}");
        }
        assert_eq!(pool.labels()[pool.tags().iter().position(|t| t.subclass == sub).unwrap()], tax.superclass_of(sub));
    }
}

#[test]
fn held_out_public_data_never_overlaps_pool_subclasses() {
    let spec = spec();
    let (pool, tax) = generate_taxonomy(&spec, 3).unwrap();
    assert!(pool.tags().iter().all(|t| !tax.is_held_out(t.subclass)));
    let m = 3000;
    let public = generate_unlabeled(pool.features(), Some(&tax), m, UnlabeledStrategy::FromHeldOutSubclasses, 8).unwrap();
    assert_eq!(public.len(), m);
    // The public sample mean sits near the average of the held-out means.
    let held = tax.held_out_subclasses();
    let tol = 4.0 * spec.noise_std / (m as f64).sqrt() + 4.0 * spec.subclass_spread / (held.len() as f64).sqrt();
    for d in 0..spec.dim {
        let target = held.iter().map(|&s| tax.mean(s)[d]).sum::<f64>() / held.len() as f64;
        let got = (0..m).map(|i| public.instance(i)[d]).sum::<f64>() / m as f64;
        assert!((got - target).abs() < tol, "axis {d}: {got} vs {target}");
    }
}

#[test]
fn non_iid_shards_draw_only_from_owned_subclasses() {
    let (pool, tax) = generate_taxonomy(&spec(), 1).unwrap();
    let ps = PartitionSpec {
        n_participants: 8,
        mode: PartitionMode::NonIid,
        seed: 5,
        ..PartitionSpec::default()
    };
    let shards = partition(&pool, &tax, &ps).unwrap();
    let mut seen = BTreeSet::new();
    for s in &shards {
        assert_eq!(s.dataset.len(), ps.instances_per_superclass * s.label_space.len());
        for (i, tag) in s.dataset.tags().iter().enumerate() {
            let sup = s.dataset.labels()[i];
            assert_eq!(sup, tax.superclass_of(tag.subclass));
            assert!(s.owned_subclasses[&sup].contains(&tag.subclass));
            // Shards are disjoint subsets of the pool.
            assert!(seen.insert(tag.pool_index));
            assert_eq!(pool.instance(tag.pool_index), s.dataset.instance(i));
        }
        for (sup, subs) in &s.owned_subclasses {
            assert!(s.label_space.contains(*sup));
            assert!((1..=2).contains(&subs.len()));
        }
    }
}

#[test]
fn iid_shards_own_every_subclass() {
    let (pool, tax) = generate_taxonomy(&spec(), 1).unwrap();
    let ps = PartitionSpec {
        mode: PartitionMode::Iid,
        ..PartitionSpec::default()
    };
    for s in partition(&pool, &tax, &ps).unwrap() {
        for (sup, subs) in &s.owned_subclasses {
            assert_eq!(subs.clone(), tax.subclasses_of(*sup).collect::<Vec<_>>());
        }
    }
}

#[test]
fn partition_is_deterministic_per_seed() {
    let (pool, tax) = generate_taxonomy(&spec(), 1).unwrap();
    let ps = PartitionSpec::default();
    let a = partition(&pool, &tax, &ps).unwrap();
    let b = partition(&pool, &tax, &ps).unwrap();
    assert_eq!(a, b);
    let c = partition(&pool, &tax, &PartitionSpec { seed: 1, ..ps }).unwrap();
    assert_ne!(a, c);
    let spaces: Vec<Vec<CategoryId>> = a.iter().map(|s| s.label_space.categories().to_vec()).collect();
    assert!(spaces.iter().all(|s| (4..=5).contains(&s.len())));
}
