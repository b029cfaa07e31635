use termset_core::embedding::{cosine, train_sgns};
use termset_core::{ContextPair, ContextType, GroupId, TrainConfig};

fn pair(target: u32, context: &str) -> ContextPair {
    ContextPair {
        target: GroupId(target),
        context: context.to_string(),
        ctype: ContextType::Linear,
    }
}

/// Targets 0 and 1 share context "x"; target 2 only sees "y".
fn pairs() -> Vec<ContextPair> {
    let mut out = Vec::new();
    for _ in 0..200 {
        out.extend([pair(0, "x"), pair(1, "x"), pair(2, "y")]);
    }
    out
}

fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 8,
        epochs: 20,
        min_count: 1,
        subsample: 1.0,
        seed,
        workers: 1,
        negative_table_size: 10_000,
        ..TrainConfig::default()
    }
}

#[test]
fn shared_contexts_pull_targets_together() {
    for seed in [1, 2, 3, 4, 5] {
        let m = train_sgns(&pairs(), ContextType::Linear, &config(seed), None).unwrap();
        let v = |g| m.target_vector(GroupId(g)).unwrap();
        let near = cosine(v(0), v(1)).unwrap();
        let far = cosine(v(0), v(2)).unwrap();
        assert!(near > far, "seed {seed}: {near} vs {far}");
    }
}

#[test]
fn single_worker_training_is_reproducible() {
    let a = train_sgns(&pairs(), ContextType::Linear, &config(9), None).unwrap();
    let b = train_sgns(&pairs(), ContextType::Linear, &config(9), None).unwrap();
    assert_eq!(a.target_matrix, b.target_matrix);
    assert_eq!(a.context_matrix, b.context_matrix);
    let c = train_sgns(&pairs(), ContextType::Linear, &config(10), None).unwrap();
    assert_ne!(a.target_matrix, c.target_matrix);
}
