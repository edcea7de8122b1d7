use crate::error::Result;
use crate::tensor::{Element, NamedParamStore, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GradConflictRecord {
    /// 1-based block index.
    pub block: usize,
    pub batch: usize,
    pub cosine: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConflictOutput {
    pub records: Vec<GradConflictRecord>,
    /// Groups left out because one of the gradients was exactly zero.
    pub skipped: usize,
}

fn group_grad<T: Element>(store: &NamedParamStore<T>, prefixes: &[String]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for path in store.matching(prefixes)? {
        let t = store.get(path)?;
        match t.grad_vec() {
            Some(g) => out.extend(g.iter().map(|v| v.as_f64())),
            None => out.extend(std::iter::repeat(0.0).take(t.numel())),
        }
    }
    Ok(out)
}

/// Cosine between the gradients of two losses, per parameter group.
///
/// Runs one backward pass per loss with gradients cleared in between;
/// `groups[i]` lists the path prefixes of block `i + 1`.
pub fn grad_conflict<T: Element>(
    store: &NamedParamStore<T>,
    groups: &[Vec<String>],
    batch_index: usize,
    loss_a: &dyn Fn() -> Result<Tensor<T>>,
    loss_b: &dyn Fn() -> Result<Tensor<T>>,
) -> Result<ConflictOutput> {
    store.zero_grad();
    loss_a()?.backward()?;
    let ga: Vec<Vec<f64>> = groups.iter().map(|g| group_grad(store, g)).collect::<Result<_>>()?;
    store.zero_grad();
    loss_b()?.backward()?;
    let gb: Vec<Vec<f64>> = groups.iter().map(|g| group_grad(store, g)).collect::<Result<_>>()?;
    store.zero_grad();

    let mut out = ConflictOutput { records: Vec::new(), skipped: 0 };
    for (i, (a, b)) in ga.iter().zip(&gb).enumerate() {
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (&x, &y) in a.iter().zip(b) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na == 0.0 || nb == 0.0 {
            out.skipped += 1;
            continue;
        }
        out.records.push(GradConflictRecord {
            block: i + 1,
            batch: batch_index,
            cosine: dot / (na * nb).sqrt(),
        });
    }
    Ok(out)
}
