use neural_ndcg::loss::{loss_node, LossConfig, LossKind};
use neural_ndcg::metrics::{ndcg_at_k, RankCutoff, RelevanceVector};
use neural_ndcg::{Array64, Tape64};

fn main() -> neural_ndcg::Result<()> {
    let scores = [0.4, 0.3, 0.8, -0.1];
    let y = RelevanceVector::from_labels(vec![2, 0, 3, 1]);

    // Exact metric.
    let exact: f64 = ndcg_at_k(&scores, &y, RankCutoff::At(3))?;

    // Smooth surrogate loss and its gradient with respect to the scores.
    let config = LossConfig::new(LossKind::NeuralNdcg)
        .with_k(RankCutoff::At(3))
        .with_temperature(0.1);
    let mut tape = Tape64::new();
    let leaf = tape.leaf(Array64::col(&scores)?);
    let node = loss_node(&mut tape, leaf, &y, &config)?;
    let loss = tape.value(node).item();         // close to -exact at low tau
    let grad = tape.backward(node)?.wrt(leaf)?; // d loss / d scores
    println!("ndcg@3 = {exact:.4}  loss = {loss:.4}  grad = {:.4?}", grad.data());
    Ok(())
}
