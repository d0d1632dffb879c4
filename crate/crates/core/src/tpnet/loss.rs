use super::{ProposalSet, TpnetConfig};
use crate::datagen::TrajectoryLabel;
use crate::error::{Error, Result};
use crate::nn::{Graph, Tensor, Var};
use crate::scalar::Scalar;

/// Loss nodes of one batch.
pub struct LossVars {
    pub total: Var,
    /// Diversity loss on the final heads, batch mean.
    pub diversity: Var,
    pub intermediate: Option<Var>,
    pub obstacle: Var,
    /// Winning final head per sample.
    pub chosen: Vec<usize>,
    pub chosen_intermediate: Vec<usize>,
}

/// Per-sample minimum over heads of the weighted cross-entropy, averaged
/// over the batch. Returns the loss node and the winning heads.
pub fn diversity_graph<T: Scalar>(g: &mut Graph<T>, probs: Var, targets: &[bool], alpha: f64) -> Result<(Var, Vec<usize>)> {
    let ce = g.head_cross_entropy(probs, targets, T::lit(alpha))?;
    let best = g.row_min(ce)?;
    let chosen = g.argmin_of(best).map(<[usize]>::to_vec).unwrap_or_default();
    Ok((g.mean(best), chosen))
}

/// `L_td(final) + ds·L_td(intermediate) + λ·L_obs` with independent winners
/// for the two supervision levels.
pub fn total_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    heads: Var,
    intermediate: Option<Var>,
    targets: &[bool],
    occupied: &[bool],
    config: &TpnetConfig,
) -> Result<LossVars> {
    let (diversity, chosen) = diversity_graph(g, heads, targets, config.alpha)?;
    let obstacle = g.obstacle_nll(heads, occupied)?;
    let weighted_obs = g.scale(obstacle, T::lit(config.lambda));
    let mut total = g.add(diversity, weighted_obs)?;
    let mut inter_loss = None;
    let mut chosen_intermediate = Vec::new();
    if let (true, Some(inter)) = (config.enable_deep_supervision, intermediate) {
        let (l, c) = diversity_graph(g, inter, targets, config.alpha)?;
        let weighted = g.scale(l, T::lit(config.deep_supervision_weight));
        total = g.add(total, weighted)?;
        inter_loss = Some(l);
        chosen_intermediate = c;
    }
    Ok(LossVars { total, diversity, intermediate: inter_loss, obstacle, chosen, chosen_intermediate })
}

fn check_label(proposals: &ProposalSet, label: &TrajectoryLabel) -> Result<()> {
    if label.traversable.len() != proposals.config.cells() {
        return Err(Error::Dimension(format!(
            "label has {} cells, proposals {}",
            label.traversable.len(),
            proposals.config.cells()
        )));
    }
    if label.cell_count() == 0 {
        return Err(Error::Label("traversable mask is empty".into()));
    }
    Ok(())
}

/// Weighted cross-entropy of every head against one label.
pub fn head_losses(proposals: &ProposalSet, label: &TrajectoryLabel, alpha: f64) -> Result<Vec<f64>> {
    check_label(proposals, label)?;
    let mut g = Graph::<f64>::new();
    let p = g.constant(proposals.heads_tensor());
    let ce = g.head_cross_entropy(p, &label.traversable, alpha)?;
    Ok(g.value(ce).data().to_vec())
}

/// Minimum per-head weighted cross-entropy and the head attaining it
/// (lowest index on ties).
pub fn trajectory_diversity_loss(proposals: &ProposalSet, label: &TrajectoryLabel, alpha: f64) -> Result<(f64, usize)> {
    check_label(proposals, label)?;
    let mut g = Graph::<f64>::new();
    let p = g.constant(proposals.heads_tensor());
    let (loss, chosen) = diversity_graph(&mut g, p, &label.traversable, alpha)?;
    Ok((g.value(loss).item(), chosen[0]))
}

/// Mean over heads and occupied cells of `−log R¹`; zero without obstacles.
pub fn obstacle_avoidance_loss(proposals: &ProposalSet, occupied: &[bool]) -> Result<f64> {
    let mut g = Graph::<f64>::new();
    let p = g.constant(proposals.heads_tensor());
    let l = g.obstacle_nll(p, occupied)?;
    Ok(g.value(l).item())
}

/// Combined objective evaluated on a proposal set.
pub fn tpnet_total_loss(proposals: &ProposalSet, label: &TrajectoryLabel, occupied: &[bool], config: &TpnetConfig) -> Result<f64> {
    check_label(proposals, label)?;
    let mut g = Graph::<f64>::new();
    let heads = g.constant(proposals.heads_tensor());
    let inter = if config.enable_deep_supervision {
        if proposals.intermediate_heads.is_empty() {
            return Err(Error::Input("deep supervision enabled but proposals carry no intermediate heads".into()));
        }
        Some(g.constant(proposals.intermediate_tensor()))
    } else {
        None
    };
    let l = total_loss_graph(&mut g, heads, inter, &label.traversable, occupied, config)?;
    Ok(g.value(l.total).item())
}

/// Probability tensor `[1, 2k, H, W]` from per-head maps.
pub(crate) fn maps_tensor(maps: &[Vec<f64>], h: usize, w: usize) -> Tensor<f64> {
    let data: Vec<f64> = maps.iter().flatten().copied().collect();
    Tensor::new(vec![1, 2 * maps.len(), h, w], data).expect("proposal maps are 2·h·w each")
}
