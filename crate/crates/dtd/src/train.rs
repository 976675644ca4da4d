use dtd_core::net::{
    build_face_pool, train_network, CascadeSpec, CascadeTrainConfig, LandmarkCascade, NetError, TrainReport,
    NUM_NETWORKS,
};
use rayon::prelude::*;

/// Same result as `dtd_core::net::train_cascade`, with the 23 networks
/// trained on the rayon pool. Each network draws from its own seeded
/// generator, so thread count does not change the weights.
pub fn train_cascade_parallel(
    spec: &CascadeSpec,
    cfg: &CascadeTrainConfig,
) -> Result<(LandmarkCascade, Vec<TrainReport>), NetError> {
    spec.validate()?;
    let pool = build_face_pool(cfg);
    let reports = (0..NUM_NETWORKS)
        .into_par_iter()
        .map(|i| train_network(spec, i, &pool, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let cascade = LandmarkCascade::new(spec.clone(), reports.iter().map(|r| r.weights.clone()).collect())?;
    Ok((cascade, reports))
}
