//! Fixtures shared by the benchmarks.

use mrsde_core::{
    generate_pair, sample_forward, Architecture, Degradation, PairedSample, ScheduleKind, ScheduleSpec, ScoreModel,
    SdeConfig, Shape, StateVec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub cfg: SdeConfig,
    pub pair: PairedSample,
    pub x_i: StateVec,
    pub step: usize,
    pub model: ScoreModel,
}

impl Fixture {
    /// A blurred `side x side` toy image, its forward state at `T/2`, and an image model with perturbed weights.
    pub fn image(side: usize) -> Self {
        let cfg = SdeConfig::new(SdeConfig::default_lambda_sq(), ScheduleSpec::new(ScheduleKind::Cosine, 100))
            .expect("default schedule");
        let shape = Shape::Image { height: side, width: side };
        let pair = generate_pair(shape, &Degradation::for_task("blur").expect("known task"), 1).expect("pair");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let step = cfg.steps() / 2;
        let (x_i, _) = sample_forward(&pair.x0, &pair.mu, step, &cfg, &mut rng).expect("forward sample");
        let arch = Architecture::image_default()
            .with_input_scale(1.0 / cfg.lambda_sq().sqrt())
            .expect("positive scale");
        let mut model = ScoreModel::init(arch, &mut rng);
        for p in model.params_mut() {
            *p += rng.random_range(-0.01..0.01);
        }
        Self { cfg, pair, x_i, step, model }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes_agree() {
        let f = Fixture::image(16);
        assert_eq!(f.x_i.shape(), f.pair.mu.shape());
        assert_eq!(f.step, 50);
    }
}
