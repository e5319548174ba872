//! Minibatch SGD where per-sample gradients are computed one after another
//! on the same activation region of the tape.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backprop::ScratchBuffers;
use crate::error::{Error, Result};
use crate::models::{Dataset, Example, Model};
use crate::scalar::Scalar;
use crate::tape::{Checkpoint, ParamRange, Tape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub gamma: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.gamma)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Running sum of per-sample parameter gradients.
#[derive(Debug, Clone)]
pub struct GradAccumulator<S> {
    params: ParamRange,
    sum: Vec<S>,
    samples: usize,
}

impl<S: Scalar> GradAccumulator<S> {
    pub fn new(params: ParamRange) -> Self {
        GradAccumulator {
            params,
            sum: vec![S::zero(); params.len()],
            samples: 0,
        }
    }

    pub fn params(&self) -> ParamRange {
        self.params
    }

    pub fn sum(&self) -> &[S] {
        &self.sum
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Adds the current parameter gradients on `tape` and counts one sample.
    pub fn absorb(&mut self, tape: &Tape<S>) -> Result<()> {
        let r = self.params.as_range();
        if r.end > tape.len() {
            return Err(Error::invalid("parameter range is past the end of the tape"));
        }
        for (a, g) in self.sum.iter_mut().zip(&tape.grads()[r]) {
            *a = *a + *g;
        }
        self.samples += 1;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.sum.fill(S::zero());
        self.samples = 0;
    }
}

/// `x -= gamma * sum / samples` over every parameter, then clears `acc`.
/// With no absorbed samples the parameters are left as they are.
pub fn sgd_step<S: Scalar>(tape: &mut Tape<S>, acc: &mut GradAccumulator<S>, gamma: S) -> Result<()> {
    if acc.samples > 0 {
        let b = S::from_f64(acc.samples as f64);
        let xs = tape.leaf_values_mut(acc.params.as_range())?;
        for (x, a) in xs.iter_mut().zip(&acc.sum) {
            *x = *x - gamma * (*a / b);
        }
    }
    acc.reset();
    Ok(())
}

/// One SGD step over `batch`. Every sample is built on top of `base`, so the
/// tape never holds more than one sample's activations. Returns the mean loss.
pub fn train_step<'e, S, M, I>(
    tape: &mut Tape<S>,
    model: &M,
    batch: I,
    gamma: S,
    base: Checkpoint,
    acc: &mut GradAccumulator<S>,
    scratch: &mut ScratchBuffers<S>,
) -> Result<S>
where
    S: Scalar,
    M: Model,
    I: IntoIterator<Item = &'e Example>,
{
    let params = model.params();
    if params.last > base.mark() {
        return Err(Error::invalid("checkpoint must lie above the model parameters"));
    }
    acc.reset();
    tape.zero_grads(params.as_range())?;
    let mut total = 0.0f64;
    for example in batch {
        tape.rewind(base)?;
        let loss = model.loss(tape, example)?;
        tape.backward_with_scratch(loss, scratch)?;
        acc.absorb(tape)?;
        tape.zero_grads(params.as_range())?;
        total += tape.value_of(loss)?.to_f64();
    }
    if acc.samples == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let n = acc.samples;
    sgd_step(tape, acc, gamma)?;
    Ok(S::from_f64(total / n as f64))
}

/// `b` distinct indices from `0..n`, every `b`-subset equally likely.
pub fn sample_batch<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<Vec<usize>> {
    if b == 0 || b > n {
        return Err(Error::invalid(format!("cannot draw {b} distinct indices from {n}")));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..b {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(b);
    Ok(pool)
}

/// Owns the per-run state of a training loop over one model.
#[derive(Debug)]
pub struct Trainer<S> {
    pub config: SgdConfig,
    base: Checkpoint,
    acc: GradAccumulator<S>,
    scratch: ScratchBuffers<S>,
    rng: ChaCha8Rng,
    batch: Vec<Example>,
}

impl<S: Scalar> Trainer<S> {
    /// The model's parameters must already be the last thing on `tape`.
    pub fn new<M: Model>(tape: &Tape<S>, model: &M, config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            config,
            base: tape.checkpoint(),
            acc: GradAccumulator::new(model.params()),
            scratch: ScratchBuffers::for_tape(tape),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            batch: Vec::with_capacity(config.batch),
        })
    }

    pub fn base(&self) -> Checkpoint {
        self.base
    }

    pub fn accumulator(&self) -> &GradAccumulator<S> {
        &self.acc
    }

    /// Draws the next batch without touching the tape.
    pub fn prepare(&mut self, data: &Dataset) -> Result<()> {
        let idx = sample_batch(data.len(), self.config.batch, &mut self.rng)?;
        self.batch.clear();
        self.batch.extend(idx.into_iter().map(|i| data.example(i)));
        Ok(())
    }

    /// Runs one step over the batch drawn by the last [`prepare`](Self::prepare).
    pub fn step<M: Model>(&mut self, tape: &mut Tape<S>, model: &M) -> Result<S> {
        train_step(
            tape,
            model,
            &self.batch,
            S::from_f64(self.config.gamma),
            self.base,
            &mut self.acc,
            &mut self.scratch,
        )
    }

    /// `config.steps` rounds of prepare and step; returns the loss of each.
    pub fn run<M: Model>(&mut self, tape: &mut Tape<S>, model: &M, data: &Dataset) -> Result<Vec<S>> {
        let mut losses = Vec::with_capacity(self.config.steps);
        for _ in 0..self.config.steps {
            self.prepare(data)?;
            losses.push(self.step(tape, model)?);
        }
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CharMlp, CharMlpConfig};
    use crate::ops::Ops;

    fn one_param(x: f64, grads: &[f64]) -> (Tape<f64>, GradAccumulator<f64>) {
        let mut t = Tape::<f64>::new(8).unwrap();
        let p = t.leaf(x).unwrap();
        let mut acc = GradAccumulator::new(ParamRange::new(0, 1));
        for &g in grads {
            t.set_grad(p, g).unwrap();
            acc.absorb(&t).unwrap();
        }
        (t, acc)
    }

    #[test]
    fn step_moves_against_gradient() {
        let (mut t, mut acc) = one_param(1.0, &[2.0]);
        sgd_step(&mut t, &mut acc, 0.1).unwrap();
        assert!((t.values()[0] - 0.8).abs() < 1e-15);
        assert_eq!(acc.samples(), 0);
        assert_eq!(acc.sum(), &[0.0]);
    }

    #[test]
    fn zero_rate_is_identity() {
        let (mut t, mut acc) = one_param(1.5, &[2.0]);
        sgd_step(&mut t, &mut acc, 0.0).unwrap();
        assert_eq!(t.values()[0], 1.5);
    }

    #[test]
    fn step_uses_batch_mean() {
        let (mut t, mut acc) = one_param(0.0, &[1.0, 3.0]);
        sgd_step(&mut t, &mut acc, 1.0).unwrap();
        assert_eq!(t.values()[0], -2.0);
    }

    #[test]
    fn config_is_validated() {
        let ok = SgdConfig { gamma: 0.1, batch: 1, steps: 0, seed: 0 };
        assert!(ok.validate().is_ok());
        assert!(SgdConfig { gamma: 0.0, ..ok }.validate().is_err());
        assert!(SgdConfig { gamma: f64::NAN, ..ok }.validate().is_err());
        assert!(SgdConfig { batch: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn sampling_full_set_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = sample_batch(5, 5, &mut rng).unwrap();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
        assert!(sample_batch(3, 4, &mut rng).is_err());
        assert!(sample_batch(3, 0, &mut rng).is_err());
    }

    #[test]
    fn single_index_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[sample_batch(4, 1, &mut rng).unwrap()[0]] += 1;
        }
        let p = 0.25;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut t = Tape::<f64>::new(1 << 14).unwrap();
        let m = CharMlp::build(&mut t, CharMlpConfig::with_hidden(4), 0).unwrap();
        let base = t.checkpoint();
        let mut acc = GradAccumulator::new(m.params());
        let mut scratch = ScratchBuffers::new();
        let r = train_step(&mut t, &m, &[], 0.1, base, &mut acc, &mut scratch);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unit_batch_accumulates_raw_gradient() {
        let mut t = Tape::<f64>::new(1 << 14).unwrap();
        let m = CharMlp::build(&mut t, CharMlpConfig::with_hidden(4), 0).unwrap();
        let base = t.checkpoint();
        let ex = Example { context: (0..16).collect(), targets: vec![5] };

        let loss = m.loss(&mut t, &ex).unwrap();
        t.backward(loss).unwrap();
        let raw = t.grads()[m.params().as_range()].to_vec();
        t.zero_all_grads();

        let mut acc = GradAccumulator::new(m.params());
        let mut scratch = ScratchBuffers::new();
        t.rewind(base).unwrap();
        let loss = m.loss(&mut t, &ex).unwrap();
        t.backward_with_scratch(loss, &mut scratch).unwrap();
        acc.absorb(&t).unwrap();
        assert_eq!(acc.sum(), raw.as_slice());

        let before = t.values()[m.params().as_range()].to_vec();
        train_step(&mut t, &m, [&ex], 0.5, base, &mut acc, &mut scratch).unwrap();
        for ((x, x0), g) in t.values()[m.params().as_range()].iter().zip(&before).zip(&raw) {
            assert_eq!(*x, *x0 - 0.5 * (*g / 1.0));
        }
    }
}
