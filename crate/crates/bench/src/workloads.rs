//! The benchmark workloads. Each one embeds its own correctness checks and
//! fails with [`BenchError::Check`] when any of them does not hold.

use std::io::Read;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use tapegrad::export::build_dot_graph;
use tapegrad::models::data::{letter_tokens, MINI_CORPUS};
use tapegrad::models::{CharMlp, CharMlpConfig, Dataset, GptMini, GptMiniConfig, Model, Vocab};
use tapegrad::optim::{SgdConfig, Trainer};
use tapegrad::serialize::{load_range, range_to_bytes, save_range};
use tapegrad::{AppendBudget, Scalar, ScratchBuffers, Tape, ValueRef};

use crate::graphs::{self, TINY_GRAD_A, TINY_GRAD_B, TINY_NODES};
use crate::naive::NaiveEngine;
use crate::report::BenchReport;
use crate::{BenchError, Result};

/// Relative agreement required between the tape and the naive engine.
pub const NAIVE_TOLERANCE: f64 = 1e-12;
/// Finite-difference step and relative tolerance for the small graph.
pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-6;
/// The finite-difference tolerance applied when the tape runs in fp32.
pub const FD_TOLERANCE_FP32: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub iters: usize,
    pub trials: usize,
    pub batch: usize,
    pub hidden: usize,
    pub steps: usize,
    pub seed: u64,
    pub gamma: f64,
    pub naive_ref: bool,
    pub concurrent: bool,
    pub dot: Option<PathBuf>,
    pub corpus: Option<Vec<u8>>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            iters: 1,
            trials: 5,
            batch: 1,
            hidden: 4,
            steps: 0,
            seed: 0,
            gamma: 0.1,
            naive_ref: false,
            concurrent: false,
            dot: None,
            corpus: None,
        }
    }
}

impl BenchOptions {
    fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(BenchError::Config("--iters must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(BenchError::Config("--trials must be at least 1".into()));
        }
        Ok(())
    }

    fn corpus(&self) -> &[u8] {
        self.corpus.as_deref().unwrap_or(MINI_CORPUS)
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(BenchError::Check(what()))
    }
}

fn write_dot<S: Scalar>(opts: &BenchOptions, tape: &Tape<S>, root: ValueRef) -> Result<()> {
    if let Some(path) = &opts.dot {
        std::fs::write(path, build_dot_graph(tape, root)?)?;
    }
    Ok(())
}

fn naive_report(name: &str, opts: &BenchOptions, samples: &[Duration], main_mean: f64) -> BenchReport {
    let mut r = BenchReport::new(&format!("{name}-naive"), opts.iters, opts.trials, samples);
    if main_mean > 0.0 {
        r.notes.push(format!("tape engine is {:.1}x faster", r.mean_s / main_mean));
    }
    r
}

/// Rebuild-and-backward loop on the ten-node graph. Returns the tape report
/// followed, with `naive_ref`, by the naive engine's report.
pub fn bench_tiny<S: Scalar>(opts: &BenchOptions) -> Result<Vec<BenchReport>> {
    opts.validate()?;
    let mut tape = Tape::<S>::with_options(TINY_NODES, true, false)?;
    let base = tape.checkpoint();
    let mut scratch = ScratchBuffers::fixed(TINY_NODES, 0);
    let mut samples = Vec::with_capacity(opts.trials);
    let mut last = None;
    for _ in 0..opts.trials {
        let t0 = Instant::now();
        for _ in 0..opts.iters {
            tape.rewind(base)?;
            let tg = graphs::build_tiny(&mut tape, -41.0, 2.0)?;
            tape.backward_with_scratch(tg.g, &mut scratch)?;
            last = Some(tg);
        }
        samples.push(t0.elapsed());
        let tg = last.expect("at least one iteration");
        let (ga, gb) = (tape.grad_of(tg.a)?.to_f64(), tape.grad_of(tg.b)?.to_f64());
        check(ga == TINY_GRAD_A && gb == TINY_GRAD_B, || {
            format!("tiny gradients ({ga}, {gb}), expected ({TINY_GRAD_A}, {TINY_GRAD_B})")
        })?;
    }
    let tg = last.expect("at least one iteration");
    write_dot(opts, &tape, tg.g)?;
    let mut report = BenchReport::new("tiny", opts.iters, opts.trials, &samples);
    report.peak_nodes = tape.peak_nodes();
    report.peak_bytes = tape.peak_bytes();

    if opts.concurrent {
        check_concurrent_tiny::<S>(4)?;
        report.notes.push("concurrent append: 4 workers agree".into());
    }

    let mut out = vec![report];
    if opts.naive_ref {
        let mut naive_samples = Vec::with_capacity(opts.trials);
        for _ in 0..opts.trials {
            let t0 = Instant::now();
            let mut grads = (S::zero(), S::zero());
            for _ in 0..opts.iters {
                let mut n = NaiveEngine::<S>::new();
                let ng = graphs::build_tiny(&mut n, -41.0, 2.0)?;
                n.backward(ng.g)?;
                grads = (n.grad(ng.a)?, n.grad(ng.b)?);
            }
            naive_samples.push(t0.elapsed());
            let (ga, gb) = (tape.grad_of(tg.a)?.to_f64(), tape.grad_of(tg.b)?.to_f64());
            check(
                close(grads.0.to_f64(), ga, NAIVE_TOLERANCE) && close(grads.1.to_f64(), gb, NAIVE_TOLERANCE),
                || format!("naive engine gradients {grads:?} differ from tape ({ga}, {gb})"),
            )?;
        }
        let r = naive_report("tiny", opts, &naive_samples, out[0].mean_s);
        out.push(r);
    }
    Ok(out)
}

/// Builds `workers` copies of the tiny graph on one tape from separate
/// threads and checks every copy's gradients.
pub fn check_concurrent_tiny<S: Scalar>(workers: usize) -> Result<()> {
    let mut tape = Tape::<S>::new(workers * TINY_NODES)?;
    let budgets = vec![AppendBudget { nodes: TINY_NODES, children: 16 }; workers];
    let built: Vec<_> = {
        let subs = tape.split_append(&budgets)?;
        std::thread::scope(|s| {
            let hs: Vec<_> = subs
                .into_iter()
                .map(|mut sub| s.spawn(move || graphs::build_tiny(&mut sub, -41.0, 2.0)))
                .collect();
            hs.into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect::<tapegrad::Result<Vec<_>>>()
        })?
    };
    for tg in built {
        tape.backward(tg.g)?;
        let (ga, gb) = (tape.grad_of(tg.a)?.to_f64(), tape.grad_of(tg.b)?.to_f64());
        check(ga == TINY_GRAD_A && gb == TINY_GRAD_B, || {
            format!("concurrently built graph gave gradients ({ga}, {gb})")
        })?;
    }
    Ok(())
}

fn small_value(a: f64, b: f64) -> Result<f64> {
    let mut t = Tape::<f64>::new(graphs::SMALL_NODES)?;
    let sg = graphs::build_small(&mut t, a, b)?;
    Ok(t.value_of(sg.g)?)
}

/// Central finite differences of the small graph at `(a, b)` in fp64.
pub fn small_fd(a: f64, b: f64, h: f64) -> Result<(f64, f64)> {
    let da = (small_value(a + h, b)? - small_value(a - h, b)?) / (2.0 * h);
    let db = (small_value(a, b + h)? - small_value(a, b - h)?) / (2.0 * h);
    Ok((da, db))
}

/// Rebuild-and-backward loop on the 32-node graph. Each trial checks against
/// finite differences, compares both backward variants bit for bit and,
/// with `naive_ref`, compares against the naive engine.
pub fn bench_small<S: Scalar>(opts: &BenchOptions) -> Result<Vec<BenchReport>> {
    opts.validate()?;
    let n = graphs::SMALL_NODES;
    let mut tape = Tape::<S>::with_options(n, true, false)?;
    let base = tape.checkpoint();
    let mut scratch = ScratchBuffers::fixed(n, 0);
    let (fa, fb) = small_fd(-4.0, 2.0, FD_STEP)?;
    let tol = if S::PRECISION == tapegrad::Precision::Fp64 {
        FD_TOLERANCE
    } else {
        FD_TOLERANCE_FP32
    };
    let mut samples = Vec::with_capacity(opts.trials);
    let mut naive_samples = Vec::new();
    let mut sg = None;
    for _ in 0..opts.trials {
        let t0 = Instant::now();
        for _ in 0..opts.iters {
            tape.rewind(base)?;
            let g = graphs::build_small(&mut tape, -4.0, 2.0)?;
            tape.backward_with_scratch(g.g, &mut scratch)?;
            sg = Some(g);
        }
        samples.push(t0.elapsed());
        let g = sg.expect("at least one iteration");
        let ga = tape.grad_of(g.a)?;
        let gb = tape.grad_of(g.b)?;
        check(
            close(ga.to_f64(), fa, tol) && close(gb.to_f64(), fb, tol),
            || format!("small gradients ({ga}, {gb}) disagree with finite differences ({fa}, {fb})"),
        )?;
        tape.zero_all_grads();
        tape.backward(g.g)?;
        check(
            tape.grad_of(g.a)?.bits() == ga.bits() && tape.grad_of(g.b)?.bits() == gb.bits(),
            || "backward variants disagree on the small graph".into(),
        )?;

        if opts.naive_ref {
            let t0 = Instant::now();
            let mut grads = (S::zero(), S::zero());
            for _ in 0..opts.iters {
                let mut ne = NaiveEngine::<S>::new();
                let ng = graphs::build_small(&mut ne, -4.0, 2.0)?;
                ne.backward(ng.g)?;
                grads = (ne.grad(ng.a)?, ne.grad(ng.b)?);
            }
            naive_samples.push(t0.elapsed());
            check(
                close(grads.0.to_f64(), ga.to_f64(), NAIVE_TOLERANCE)
                    && close(grads.1.to_f64(), gb.to_f64(), NAIVE_TOLERANCE),
                || format!("naive engine gradients {grads:?} differ from tape ({ga}, {gb})"),
            )?;
        }
    }
    let g = sg.expect("at least one iteration");
    write_dot(opts, &tape, g.g)?;
    let mut report = BenchReport::new("small", opts.iters, opts.trials, &samples);
    report.peak_nodes = tape.peak_nodes();
    report.peak_bytes = tape.peak_bytes();
    let mut out = vec![report];
    if opts.naive_ref {
        let r = naive_report("small", opts, &naive_samples, out[0].mean_s);
        out.push(r);
    }
    Ok(out)
}

/// Raw bytes of the seven designated activations, one single-node range
/// after another.
pub fn activation_bytes<S: Scalar>(tape: &Tape<S>, acts: &[ValueRef]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for v in acts {
        out.extend(range_to_bytes(tape, v.index()..v.index() + 1, false)?);
    }
    Ok(out)
}

/// Saves the small graph's seven activations to a file and loads them into
/// a second copy of the graph, once per iteration.
pub fn bench_saveload<S: Scalar>(opts: &BenchOptions) -> Result<Vec<BenchReport>> {
    opts.validate()?;
    let n = graphs::SMALL_NODES;
    let mut src = Tape::<S>::new(n)?;
    let sg = graphs::build_small(&mut src, -4.0, 2.0)?;
    src.backward(sg.g)?;
    let mut dst = Tape::<S>::new(n)?;
    graphs::build_small(&mut dst, 0.5, 0.25)?;
    let expected = 7 * S::PRECISION.width();
    let memory = activation_bytes(&src, &sg.activations)?;
    check(memory.len() == expected, || {
        format!("in-memory payload is {} bytes, expected {expected}", memory.len())
    })?;

    let path = std::env::temp_dir().join(format!("tapegrad-saveload-{}.bin", std::process::id()));
    let mut samples = Vec::with_capacity(opts.trials);
    let outcome = (|| -> Result<()> {
        for _ in 0..opts.trials {
            let t0 = Instant::now();
            for _ in 0..opts.iters {
                let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
                let mut written = 0;
                for v in &sg.activations {
                    written += save_range(&src, v.index()..v.index() + 1, false, &mut file)?;
                }
                drop(file);
                let size = std::fs::metadata(&path)?.len() as usize;
                check(written == expected && size == expected, || {
                    format!("payload is {size} bytes on disk ({written} written), expected {expected}")
                })?;
                let mut file = std::io::BufReader::new(std::fs::File::open(&path)?);
                for v in &sg.activations {
                    let width = S::PRECISION.width() as u64;
                    load_range(&mut dst, v.index()..v.index() + 1, false, (&mut file).take(width))?;
                }
            }
            samples.push(t0.elapsed());
            for v in &sg.activations {
                check(src.value_of(*v)?.bits() == dst.value_of(*v)?.bits(), || {
                    format!("activation {} did not round-trip", v.index())
                })?;
            }
            check(std::fs::read(&path)? == memory, || "file and memory payloads differ".into())?;
        }
        Ok(())
    })();
    let _ = std::fs::remove_file(&path);
    outcome?;

    let mut report = BenchReport::new("saveload", opts.iters, opts.trials, &samples);
    report.peak_nodes = src.peak_nodes();
    report.peak_bytes = src.peak_bytes();
    report.notes.push(format!("raw payload: {expected} bytes"));
    Ok(vec![report])
}

struct TrainRun {
    init: Duration,
    steps: Vec<Duration>,
    peak_nodes: usize,
    peak_bytes: usize,
    single_peak: usize,
    params: usize,
    last_loss: f64,
}

fn train_run<S, M, B>(opts: &BenchOptions, data: &Dataset, build: B) -> Result<TrainRun>
where
    S: Scalar,
    M: Model,
    B: Fn(&mut Tape<S>) -> tapegrad::Result<M>,
{
    let cfg = SgdConfig {
        gamma: opts.gamma,
        batch: opts.batch,
        steps: opts.steps,
        seed: opts.seed,
    };
    let t0 = Instant::now();
    let mut tape = Tape::<S>::new(1 << 16)?;
    let model = build(&mut tape)?;
    let mut trainer = Trainer::new(&tape, &model, cfg)?;
    trainer.prepare(data)?;
    let mut loss = trainer.step(&mut tape, &model)?;
    let init = t0.elapsed();

    let mut steps = Vec::with_capacity(opts.steps);
    for _ in 0..opts.steps {
        trainer.prepare(data)?;
        let t = Instant::now();
        loss = trainer.step(&mut tape, &model)?;
        steps.push(t.elapsed());
    }

    let peak_nodes = tape.peak_nodes();
    let peak_bytes = tape.peak_bytes();
    tape.rewind(trainer.base())?;
    model.loss(&mut tape, &data.example(0))?;
    Ok(TrainRun {
        init,
        steps,
        peak_nodes,
        peak_bytes,
        single_peak: tape.len(),
        params: model.params().len(),
        last_loss: loss.to_f64(),
    })
}

fn train_report(name: &str, opts: &BenchOptions, runs: &[TrainRun], expected_params: usize) -> Result<BenchReport> {
    for r in runs {
        check(r.params == expected_params, || {
            format!("{name} has {} parameters, expected {expected_params}", r.params)
        })?;
        check(r.peak_nodes == r.single_peak, || {
            format!(
                "{name} peak of {} nodes exceeds the single-sample peak {}",
                r.peak_nodes, r.single_peak
            )
        })?;
    }
    let inits: Vec<Duration> = runs.iter().map(|r| r.init).collect();
    let steps: Vec<Duration> = runs.iter().flat_map(|r| r.steps.iter().copied()).collect();
    let samples = if opts.steps == 0 { &inits } else { &steps };
    let mut report = BenchReport::new(name, opts.steps, opts.trials, samples);
    report.peak_nodes = runs[0].peak_nodes;
    report.peak_bytes = runs[0].peak_bytes;
    let (init_mean, init_std) = crate::report::mean_std(&inits);
    report.notes.push(format!(
        "parameters {expected_params}, batch {}, init (setup + 1 step) {init_mean:.6} +- {init_std:.6} s",
        opts.batch
    ));
    report.notes.push(format!("final minibatch loss {:.6}", runs[runs.len() - 1].last_loss));
    if opts.steps == 0 {
        report.notes.push("no steps requested: timing samples are init times".into());
    }
    Ok(report)
}

/// Character-level MLP training with hidden width `opts.hidden`.
pub fn bench_train_mlp<S: Scalar>(opts: &BenchOptions) -> Result<Vec<BenchReport>> {
    if opts.trials == 0 || opts.batch == 0 {
        return Err(BenchError::Config("--trials and --batch must be at least 1".into()));
    }
    let cfg = CharMlpConfig::with_hidden(opts.hidden);
    let data = Dataset::padded(letter_tokens(opts.corpus()), cfg.context)?;
    let runs = (0..opts.trials)
        .map(|_| train_run::<S, _, _>(opts, &data, |t| CharMlp::build(t, cfg, opts.seed)))
        .collect::<Result<Vec<_>>>()?;
    check(cfg.param_count() == 1755 + 1052 * opts.hidden, || "char MLP parameter formula".into())?;
    Ok(vec![train_report("mlp", opts, &runs, cfg.param_count())?])
}

/// Decoder training with the default configuration.
pub fn bench_train_gpt<S: Scalar>(opts: &BenchOptions) -> Result<Vec<BenchReport>> {
    if opts.trials == 0 || opts.batch == 0 {
        return Err(BenchError::Config("--trials and --batch must be at least 1".into()));
    }
    let cfg = GptMiniConfig::default();
    let corpus = opts.corpus();
    let vocab = Vocab::from_corpus(corpus);
    if vocab.len() > cfg.vocab {
        return Err(BenchError::Config(format!(
            "corpus has {} distinct bytes, the decoder vocabulary holds {}",
            vocab.len(),
            cfg.vocab
        )));
    }
    let data = Dataset::shifted(vocab.tokenize(corpus)?, cfg.block_size)?;
    let runs = (0..opts.trials)
        .map(|_| train_run::<S, _, _>(opts, &data, |t| GptMini::build(t, cfg, opts.seed)))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![train_report("gpt", opts, &runs, cfg.param_count())?])
}
