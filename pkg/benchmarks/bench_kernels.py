"""Compare the compiled kernels against the numpy reference.

Times the three hot kernels at training-realistic shapes and a full
optimization step, for every importable backend.  Run from the repository
root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from relvae.backend import available_backends


def timeit(fn, repeat=200, warmup=10):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv1d(mod, gen):
    x = gen.standard_normal((64, 30, 300)).astype(np.float32)
    w = gen.standard_normal((3, 300, 600)).astype(np.float32)
    b = gen.standard_normal(600).astype(np.float32)
    g = gen.standard_normal((64, 30, 600)).astype(np.float32)
    fwd = timeit(lambda: mod.conv1d_forward(x, w, b, True), repeat=30)
    bwd = timeit(lambda: mod.conv1d_backward(x, w, True, g), repeat=30)
    return fwd, bwd


def bench_lstm(mod, gen):
    batch, din, hidden = 64, 200, 300
    x = gen.standard_normal((batch, din)).astype(np.float32)
    h = gen.standard_normal((batch, hidden)).astype(np.float32)
    c = gen.standard_normal((batch, hidden)).astype(np.float32)
    # small weights keep the gate pre-activations in a realistic range
    w = 0.05 * gen.standard_normal((din, 4 * hidden)).astype(np.float32)
    u = 0.05 * gen.standard_normal((hidden, 4 * hidden)).astype(np.float32)
    b = gen.standard_normal(4 * hidden).astype(np.float32)
    h1, c1, gates = mod.lstm_cell_forward(x, h, c, w, u, b)
    gh = gen.standard_normal((batch, hidden)).astype(np.float32)
    gc = gen.standard_normal((batch, hidden)).astype(np.float32)
    fwd = timeit(lambda: mod.lstm_cell_forward(x, h, c, w, u, b))
    bwd = timeit(lambda: mod.lstm_cell_backward(x, h, c, w, u, gates, c1, gh, gc))
    return fwd, bwd


def bench_scatter(mod, gen):
    table = np.zeros((20000, 200), dtype=np.float32)
    indices = gen.integers(0, 20000, 64 * 100).astype(np.int64)
    rows = gen.standard_normal((64 * 100, 200)).astype(np.float32)
    return timeit(lambda: mod.scatter_add_rows(table, indices, rows))


def bench_train_step():
    """End-to-end step time with whichever backend is active."""
    from relvae.backend import active_backend
    from relvae.corpus import build_vocab, generate_synthetic_corpus, synthetic_schema
    from relvae.networks import ModelConfig
    from relvae.optim import RMSProp
    from relvae.rng import SeededRng
    from relvae.semivae import SemiVAE, TrainConfig, train_step

    config = ModelConfig(
        n_classes=3, word_dim=32, pos_dim=8, max_dist=10,
        classifier_windows=(3, 4, 5), classifier_filters=16,
        encoder_hidden=32, latent_dim=8,
        decoder_channels=(16, 32, 48), decoder_window=3, dropout=0.5)
    rng = SeededRng(0)
    insts = generate_synthetic_corpus(3, 200, 40, 1.0, (8, 30), rng.fork("corpus"))
    model = SemiVAE(config, build_vocab(insts), synthetic_schema(3), rng.fork("model"))
    opt = RMSProp(model.parameters())
    tc = TrainConfig(epochs=1, batch_size=64, seed=0)
    step_rng = SeededRng(1)

    def step():
        train_step(model, opt, insts[:50], insts[50:114], step_rng, tc)

    t = timeit(step, repeat=10, warmup=2)
    print(f"\nfull train_step (desk-scale shapes, backend={active_backend()}): "
          f"{t * 1e3:8.2f} ms")


def main():
    print(f"{'kernel':<22s}" + "".join(f"{m.NAME:>12s}" for m in available_backends()))
    rows = {}
    for mod in available_backends():
        gen = np.random.Generator(np.random.PCG64(0))
        c_fwd, c_bwd = bench_conv1d(mod, gen)
        l_fwd, l_bwd = bench_lstm(mod, gen)
        s = bench_scatter(mod, gen)
        rows.setdefault("conv1d forward", []).append(c_fwd)
        rows.setdefault("conv1d backward", []).append(c_bwd)
        rows.setdefault("lstm_cell forward", []).append(l_fwd)
        rows.setdefault("lstm_cell backward", []).append(l_bwd)
        rows.setdefault("scatter_add_rows", []).append(s)
    for name, times in rows.items():
        cells = "".join(f"{t * 1e3:10.3f}ms" for t in times)
        ratio = f"   ({times[0] / times[-1]:.1f}x)" if len(times) > 1 else ""
        print(f"{name:<22s}{cells}{ratio}")
    bench_train_step()


if __name__ == "__main__":
    main()
