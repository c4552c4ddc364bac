"""Compare the compiled and pure-numpy scoring kernels.

Checks numerical agreement first, then times score_rows and entropy_rows
across matrix shapes spanning the engine's real workloads (few masked
positions on toy vocabs up to full-length rows on a large vocab). Run:

    python benchmarks/bench_kernels.py [--repeat 200] [--decode]

--decode additionally times one full default-config decode against the toy
corpus under each backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from medal import kernels

SHAPES = [(4, 3), (16, 12), (64, 32), (236, 12), (256, 512), (256, 4096)]


def _time(fn, *args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def check_agreement(py, cc) -> float:
    rng = np.random.default_rng(7)
    worst = 0.0
    for rows, width in SHAPES[:4]:
        logits = rng.normal(size=(rows, width)) * 3.0
        out_py = py.score_rows(logits, 5.0, 1e-8, True)
        out_cc = cc.score_rows(logits, 5.0, 1e-8, True)
        for a, b in zip(out_py, out_cc):
            worst = max(worst, float(np.abs(np.asarray(a) - np.asarray(b)).max()))
        probs = out_py[0]
        diff = np.abs(py.entropy_rows(probs) - cc.entropy_rows(probs)).max()
        worst = max(worst, float(diff))
    return worst


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--decode", action="store_true")
    args = parser.parse_args()

    backends = {name: kernels.get_backend(name) for name in kernels.available_backends()}
    print(f"available backends: {', '.join(backends)} (active: {kernels.BACKEND})")
    if "c" not in backends:
        print("compiled kernel not built; showing python timings only")
    else:
        worst = check_agreement(backends["py"], backends["c"])
        print(f"max |py - c| across checked shapes: {worst:.3e}")
        assert worst < 1e-12, "backends disagree"

    rng = np.random.default_rng(0)
    print(f"{'shape':>12} | " + " | ".join(f"{n + ' score':>14}" for n in backends)
          + " | " + " | ".join(f"{n + ' entropy':>14}" for n in backends))
    for shape in SHAPES:
        logits = rng.normal(size=shape) * 3.0
        probs = backends["py"].score_rows(logits, 5.0, 1e-8, True)[0]
        score_cols = []
        ent_cols = []
        for name, mod in backends.items():
            t = _time(mod.score_rows, logits, 5.0, 1e-8, True, repeat=args.repeat)
            score_cols.append(f"{t * 1e6:>11.1f} us")
            t = _time(mod.entropy_rows, probs, repeat=args.repeat)
            ent_cols.append(f"{t * 1e6:>11.1f} us")
        print(f"{str(shape):>12} | " + " | ".join(score_cols) + " | " + " | ".join(ent_cols))

    if args.decode:
        import os
        from importlib import resources

        from medal.cli import default_config, load_model
        from medal.decoder import decode

        corpus = resources.files("medal.data").joinpath("toy_corpus.txt")
        with resources.as_file(corpus) as path:
            model = load_model(f"ngram:{path}?n=3&alpha=0.5")
        cfg = default_config()
        for name in backends:
            os.environ["MEDAL_KERNEL"] = name
            import importlib

            import medal.kernels as km

            importlib.reload(km)
            start = time.perf_counter()
            decode(model, (0, 1), cfg)
            print(f"full decode under {name}: {time.perf_counter() - start:.2f}s")
        os.environ.pop("MEDAL_KERNEL", None)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
