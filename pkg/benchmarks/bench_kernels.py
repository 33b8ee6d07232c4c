"""Benchmark the compiled kernels against the pure-numpy fallbacks.

Run twice to compare::

    python benchmarks/bench_kernels.py
    RAVU_PURE_NUMPY=1 python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from ravu import accel


def bench(label: str, fn, repeats: int = 5) -> None:
    fn()  # warmup (includes jit compilation when numba is active)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    print(f"{label:<28} best {min(times) * 1e3:8.2f} ms  mean {np.mean(times) * 1e3:8.2f} ms")


def main() -> None:
    mode = "pure numpy" if accel.PURE_NUMPY or not accel.HAS_NUMBA else "numba"
    print(f"kernel mode: {mode}")
    rng = np.random.default_rng(0)

    boxes_a = rng.uniform(0, 100, size=(2000, 2))
    boxes_a = np.hstack([boxes_a, boxes_a + rng.uniform(1, 40, size=(2000, 2))])
    boxes_b = rng.uniform(0, 100, size=(2000, 2))
    boxes_b = np.hstack([boxes_b, boxes_b + rng.uniform(1, 40, size=(2000, 2))])
    bench("iou_matrix 2000x2000", lambda: accel.iou_matrix(boxes_a, boxes_b))

    matrix = rng.standard_normal((200_000, 256))
    query = rng.standard_normal(256)
    bench("cosine_scores 200k x 256", lambda: accel.cosine_scores(matrix, query))


if __name__ == "__main__":
    main()
